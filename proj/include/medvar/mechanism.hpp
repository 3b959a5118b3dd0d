#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "medvar/csv.hpp"
#include "medvar/dataset.hpp"
#include "medvar/errors.hpp"
#include "medvar/multinomial.hpp"

namespace medvar {

enum class MechanismKind { observed, uniform, custom };

inline const char* mechanism_kind_name(MechanismKind k) {
  switch (k) {
    case MechanismKind::observed: return "observed";
    case MechanismKind::uniform: return "uniform";
    case MechanismKind::custom: return "custom";
  }
  return "?";
}

// Standardizing assignment weights e~(z; x_i): one probability row per
// patient over all hospitals. Decompositions are taken with respect to these
// weights, which need not equal the mechanism that generated the data.
class AssignmentMechanism {
 public:
  static AssignmentMechanism observed(const Dataset& data,
                                      const AssignmentModel& model) {
    if (model.labels != data.labels()) {
      throw DataError("assignment model and dataset have different hospitals");
    }
    Eigen::MatrixXd w(static_cast<Eigen::Index>(data.n()), data.q());
    for (std::size_t i = 0; i < data.n(); ++i) {
      w.row(static_cast<Eigen::Index>(i)) =
          model.probabilities(data.covariate_row(i)).transpose();
    }
    return AssignmentMechanism(MechanismKind::observed, std::move(w));
  }

  static AssignmentMechanism uniform(const Dataset& data) {
    const double share = 1.0 / static_cast<double>(data.q());
    Eigen::MatrixXd w = Eigen::MatrixXd::Constant(
        static_cast<Eigen::Index>(data.n()), data.q(), share);
    return AssignmentMechanism(MechanismKind::uniform, std::move(w));
  }

  // Custom weights from csv: one row per patient in dataset order, one
  // column per hospital named by its label.
  static AssignmentMechanism from_csv(const Dataset& data,
                                      const std::string& path) {
    const CsvTable table = read_csv(path);
    if (table.rows.size() != data.n()) {
      throw DataError("mechanism file has " + std::to_string(table.rows.size()) +
                      " rows for " + std::to_string(data.n()) + " patients");
    }
    std::vector<int> cols;
    cols.reserve(static_cast<std::size_t>(data.q()));
    for (const std::string& label : data.labels()) {
      const int j = table.column(label);
      if (j < 0) {
        throw DataError("mechanism file lacks a column for hospital '" + label +
                        "'");
      }
      cols.push_back(j);
    }
    Eigen::MatrixXd w(static_cast<Eigen::Index>(data.n()), data.q());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      for (int z = 0; z < data.q(); ++z) {
        w(static_cast<Eigen::Index>(i), z) = detail::csv_field_number(
            table.rows[i][static_cast<std::size_t>(cols[static_cast<std::size_t>(z)])],
            i + 1, data.label(z));
      }
    }
    return AssignmentMechanism(MechanismKind::custom, std::move(w));
  }

  static AssignmentMechanism from_matrix(MechanismKind kind, Eigen::MatrixXd w) {
    return AssignmentMechanism(kind, std::move(w));
  }

  MechanismKind kind() const { return kind_; }
  const Eigen::MatrixXd& weights() const { return weights_; }
  std::size_t patients() const { return static_cast<std::size_t>(weights_.rows()); }
  int hospitals() const { return static_cast<int>(weights_.cols()); }

  void check_against(const Dataset& data) const {
    if (patients() != data.n() || hospitals() != data.q()) {
      throw DataError("mechanism dimensions (" + std::to_string(patients()) +
                      " x " + std::to_string(hospitals()) +
                      ") do not match the dataset (" + std::to_string(data.n()) +
                      " x " + std::to_string(data.q()) + ")");
    }
  }

 private:
  AssignmentMechanism(MechanismKind kind, Eigen::MatrixXd w)
      : kind_(kind), weights_(std::move(w)) {
    for (Eigen::Index i = 0; i < weights_.rows(); ++i) {
      double total = 0.0;
      for (Eigen::Index z = 0; z < weights_.cols(); ++z) {
        const double v = weights_(i, z);
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
          throw DataError("mechanism row " + std::to_string(i + 1) +
                          ": weights must lie in [0, 1]");
        }
        total += v;
      }
      if (std::fabs(total - 1.0) > 1e-10) {
        throw DataError("mechanism row " + std::to_string(i + 1) +
                        ": weights sum to " + std::to_string(total) +
                        ", expected 1");
      }
    }
  }

  MechanismKind kind_;
  Eigen::MatrixXd weights_;
};

}  // namespace medvar
