#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "medvar/csv.hpp"
#include "medvar/errors.hpp"

namespace medvar {

// One ingested row. Used as the row-level exchange format; bulk storage is
// columnar inside Dataset.
struct PatientRecord {
  double outcome = 0.0;
  double mediator = 0.0;
  std::string hospital;
  std::vector<double> covariates;
};

// Columnar, immutable-after-build patient table. Hospital labels are coded
// in sorted order so results do not depend on row order; index 0 is the
// reference level everywhere.
class Dataset {
 public:
  Dataset() = default;

  static Dataset from_records(const std::vector<PatientRecord>& records,
                              std::vector<std::string> covariate_names,
                              bool mediator_binary) {
    const std::size_t n = records.size();
    std::vector<double> outcome(n), mediator(n);
    std::vector<std::string> hospital(n);
    Eigen::MatrixXd covariates(n, static_cast<Eigen::Index>(covariate_names.size()));
    for (std::size_t i = 0; i < n; ++i) {
      const PatientRecord& r = records[i];
      if (r.covariates.size() != covariate_names.size()) {
        throw DataError("record " + std::to_string(i + 1) +
                        ": covariate count mismatch");
      }
      outcome[i] = r.outcome;
      mediator[i] = r.mediator;
      hospital[i] = r.hospital;
      for (std::size_t j = 0; j < r.covariates.size(); ++j) {
        covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            r.covariates[j];
      }
    }
    return Dataset(std::move(outcome), std::move(mediator), hospital,
                   std::move(covariates), std::move(covariate_names),
                   mediator_binary);
  }

  Dataset(std::vector<double> outcome, std::vector<double> mediator,
          const std::vector<std::string>& hospital, Eigen::MatrixXd covariates,
          std::vector<std::string> covariate_names, bool mediator_binary)
      : outcome_(std::move(outcome)),
        mediator_(std::move(mediator)),
        covariates_(std::move(covariates)),
        covariate_names_(std::move(covariate_names)),
        mediator_binary_(mediator_binary) {
    const std::size_t n = outcome_.size();
    if (n == 0) throw DataError("dataset is empty");
    if (mediator_.size() != n || hospital.size() != n ||
        static_cast<std::size_t>(covariates_.rows()) != n) {
      throw DataError("dataset columns have inconsistent lengths");
    }
    if (static_cast<std::size_t>(covariates_.cols()) != covariate_names_.size()) {
      throw DataError("covariate names do not match covariate columns");
    }

    std::map<std::string, int> coder;
    for (const std::string& label : hospital) coder.emplace(label, 0);
    if (coder.size() < 2) {
      throw DataError("dataset needs at least two hospitals, found " +
                      std::to_string(coder.size()));
    }
    labels_.reserve(coder.size());
    for (auto& [label, code] : coder) {
      code = static_cast<int>(labels_.size());
      labels_.push_back(label);
    }
    hospital_.resize(n);
    counts_.assign(labels_.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      hospital_[i] = coder[hospital[i]];
      ++counts_[static_cast<std::size_t>(hospital_[i])];
    }

    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(outcome_[i]) || !std::isfinite(mediator_[i])) {
        throw DataError("record " + std::to_string(i + 1) +
                        ": non-finite outcome or mediator");
      }
      if (mediator_binary_ && mediator_[i] != 0.0 && mediator_[i] != 1.0) {
        throw DataError("record " + std::to_string(i + 1) +
                        ": binary mediator must be 0 or 1, found " +
                        std::to_string(mediator_[i]));
      }
    }
    if (!covariates_.allFinite()) {
      throw DataError("covariate matrix contains non-finite values");
    }
  }

  std::size_t n() const { return outcome_.size(); }
  int q() const { return static_cast<int>(labels_.size()); }
  int p() const { return static_cast<int>(covariates_.cols()); }
  bool mediator_binary() const { return mediator_binary_; }

  double outcome(std::size_t i) const { return outcome_[i]; }
  double mediator(std::size_t i) const { return mediator_[i]; }
  int hospital(std::size_t i) const { return hospital_[i]; }
  auto covariate_row(std::size_t i) const {
    return covariates_.row(static_cast<Eigen::Index>(i));
  }
  const Eigen::MatrixXd& covariates() const { return covariates_; }
  const std::vector<double>& outcomes() const { return outcome_; }
  const std::vector<double>& mediators() const { return mediator_; }
  const std::vector<int>& hospital_codes() const { return hospital_; }

  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& label(int code) const {
    return labels_.at(static_cast<std::size_t>(code));
  }
  const std::vector<std::string>& covariate_names() const {
    return covariate_names_;
  }
  std::size_t hospital_count(int code) const {
    return counts_.at(static_cast<std::size_t>(code));
  }

  int hospital_index(const std::string& label) const {
    const auto it = std::lower_bound(labels_.begin(), labels_.end(), label);
    if (it == labels_.end() || *it != label) {
      throw DataError("unknown hospital label '" + label + "'");
    }
    return static_cast<int>(it - labels_.begin());
  }

  int covariate_index(const std::string& name) const {
    for (std::size_t j = 0; j < covariate_names_.size(); ++j) {
      if (covariate_names_[j] == name) return static_cast<int>(j);
    }
    throw ConfigError("unknown covariate '" + name + "'");
  }

  PatientRecord record(std::size_t i) const {
    PatientRecord r;
    r.outcome = outcome_[i];
    r.mediator = mediator_[i];
    r.hospital = labels_[static_cast<std::size_t>(hospital_[i])];
    r.covariates.resize(static_cast<std::size_t>(covariates_.cols()));
    for (Eigen::Index j = 0; j < covariates_.cols(); ++j) {
      r.covariates[static_cast<std::size_t>(j)] =
          covariates_(static_cast<Eigen::Index>(i), j);
    }
    return r;
  }

  // Copies used by the parametric bootstrap: same design, new responses.
  Dataset with_outcomes(std::vector<double> outcome) const {
    Dataset copy(*this);
    if (outcome.size() != n()) throw DataError("outcome length mismatch");
    for (double y : outcome) {
      if (!std::isfinite(y)) throw DataError("non-finite resampled outcome");
    }
    copy.outcome_ = std::move(outcome);
    return copy;
  }

  Dataset with_mediators(std::vector<double> mediator) const {
    Dataset copy(*this);
    if (mediator.size() != n()) throw DataError("mediator length mismatch");
    for (double m : mediator) {
      if (!std::isfinite(m)) throw DataError("non-finite resampled mediator");
      if (mediator_binary_ && m != 0.0 && m != 1.0) {
        throw DataError("resampled binary mediator must be 0 or 1");
      }
    }
    copy.mediator_ = std::move(mediator);
    return copy;
  }

 private:
  std::vector<double> outcome_;
  std::vector<double> mediator_;
  std::vector<int> hospital_;
  Eigen::MatrixXd covariates_;
  std::vector<std::string> labels_;
  std::vector<std::string> covariate_names_;
  std::vector<std::size_t> counts_;
  bool mediator_binary_ = true;
};

enum class MissingPolicy { error, drop };

struct IngestOptions {
  std::string outcome_column = "y";
  std::string mediator_column = "m";
  std::string hospital_column = "hospital";
  // Empty means: every remaining column is a covariate.
  std::vector<std::string> covariate_columns;
  bool mediator_binary = true;
  MissingPolicy missing = MissingPolicy::error;
};

struct IngestResult {
  Dataset dataset;
  std::size_t rows_dropped = 0;
  std::vector<std::string> warnings;
};

namespace detail {

inline bool csv_field_missing(const std::string& s) {
  return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan";
}

inline double csv_field_number(const std::string& s, std::size_t row,
                               const std::string& column) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(s, &used);
  } catch (const std::exception&) {
    throw DataError("data row " + std::to_string(row) + ", column '" + column +
                    "': cannot parse '" + s + "' as a number");
  }
  if (used != s.size()) {
    throw DataError("data row " + std::to_string(row) + ", column '" + column +
                    "': cannot parse '" + s + "' as a number");
  }
  return value;
}

}  // namespace detail

// Loads a patient table from csv. Row numbers in errors and warnings are
// 1-based over data rows (the header is row 0). Missing cells follow the
// policy flag; unparseable cells are always an error.
inline IngestResult ingest_table(const CsvTable& table, const IngestOptions& options) {
  auto require_column = [&](const std::string& name) {
    const int j = table.column(name);
    if (j < 0) throw ConfigError("csv has no column named '" + name + "'");
    return static_cast<std::size_t>(j);
  };
  const std::size_t y_col = require_column(options.outcome_column);
  const std::size_t m_col = require_column(options.mediator_column);
  const std::size_t z_col = require_column(options.hospital_column);

  std::vector<std::string> covariate_names = options.covariate_columns;
  if (covariate_names.empty()) {
    for (const std::string& name : table.header) {
      if (name != options.outcome_column && name != options.mediator_column &&
          name != options.hospital_column) {
        covariate_names.push_back(name);
      }
    }
  }
  std::vector<std::size_t> x_cols;
  x_cols.reserve(covariate_names.size());
  for (const std::string& name : covariate_names) {
    x_cols.push_back(require_column(name));
  }

  IngestResult result;
  std::vector<PatientRecord> records;
  records.reserve(table.rows.size());

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::vector<std::string>& row = table.rows[r];
    const std::size_t row_no = r + 1;

    bool missing = false;
    auto handle_missing = [&](const std::string& column) {
      if (options.missing == MissingPolicy::error) {
        throw DataError("data row " + std::to_string(row_no) + ", column '" +
                        column + "': missing value");
      }
      missing = true;
    };

    PatientRecord rec;
    rec.hospital = row[z_col];
    if (rec.hospital.empty()) handle_missing(options.hospital_column);

    auto numeric = [&](std::size_t col, const std::string& name) {
      const std::string& field = row[col];
      if (detail::csv_field_missing(field)) {
        handle_missing(name);
        return 0.0;
      }
      return detail::csv_field_number(field, row_no, name);
    };

    rec.outcome = numeric(y_col, options.outcome_column);
    rec.mediator = numeric(m_col, options.mediator_column);
    rec.covariates.reserve(x_cols.size());
    for (std::size_t j = 0; j < x_cols.size(); ++j) {
      rec.covariates.push_back(numeric(x_cols[j], covariate_names[j]));
    }

    if (missing) {
      ++result.rows_dropped;
      continue;
    }
    if (options.mediator_binary && rec.mediator != 0.0 && rec.mediator != 1.0) {
      throw DataError("data row " + std::to_string(row_no) +
                      ": binary mediator must be 0 or 1, found '" + row[m_col] +
                      "'");
    }
    records.push_back(std::move(rec));
  }

  if (result.rows_dropped > 0) {
    result.warnings.push_back("dropped " + std::to_string(result.rows_dropped) +
                              " row(s) with missing values");
  }
  result.dataset = Dataset::from_records(records, std::move(covariate_names),
                                         options.mediator_binary);
  return result;
}

inline IngestResult ingest_csv(const std::string& path,
                               const IngestOptions& options = {}) {
  return ingest_table(read_csv(path), options);
}

struct HospitalSummary {
  std::string label;
  std::size_t patients = 0;
  double outcome_mean = 0.0;
  double mediator_mean = 0.0;
};

struct DatasetSummary {
  std::vector<HospitalSummary> hospitals;
  HospitalSummary overall;
};

inline DatasetSummary summarize(const Dataset& data) {
  DatasetSummary summary;
  const int q = data.q();
  summary.hospitals.resize(static_cast<std::size_t>(q));
  for (int z = 0; z < q; ++z) {
    summary.hospitals[static_cast<std::size_t>(z)].label = data.label(z);
  }
  summary.overall.label = "(all)";
  for (std::size_t i = 0; i < data.n(); ++i) {
    HospitalSummary& h =
        summary.hospitals[static_cast<std::size_t>(data.hospital(i))];
    ++h.patients;
    h.outcome_mean += data.outcome(i);
    h.mediator_mean += data.mediator(i);
    ++summary.overall.patients;
    summary.overall.outcome_mean += data.outcome(i);
    summary.overall.mediator_mean += data.mediator(i);
  }
  auto finish = [](HospitalSummary& h) {
    if (h.patients > 0) {
      h.outcome_mean /= static_cast<double>(h.patients);
      h.mediator_mean /= static_cast<double>(h.patients);
    }
  };
  for (HospitalSummary& h : summary.hospitals) finish(h);
  finish(summary.overall);
  return summary;
}

}  // namespace medvar
