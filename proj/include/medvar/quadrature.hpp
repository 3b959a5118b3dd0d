#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <mutex>
#include <vector>

#include "medvar/errors.hpp"

namespace medvar {

// Gauss-Hermite rule in the physicists' convention:
//   integral of exp(-t^2) f(t) dt  ~=  sum_k weights[k] * f(nodes[k]).
//
// For E[g(M)] with M ~ N(mean, sd^2) substitute t -> mean + sqrt(2)*sd*t and
// divide by sqrt(pi). A rule of n nodes is exact for polynomials up to degree
// 2n-1, so n = 1 degenerates to evaluation at the mean (the Laplace limit).
struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

// Golub-Welsch: nodes are eigenvalues of the symmetric tridiagonal Jacobi
// matrix (zero diagonal, off-diagonal sqrt(i/2)); the weight for node k is
// sqrt(pi) times the squared first component of its unit eigenvector.
inline GaussHermite compute_gauss_hermite(int n) {
  if (n < 1) throw ConfigError("Gauss-Hermite rule needs at least one node");

  GaussHermite rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));

  if (n == 1) {
    rule.nodes[0] = 0.0;
    rule.weights[0] = std::sqrt(M_PI);
    return rule;
  }

  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double b = std::sqrt(0.5 * i);
    jacobi(i, i - 1) = b;
    jacobi(i - 1, i) = b;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  if (solver.info() != Eigen::Success) {
    throw NumericError("Gauss-Hermite eigen decomposition failed");
  }

  const Eigen::VectorXd& values = solver.eigenvalues();
  const Eigen::MatrixXd& vectors = solver.eigenvectors();
  const double mu0 = std::sqrt(M_PI);
  for (int k = 0; k < n; ++k) {
    rule.nodes[static_cast<std::size_t>(k)] = values(k);
    const double v0 = vectors(0, k);
    rule.weights[static_cast<std::size_t>(k)] = mu0 * v0 * v0;
  }

  // The exact rule is symmetric about zero; the eigen solve is symmetric only
  // to roundoff. Mirror-average so downstream code sees exact +/- pairs.
  for (int i = 0, j = n - 1; i < j; ++i, --j) {
    const double node = 0.5 * (rule.nodes[static_cast<std::size_t>(j)] -
                               rule.nodes[static_cast<std::size_t>(i)]);
    rule.nodes[static_cast<std::size_t>(i)] = -node;
    rule.nodes[static_cast<std::size_t>(j)] = node;
    const double weight = 0.5 * (rule.weights[static_cast<std::size_t>(i)] +
                                 rule.weights[static_cast<std::size_t>(j)]);
    rule.weights[static_cast<std::size_t>(i)] = weight;
    rule.weights[static_cast<std::size_t>(j)] = weight;
  }
  if (n % 2 == 1) rule.nodes[static_cast<std::size_t>(n / 2)] = 0.0;

  return rule;
}

}  // namespace detail

// Cached lookup; rules are immutable once built and safe to share across
// threads. References stay valid for the life of the process.
inline const GaussHermite& gauss_hermite(int n) {
  static std::mutex cache_mutex;
  static std::map<int, GaussHermite> cache;
  std::lock_guard<std::mutex> lock(cache_mutex);
  auto it = cache.find(n);
  if (it == cache.end()) {
    it = cache.emplace(n, detail::compute_gauss_hermite(n)).first;
  }
  return it->second;
}

// E[g(M)] for M ~ N(mean, sd^2) under the rule with n nodes.
template <class G>
double gauss_hermite_mean(int n, double mean, double sd, G&& g) {
  const GaussHermite& rule = gauss_hermite(n);
  const double scale = std::sqrt(2.0) * sd;
  double acc = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    acc += rule.weights[k] * g(mean + scale * rule.nodes[k]);
  }
  return acc / std::sqrt(M_PI);
}

}  // namespace medvar
