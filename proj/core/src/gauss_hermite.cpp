#include "clutter_vi/gauss_hermite.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

#include <Eigen/Dense>

namespace clutter_vi {

namespace {

constexpr double sqrt_pi = 1.7724538509055160273;

// Golub-Welsch: nodes are the eigenvalues of the Jacobi matrix of the
// Hermite three-term recurrence (zero diagonal, off-diagonal sqrt(k/2));
// each weight is sqrt(pi) times the squared first eigenvector component.
GaussHermiteRule build_rule(int order) {
  GaussHermiteRule rule;
  if (order == 1) {
    rule.nodes = {0.0};
    rule.weights = {sqrt_pi};
    return rule;
  }

  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    const double off = std::sqrt(0.5 * static_cast<double>(k));
    jacobi(k, k - 1) = off;
    jacobi(k - 1, k) = off;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("Hermite eigendecomposition failed");
  }

  rule.nodes.resize(order);
  rule.weights.resize(order);
  for (int k = 0; k < order; ++k) {
    rule.nodes[k] = solver.eigenvalues()(k);  // ascending order
    const double v0 = solver.eigenvectors()(0, k);
    rule.weights[k] = sqrt_pi * v0 * v0;
  }
  return rule;
}

}  // namespace

const GaussHermiteRule& gauss_hermite_rule(int order) {
  if (order < 1) {
    throw std::invalid_argument("Gauss-Hermite order must be at least 1");
  }
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<const GaussHermiteRule>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(order);
  if (it == cache.end()) {
    it = cache
             .emplace(order, std::make_unique<const GaussHermiteRule>(
                                 build_rule(order)))
             .first;
  }
  return *it->second;
}

}  // namespace clutter_vi
