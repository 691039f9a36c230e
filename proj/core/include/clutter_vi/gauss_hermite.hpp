#pragma once

#include <vector>

namespace clutter_vi {

// Gauss-Hermite rule for the weight function exp(-t^2):
// integral f(t) exp(-t^2) dt ~= sum_k weights[k] * f(nodes[k]).
// For an expectation under N(0, 1) use
// E[f] ~= (1/sqrt(pi)) * sum_k weights[k] * f(sqrt(2) * nodes[k]).
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Returns the cached rule of the given order (computed once per order via
// the symmetric-tridiagonal eigendecomposition of the Hermite recurrence).
// Thread-safe; the returned reference stays valid for the process lifetime.
// Throws std::invalid_argument for order < 1.
const GaussHermiteRule& gauss_hermite_rule(int order);

}  // namespace clutter_vi
