#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace clutter_vi {

inline constexpr double log_two_pi = 1.8378770664093454836;  // ln(2*pi)

// ln N(x; mean, var), var > 0. All density work happens in log space;
// exponentiate only where a density value is actually needed.
inline double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (log_two_pi + std::log(var) + d * d / var);
}

inline double normal_pdf(double x, double mean, double var) {
  return std::exp(log_normal_pdf(x, mean, var));
}

// ln(e^a + e^b); tolerates -inf in either argument.
inline double log_add_exp(double a, double b) {
  if (a < b) std::swap(a, b);
  if (std::isinf(b) && b < 0.0) return a;  // covers a = b = -inf
  return a + std::log1p(std::exp(b - a));
}

// Max-shifted log-sum-exp over a sequence of log values.
inline double log_sum_exp(std::span<const double> logs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logs) m = std::max(m, v);
  if (std::isinf(m) && m < 0.0) return m;
  double s = 0.0;
  for (double v : logs) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace clutter_vi
