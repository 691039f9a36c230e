#include "clutter_vi/gradient.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "clutter_vi/math_util.hpp"

namespace clutter_vi {

namespace {

// delta_i = (x_i - mu_q) / (v_g_eff + v_q), shared by every statistic.
double pi_from_delta(const ClutterModel& model, double x_i, double delta,
                     double v_g_eff) {
  // log of (1 - w) * N evaluated at the expansion point; the quadratic term
  // uses the simplified exponent -v_g_eff * delta^2 / 2.
  const double log_signal = std::log1p(-model.w) -
                            0.5 * (log_two_pi + std::log(v_g_eff)) -
                            0.5 * v_g_eff * delta * delta;
  const double log_clutter = std::log(model.w) + model.log_clutter_pdf(x_i);
  // exp(log_signal - log_add_exp(...)) keeps pi exact at the endpoints:
  // w = 0 gives pi = exp(0) = 1 and w = 1 gives pi = exp(-inf) = 0.
  return std::exp(log_signal - log_add_exp(log_signal, log_clutter));
}

FactorStats stats_for(const ClutterModel& model, double x_i,
                      const VariationalGaussian& q, double v_g_eff,
                      double sqrt_v_q) {
  FactorStats s;
  const double delta = (x_i - q.mu_q) / (v_g_eff + q.v_q);
  const double pi = pi_from_delta(model, x_i, delta, v_g_eff);

  s.pi = pi;
  s.eps = sqrt_v_q * delta;
  // Curvature of the responsibility surface at the expansion point; the
  // denominator is >= v_g_eff, so v_hat lands in (0, 1].
  s.v_hat = v_g_eff /
            ((1.0 - pi) * (pi * v_g_eff * delta * delta + 1.0) * q.v_q +
             v_g_eff);
  s.eps_hat = sqrt_v_q * (1.0 - pi * s.v_hat) * delta;
  // The exponent is non-positive analytically; clamping at zero guards the
  // amp <= 1 range against floating-point drift.
  const double exponent = std::min(
      0.0, -0.5 * (1.0 - pi * pi * s.v_hat) * q.v_q * delta * delta);
  s.amp = std::exp(exponent);

  const double root_v_hat = std::sqrt(s.v_hat);
  const double scale = pi * root_v_hat * s.amp;
  s.b = scale * ((v_g_eff + pi * s.v_hat * q.v_q) / (v_g_eff + q.v_q));
  s.c = scale * s.v_hat;
  s.d = (1.0 - pi * s.v_hat) * s.b;
  return s;
}

void check_v_g_eff(double v_g_eff) {
  if (!(std::isfinite(v_g_eff) && v_g_eff > 0.0)) {
    throw std::invalid_argument("v_g_eff must be positive and finite");
  }
}

}  // namespace

void VariationalGaussian::validate() const {
  if (!std::isfinite(mu_q)) {
    throw std::invalid_argument("mu_q must be finite");
  }
  if (!(std::isfinite(v_q) && v_q > 0.0)) {
    throw std::invalid_argument("v_q must be positive and finite");
  }
}

double compute_pi_i(const ClutterModel& model, double x_i,
                    const VariationalGaussian& q, double v_g_eff) {
  check_v_g_eff(v_g_eff);
  const double delta = (x_i - q.mu_q) / (v_g_eff + q.v_q);
  return pi_from_delta(model, x_i, delta, v_g_eff);
}

std::vector<FactorStats> compute_factor_stats(const ClutterModel& model,
                                              const Dataset& data,
                                              const VariationalGaussian& q,
                                              double v_g_eff) {
  check_v_g_eff(v_g_eff);
  const double sqrt_v_q = std::sqrt(q.v_q);
  std::vector<FactorStats> stats;
  stats.reserve(data.size());
  for (double x : data.observations) {
    stats.push_back(stats_for(model, x, q, v_g_eff, sqrt_v_q));
  }
  return stats;
}

GradientPair approx_gradient_from_stats(std::span<const FactorStats> stats,
                                        const ClutterModel& model,
                                        const Dataset& data,
                                        const VariationalGaussian& q,
                                        double v_g_eff) {
  double sum_b_dx = 0.0;   // sum of b_i * (x_i - mu_q)
  double sum_c = 0.0;      // sum of c_i
  double sum_d_dx2 = 0.0;  // sum of d_i * (x_i - mu_q)^2
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const double dx = data.observations[i] - q.mu_q;
    sum_b_dx += stats[i].b * dx;
    sum_c += stats[i].c;
    sum_d_dx2 += stats[i].d * dx * dx;
  }

  GradientPair g;
  g.g_mu = sum_b_dx / v_g_eff + (model.prior_mean - q.mu_q) / model.prior_var;
  g.g_v = 0.5 * (-sum_c / v_g_eff +
                 sum_d_dx2 / (v_g_eff * (v_g_eff + q.v_q)) + 1.0 / q.v_q -
                 1.0 / model.prior_var);
  return g;
}

GradientPair approx_gradient(const ClutterModel& model, const Dataset& data,
                             const VariationalGaussian& q, double v_g_eff) {
  const auto stats = compute_factor_stats(model, data, q, v_g_eff);
  return approx_gradient_from_stats(stats, model, data, q, v_g_eff);
}

}  // namespace clutter_vi
