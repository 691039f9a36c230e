#pragma once

#include <span>
#include <vector>

#include "clutter_vi/model.hpp"

namespace clutter_vi {

// Variational posterior over the signal mean: q(mu) = N(mu_q, v_q).
struct VariationalGaussian {
  double mu_q = 0.0;
  double v_q = 1.0;

  // Throws std::invalid_argument unless mu_q is finite and v_q > 0.
  void validate() const;
};

// Per-observation quantities behind the closed-form gradient approximation.
// The signal responsibility surface eps -> pi_i(eps) under the standardized
// reparameterization mu = mu_q + sqrt(v_q) * eps is approximated by a scaled
// Gaussian pi_i * sqrt(v_hat_i) * amp_i * N(eps; eps_hat_i, v_hat_i) matched
// at the stationary point eps_i; b, c, d are the induced per-factor weights
// of the two gradient components.
//
// Range guarantees for finite inputs: pi in [0, 1] (equal to 1 iff w = 0 and
// 0 iff w = 1), v_hat in (0, 1], amp in (0, 1], b and c in [0, 1], d in
// [0, 1), and all fields finite.
struct FactorStats {
  double pi = 0.0;       // signal responsibility at the expansion point
  double eps = 0.0;      // standardized residual sqrt(v_q)*(x - mu_q)/(v_eff + v_q)
  double v_hat = 0.0;    // curvature-matched variance of the local fit
  double eps_hat = 0.0;  // mean of the local fit
  double amp = 0.0;      // amplitude correction, exp of a non-positive exponent
  double b = 0.0;        // weight of (x_i - mu_q) in the mean gradient
  double c = 0.0;        // weight of the variance-shrink term
  double d = 0.0;        // weight of (x_i - mu_q)^2 in the variance gradient
};

struct GradientPair {
  double g_mu = 0.0;  // d ELBO / d mu_q
  double g_v = 0.0;   // d ELBO / d v_q
};

// Signal responsibility pi_i evaluated at the per-factor expansion point.
// v_g_eff is the effective signal variance (the model's v_g, or an annealed
// inflation of it); it must be >= model.v_g in intended use.
double compute_pi_i(const ClutterModel& model, double x_i,
                    const VariationalGaussian& q, double v_g_eff);

// Full per-observation statistics, one entry per observation in index order.
std::vector<FactorStats> compute_factor_stats(const ClutterModel& model,
                                              const Dataset& data,
                                              const VariationalGaussian& q,
                                              double v_g_eff);

// Closed-form approximation of the ELBO gradient with respect to
// (mu_q, v_q). Sums stream over observations in index order so results are
// bit-reproducible.
GradientPair approx_gradient(const ClutterModel& model, const Dataset& data,
                             const VariationalGaussian& q, double v_g_eff);

// Same gradient, evaluated from statistics the caller already computed
// (stats must be aligned with data.observations).
GradientPair approx_gradient_from_stats(std::span<const FactorStats> stats,
                                        const ClutterModel& model,
                                        const Dataset& data,
                                        const VariationalGaussian& q,
                                        double v_g_eff);

}  // namespace clutter_vi
