#pragma once

#include <span>

#include "clutter_vi/gradient.hpp"
#include "clutter_vi/method_result.hpp"
#include "clutter_vi/model.hpp"

namespace clutter_vi {

struct EMSettings {
  int max_iters = 100;
  double tol = 1e-8;  // relative, scaled by sqrt(v_q) for the mean and by
                      // v_q for the variance
  bool record_diagnostics = true;  // store per-iteration gradients in traces
  // Annealing cap variant: false caps the halved effective variance at
  // 2 * v_q, true caps it at v_q (a slightly more aggressive schedule).
  bool anneal_cap_at_v_q = false;

  void validate() const;  // throws std::invalid_argument on bad settings
};

// Mutable EM state: the current variational posterior, the annealed
// effective signal variance v_g_hat >= v_g, and the iteration counter.
struct EMState {
  VariationalGaussian q;
  double v_g_hat = 0.0;
  int iteration = 0;
};

// Moment-matched initialization: mu_q = sample mean, v_q = biased sample
// variance + v_g, v_g_hat = max(2 * v_q, v_g). Throws on an empty dataset.
EMState init_state(const ClutterModel& model, const Dataset& data);

// Closed-form coordinate update of the variational mean given per-factor
// statistics computed at q with effective variance v_g_eff.
double m_step_mean(std::span<const FactorStats> stats,
                   const ClutterModel& model, const Dataset& data,
                   const VariationalGaussian& q, double v_g_eff);

// Closed-form coordinate update of the variational variance; uses the
// pre-update q (both coordinates are refreshed simultaneously from one set
// of statistics).
double m_step_var(std::span<const FactorStats> stats,
                  const ClutterModel& model, const Dataset& data,
                  const VariationalGaussian& q, double v_g_eff);

// Annealing schedule applied after each M-step: halve v_g_hat, cap it at
// 2 * v_q (or v_q when anneal_cap_at_v_q), floor it at v_g; then constrain
// v_q <= max(v_g, v_g_hat / 2) so the posterior variance cannot outrun the
// remaining annealing budget.
EMState anneal_and_constrain(const EMState& state, const ClutterModel& model,
                             bool anneal_cap_at_v_q = false);

// Full EM loop. Convergence requires the annealing to have bottomed out
// (v_g_hat == v_g exactly) plus relative parameter changes within tol.
// Non-convergence is reported through MethodResult::converged.
MethodResult run_em(const ClutterModel& model, const Dataset& data,
                    const EMSettings& settings = {});

}  // namespace clutter_vi
