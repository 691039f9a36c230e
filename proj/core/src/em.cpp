#include "clutter_vi/em.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace clutter_vi {

void EMSettings::validate() const {
  if (max_iters < 1) {
    throw std::invalid_argument("max_iters must be at least 1");
  }
  if (!(std::isfinite(tol) && tol > 0.0)) {
    throw std::invalid_argument("tol must be positive and finite");
  }
}

EMState init_state(const ClutterModel& model, const Dataset& data) {
  model.validate();
  if (data.empty()) {
    throw std::invalid_argument(
        "init_state requires at least one observation");
  }
  double mean = 0.0;
  for (double x : data.observations) mean += x;
  mean /= static_cast<double>(data.size());
  double var = 0.0;
  for (double x : data.observations) var += (x - mean) * (x - mean);
  var /= static_cast<double>(data.size());  // biased estimator

  EMState state;
  state.q.mu_q = mean;
  state.q.v_q = var + model.v_g;
  state.v_g_hat = std::max(2.0 * state.q.v_q, model.v_g);
  state.iteration = 0;
  return state;
}

double m_step_mean(std::span<const FactorStats> stats,
                   const ClutterModel& model, const Dataset& data,
                   const VariationalGaussian& /*q*/, double v_g_eff) {
  double sum_b_x = 0.0;
  double sum_b = 0.0;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    sum_b_x += stats[i].b * data.observations[i];
    sum_b += stats[i].b;
  }
  return (sum_b_x / v_g_eff + model.prior_mean / model.prior_var) /
         (sum_b / v_g_eff + 1.0 / model.prior_var);
}

double m_step_var(std::span<const FactorStats> stats,
                  const ClutterModel& model, const Dataset& data,
                  const VariationalGaussian& q, double v_g_eff) {
  double sum_d_dx2 = 0.0;
  double sum_c = 0.0;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const double dx = data.observations[i] - q.mu_q;
    sum_d_dx2 += stats[i].d * dx * dx;
    sum_c += stats[i].c;
  }
  const double numerator =
      sum_d_dx2 / v_g_eff * (q.v_q / (v_g_eff + q.v_q)) + 1.0;
  const double denominator = sum_c / v_g_eff + 1.0 / model.prior_var;
  return numerator / denominator;
}

EMState anneal_and_constrain(const EMState& state, const ClutterModel& model,
                             bool anneal_cap_at_v_q) {
  EMState next = state;
  const double cap = anneal_cap_at_v_q ? next.q.v_q : 2.0 * next.q.v_q;
  next.v_g_hat = std::max(std::min(cap, next.v_g_hat / 2.0), model.v_g);
  next.q.v_q = std::min(next.q.v_q, std::max(model.v_g, next.v_g_hat / 2.0));
  return next;
}

MethodResult run_em(const ClutterModel& model, const Dataset& data,
                    const EMSettings& settings) {
  settings.validate();
  EMState state = init_state(model, data);

  MethodResult result;
  result.method = MethodId::elbo_gaa;

  auto push_trace = [&](const EMState& s) {
    TraceRow row;
    row.iteration = s.iteration;
    row.mu_q = s.q.mu_q;
    row.v_q = s.q.v_q;
    row.v_g_hat = s.v_g_hat;
    if (settings.record_diagnostics) {
      const GradientPair g = approx_gradient(model, data, s.q, s.v_g_hat);
      row.g_mu = g.g_mu;
      row.g_v = g.g_v;
    }
    result.trace.push_back(row);
  };

  push_trace(state);

  bool converged = false;
  for (int t = 1; t <= settings.max_iters; ++t) {
    const VariationalGaussian previous = state.q;
    const auto stats =
        compute_factor_stats(model, data, state.q, state.v_g_hat);
    const double mu_new =
        m_step_mean(stats, model, data, state.q, state.v_g_hat);
    const double v_new =
        m_step_var(stats, model, data, state.q, state.v_g_hat);
    state.q.mu_q = mu_new;
    state.q.v_q = v_new;
    state = anneal_and_constrain(state, model, settings.anneal_cap_at_v_q);
    state.iteration = t;
    push_trace(state);

    const bool annealing_done = state.v_g_hat == model.v_g;
    const double mean_scale = std::sqrt(state.q.v_q);
    converged = annealing_done &&
                std::abs(state.q.mu_q - previous.mu_q) <=
                    settings.tol * mean_scale &&
                std::abs(state.q.v_q - previous.v_q) <=
                    settings.tol * state.q.v_q;
    if (converged) break;
  }

  result.q = state.q;
  result.iterations = state.iteration;
  result.converged = converged;
  result.v_g_hat = state.v_g_hat;
  return result;
}

}  // namespace clutter_vi
