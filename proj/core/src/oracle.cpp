#include "clutter_vi/oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "clutter_vi/gauss_hermite.hpp"
#include "clutter_vi/math_util.hpp"

namespace clutter_vi {

namespace {

constexpr double inv_sqrt_pi = 0.56418958354775628695;
constexpr double sqrt2 = 1.4142135623730950488;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

// Per-observation clutter log densities are constants of the integration;
// hoisting them out of the node loops dominates the oracle's running time.
std::vector<double> clutter_log_terms(const ClutterModel& model,
                                      const Dataset& data) {
  std::vector<double> terms;
  terms.reserve(data.size());
  const double log_w = std::log(model.w);
  for (double x : data.observations) {
    terms.push_back(log_w + model.log_clutter_pdf(x));
  }
  return terms;
}

struct Domain {
  double lo = 0.0;
  double hi = 0.0;
};

Domain evidence_domain(const ClutterModel& model, const Dataset& data,
                       const QuadratureSettings& settings) {
  Domain d;
  const double prior_sd = std::sqrt(model.prior_var);
  d.lo = model.prior_mean - settings.prior_halfwidth_sds * prior_sd;
  d.hi = model.prior_mean + settings.prior_halfwidth_sds * prior_sd;
  if (!data.empty()) {
    const auto [min_it, max_it] = std::minmax_element(
        data.observations.begin(), data.observations.end());
    const double pad = settings.data_halfwidth_sds * std::sqrt(model.v_g);
    d.lo = std::min(d.lo, *min_it - pad);
    d.hi = std::max(d.hi, *max_it + pad);
  }
  return d;
}

// Trapezoid log-evidence on a fixed grid, computed as a log-sum-exp of the
// log joint (endpoints carry weight 1/2).
double trapezoid_log_evidence(const ClutterModel& model, const Dataset& data,
                              std::span<const double> log_clutter,
                              const Domain& domain, int points) {
  const double h =
      (domain.hi - domain.lo) / static_cast<double>(points - 1);
  const double log_one_minus_w = std::log1p(-model.w);
  const double log_norm = -0.5 * (log_two_pi + std::log(model.v_g));

  std::vector<double> logs(static_cast<std::size_t>(points));
  for (int j = 0; j < points; ++j) {
    const double mu = domain.lo + h * static_cast<double>(j);
    double lj = log_normal_pdf(mu, model.prior_mean, model.prior_var);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double dx = data.observations[i] - mu;
      const double log_signal =
          log_one_minus_w + log_norm - 0.5 * dx * dx / model.v_g;
      lj += log_add_exp(log_signal, log_clutter[i]);
    }
    if (j == 0 || j == points - 1) lj += std::log(0.5);
    logs[static_cast<std::size_t>(j)] = lj;
  }
  return log_sum_exp(logs) + std::log(h);
}

struct NelderMeadResult {
  std::array<double, 2> x{};
  double f = 0.0;
  int evaluations = 0;
};

// Deterministic 2-D Nelder-Mead with the standard reflection / expansion /
// contraction / shrink coefficients; stops when the simplex f-spread falls
// below f_tol or the evaluation budget runs out.
NelderMeadResult nelder_mead_2d(
    const std::function<double(const std::array<double, 2>&)>& f,
    const std::array<double, 2>& start, const std::array<double, 2>& step,
    double f_tol, int max_evaluations) {
  struct Vertex {
    std::array<double, 2> x;
    double f;
  };
  int evaluations = 0;
  auto evaluate = [&](const std::array<double, 2>& x) {
    ++evaluations;
    return f(x);
  };

  std::array<Vertex, 3> simplex{
      Vertex{start, evaluate(start)},
      Vertex{{start[0] + step[0], start[1]}, 0.0},
      Vertex{{start[0], start[1] + step[1]}, 0.0}};
  simplex[1].f = evaluate(simplex[1].x);
  simplex[2].f = evaluate(simplex[2].x);

  auto order = [&] {
    std::sort(simplex.begin(), simplex.end(),
              [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
  };
  order();

  while (evaluations < max_evaluations &&
         std::abs(simplex[2].f - simplex[0].f) > f_tol) {
    const std::array<double, 2> centroid{
        0.5 * (simplex[0].x[0] + simplex[1].x[0]),
        0.5 * (simplex[0].x[1] + simplex[1].x[1])};
    auto along = [&](double t) {
      return std::array<double, 2>{
          centroid[0] + t * (centroid[0] - simplex[2].x[0]),
          centroid[1] + t * (centroid[1] - simplex[2].x[1])};
    };

    const auto reflected = along(1.0);
    const double f_reflected = evaluate(reflected);
    if (f_reflected < simplex[0].f) {
      const auto expanded = along(2.0);
      const double f_expanded = evaluate(expanded);
      if (f_expanded < f_reflected) {
        simplex[2] = {expanded, f_expanded};
      } else {
        simplex[2] = {reflected, f_reflected};
      }
    } else if (f_reflected < simplex[1].f) {
      simplex[2] = {reflected, f_reflected};
    } else {
      const bool outside = f_reflected < simplex[2].f;
      const auto contracted = along(outside ? 0.5 : -0.5);
      const double f_contracted = evaluate(contracted);
      const double limit = outside ? f_reflected : simplex[2].f;
      if (f_contracted <= limit) {
        simplex[2] = {contracted, f_contracted};
      } else {
        for (int k = 1; k < 3; ++k) {  // shrink toward the best vertex
          simplex[k].x[0] =
              simplex[0].x[0] + 0.5 * (simplex[k].x[0] - simplex[0].x[0]);
          simplex[k].x[1] =
              simplex[0].x[1] + 0.5 * (simplex[k].x[1] - simplex[0].x[1]);
          simplex[k].f = evaluate(simplex[k].x);
        }
      }
    }
    order();
  }

  return {simplex[0].x, simplex[0].f, evaluations};
}

}  // namespace

void QuadratureSettings::validate() const {
  require(gh_order >= 3 && gh_order % 2 == 1,
          "gh_order must be odd and at least 3");
  require(trapezoid_points >= 101, "trapezoid_points must be at least 101");
  require(std::isfinite(evidence_tol) && evidence_tol > 0.0,
          "evidence_tol must be positive and finite");
  require(max_refinements >= 1, "max_refinements must be at least 1");
  require(std::isfinite(prior_halfwidth_sds) && prior_halfwidth_sds > 0.0,
          "prior_halfwidth_sds must be positive");
  require(std::isfinite(data_halfwidth_sds) && data_halfwidth_sds > 0.0,
          "data_halfwidth_sds must be positive");
}

double log_marginal_likelihood(const ClutterModel& model, const Dataset& data,
                               const QuadratureSettings& settings) {
  model.validate();
  settings.validate();
  const Domain domain = evidence_domain(model, data, settings);
  const auto log_clutter = clutter_log_terms(model, data);

  int points = settings.trapezoid_points;
  double previous =
      trapezoid_log_evidence(model, data, log_clutter, domain, points);
  for (int r = 0; r < settings.max_refinements; ++r) {
    points = 2 * points - 1;  // halves the step, keeps prior nodes aligned
    const double refined =
        trapezoid_log_evidence(model, data, log_clutter, domain, points);
    if (std::abs(refined - previous) <= settings.evidence_tol) {
      return refined;
    }
    previous = refined;
  }
  throw std::runtime_error(
      "evidence quadrature did not reach the requested tolerance");
}

double brute_force_evidence(const ClutterModel& model, const Dataset& data) {
  model.validate();
  require(data.size() <= 20,
          "brute_force_evidence enumerates 2^n assignments; n must be <= 20");

  // Belief state per assignment prefix: accumulated log weight plus the
  // Gaussian posterior (mean, var) over mu given the signal-assigned subset.
  struct Component {
    double log_weight;
    double mean;
    double var;
  };
  std::vector<Component> components{
      {0.0, model.prior_mean, model.prior_var}};
  const double log_w = std::log(model.w);
  const double log_one_minus_w = std::log1p(-model.w);

  for (double x : data.observations) {
    std::vector<Component> next;
    next.reserve(2 * components.size());
    const double log_clutter_x = log_w + model.log_clutter_pdf(x);
    for (const Component& c : components) {
      // signal branch: marginal N(x; mean, var + v_g), conjugate update
      const double marginal_var = c.var + model.v_g;
      Component signal;
      signal.log_weight = c.log_weight + log_one_minus_w +
                          log_normal_pdf(x, c.mean, marginal_var);
      signal.var = c.var * model.v_g / marginal_var;
      signal.mean = signal.var * (c.mean / c.var + x / model.v_g);
      next.push_back(signal);
      // clutter branch: x explained by the fixed clutter component
      next.push_back({c.log_weight + log_clutter_x, c.mean, c.var});
    }
    components = std::move(next);
  }

  std::vector<double> logs;
  logs.reserve(components.size());
  for (const Component& c : components) logs.push_back(c.log_weight);
  return log_sum_exp(logs);
}

double elbo(const ClutterModel& model, const Dataset& data,
            const VariationalGaussian& q, const QuadratureSettings& settings) {
  model.validate();
  settings.validate();
  q.validate();
  const GaussHermiteRule& rule = gauss_hermite_rule(settings.gh_order);
  const auto log_clutter = clutter_log_terms(model, data);
  const double log_one_minus_w = std::log1p(-model.w);
  const double log_norm = -0.5 * (log_two_pi + std::log(model.v_g));
  const double sqrt_2vq = sqrt2 * std::sqrt(q.v_q);

  double expected_log_likelihood = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double x = data.observations[i];
    double acc = 0.0;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
      const double mu = q.mu_q + sqrt_2vq * rule.nodes[k];
      const double dx = x - mu;
      const double log_signal =
          log_one_minus_w + log_norm - 0.5 * dx * dx / model.v_g;
      acc += rule.weights[k] * log_add_exp(log_signal, log_clutter[i]);
    }
    expected_log_likelihood += inv_sqrt_pi * acc;
  }

  const double dmu = q.mu_q - model.prior_mean;
  const double prior_cross_entropy =
      -0.5 * (log_two_pi + std::log(model.prior_var)) -
      (dmu * dmu + q.v_q) / (2.0 * model.prior_var);
  const double entropy = 0.5 * (log_two_pi + 1.0 + std::log(q.v_q));
  return expected_log_likelihood + prior_cross_entropy + entropy;
}

double kl_divergence(const ClutterModel& model, const Dataset& data,
                     const VariationalGaussian& q,
                     const QuadratureSettings& settings) {
  return log_marginal_likelihood(model, data, settings) -
         elbo(model, data, q, settings);
}

GradientPair exact_gradient_quadrature(const ClutterModel& model,
                                       const Dataset& data,
                                       const VariationalGaussian& q,
                                       const QuadratureSettings& settings) {
  model.validate();
  settings.validate();
  q.validate();
  const GaussHermiteRule& rule = gauss_hermite_rule(settings.gh_order);
  const auto log_clutter = clutter_log_terms(model, data);
  const double log_one_minus_w = std::log1p(-model.w);
  const double log_norm = -0.5 * (log_two_pi + std::log(model.v_g));
  const double sqrt_vq = std::sqrt(q.v_q);

  double sum_mu = 0.0;
  double sum_v = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double d_i = (data.observations[i] - q.mu_q) / sqrt_vq;
    double acc_mu = 0.0;
    double acc_v = 0.0;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
      const double eps = sqrt2 * rule.nodes[k];
      const double resid = sqrt_vq * (d_i - eps);  // x_i - mu(eps)
      const double log_signal =
          log_one_minus_w + log_norm - 0.5 * resid * resid / model.v_g;
      const double pi_eps =
          std::exp(log_signal - log_add_exp(log_signal, log_clutter[i]));
      const double w_pi = rule.weights[k] * pi_eps;
      acc_mu += w_pi * resid;
      acc_v += w_pi * resid * eps;
    }
    sum_mu += inv_sqrt_pi * acc_mu;
    sum_v += inv_sqrt_pi * acc_v;
  }

  GradientPair g;
  g.g_mu = sum_mu / model.v_g +
           (model.prior_mean - q.mu_q) / model.prior_var;
  g.g_v = sum_v / (2.0 * sqrt_vq * model.v_g) + 0.5 / q.v_q -
          0.5 / model.prior_var;
  return g;
}

GradientPair finite_difference_gradient(const ClutterModel& model,
                                        const Dataset& data,
                                        const VariationalGaussian& q,
                                        const QuadratureSettings& settings,
                                        double h) {
  require(std::isfinite(h) && h > 0.0 && h < 1.0,
          "finite-difference step h must lie in (0, 1)");
  q.validate();
  const double h_mu = h * std::sqrt(q.v_q);
  const double h_v = h * q.v_q;

  GradientPair g;
  g.g_mu = (elbo(model, data, {q.mu_q + h_mu, q.v_q}, settings) -
            elbo(model, data, {q.mu_q - h_mu, q.v_q}, settings)) /
           (2.0 * h_mu);
  g.g_v = (elbo(model, data, {q.mu_q, q.v_q + h_v}, settings) -
           elbo(model, data, {q.mu_q, q.v_q - h_v}, settings)) /
          (2.0 * h_v);
  return g;
}

MethodResult numeric_elbo_maximizer(const ClutterModel& model,
                                    const Dataset& data,
                                    const QuadratureSettings& settings) {
  model.validate();
  settings.validate();

  MethodResult result;
  result.method = MethodId::numeric_baseline;

  if (data.empty()) {
    result.q.mu_q = model.prior_mean;
    result.q.v_q = model.prior_var;
    result.converged = true;
    TraceRow row;
    row.iteration = 0;
    row.mu_q = result.q.mu_q;
    row.v_q = result.q.v_q;
    result.trace.push_back(row);
    return result;
  }

  double mean = 0.0;
  for (double x : data.observations) mean += x;
  mean /= static_cast<double>(data.size());
  double var = 0.0;
  for (double x : data.observations) var += (x - mean) * (x - mean);
  var /= static_cast<double>(data.size());

  // Barrier on ln v_q keeps the search away from under/overflow; the optimum
  // always lies far inside (posterior variances live between ~v_g/n and
  // prior_var).
  auto objective = [&](const std::array<double, 2>& x) {
    if (!(x[1] > -50.0 && x[1] < 50.0)) {
      return std::numeric_limits<double>::infinity();
    }
    return -elbo(model, data, {x[0], std::exp(x[1])}, settings);
  };

  const double spread = std::sqrt(model.v_g + var);
  const double lnv_lo = std::log(model.v_g) - 6.0;
  const double lnv_hi = std::log(var + model.v_g);
  constexpr int grid = 5;

  NelderMeadResult best;
  best.f = std::numeric_limits<double>::infinity();
  int total_evaluations = 0;
  for (int a = 0; a < grid; ++a) {
    const double mu0 = mean - 2.0 * spread +
                       4.0 * spread * static_cast<double>(a) /
                           static_cast<double>(grid - 1);
    for (int b = 0; b < grid; ++b) {
      const double lnv0 = lnv_lo + (lnv_hi - lnv_lo) *
                                       static_cast<double>(b) /
                                       static_cast<double>(grid - 1);
      const NelderMeadResult r = nelder_mead_2d(
          objective, {mu0, lnv0}, {0.25 * spread, 0.4}, 1e-10, 600);
      total_evaluations += r.evaluations;
      if (r.f < best.f) best = r;
    }
  }

  result.q.mu_q = best.x[0];
  result.q.v_q = std::exp(best.x[1]);
  result.iterations = total_evaluations;
  result.converged = std::isfinite(best.f);
  TraceRow row;
  row.iteration = 0;
  row.mu_q = result.q.mu_q;
  row.v_q = result.q.v_q;
  row.elbo = -best.f;
  result.trace.push_back(row);
  return result;
}

}  // namespace clutter_vi
