#include "clutter_vi/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "clutter_vi/math_util.hpp"

namespace clutter_vi {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

// Exact posterior for an empty dataset is the prior; every method returns it
// directly rather than special-casing zero-length loops.
MethodResult prior_result(const ClutterModel& model, MethodId id) {
  MethodResult result;
  result.method = id;
  result.q.mu_q = model.prior_mean;
  result.q.v_q = model.prior_var;
  result.iterations = 0;
  result.converged = true;
  TraceRow row;
  row.iteration = 0;
  row.mu_q = result.q.mu_q;
  row.v_q = result.q.v_q;
  result.trace.push_back(row);
  return result;
}

struct LogJointDerivatives {
  double d1 = 0.0;
  double d2 = 0.0;
};

// Analytic first and second derivative of the log joint in mu. Each factor
// contributes through its signal responsibility at mu.
LogJointDerivatives log_joint_derivatives(const ClutterModel& model,
                                          const Dataset& data, double mu) {
  LogJointDerivatives d;
  d.d1 = (model.prior_mean - mu) / model.prior_var;
  d.d2 = -1.0 / model.prior_var;
  for (double x : data.observations) {
    const double log_signal =
        std::log1p(-model.w) + log_normal_pdf(x, mu, model.v_g);
    const double log_clutter = std::log(model.w) + model.log_clutter_pdf(x);
    const double r =
        std::exp(log_signal - log_add_exp(log_signal, log_clutter));
    const double t = (x - mu) / model.v_g;
    d.d1 += r * t;
    d.d2 += r * (1.0 - r) * t * t - r / model.v_g;
  }
  return d;
}

double sample_mean(const Dataset& data) {
  double mean = 0.0;
  for (double x : data.observations) mean += x;
  return mean / static_cast<double>(data.size());
}

}  // namespace

void LaplaceSettings::validate() const {
  require(max_iters >= 1, "max_iters must be at least 1");
  require(std::isfinite(tol) && tol > 0.0, "tol must be positive and finite");
}

void EpSettings::validate() const {
  require(max_sweeps >= 1, "max_sweeps must be at least 1");
  require(std::isfinite(tol) && tol > 0.0, "tol must be positive and finite");
  require(std::isfinite(damping) && damping > 0.0 && damping <= 1.0,
          "damping must lie in (0, 1]");
}

void MfSettings::validate() const {
  require(max_iters >= 1, "max_iters must be at least 1");
  require(std::isfinite(tol) && tol > 0.0, "tol must be positive and finite");
}

MethodResult laplace(const ClutterModel& model, const Dataset& data,
                     const LaplaceSettings& settings) {
  model.validate();
  settings.validate();
  if (data.empty()) return prior_result(model, MethodId::laplace);

  // The log joint's derivative is positive left of all posterior mass and
  // negative right of it; this bracket provably straddles every root.
  const double spread = 3.0 * std::sqrt(model.v_g);
  const auto [min_it, max_it] = std::minmax_element(
      data.observations.begin(), data.observations.end());
  double lo = std::min(model.prior_mean, *min_it - spread);
  double hi = std::max(model.prior_mean, *max_it + spread);

  MethodResult result;
  result.method = MethodId::laplace;

  double mu = sample_mean(data);
  LogJointDerivatives d = log_joint_derivatives(model, data, mu);

  auto push_trace = [&](int iteration) {
    TraceRow row;
    row.iteration = iteration;
    row.mu_q = mu;
    row.v_q = d.d2 < 0.0 ? -1.0 / d.d2 : model.prior_var;
    result.trace.push_back(row);
  };
  push_trace(0);

  bool converged = false;
  int iteration = 0;
  for (int t = 1; t <= settings.max_iters; ++t) {
    if (d.d1 == 0.0) {
      converged = true;
      break;
    }
    if (d.d1 > 0.0) {
      lo = mu;
    } else {
      hi = mu;
    }
    double next = std::numeric_limits<double>::quiet_NaN();
    if (d.d2 < 0.0) next = mu - d.d1 / d.d2;
    if (!(std::isfinite(next) && next > lo && next < hi)) {
      next = 0.5 * (lo + hi);  // safeguarded fallback keeps the bracket
    }
    const double step = std::abs(next - mu);
    mu = next;
    d = log_joint_derivatives(model, data, mu);
    iteration = t;
    push_trace(t);
    if (step <= settings.tol * (1.0 + std::abs(mu))) {
      converged = true;
      break;
    }
  }

  result.q.mu_q = mu;
  if (d.d2 < 0.0) {
    result.q.v_q = -1.0 / d.d2;
  } else {
    // Flat or convex curvature at the located point: no Gaussian fit exists;
    // flag the failure and fall back to the prior scale.
    result.q.v_q = model.prior_var;
    converged = false;
  }
  result.iterations = iteration;
  result.converged = converged;
  return result;
}

MethodResult ep(const ClutterModel& model, const Dataset& data,
                const EpSettings& settings, EpDiagnostics* diagnostics) {
  model.validate();
  settings.validate();
  if (diagnostics) *diagnostics = EpDiagnostics{};
  if (data.empty()) return prior_result(model, MethodId::ep);

  const std::size_t n = data.size();
  std::vector<double> site_prec(n, 0.0);
  std::vector<double> site_pm(n, 0.0);  // site precision * site mean
  double q_prec = 1.0 / model.prior_var;
  double q_pm = model.prior_mean / model.prior_var;
  long skipped = 0;

  MethodResult result;
  result.method = MethodId::ep;
  auto push_trace = [&](int sweep) {
    TraceRow row;
    row.iteration = sweep;
    row.mu_q = q_pm / q_prec;
    row.v_q = 1.0 / q_prec;
    result.trace.push_back(row);
  };
  push_trace(0);

  bool converged = false;
  int sweep = 0;
  for (int s = 1; s <= settings.max_sweeps; ++s) {
    const double prev_mean = q_pm / q_prec;
    const double prev_var = 1.0 / q_prec;
    for (std::size_t i = 0; i < n; ++i) {
      const double cav_prec = q_prec - site_prec[i];
      const double cav_pm = q_pm - site_pm[i];
      if (!(cav_prec > 0.0)) {
        ++skipped;  // deleting this site leaves an improper cavity
        continue;
      }
      const double v_cav = 1.0 / cav_prec;
      const double m_cav = cav_pm * v_cav;
      const double x = data.observations[i];
      const double s_var = v_cav + model.v_g;

      const double log_signal =
          std::log1p(-model.w) + log_normal_pdf(x, m_cav, s_var);
      const double log_clutter =
          std::log(model.w) + model.log_clutter_pdf(x);
      const double r =
          std::exp(log_signal - log_add_exp(log_signal, log_clutter));

      const double dm = x - m_cav;
      const double m_new = m_cav + v_cav * r * dm / s_var;
      const double v_new = v_cav - r * v_cav * v_cav / s_var +
                           r * (1.0 - r) * v_cav * v_cav * dm * dm /
                               (s_var * s_var);
      if (!(v_new > 0.0 && std::isfinite(v_new))) {
        ++skipped;
        continue;
      }

      double cand_prec = 1.0 / v_new - cav_prec;
      double cand_pm = m_new / v_new - cav_pm;
      if (settings.damping < 1.0) {
        cand_prec = (1.0 - settings.damping) * site_prec[i] +
                    settings.damping * cand_prec;
        cand_pm = (1.0 - settings.damping) * site_pm[i] +
                  settings.damping * cand_pm;
      }
      // Sites may carry negative precision (they then widen q); only the
      // global approximation must stay a proper Gaussian.
      const double next_q_prec = cav_prec + cand_prec;
      if (!(next_q_prec > 0.0) || !std::isfinite(next_q_prec)) {
        ++skipped;
        continue;
      }
      site_prec[i] = cand_prec;
      site_pm[i] = cand_pm;
      q_prec = next_q_prec;
      q_pm = cav_pm + cand_pm;
    }
    sweep = s;
    push_trace(s);
    if (diagnostics) {
      EpDiagnostics::SweepRecord record;
      record.q_precision = q_prec;
      record.q_mean_precision = q_pm;
      for (std::size_t i = 0; i < n; ++i) {
        record.site_precision_sum += site_prec[i];
        record.site_mean_precision_sum += site_pm[i];
      }
      diagnostics->sweeps.push_back(record);
    }
    const double mean = q_pm / q_prec;
    const double var = 1.0 / q_prec;
    if (std::abs(mean - prev_mean) <= settings.tol * std::sqrt(var) &&
        std::abs(var - prev_var) <= settings.tol * var) {
      converged = true;
      break;
    }
  }

  result.q.mu_q = q_pm / q_prec;
  result.q.v_q = 1.0 / q_prec;
  result.iterations = sweep;
  result.converged = converged;
  if (diagnostics) {
    diagnostics->site_precision = site_prec;
    diagnostics->site_mean_precision = site_pm;
    diagnostics->skipped_updates = skipped;
  }
  return result;
}

std::vector<double> mf_responsibilities(const ClutterModel& model,
                                        const Dataset& data,
                                        const VariationalGaussian& q) {
  std::vector<double> r;
  r.reserve(data.size());
  for (double x : data.observations) {
    // Expected signal log density under q: the (x - mu)^2 term integrates to
    // (x - mu_q)^2 + v_q.
    const double dx = x - q.mu_q;
    const double log_signal = std::log1p(-model.w) -
                              0.5 * (log_two_pi + std::log(model.v_g)) -
                              (dx * dx + q.v_q) / (2.0 * model.v_g);
    const double log_clutter = std::log(model.w) + model.log_clutter_pdf(x);
    r.push_back(std::exp(log_signal - log_add_exp(log_signal, log_clutter)));
  }
  return r;
}

double mf_augmented_objective(const ClutterModel& model, const Dataset& data,
                              const VariationalGaussian& q,
                              std::span<const double> responsibilities) {
  require(responsibilities.size() == data.size(),
          "responsibilities must align with observations");
  auto xlogx = [](double p) { return p > 0.0 ? p * std::log(p) : 0.0; };

  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double x = data.observations[i];
    const double r = responsibilities[i];
    const double dx = x - q.mu_q;
    const double expected_log_signal =
        std::log1p(-model.w) - 0.5 * (log_two_pi + std::log(model.v_g)) -
        (dx * dx + q.v_q) / (2.0 * model.v_g);
    const double log_clutter = std::log(model.w) + model.log_clutter_pdf(x);
    total += r * expected_log_signal + (1.0 - r) * log_clutter;
    total -= xlogx(r) + xlogx(1.0 - r);  // assignment entropy
  }
  const double dmu = q.mu_q - model.prior_mean;
  total += -0.5 * (log_two_pi + std::log(model.prior_var)) -
           (dmu * dmu + q.v_q) / (2.0 * model.prior_var);
  total += 0.5 * (log_two_pi + 1.0 + std::log(q.v_q));  // Gaussian entropy
  return total;
}

MethodResult mf_vi(const ClutterModel& model, const Dataset& data,
                   const MfSettings& settings) {
  model.validate();
  settings.validate();
  if (data.empty()) return prior_result(model, MethodId::mf_vi);

  // Moment-matched start, mirroring the other iterative methods.
  const double mean = sample_mean(data);
  double var = 0.0;
  for (double x : data.observations) var += (x - mean) * (x - mean);
  var /= static_cast<double>(data.size());

  VariationalGaussian q{mean, var + model.v_g};

  MethodResult result;
  result.method = MethodId::mf_vi;
  auto push_trace = [&](int iteration) {
    TraceRow row;
    row.iteration = iteration;
    row.mu_q = q.mu_q;
    row.v_q = q.v_q;
    result.trace.push_back(row);
  };
  push_trace(0);

  bool converged = false;
  int iteration = 0;
  for (int t = 1; t <= settings.max_iters; ++t) {
    const VariationalGaussian previous = q;
    const auto r = mf_responsibilities(model, data, q);
    double precision = 1.0 / model.prior_var;
    double weighted = model.prior_mean / model.prior_var;
    for (std::size_t i = 0; i < r.size(); ++i) {
      precision += r[i] / model.v_g;
      weighted += r[i] * data.observations[i] / model.v_g;
    }
    q.v_q = 1.0 / precision;
    q.mu_q = weighted * q.v_q;
    iteration = t;
    push_trace(t);
    if (std::abs(q.mu_q - previous.mu_q) <= settings.tol * std::sqrt(q.v_q) &&
        std::abs(q.v_q - previous.v_q) <= settings.tol * q.v_q) {
      converged = true;
      break;
    }
  }

  result.q = q;
  result.iterations = iteration;
  result.converged = converged;
  return result;
}

}  // namespace clutter_vi
