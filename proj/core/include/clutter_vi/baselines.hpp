#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "clutter_vi/method_result.hpp"
#include "clutter_vi/model.hpp"

namespace clutter_vi {

struct LaplaceSettings {
  int max_iters = 200;
  double tol = 1e-13;  // relative step tolerance on the mode location

  void validate() const;
};

struct EpSettings {
  int max_sweeps = 100;
  double tol = 1e-10;    // relative change of (mean, variance) per sweep
  double damping = 1.0;  // site update damping in (0, 1]; 1 = undamped

  void validate() const;
};

struct MfSettings {
  int max_iters = 500;
  double tol = 1e-10;  // relative change of (mean, variance) per iteration

  void validate() const;
};

// Optional instrumentation for the EP run, mainly consumed by tests.
struct EpDiagnostics {
  // Snapshot after each sweep: the global natural parameters and the sum of
  // site natural parameters (prior + site sums must reconstruct the global).
  struct SweepRecord {
    double q_precision = 0.0;
    double q_mean_precision = 0.0;
    double site_precision_sum = 0.0;
    double site_mean_precision_sum = 0.0;
  };
  std::vector<SweepRecord> sweeps;
  std::vector<double> site_precision;       // final site precisions
  std::vector<double> site_mean_precision;  // final site precision * mean
  long skipped_updates = 0;  // updates rejected by the positivity guard
};

// Gaussian fit N(mode, -1 / l'') at the mode of the log joint, located by
// safeguarded Newton with an analytic first and second derivative. A
// non-negative curvature at the mode is reported as converged = false with
// the prior variance substituted.
MethodResult laplace(const ClutterModel& model, const Dataset& data,
                     const LaplaceSettings& settings = {});

// Expectation propagation with one Gaussian site per observation, swept in
// index order. Sites may carry negative precision (that is how a factor can
// widen q); an update is skipped (counted, never applied) only when the
// cavity would be improper, the tilted variance is non-positive, or the
// resulting global precision would leave the Gaussian family.
// Non-convergence after max_sweeps is flagged, not thrown.
MethodResult ep(const ClutterModel& model, const Dataset& data,
                const EpSettings& settings = {},
                EpDiagnostics* diagnostics = nullptr);

// Mean-field coordinate ascent on the augmented model with explicit
// assignment responsibilities; each iteration is a closed-form block update
// (responsibilities, then q), monotone in the augmented objective.
MethodResult mf_vi(const ClutterModel& model, const Dataset& data,
                   const MfSettings& settings = {});

// Augmented-model evidence lower bound used by the mean-field iteration:
// expected complete-data log joint under (q, responsibilities) plus both
// entropy terms. Exposed so tests can check per-iteration monotonicity.
double mf_augmented_objective(const ClutterModel& model, const Dataset& data,
                              const VariationalGaussian& q,
                              std::span<const double> responsibilities);

// One closed-form responsibility pass at a fixed q (the E-like half of the
// mean-field iteration); returns P(assignment = signal) per observation.
std::vector<double> mf_responsibilities(const ClutterModel& model,
                                        const Dataset& data,
                                        const VariationalGaussian& q);

}  // namespace clutter_vi
