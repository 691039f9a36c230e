#pragma once

#include "clutter_vi/gradient.hpp"
#include "clutter_vi/method_result.hpp"
#include "clutter_vi/model.hpp"

namespace clutter_vi {

// Settings for the high-precision numerical reference computations.
struct QuadratureSettings {
  // Gauss-Hermite order for ELBO / gradient expectations; odd and >= 3 so a
  // node sits at the mode.
  int gh_order = 129;
  // Initial trapezoid grid for the evidence integral; refined by doubling
  // until successive log-evidence values agree within evidence_tol.
  int trapezoid_points = 20001;
  double evidence_tol = 1e-9;
  int max_refinements = 6;
  // Integration domain half-widths, in posterior-relevant standard
  // deviations: the domain is the union of the prior bracket
  // prior_mean +- prior_halfwidth_sds * sqrt(prior_var) and the data bracket
  // [min x, max x] +- data_halfwidth_sds * sqrt(v_g). The union (rather than
  // an intersection) matters: far from the data the likelihood flattens to
  // the positive constant prod_i w * clutter_pdf(x_i), so prior-wide
  // all-clutter mass contributes to the evidence.
  double prior_halfwidth_sds = 12.0;
  double data_halfwidth_sds = 8.0;

  void validate() const;  // throws std::invalid_argument on bad settings
};

// ln p(X): trapezoid rule on the log joint, accumulated with max-shifted
// log-sum-exp, refined by grid doubling. Throws std::runtime_error if the
// refinement budget is exhausted before reaching evidence_tol.
double log_marginal_likelihood(const ClutterModel& model, const Dataset& data,
                               const QuadratureSettings& settings = {});

// ln p(X) summed exactly over all 2^n signal/clutter assignments (each
// assignment yields a closed-form Gaussian integral). Refuses n > 20.
double brute_force_evidence(const ClutterModel& model, const Dataset& data);

// Evidence lower bound of q = N(mu_q, v_q): Gauss-Hermite expectations of
// the per-factor log likelihoods plus closed-form prior cross-entropy and
// Gaussian entropy terms.
double elbo(const ClutterModel& model, const Dataset& data,
            const VariationalGaussian& q,
            const QuadratureSettings& settings = {});

// KL(q || posterior) = ln p(X) - ELBO(q); non-negative up to quadrature
// error.
double kl_divergence(const ClutterModel& model, const Dataset& data,
                     const VariationalGaussian& q,
                     const QuadratureSettings& settings = {});

// Reference ELBO gradient: the exact single-integral form of the two
// derivatives, evaluated by Gauss-Hermite quadrature in the standardized
// variable. This is the quantity the closed-form approx_gradient
// approximates.
GradientPair exact_gradient_quadrature(const ClutterModel& model,
                                       const Dataset& data,
                                       const VariationalGaussian& q,
                                       const QuadratureSettings& settings = {});

// Central finite differences of the quadrature ELBO, with steps scaled to
// the posterior (h * sqrt(v_q) for the mean, h * v_q for the variance).
GradientPair finite_difference_gradient(const ClutterModel& model,
                                        const Dataset& data,
                                        const VariationalGaussian& q,
                                        const QuadratureSettings& settings = {},
                                        double h = 1e-5);

// Direct numerical ELBO maximization over (mu_q, ln v_q): Nelder-Mead from a
// 5 x 5 grid of restarts spanning the moment-matched neighborhood, keeping
// the best optimum. iterations reports total function evaluations.
MethodResult numeric_elbo_maximizer(const ClutterModel& model,
                                    const Dataset& data,
                                    const QuadratureSettings& settings = {});

}  // namespace clutter_vi
