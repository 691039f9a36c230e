#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "clutter_vi/gradient.hpp"

namespace clutter_vi {

enum class MethodId {
  elbo_gaa,          // gradient-approximation EM on the ELBO
  laplace,           // Laplace approximation at the posterior mode
  ep,                // expectation propagation
  mf_vi,             // mean-field coordinate-ascent VI
  numeric_baseline,  // direct numerical ELBO maximization
};

// Canonical identifier used in result files.
std::string_view method_name(MethodId id);

// Accepts the canonical names plus the short CLI aliases
// gaa / laplace / ep / mf / baseline. Returns nullopt for anything else.
std::optional<MethodId> parse_method(std::string_view name);

// One iteration (or sweep) of a method's trajectory. Fields that a given
// method does not produce stay unset; kl and elbo are filled in by the
// experiment harness when diagnostics are requested, never by the methods
// themselves.
struct TraceRow {
  int iteration = 0;
  double mu_q = 0.0;
  double v_q = 0.0;
  std::optional<double> v_g_hat;  // annealed effective variance (EM only)
  std::optional<double> g_mu;     // gradient diagnostics (EM only)
  std::optional<double> g_v;
  std::optional<double> elbo;
  std::optional<double> kl;
};

struct MethodResult {
  MethodId method = MethodId::elbo_gaa;
  VariationalGaussian q;
  int iterations = 0;      // final iteration / sweep count
  bool converged = false;  // non-convergence is a flag, never an exception
  std::vector<TraceRow> trace;
  std::optional<double> v_g_hat;  // final annealed variance (EM only)
};

}  // namespace clutter_vi
