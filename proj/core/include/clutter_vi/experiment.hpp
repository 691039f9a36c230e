#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clutter_vi/baselines.hpp"
#include "clutter_vi/em.hpp"
#include "clutter_vi/method_result.hpp"
#include "clutter_vi/model.hpp"
#include "clutter_vi/oracle.hpp"

namespace clutter_vi {

std::vector<std::uint64_t> default_experiment_seeds();  // 1 .. 50
std::vector<MethodId> all_methods();

// Full description of a comparative experiment: for every (size, seed) cell
// a dataset is drawn, every requested method is fit, and each fit is scored
// by its KL divergence to the exact posterior. Defaults reproduce the
// standard comparison setting (w = 0.5, true mean 2, n = 20, 50 seeds, all
// methods).
struct ExperimentConfig {
  ClutterModel model;
  double true_mean = 2.0;
  std::vector<std::size_t> sizes = {20};
  std::vector<std::uint64_t> seeds = default_experiment_seeds();
  std::vector<MethodId> methods = all_methods();
  EMSettings em;
  LaplaceSettings laplace;
  EpSettings ep;
  MfSettings mf;
  QuadratureSettings quadrature;
  std::string output_dir = "out";
  bool diagnostics = false;  // also write per-iteration trace files with
                             // per-row ELBO / KL filled in

  void validate() const;  // throws std::invalid_argument on bad settings
};

// Parses a JSON config; every key is optional and falls back to the
// defaults above, unknown keys are rejected. See README for the schema.
ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

struct RunRecord {
  MethodId method = MethodId::elbo_gaa;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  MethodResult result;
  double elbo_value = 0.0;
  double kl = 0.0;
  double log_evidence = 0.0;
  // |mu_q - mu_q(numeric baseline)|; unset when the baseline was not run.
  std::optional<double> abs_err_mean;
};

struct MethodAggregate {
  std::size_t runs = 0;
  std::size_t converged = 0;
  // Cells of this size where the method achieved the lowest KL among the
  // non-baseline methods; win counts sum to the number of cells per size.
  std::size_t wins = 0;
  double median_kl = 0.0;
  double mean_kl = 0.0;
  double median_abs_err_mean = 0.0;  // NaN when the baseline was not run
  double mean_abs_err_mean = 0.0;
  double mean_iterations = 0.0;
};

struct ExperimentSummary {
  ExperimentConfig config;
  std::vector<RunRecord> runs;  // deterministic order: size, seed, method
  std::map<std::size_t, std::map<MethodId, MethodAggregate>> aggregates;
};

// Runs every (size, seed, method) cell and writes runs.csv, summary.json and
// (with diagnostics) per-run trace files into config.output_dir. Cells run
// in parallel (capped by the CLUTTER_VI_THREADS environment variable) but
// all outputs are assembled in deterministic order, so repeated runs of the
// same config produce byte-identical files.
ExperimentSummary run_experiment(const ExperimentConfig& config);

// Output writing alone (run_experiment calls this). Exposed so tests can
// exercise file layout without paying for a full experiment.
void emit_outputs(const ExperimentSummary& summary,
                  const std::string& output_dir);

// Worker-thread cap: CLUTTER_VI_THREADS when set (must parse as a positive
// integer), otherwise the hardware concurrency.
unsigned experiment_threads();

}  // namespace clutter_vi
