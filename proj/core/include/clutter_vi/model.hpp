#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace clutter_vi {

// Generative model for a scalar dataset contaminated by clutter: each
// observation is drawn from the signal component N(mu, v_g) with probability
// 1 - w and from a fixed clutter component N(clutter_mean, clutter_var) with
// probability w. The unknown signal mean mu carries a conjugate prior
// N(prior_mean, prior_var).
struct ClutterModel {
  double w = 0.5;             // clutter proportion, in [0, 1]
  double clutter_mean = 0.0;  // clutter component mean
  double clutter_var = 10.0;  // clutter component variance, > 0
  double v_g = 1.0;           // signal observation variance, > 0
  double prior_mean = 0.0;    // prior mean of mu
  double prior_var = 100.0;   // prior variance of mu, > 0

  // Throws std::invalid_argument if any parameter is out of range.
  void validate() const;

  double log_clutter_pdf(double x) const;
  double clutter_pdf(double x) const;
};

struct Dataset {
  std::vector<double> observations;
  std::optional<std::uint64_t> seed;  // set when generated by sample_dataset
  std::optional<double> true_mean;    // set when generated by sample_dataset

  std::size_t size() const { return observations.size(); }
  bool empty() const { return observations.empty(); }
};

// p(x | mu): mixture density of one observation given the signal mean.
double log_observation_density(const ClutterModel& model, double x, double mu);
double observation_density(const ClutterModel& model, double x, double mu);

// Likelihood factor L_i(mu) = p(x_i | mu) viewed as a function of mu.
// Numerically identical to observation_density; both names exist because
// callers read more naturally one way or the other.
double log_likelihood_factor(const ClutterModel& model, double x_i, double mu);
double likelihood_factor(const ClutterModel& model, double x_i, double mu);

// ln[ p(mu) * prod_i p(x_i | mu) ], accumulated over observations in index
// order. Well-defined for an empty dataset (prior term only).
double log_joint(const ClutterModel& model, const Dataset& data, double mu);

// Draws n observations with the signal mean fixed at true_mean.
//
// Reproducibility contract: one std::mt19937_64 stream seeded with `seed`;
// each observation consumes exactly three 64-bit words in order:
//   1. mixture choice: u = ((word >> 11) + 0.5) * 2^-53, clutter iff u < w
//   2-3. one standard normal via the Box-Muller cosine branch,
//        z = sqrt(-2 ln u1) * cos(2 pi u2),
//        with u1 from word 2 and u2 from word 3 (the sine partner is
//        discarded so every draw has a fixed word cost).
// std::normal_distribution is deliberately not used: its algorithm is
// implementation-defined, which would break bit-reproducibility across
// standard libraries.
Dataset sample_dataset(const ClutterModel& model, double true_mean,
                       std::size_t n, std::uint64_t seed);

// Plain-text dataset format: '#'-prefixed header lines carrying the model
// parameters and generation metadata as "key = value" pairs, followed by one
// observation per line. Values are written with 17 significant digits so a
// write/read round trip is bit-exact.
void write_dataset(std::ostream& os, const ClutterModel& model,
                   const Dataset& data);
void write_dataset_file(const std::string& path, const ClutterModel& model,
                        const Dataset& data);

// Parses the format written by write_dataset. Header lines for seed and
// true_mean populate the corresponding optionals; model parameter lines are
// parsed into *model_out when provided, and unknown header keys are ignored.
Dataset read_dataset(std::istream& is, ClutterModel* model_out = nullptr);
Dataset read_dataset_file(const std::string& path,
                          ClutterModel* model_out = nullptr);

}  // namespace clutter_vi
