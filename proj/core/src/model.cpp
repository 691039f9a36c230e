#include "clutter_vi/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include "clutter_vi/math_util.hpp"

namespace clutter_vi {

namespace {

constexpr double two_pi = 6.2831853071795864769;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// Deterministic random stream backing sample_dataset; see the contract in
// model.hpp. uniform01 maps one 64-bit word onto the open interval (0, 1).
class SeededStream {
 public:
  explicit SeededStream(std::uint64_t seed) : engine_(seed) {}

  double uniform01() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double standard_normal() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void ClutterModel::validate() const {
  require(std::isfinite(w) && w >= 0.0 && w <= 1.0,
          "clutter proportion w must lie in [0, 1]");
  require(std::isfinite(clutter_mean), "clutter_mean must be finite");
  require(std::isfinite(clutter_var) && clutter_var > 0.0,
          "clutter_var must be positive and finite");
  require(std::isfinite(v_g) && v_g > 0.0,
          "v_g must be positive and finite");
  require(std::isfinite(prior_mean), "prior_mean must be finite");
  require(std::isfinite(prior_var) && prior_var > 0.0,
          "prior_var must be positive and finite");
}

double ClutterModel::log_clutter_pdf(double x) const {
  return log_normal_pdf(x, clutter_mean, clutter_var);
}

double ClutterModel::clutter_pdf(double x) const {
  return std::exp(log_clutter_pdf(x));
}

double log_observation_density(const ClutterModel& model, double x,
                               double mu) {
  const double log_signal =
      std::log1p(-model.w) + log_normal_pdf(x, mu, model.v_g);
  const double log_clutter = std::log(model.w) + model.log_clutter_pdf(x);
  return log_add_exp(log_signal, log_clutter);
}

double observation_density(const ClutterModel& model, double x, double mu) {
  return std::exp(log_observation_density(model, x, mu));
}

double log_likelihood_factor(const ClutterModel& model, double x_i,
                             double mu) {
  return log_observation_density(model, x_i, mu);
}

double likelihood_factor(const ClutterModel& model, double x_i, double mu) {
  return std::exp(log_likelihood_factor(model, x_i, mu));
}

double log_joint(const ClutterModel& model, const Dataset& data, double mu) {
  double total = log_normal_pdf(mu, model.prior_mean, model.prior_var);
  for (double x : data.observations) {
    total += log_likelihood_factor(model, x, mu);
  }
  return total;
}

Dataset sample_dataset(const ClutterModel& model, double true_mean,
                       std::size_t n, std::uint64_t seed) {
  model.validate();
  require(std::isfinite(true_mean), "true_mean must be finite");

  SeededStream stream(seed);
  const double signal_sd = std::sqrt(model.v_g);
  const double clutter_sd = std::sqrt(model.clutter_var);

  Dataset data;
  data.observations.reserve(n);
  data.seed = seed;
  data.true_mean = true_mean;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = stream.uniform01();
    const double z = stream.standard_normal();  // drawn unconditionally so
                                                // every observation costs
                                                // exactly three words
    if (u < model.w) {
      data.observations.push_back(model.clutter_mean + clutter_sd * z);
    } else {
      data.observations.push_back(true_mean + signal_sd * z);
    }
  }
  return data;
}

void write_dataset(std::ostream& os, const ClutterModel& model,
                   const Dataset& data) {
  os << "# clutter dataset\n";
  os << "# w = " << format_double(model.w) << "\n";
  os << "# clutter_mean = " << format_double(model.clutter_mean) << "\n";
  os << "# clutter_var = " << format_double(model.clutter_var) << "\n";
  os << "# v_g = " << format_double(model.v_g) << "\n";
  os << "# prior_mean = " << format_double(model.prior_mean) << "\n";
  os << "# prior_var = " << format_double(model.prior_var) << "\n";
  if (data.true_mean) {
    os << "# true_mean = " << format_double(*data.true_mean) << "\n";
  }
  if (data.seed) {
    os << "# seed = " << *data.seed << "\n";
  }
  os << "# n = " << data.observations.size() << "\n";
  for (double x : data.observations) {
    os << format_double(x) << "\n";
  }
}

void write_dataset_file(const std::string& path, const ClutterModel& model,
                        const Dataset& data) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_dataset(os, model, data);
  os.flush();
  if (!os) throw std::runtime_error("write failed: " + path);
}

Dataset read_dataset(std::istream& is, ClutterModel* model_out) {
  Dataset data;
  ClutterModel model;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(1, eq - 1);
      // trim surrounding whitespace from the key
      const auto first = key.find_first_not_of(" \t");
      const auto last = key.find_last_not_of(" \t");
      key = (first == std::string::npos)
                ? std::string()
                : key.substr(first, last - first + 1);
      const std::string value = line.substr(eq + 1);
      try {
        if (key == "w") model.w = std::stod(value);
        else if (key == "clutter_mean") model.clutter_mean = std::stod(value);
        else if (key == "clutter_var") model.clutter_var = std::stod(value);
        else if (key == "v_g") model.v_g = std::stod(value);
        else if (key == "prior_mean") model.prior_mean = std::stod(value);
        else if (key == "prior_var") model.prior_var = std::stod(value);
        else if (key == "true_mean") data.true_mean = std::stod(value);
        else if (key == "seed") data.seed = std::stoull(value);
        // unknown keys (including "n" and the title line) are ignored
      } catch (const std::exception&) {
        throw std::runtime_error("malformed dataset header line: " + line);
      }
      continue;
    }
    std::size_t pos = 0;
    double x = 0.0;
    try {
      x = std::stod(line, &pos);
    } catch (const std::exception&) {
      throw std::runtime_error("malformed observation line: " + line);
    }
    if (line.find_first_not_of(" \t\r", pos) != std::string::npos) {
      throw std::runtime_error("malformed observation line: " + line);
    }
    data.observations.push_back(x);
  }
  if (model_out) *model_out = model;
  return data;
}

Dataset read_dataset_file(const std::string& path, ClutterModel* model_out) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  return read_dataset(is, model_out);
}

}  // namespace clutter_vi
