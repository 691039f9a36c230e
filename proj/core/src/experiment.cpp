#include "clutter_vi/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace clutter_vi {

namespace {

using json = nlohmann::ordered_json;

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void bad_config(const std::string& what) {
  throw std::invalid_argument("config error: " + what);
}

void reject_unknown_keys(const json& object,
                         std::initializer_list<const char*> known,
                         const std::string& where) {
  for (const auto& item : object.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) {
          return item.key() == k;
        }) == known.end()) {
      bad_config("unknown key \"" + item.key() + "\" in " + where);
    }
  }
}

double as_double(const json& j, const std::string& where) {
  if (!j.is_number()) bad_config(where + " must be a number");
  return j.get<double>();
}

int as_int(const json& j, const std::string& where) {
  if (!j.is_number_integer()) bad_config(where + " must be an integer");
  return j.get<int>();
}

bool as_bool(const json& j, const std::string& where) {
  if (!j.is_boolean()) bad_config(where + " must be a boolean");
  return j.get<bool>();
}

void parse_model(const json& j, ClutterModel& model) {
  reject_unknown_keys(j,
                      {"w", "clutter_mean", "clutter_var", "v_g",
                       "prior_mean", "prior_var"},
                      "model");
  if (j.contains("w")) model.w = as_double(j["w"], "model.w");
  if (j.contains("clutter_mean")) {
    model.clutter_mean = as_double(j["clutter_mean"], "model.clutter_mean");
  }
  if (j.contains("clutter_var")) {
    model.clutter_var = as_double(j["clutter_var"], "model.clutter_var");
  }
  if (j.contains("v_g")) model.v_g = as_double(j["v_g"], "model.v_g");
  if (j.contains("prior_mean")) {
    model.prior_mean = as_double(j["prior_mean"], "model.prior_mean");
  }
  if (j.contains("prior_var")) {
    model.prior_var = as_double(j["prior_var"], "model.prior_var");
  }
}

void parse_em(const json& j, EMSettings& em) {
  reject_unknown_keys(
      j, {"max_iters", "tol", "record_diagnostics", "anneal_cap_at_v_q"},
      "em");
  if (j.contains("max_iters")) em.max_iters = as_int(j["max_iters"], "em.max_iters");
  if (j.contains("tol")) em.tol = as_double(j["tol"], "em.tol");
  if (j.contains("record_diagnostics")) {
    em.record_diagnostics =
        as_bool(j["record_diagnostics"], "em.record_diagnostics");
  }
  if (j.contains("anneal_cap_at_v_q")) {
    em.anneal_cap_at_v_q =
        as_bool(j["anneal_cap_at_v_q"], "em.anneal_cap_at_v_q");
  }
}

void parse_laplace(const json& j, LaplaceSettings& laplace) {
  reject_unknown_keys(j, {"max_iters", "tol"}, "laplace");
  if (j.contains("max_iters")) {
    laplace.max_iters = as_int(j["max_iters"], "laplace.max_iters");
  }
  if (j.contains("tol")) laplace.tol = as_double(j["tol"], "laplace.tol");
}

void parse_ep(const json& j, EpSettings& ep) {
  reject_unknown_keys(j, {"max_sweeps", "tol", "damping"}, "ep");
  if (j.contains("max_sweeps")) {
    ep.max_sweeps = as_int(j["max_sweeps"], "ep.max_sweeps");
  }
  if (j.contains("tol")) ep.tol = as_double(j["tol"], "ep.tol");
  if (j.contains("damping")) ep.damping = as_double(j["damping"], "ep.damping");
}

void parse_mf(const json& j, MfSettings& mf) {
  reject_unknown_keys(j, {"max_iters", "tol"}, "mf");
  if (j.contains("max_iters")) mf.max_iters = as_int(j["max_iters"], "mf.max_iters");
  if (j.contains("tol")) mf.tol = as_double(j["tol"], "mf.tol");
}

void parse_quadrature(const json& j, QuadratureSettings& q) {
  reject_unknown_keys(j,
                      {"gh_order", "trapezoid_points", "evidence_tol",
                       "max_refinements", "prior_halfwidth_sds",
                       "data_halfwidth_sds"},
                      "quadrature");
  if (j.contains("gh_order")) {
    q.gh_order = as_int(j["gh_order"], "quadrature.gh_order");
  }
  if (j.contains("trapezoid_points")) {
    q.trapezoid_points =
        as_int(j["trapezoid_points"], "quadrature.trapezoid_points");
  }
  if (j.contains("evidence_tol")) {
    q.evidence_tol = as_double(j["evidence_tol"], "quadrature.evidence_tol");
  }
  if (j.contains("max_refinements")) {
    q.max_refinements =
        as_int(j["max_refinements"], "quadrature.max_refinements");
  }
  if (j.contains("prior_halfwidth_sds")) {
    q.prior_halfwidth_sds =
        as_double(j["prior_halfwidth_sds"], "quadrature.prior_halfwidth_sds");
  }
  if (j.contains("data_halfwidth_sds")) {
    q.data_halfwidth_sds =
        as_double(j["data_halfwidth_sds"], "quadrature.data_halfwidth_sds");
  }
}

json model_to_json(const ClutterModel& m) {
  json j;
  j["w"] = m.w;
  j["clutter_mean"] = m.clutter_mean;
  j["clutter_var"] = m.clutter_var;
  j["v_g"] = m.v_g;
  j["prior_mean"] = m.prior_mean;
  j["prior_var"] = m.prior_var;
  return j;
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["model"] = model_to_json(c.model);
  j["true_mean"] = c.true_mean;
  j["sizes"] = c.sizes;
  j["seeds"] = c.seeds;
  json methods = json::array();
  for (MethodId id : c.methods) methods.push_back(std::string(method_name(id)));
  j["methods"] = methods;
  j["em"] = {{"max_iters", c.em.max_iters},
             {"tol", c.em.tol},
             {"record_diagnostics", c.em.record_diagnostics},
             {"anneal_cap_at_v_q", c.em.anneal_cap_at_v_q}};
  j["laplace"] = {{"max_iters", c.laplace.max_iters}, {"tol", c.laplace.tol}};
  j["ep"] = {{"max_sweeps", c.ep.max_sweeps},
             {"tol", c.ep.tol},
             {"damping", c.ep.damping}};
  j["mf"] = {{"max_iters", c.mf.max_iters}, {"tol", c.mf.tol}};
  j["quadrature"] = {{"gh_order", c.quadrature.gh_order},
                     {"trapezoid_points", c.quadrature.trapezoid_points},
                     {"evidence_tol", c.quadrature.evidence_tol},
                     {"max_refinements", c.quadrature.max_refinements},
                     {"prior_halfwidth_sds", c.quadrature.prior_halfwidth_sds},
                     {"data_halfwidth_sds", c.quadrature.data_halfwidth_sds}};
  j["output_dir"] = c.output_dir;
  j["diagnostics"] = c.diagnostics;
  return j;
}

MethodResult prior_method_result(const ClutterModel& model, MethodId id) {
  MethodResult result;
  result.method = id;
  result.q.mu_q = model.prior_mean;
  result.q.v_q = model.prior_var;
  result.iterations = 0;
  result.converged = true;
  if (id == MethodId::elbo_gaa) result.v_g_hat = model.v_g;
  TraceRow row;
  row.iteration = 0;
  row.mu_q = result.q.mu_q;
  row.v_q = result.q.v_q;
  row.v_g_hat = result.v_g_hat;
  result.trace.push_back(row);
  return result;
}

MethodResult dispatch_method(const ExperimentConfig& config,
                             const Dataset& data, MethodId id) {
  switch (id) {
    case MethodId::elbo_gaa:
      // An empty dataset has the prior as its exact posterior; the EM loop
      // itself requires at least one observation.
      if (data.empty()) {
        return prior_method_result(config.model, MethodId::elbo_gaa);
      }
      return run_em(config.model, data, config.em);
    case MethodId::laplace:
      return laplace(config.model, data, config.laplace);
    case MethodId::ep:
      return ep(config.model, data, config.ep);
    case MethodId::mf_vi:
      return mf_vi(config.model, data, config.mf);
    case MethodId::numeric_baseline:
      return numeric_elbo_maximizer(config.model, data, config.quadrature);
  }
  throw std::logic_error("unreachable method id");
}

std::vector<RunRecord> run_cell(const ExperimentConfig& config, std::size_t n,
                                std::uint64_t seed) {
  const Dataset data =
      sample_dataset(config.model, config.true_mean, n, seed);
  const double log_evidence =
      log_marginal_likelihood(config.model, data, config.quadrature);

  const bool want_baseline =
      std::find(config.methods.begin(), config.methods.end(),
                MethodId::numeric_baseline) != config.methods.end();
  std::optional<MethodResult> baseline;
  if (want_baseline) {
    baseline = dispatch_method(config, data, MethodId::numeric_baseline);
  }

  std::vector<RunRecord> records;
  records.reserve(config.methods.size());
  for (MethodId id : config.methods) {
    RunRecord rec;
    rec.method = id;
    rec.n = n;
    rec.seed = seed;
    rec.result = (id == MethodId::numeric_baseline)
                     ? *baseline
                     : dispatch_method(config, data, id);
    rec.log_evidence = log_evidence;
    rec.elbo_value = elbo(config.model, data, rec.result.q, config.quadrature);
    rec.kl = log_evidence - rec.elbo_value;
    if (baseline) {
      rec.abs_err_mean = std::abs(rec.result.q.mu_q - baseline->q.mu_q);
    }
    if (config.diagnostics) {
      for (TraceRow& row : rec.result.trace) {
        const double row_elbo = elbo(config.model, data,
                                     {row.mu_q, row.v_q}, config.quadrature);
        row.elbo = row_elbo;
        row.kl = log_evidence - row_elbo;
      }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

double mean_of(const std::vector<double>& values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(values.size());
}

void build_aggregates(ExperimentSummary& summary) {
  struct Bucket {
    std::vector<double> kl, abs_err, iterations;
    std::size_t converged = 0;
    std::size_t wins = 0;
  };
  std::map<std::size_t, std::map<MethodId, Bucket>> buckets;

  // Group the flat run list into (size, seed) cells to award wins.
  std::map<std::size_t, std::map<std::uint64_t, std::vector<const RunRecord*>>>
      cells;
  for (const RunRecord& rec : summary.runs) {
    Bucket& b = buckets[rec.n][rec.method];
    b.kl.push_back(rec.kl);
    if (rec.abs_err_mean) b.abs_err.push_back(*rec.abs_err_mean);
    b.iterations.push_back(static_cast<double>(rec.result.iterations));
    if (rec.result.converged) ++b.converged;
    cells[rec.n][rec.seed].push_back(&rec);
  }
  for (const auto& [n, per_seed] : cells) {
    for (const auto& [seed, recs] : per_seed) {
      const RunRecord* best = nullptr;
      for (const RunRecord* rec : recs) {
        if (rec->method == MethodId::numeric_baseline) continue;
        if (!best || rec->kl < best->kl) best = rec;
      }
      if (best) ++buckets[n][best->method].wins;
    }
  }

  summary.aggregates.clear();
  for (auto& [n, per_method] : buckets) {
    for (auto& [id, b] : per_method) {
      MethodAggregate agg;
      agg.runs = b.kl.size();
      agg.converged = b.converged;
      agg.wins = b.wins;
      agg.median_kl = median(b.kl);
      agg.mean_kl = mean_of(b.kl);
      agg.median_abs_err_mean = median(b.abs_err);
      agg.mean_abs_err_mean = mean_of(b.abs_err);
      agg.mean_iterations = mean_of(b.iterations);
      summary.aggregates[n][id] = agg;
    }
  }
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& content) {
  std::ofstream os(path, std::ios::binary);  // binary: byte-identical reruns
  if (!os) {
    throw std::runtime_error("cannot open for writing: " + path.string());
  }
  os << content;
  os.flush();
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

std::string optional_field(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

}  // namespace

std::vector<std::uint64_t> default_experiment_seeds() {
  std::vector<std::uint64_t> seeds(50);
  std::iota(seeds.begin(), seeds.end(), 1);
  return seeds;
}

std::vector<MethodId> all_methods() {
  return {MethodId::elbo_gaa, MethodId::laplace, MethodId::ep,
          MethodId::mf_vi, MethodId::numeric_baseline};
}

void ExperimentConfig::validate() const {
  model.validate();
  if (!std::isfinite(true_mean)) bad_config("true_mean must be finite");
  if (sizes.empty()) bad_config("sizes must not be empty");
  if (seeds.empty()) bad_config("seeds must not be empty");
  if (methods.empty()) bad_config("methods must not be empty");
  std::set<MethodId> unique_methods(methods.begin(), methods.end());
  if (unique_methods.size() != methods.size()) {
    bad_config("methods must not contain duplicates");
  }
  if (output_dir.empty()) bad_config("output_dir must not be empty");
  em.validate();
  laplace.validate();
  ep.validate();
  mf.validate();
  quadrature.validate();
}

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("config parse error: ") + e.what());
  }
  if (!j.is_object()) bad_config("top level must be a JSON object");
  reject_unknown_keys(j,
                      {"model", "true_mean", "sizes", "seeds", "methods",
                       "em", "laplace", "ep", "mf", "quadrature",
                       "output_dir", "diagnostics"},
                      "top level");

  ExperimentConfig config;
  try {
    if (j.contains("model")) parse_model(j["model"], config.model);
    if (j.contains("true_mean")) {
      config.true_mean = as_double(j["true_mean"], "true_mean");
    }
    if (j.contains("sizes")) {
      config.sizes.clear();
      for (const auto& v : j["sizes"]) {
        if (!v.is_number_integer() || v.get<long long>() < 0) {
          bad_config("sizes must be non-negative integers");
        }
        config.sizes.push_back(v.get<std::size_t>());
      }
    }
    if (j.contains("seeds")) {
      config.seeds.clear();
      for (const auto& v : j["seeds"]) {
        if (!v.is_number_integer() || v.get<long long>() < 0) {
          bad_config("seeds must be non-negative integers");
        }
        config.seeds.push_back(v.get<std::uint64_t>());
      }
    }
    if (j.contains("methods")) {
      config.methods.clear();
      for (const auto& v : j["methods"]) {
        if (!v.is_string()) bad_config("methods must be strings");
        const auto id = parse_method(v.get<std::string>());
        if (!id) bad_config("unknown method \"" + v.get<std::string>() + "\"");
        config.methods.push_back(*id);
      }
    }
    if (j.contains("em")) parse_em(j["em"], config.em);
    if (j.contains("laplace")) parse_laplace(j["laplace"], config.laplace);
    if (j.contains("ep")) parse_ep(j["ep"], config.ep);
    if (j.contains("mf")) parse_mf(j["mf"], config.mf);
    if (j.contains("quadrature")) {
      parse_quadrature(j["quadrature"], config.quadrature);
    }
    if (j.contains("output_dir")) {
      if (!j["output_dir"].is_string()) bad_config("output_dir must be a string");
      config.output_dir = j["output_dir"].get<std::string>();
    }
    if (j.contains("diagnostics")) {
      config.diagnostics = as_bool(j["diagnostics"], "diagnostics");
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config error: ") + e.what());
  }
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path);
  std::ostringstream buffer;
  buffer << is.rdbuf();
  return config_from_json_text(buffer.str());
}

unsigned experiment_threads() {
  const unsigned hardware =
      std::max(1u, std::thread::hardware_concurrency());
  const char* env = std::getenv("CLUTTER_VI_THREADS");
  if (env == nullptr || *env == '\0') return hardware;
  char* end = nullptr;
  const unsigned long value = std::strtoul(env, &end, 10);
  if (end == env || *end != '\0' || value == 0) {
    throw std::invalid_argument(
        "CLUTTER_VI_THREADS must be a positive integer");
  }
  return std::min<unsigned long>(hardware, value);
}

ExperimentSummary run_experiment(const ExperimentConfig& config) {
  config.validate();

  struct Cell {
    std::size_t n;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  cells.reserve(config.sizes.size() * config.seeds.size());
  for (std::size_t n : config.sizes) {
    for (std::uint64_t seed : config.seeds) cells.push_back({n, seed});
  }

  std::vector<std::vector<RunRecord>> cell_records(cells.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&] {
    while (true) {
      const std::size_t index = next.fetch_add(1);
      if (index >= cells.size()) break;
      try {
        cell_records[index] =
            run_cell(config, cells[index].n, cells[index].seed);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };

  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(
      experiment_threads(), std::max<std::size_t>(1, cells.size())));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  ExperimentSummary summary;
  summary.config = config;
  for (std::vector<RunRecord>& records : cell_records) {
    for (RunRecord& rec : records) summary.runs.push_back(std::move(rec));
  }
  build_aggregates(summary);
  emit_outputs(summary, config.output_dir);
  return summary;
}

void emit_outputs(const ExperimentSummary& summary,
                  const std::string& output_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(output_dir);

  std::string runs_csv =
      "method,n,seed,iteration,mu_q,v_q,elbo,kl,abs_err_mean,v_g_hat,"
      "converged\n";
  for (const RunRecord& rec : summary.runs) {
    runs_csv += std::string(method_name(rec.method)) + ',';
    runs_csv += std::to_string(rec.n) + ',';
    runs_csv += std::to_string(rec.seed) + ',';
    runs_csv += std::to_string(rec.result.iterations) + ',';
    runs_csv += format_double(rec.result.q.mu_q) + ',';
    runs_csv += format_double(rec.result.q.v_q) + ',';
    runs_csv += format_double(rec.elbo_value) + ',';
    runs_csv += format_double(rec.kl) + ',';
    runs_csv += optional_field(rec.abs_err_mean) + ',';
    runs_csv += optional_field(rec.result.v_g_hat) + ',';
    runs_csv += rec.result.converged ? "true" : "false";
    runs_csv += '\n';
  }
  write_text_file(fs::path(output_dir) / "runs.csv", runs_csv);

  json j;
  j["config"] = config_to_json(summary.config);
  j["total_runs"] = summary.runs.size();
  json aggregates = json::object();
  for (const auto& [n, per_method] : summary.aggregates) {
    json size_entry = json::object();
    for (const auto& [id, agg] : per_method) {
      json m;
      m["runs"] = agg.runs;
      m["converged"] = agg.converged;
      m["wins"] = agg.wins;
      m["median_kl"] = agg.median_kl;
      m["mean_kl"] = agg.mean_kl;
      m["median_abs_err_mean"] = agg.median_abs_err_mean;
      m["mean_abs_err_mean"] = agg.mean_abs_err_mean;
      m["mean_iterations"] = agg.mean_iterations;
      size_entry[std::string(method_name(id))] = m;
    }
    aggregates[std::to_string(n)] = size_entry;
  }
  j["aggregates"] = aggregates;
  write_text_file(fs::path(output_dir) / "summary.json", j.dump(2) + "\n");

  if (summary.config.diagnostics) {
    for (const RunRecord& rec : summary.runs) {
      std::string trace_csv = "iteration,mu_q,v_q,v_g_hat,g_mu,g_v,elbo,kl\n";
      for (const TraceRow& row : rec.result.trace) {
        trace_csv += std::to_string(row.iteration) + ',';
        trace_csv += format_double(row.mu_q) + ',';
        trace_csv += format_double(row.v_q) + ',';
        trace_csv += optional_field(row.v_g_hat) + ',';
        trace_csv += optional_field(row.g_mu) + ',';
        trace_csv += optional_field(row.g_v) + ',';
        trace_csv += optional_field(row.elbo) + ',';
        trace_csv += optional_field(row.kl);
        trace_csv += '\n';
      }
      const std::string name = "trace_" +
                               std::string(method_name(rec.method)) + '_' +
                               std::to_string(rec.n) + '_' +
                               std::to_string(rec.seed) + ".csv";
      write_text_file(fs::path(output_dir) / name, trace_csv);
    }
  }
}

}  // namespace clutter_vi
