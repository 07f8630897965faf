// Command-line front end: simulate, estimate, replicate, metrics.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "npmle/adapt.hpp"
#include "npmle/data.hpp"
#include "npmle/error.hpp"
#include "npmle/harness.hpp"
#include "npmle/io.hpp"
#include "npmle/metrics.hpp"

namespace fs = std::filesystem;
using namespace npmle;

namespace {

const std::vector<std::string> kCases = {"1a", "1b", "1c", "2a", "2b"};
const std::vector<std::string> kEstimators = {"GR", "EM", "EM-GR", "BE"};

struct Common {
  int threads = 0;
  std::string config;
  std::vector<std::string> sets;
};

void apply_threads(const Common& c) {
  if (c.threads > 0) omp_set_num_threads(c.threads);
}

// defaults < config file < environment < --set
EstimatorSettings build_settings(CaseId c, const Common& common, const Json* config) {
  auto s = default_settings(c);
  if (config) apply_settings(s, *config);
  apply_env(s);
  for (const auto& kv : common.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
    apply_setting_text(s, kv.substr(0, eq), kv.substr(eq + 1));
  }
  fit_box(s.adapt, em_kernel(c).mixed_dim());
  s.validate();
  return s;
}

std::optional<Json> load_config(const Common& c) {
  if (c.config.empty()) return std::nullopt;
  return read_json(c.config);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
}

CaseId resolve_case(const std::string& flag, const fs::path& data_path) {
  if (!flag.empty()) return case_from_string(flag);
  const auto truth = data_path.parent_path() / "truth.json";
  if (fs::exists(truth)) return load_truth_case(truth);
  throw Error("no --case given and no truth.json next to " + data_path.string());
}

struct SimulateArgs {
  std::string case_id;
  std::size_t n = 0;
  std::uint64_t seed = 1;
  std::string out = ".";
};

int run_simulate(const SimulateArgs& a, const Common& common) {
  apply_threads(common);
  if (a.n < 1) throw Error("--n must be at least 1");
  const CaseId c = case_from_string(a.case_id);
  // Settings do not affect simulation but are still checked for typos.
  const auto config = load_config(common);
  build_settings(c, common, config ? &*config : nullptr);
  const auto sim = simulate_case(c, a.n, a.seed);
  const fs::path dir = a.out;
  ensure_dir(dir);
  save_dataset(sim.data, dir / "data.csv");
  save_truth(c, dir / "truth.json");
  std::cout << "wrote " << (dir / "data.csv").string() << " (" << a.n << " rows) and "
            << (dir / "truth.json").string() << '\n';
  return 0;
}

struct EstimateArgs {
  std::string data;
  std::string case_id;
  std::string mode = "EM";
  std::uint64_t seed = 1;
  std::string out = ".";
};

int run_estimate(const EstimateArgs& a, const Common& common) {
  apply_threads(common);
  const fs::path data_path = a.data;
  if (!fs::exists(data_path)) throw Error("dataset not found: " + data_path.string());
  const Dataset data = load_dataset(data_path);
  const CaseId c = resolve_case(a.case_id, data_path);
  const auto config = load_config(common);
  const auto settings = build_settings(c, common, config ? &*config : nullptr);
  const Estimator which = estimator_from_string(a.mode);

  const auto t0 = std::chrono::steady_clock::now();
  const Estimator list[] = {which};
  const auto fits = fit_estimators(data, c, list, settings, a.seed);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto& fit = fits.front();

  const fs::path dir = a.out;
  ensure_dir(dir);
  save_mixing(fit.result.q, dir / "mixing.json");
  write_trace_csv(fit.result.trace, dir / "trace.csv");

  std::cout << "mode=" << to_string(fit.estimator) << " winner=" << to_string(fit.winner)
            << " ll=" << format_double(fit.result.loglik)
            << " components=" << fit.result.q.size()
            << " weight_warnings=" << fit.result.weight_solver_warnings << '\n';
  // Timing goes to stderr so stdout stays reproducible.
  std::fprintf(stderr, "wall_time=%.3fs\n", secs);
  return 0;
}

struct ReplicateArgs {
  std::string scenario;
  std::string case_id;
  std::vector<std::size_t> ns;
  std::vector<std::string> modes;
  std::size_t replications = 0;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

int run_replicate(const ReplicateArgs& a, const Common& common) {
  apply_threads(common);
  Json scenario = Json::object();
  if (!a.scenario.empty()) scenario = read_json(a.scenario);
  if (!common.config.empty()) {
    // A separate config file may carry settings as well.
    for (const auto& [k, v] : read_json(common.config).items())
      if (!scenario.contains(k)) scenario[k] = v;
  }

  std::string case_str = a.case_id;
  if (case_str.empty() && scenario.contains("case")) case_str = scenario["case"].get<std::string>();
  if (case_str.empty()) throw Error("replicate: no case given (--case or scenario \"case\")");

  RunConfig cfg;
  cfg.case_id = case_from_string(case_str);
  if (scenario.contains("n")) {
    const auto& n = scenario["n"];
    cfg.ns = n.is_array() ? n.get<std::vector<std::size_t>>()
                          : std::vector<std::size_t>{n.get<std::size_t>()};
  }
  if (scenario.contains("replications"))
    cfg.replications = scenario["replications"].get<std::size_t>();
  if (scenario.contains("seed")) cfg.seed = scenario["seed"].get<std::uint64_t>();
  std::vector<std::string> modes = {"EM"};
  if (scenario.contains("modes")) modes = scenario["modes"].get<std::vector<std::string>>();

  if (!a.ns.empty()) cfg.ns = a.ns;
  if (!a.modes.empty()) modes = a.modes;
  if (a.replications > 0) cfg.replications = a.replications;
  if (a.seed) cfg.seed = *a.seed;
  cfg.estimators.clear();
  for (const auto& m : modes) cfg.estimators.push_back(estimator_from_string(m));

  Json settings_json = Json::object();
  for (const auto& [k, v] : scenario.items())
    if (k != "case" && k != "n" && k != "replications" && k != "seed" && k != "modes")
      settings_json[k] = v;
  cfg.settings = build_settings(cfg.case_id, common, &settings_json);

  const auto rows = run_replications(cfg);
  const fs::path dir = a.out;
  ensure_dir(dir);
  const auto path = dir / "replicate.csv";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_rows_csv(rows, out);
  out.close();

  std::size_t failed = 0;
  for (const auto& r : rows)
    if (r.replication && !r.ok) ++failed;
  std::cout << "wrote " << path.string() << " (" << rows.size() << " rows, " << failed
            << " failed)\n";
  return failed == 0 ? 0 : 2;
}

struct MetricsArgs {
  std::string data;
  std::string mixing;
  std::string case_id;
  std::string out;
};

int run_metrics(const MetricsArgs& a, const Common& common) {
  apply_threads(common);
  const fs::path data_path = a.data;
  const Dataset data = load_dataset(data_path);
  const CaseId c = resolve_case(a.case_id, data_path);
  const auto config = load_config(common);
  build_settings(c, common, config ? &*config : nullptr);
  const auto q = load_mixing(a.mixing);
  const auto report = compute_metrics(data, q, true_mixing(c));
  const std::string text = metrics_csv_header() + '\n' + metrics_csv_row(report) + '\n';
  if (a.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw Error("cannot write " + a.out);
    out << text;
  }
  return 0;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--threads", c.threads, "OpenMP threads (0 = runtime default)")
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--config", c.config, "JSON file of configuration keys")
      ->check(CLI::ExistingFile);
  sub->add_option("--set", c.sets, "Override a configuration key (key=value), repeatable");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonparametric estimation of mixing distributions in mixed choice models"};
  app.require_subcommand(1);

  Common common;
  SimulateArgs sim;
  EstimateArgs est;
  ReplicateArgs rep;
  MetricsArgs met;

  auto* s = app.add_subcommand("simulate", "Simulate one dataset of a built-in case");
  s->add_option("--case", sim.case_id, "Case id")->required()->check(CLI::IsMember(kCases));
  s->add_option("--n", sim.n, "Individuals")->required()->check(CLI::PositiveNumber);
  s->add_option("--seed", sim.seed, "Random seed");
  s->add_option("--out", sim.out, "Output directory");
  add_common(s, common);

  auto* e = app.add_subcommand("estimate", "Estimate the mixing distribution of a dataset");
  e->add_option("--data", est.data, "Dataset CSV")->required();
  e->add_option("--case", est.case_id, "Model specification (default: truth.json beside data)")
      ->check(CLI::IsMember(kCases));
  e->add_option("--mode", est.mode, "GR, EM, EM-GR or BE")->check(CLI::IsMember(kEstimators));
  e->add_option("--seed", est.seed, "Random seed");
  e->add_option("--out", est.out, "Output directory");
  add_common(e, common);

  auto* r = app.add_subcommand("replicate", "Monte Carlo study: simulate, estimate, score");
  r->add_option("--scenario", rep.scenario, "Scenario JSON")->check(CLI::ExistingFile);
  r->add_option("--case", rep.case_id, "Case id")->check(CLI::IsMember(kCases));
  r->add_option("--n", rep.ns, "Sample sizes");
  r->add_option("--modes", rep.modes, "Estimators")->check(CLI::IsMember(kEstimators));
  r->add_option("--replications", rep.replications, "Replications per sample size");
  r->add_option("--seed", rep.seed, "Master seed");
  r->add_option("--out", rep.out, "Output directory");
  add_common(r, common);

  auto* m = app.add_subcommand("metrics", "Score an estimate against the generating process");
  m->add_option("--data", met.data, "Dataset CSV with true probabilities")
      ->required()
      ->check(CLI::ExistingFile);
  m->add_option("--mixing", met.mixing, "Estimated mixing JSON")
      ->required()
      ->check(CLI::ExistingFile);
  m->add_option("--case", met.case_id, "Case id (default: truth.json beside data)")
      ->check(CLI::IsMember(kCases));
  m->add_option("--out", met.out, "Output CSV (default: stdout)");
  add_common(m, common);

  CLI11_PARSE(app, argc, argv);

  try {
    if (s->parsed()) return run_simulate(sim, common);
    if (e->parsed()) return run_estimate(est, common);
    if (r->parsed()) return run_replicate(rep, common);
    if (m->parsed()) return run_metrics(met, common);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 1;
}
