#include "dnncal/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dnncal/config.hpp"
#include "dnncal/csv.hpp"
#include "dnncal/errors.hpp"
#include "dnncal/gradcheck.hpp"
#include "dnncal/model_io.hpp"
#include "dnncal/pipeline.hpp"

namespace dnncal {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

// Flags shared by every subcommand: --config plus one override per config key.
struct Overrides {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* sub) {
    sub->add_option("--config", config_path, "flat key = value configuration file");
    for (const auto& k : config_keys()) options[k.name] = sub->add_option("--" + dashed(k.name), values[k.name], k.help);
  }

  RunConfig merge() const {
    std::vector<std::pair<std::string, std::string>> flags;
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) flags.emplace_back(key, values.at(key));
    return resolve_config(config_path, flags);
  }
};

void write_provenance(const fs::path& dir, const std::string& command, const std::vector<std::string>& argv,
                      const RunConfig& cfg, const json& extra = json::object()) {
  json j;
  j["command"] = command;
  j["argv"] = argv;
  j["version"] = kVersion;
  j["model_schema_version"] = kModelSchemaVersion;
  j["seed"] = cfg.seed;
  const SeedPlan s = SeedPlan::from_master(cfg.seed);
  j["streams"] = {{"ensemble", s.ensemble},
                  {"contamination", s.contamination},
                  {"scenarios", s.scenarios},
                  {"training", s.training},
                  {"evaluation", s.evaluation}};
  json c = json::object();
  for (const auto& k : config_keys()) c[k.name] = cfg.get(k.name);
  j["config"] = c;
  for (const auto& [k, v] : extra.items()) j[k] = v;
  write_text(dir / "provenance.json", j.dump(2) + "\n");
}

fs::path require(const fs::path& p, const std::string& flag, const std::string& command) {
  if (p.empty()) throw UsageError(command + " requires --" + flag);
  return p;
}

std::vector<UqMethod> methods(const RunConfig& cfg) {
  if (cfg.method == "both") return {UqMethod::kQuantile, UqMethod::kMcDropout};
  return {parse_method(cfg.method)};
}

ContaminatedSet training_set(const RunConfig& cfg, const std::string& command) {
  if (!cfg.contaminated.empty()) {
    ContaminatedSet c = load_contaminated(cfg.contaminated);
    if (!cfg.box.empty()) c.box = cfg.box;
    return c;
  }
  Ensemble e = load_ensemble(require(cfg.ensemble, "contaminated or --ensemble", command));
  if (!cfg.box.empty()) e.box = cfg.box;
  Rng rng(SeedPlan::from_master(cfg.seed).contamination);
  return contaminate(e, cfg.ranges, rng);
}

int cmd_generate(const RunConfig& cfg, const std::vector<std::string>& argv, std::ostream& out) {
  const SeedPlan seeds = SeedPlan::from_master(cfg.seed);
  Rng ens_rng(seeds.ensemble);
  const Ensemble e = generate_ensemble(cfg.n_runs, ens_rng, cfg.series_length);
  Rng sc_rng(seeds.scenarios);
  const auto scenarios = generate_test_scenarios(cfg.n_scenarios, cfg.ranges, sc_rng, cfg.series_length);
  save_ensemble(cfg.out / "ensemble.csv", e);
  save_scenarios(cfg.out / "scenarios.csv", scenarios);
  save_observation(cfg.out / "observation.csv", scenarios.front().z);
  write_provenance(cfg.out, "generate-synthetic", argv, cfg,
                   {{"outputs", {"ensemble.csv", "scenarios.csv", "observation.csv"}}});
  out << "wrote " << e.size() << " runs and " << scenarios.size() << " scenarios to " << cfg.out.string() << "\n";
  return 0;
}

int cmd_contaminate(const RunConfig& cfg, const std::vector<std::string>& argv, std::ostream& out) {
  Ensemble e = load_ensemble(require(cfg.ensemble, "ensemble", "contaminate"));
  if (!cfg.box.empty()) e.box = cfg.box;
  Rng rng(SeedPlan::from_master(cfg.seed).contamination);
  const ContaminatedSet c = contaminate(e, cfg.ranges, rng);
  save_contaminated(cfg.out / "contaminated.csv", c);
  write_provenance(cfg.out, "contaminate", argv, cfg, {{"outputs", {"contaminated.csv"}}});
  out << "wrote " << c.size() << " contaminated runs to " << (cfg.out / "contaminated.csv").string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::vector<std::string>& argv, std::ostream& out) {
  const ContaminatedSet data = training_set(cfg, "train");
  const TrainedModel model = train_model(data, cfg);
  save_model(cfg.out / "model.json", model);
  write_provenance(cfg.out, "train", argv, cfg,
                   {{"outputs", {"model.json"}}, {"pairs", data.size()}, {"loss_history", model.loss_history}});
  out << "trained on " << data.size() << " pairs; loss " << format_double(model.loss_history.front()) << " -> "
      << format_double(model.loss_history.back()) << "\n";
  return 0;
}

int cmd_calibrate(const RunConfig& cfg, const std::vector<std::string>& argv, std::ostream& out) {
  const TrainedModel model = load_model(require(cfg.model, "model", "calibrate"));
  const TimeSeries z = load_observation(require(cfg.observation, "observation", "calibrate"));
  if (cfg.method == "both") throw UsageError("calibrate takes a single method (quantile or mc-dropout)");
  CalibrationEstimate est;
  if (parse_method(cfg.method) == UqMethod::kQuantile) {
    est = predict_interval(model, z);
  } else {
    Rng rng(SeedPlan::from_master(cfg.seed).evaluation);
    est = predict_mc_dropout(model, z, cfg.training.mc_passes, rng);
  }
  save_estimate(cfg.out / "estimate.csv", est);
  write_provenance(cfg.out, "calibrate", argv, cfg, {{"outputs", {"estimate.csv"}}});
  for (std::size_t k = 0; k < est.median.size(); ++k)
    out << "theta_" << k + 1 << " " << format_double(est.median[k]) << " [" << format_double(est.lower[k]) << ", "
        << format_double(est.upper[k]) << "]\n";
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::vector<std::string>& argv, std::ostream& out) {
  const TrainedModel model = load_model(require(cfg.model, "model", "evaluate"));
  const auto scenarios = load_scenarios(require(cfg.scenarios, "scenarios", "evaluate"));
  std::vector<MetricsRow> rows;
  for (UqMethod m : methods(cfg)) {
    const auto r = evaluate(model, scenarios, m, SeedPlan::from_master(cfg.seed).evaluation);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  save_metrics(cfg.out / "metrics.csv", rows);
  write_provenance(cfg.out, "evaluate", argv, cfg, {{"outputs", {"metrics.csv"}}});
  out << render_metrics(rows);
  return 0;
}

int cmd_benchmark(const RunConfig& cfg, const std::vector<std::string>& argv, std::ostream& out) {
  const auto ms = methods(cfg);
  BenchmarkOptions opts;
  opts.mc_dropout = std::find(ms.begin(), ms.end(), UqMethod::kMcDropout) != ms.end();
  const BenchmarkResult r = run_benchmark(cfg, opts);
  std::vector<MetricsRow> rows;
  if (std::find(ms.begin(), ms.end(), UqMethod::kQuantile) != ms.end()) rows = r.quantile;
  rows.insert(rows.end(), r.mc_dropout.begin(), r.mc_dropout.end());
  save_metrics(cfg.out / "metrics.csv", rows);
  save_model(cfg.out / "model.json", r.model);
  write_provenance(cfg.out, "benchmark", argv, cfg,
                   {{"outputs", {"metrics.csv", "model.json"}}, {"loss_history", r.model.loss_history}});
  out << render_metrics(rows);
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg, std::ostream& out) {
  const GradcheckReport rep = run_gradcheck(cfg.seed);
  std::size_t k = 0;
  for (const auto& c : rep.cases)
    out << "case " << ++k << " p=" << c.config.p << " d_c=" << c.config.d_c << " L=" << c.config.widths.size()
        << " checked=" << c.checked << " kink_skipped=" << c.skipped_at_kink
        << " max_rel_err=" << format_double(std::max(c.max_rel_error_reference, c.max_rel_error_kernel)) << "\n";
  out << (rep.passed() ? "PASS" : "FAIL") << " worst=" << format_double(rep.worst())
      << " tolerance=" << format_double(rep.tolerance) << "\n";
  if (!rep.passed()) throw NumericError("gradient check failed");
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Inverse-network calibration toolkit", argv.empty() ? "dnncal" : argv.front()};
  app.require_subcommand(1);
  app.set_version_flag("--version",
                       std::string("dnncal ") + kVersion + " (model schema " + std::to_string(kModelSchemaVersion) + ")");
  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {{"generate-synthetic", "write a synthetic ensemble, test scenarios and one observation"},
                      {"contaminate", "add simulated discrepancy to an ensemble"},
                      {"train", "train the mean network and quantile heads"},
                      {"calibrate", "estimate parameters for an observation"},
                      {"evaluate", "score a model on test scenarios"},
                      {"benchmark", "run the synthetic study end to end"},
                      {"gradcheck", "compare analytic gradients with finite differences"}};
  std::map<std::string, Overrides> overrides;
  std::map<std::string, CLI::App*> apps;
  for (const auto& s : subs) {
    apps[s.name] = app.add_subcommand(s.name, s.help);
    overrides[s.name].attach(apps[s.name]);
  }

  std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    // Help and --version surface as exceptions with a zero exit code.
    return app.exit(e, out, err) == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  try {
    for (const auto& [name, sub] : apps) {
      if (!sub->parsed()) continue;
      const RunConfig cfg = overrides[name].merge();
      if (name == "generate-synthetic") return cmd_generate(cfg, argv, out);
      if (name == "contaminate") return cmd_contaminate(cfg, argv, out);
      if (name == "train") return cmd_train(cfg, argv, out);
      if (name == "calibrate") return cmd_calibrate(cfg, argv, out);
      if (name == "evaluate") return cmd_evaluate(cfg, argv, out);
      if (name == "benchmark") return cmd_benchmark(cfg, argv, out);
      if (name == "gradcheck") return cmd_gradcheck(cfg, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  }
  return static_cast<int>(ExitCode::kUsage);
}

}  // namespace dnncal
