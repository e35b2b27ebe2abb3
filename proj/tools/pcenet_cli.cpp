#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pcenet/pcenet.hpp"

namespace fs = std::filesystem;
using namespace pcenet;

namespace {

// Config and usage problems exit 1; anything raised while running exits 2.
struct UsageError : Error {
  using Error::Error;
};

struct CommonOpts {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::string output;
  std::size_t parallel = 1;
  std::string data;
  std::string target;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool need_config) {
  auto* c = cmd->add_option("--config,-c", o.config, "run config JSON");
  if (need_config) c->required();
  cmd->add_option("--seed", o.seed, "run seed (overrides config)");
  cmd->add_option("--set", o.sets, "override a config key, e.g. --set vae.epochs=50")
      ->take_all()
      ->allow_extra_args(false);
  cmd->add_option("--output,-o", o.output, "output directory (overrides config)");
  cmd->add_option("--parallel-trials", o.parallel, "trials run concurrently")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--data", o.data, "CSV file; replaces the config data source");
  cmd->add_option("--target", o.target, "target column name or zero-based index");
}

RunConfig build_config(const CommonOpts& o) {
  try {
    Json doc;
    fs::path base;
    if (!o.config.empty()) {
      base = fs::path(o.config).parent_path();
      doc = to_json_config(parse_run_config(read_json_file(o.config), base));
    } else if (!o.data.empty()) {
      doc = to_json_config(RunConfig{});
    } else {
      throw ConfigError("--config or --data is required");
    }
    if (!o.data.empty()) {
      doc["data"] = Json{{"source", "csv"},
                         {"path", fs::absolute(o.data).lexically_normal().string()},
                         {"target", o.target.empty() ? std::string("y") : o.target}};
    } else if (!o.target.empty()) {
      if (doc["data"]["source"] != "csv") throw ConfigError("--target needs a csv data source");
      doc["data"]["target"] = o.target;
    }
    for (const auto& s : o.sets) apply_override(doc, s);
    RunConfig cfg = parse_run_config(doc);
    if (o.seed) cfg.seed = *o.seed;
    if (!o.output.empty()) cfg.output_dir = o.output;
    return cfg;
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

void print(const Json& j) { std::cout << j.dump(2) << std::endl; }

Json summary_json(const RunResult& r, const std::string& dir) {
  Json j = result_json(RunConfig{}, r)["summary"];
  j["method"] = r.method == FitMethod::mmd ? "mmd" : "ols";
  j["trials"] = r.trials.size();
  j["output_dir"] = dir;
  return j;
}

int cmd_run(const CommonOpts& o, FitMethod method) {
  const RunConfig cfg = build_config(o);
  const RunResult r = run_pipeline(cfg, method, o.parallel);
  const Dataset ds = load_dataset(cfg.data);
  write_artifacts(cfg.output_dir, cfg, ds, r);
  print(summary_json(r, cfg.output_dir));
  return 0;
}

int cmd_train_vae(const CommonOpts& o, std::size_t trial) {
  const RunConfig cfg = build_config(o);
  const Dataset ds = run_stage("load-data", [&] { return load_dataset(cfg.data); });
  const TrialData t = prepare_trial(ds, cfg, trial);
  fs::create_directories(cfg.output_dir);
  Json bundle = model_bundle(cfg, ds, t, nullptr);
  bundle["vae_epoch_losses"] = t.vae_epoch_losses;
  const std::string path = (fs::path(cfg.output_dir) / "vae.json").string();
  write_json_file(path, bundle);
  print(Json{{"trial", trial},
             {"epochs", t.vae_epoch_losses.size()},
             {"final_loss", t.vae_epoch_losses.empty() ? 0.0 : t.vae_epoch_losses.back()},
             {"path", path}});
  return 0;
}

int cmd_fit_pce(const CommonOpts& o, std::size_t trial, const std::string& vae_path,
                const std::string& method_name) {
  FitMethod method;
  if (method_name == "mmd")
    method = FitMethod::mmd;
  else if (method_name == "ols")
    method = FitMethod::ols;
  else
    throw UsageError("--method must be mmd or ols");

  RunConfig cfg;
  Dataset ds;
  TrialData t;
  if (!vae_path.empty()) {
    LoadedBundle b = [&] {
      try {
        return load_bundle(vae_path);
      } catch (const ConfigError& e) {
        throw UsageError(e.what());
      }
    }();
    cfg = b.config;
    if (!o.output.empty()) cfg.output_dir = o.output;
    ds = std::move(b.dataset);
    t = std::move(b.trial);
    t.latent = latent_dataset(t.vae, ds.features, t.seeds.latent);
  } else {
    cfg = build_config(o);
    ds = run_stage("load-data", [&] { return load_dataset(cfg.data); });
    t = prepare_trial(ds, cfg, trial);
  }
  const FitOutcome fit = fit_stage(ds, t, cfg, method);
  fs::create_directories(cfg.output_dir);
  const fs::path dir(cfg.output_dir);
  write_json_file((dir / "model.json").string(), model_bundle(cfg, ds, t, &fit.model));
  Json trace = fit.trace;
  trace["trial"] = t.index;
  write_json_file((dir / "trace.json").string(), trace);
  const MeanVar g = global_moments(fit.model);
  print(Json{{"trial", t.index},
             {"method", method_name},
             {"sigma", fit.trace.sigma},
             {"global_mean", g.mean},
             {"global_variance", g.variance},
             {"coefficients", fit.model.coefficients},
             {"model", (dir / "model.json").string()}});
  return 0;
}

LoadedBundle load_model(const std::string& path) {
  LoadedBundle b = [&] {
    try {
      return load_bundle(path);
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
  }();
  if (!b.model) throw UsageError("'" + path + "' has no fitted PCE (run fit-pce first)");
  return b;
}

struct MomentOpts {
  std::string model;
  std::vector<std::size_t> points;
  bool all = false;
  unsigned k = 1;
  std::string method = "auto";
  unsigned quad_points = 0;
  std::size_t samples = 1000;
  std::optional<std::uint64_t> seed;
  std::string csv;
};

int cmd_moments(const MomentOpts& o) {
  const LoadedBundle b = load_model(o.model);
  const PceModel& model = *b.model;
  std::vector<std::size_t> points = o.points;
  if (o.all) {
    points.resize(b.dataset.size());
    for (std::size_t i = 0; i < points.size(); ++i) points[i] = i;
  }
  if (points.empty()) throw UsageError("give --point-index or --all");
  if (o.k < 1 || o.k > kMaxMomentOrder)
    throw UsageError("--k must be in [1, " + std::to_string(kMaxMomentOrder) + "]");
  for (auto i : points)
    if (i >= b.dataset.size())
      throw UsageError("--point-index " + std::to_string(i) + " out of range (n = " +
                       std::to_string(b.dataset.size()) + ")");

  std::vector<MomentRow> rows;
  Json out = Json::array();
  for (auto i : points) {
    const std::uint64_t mc_seed =
        o.seed ? derive_seed(*o.seed, "moments", i) : derive_seed(b.trial.seeds.mc, "moments", i);
    MomentMethod m;
    if (o.method == "auto")
      m = auto_method(model, mc_seed);
    else if (o.method == "quadrature")
      m = QuadratureMethod{o.quad_points ? o.quad_points : model.basis.degree + 1};
    else if (o.method == "mc" || o.method == "monte_carlo")
      m = MonteCarloMethod{o.samples, mc_seed};
    else
      throw UsageError("--method must be auto, quadrature or mc");
    const double v = run_stage("moments", [&] {
      return conditional_moment(model, b.trial.latent.posteriors[i], MomentRequest{o.k, m});
    });
    rows.push_back({i, o.k, method_name(m), v});
    out.push_back(Json{{"point_index", i}, {"k", o.k}, {"method", method_name(m)}, {"value", v}});
  }
  if (!o.csv.empty()) {
    std::ofstream f(o.csv);
    if (!f) throw DataError("cannot write '" + o.csv + "'");
    write_moment_csv(f, rows);
  }
  print(out.size() == 1 ? out[0] : out);
  return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& output) {
  const LoadedBundle b = load_model(model_path);
  const EvalReport r = evaluate_stage(b.dataset, b.trial, *b.model, b.config);
  if (!output.empty()) {
    fs::create_directories(output);
    Json ev = r;
    ev["trial"] = b.trial.index;
    write_json_file((fs::path(output) / ("eval_trial_" + std::to_string(b.trial.index) + ".json")).string(), ev);
    std::ofstream h(fs::path(output) / "residual_hist.csv");
    write_histogram_csv(h, r.histogram);
  }
  print(Json{{"trial", b.trial.index},
             {"test_points", r.residuals.size()},
             {"epsilon_gen", r.epsilon_gen},
             {"fraction_within_one_sd", fraction_within(r.residuals, 1.0)}});
  return 0;
}

int cmd_synth(const CommonOpts& o, SynthSpec spec, const std::string& csv_out, bool from_config) {
  if (from_config) {
    const RunConfig cfg = build_config(o);
    if (cfg.data.kind != DataSource::Kind::synthetic)
      throw UsageError("config data source is not synthetic");
    spec = cfg.data.synth;
  } else if (o.seed) {
    spec.seed = *o.seed;
  }
  const SynthData s = run_stage("synth", [&] { return synth_latent_polynomial(spec); });
  std::ofstream f(csv_out);
  if (!f) throw DataError("cannot write '" + csv_out + "'");
  write_csv(f, s.dataset.features, s.dataset.targets, s.dataset.feature_names, "y");
  print(Json{{"path", csv_out}, {"n", spec.n}, {"m", spec.m}, {"d_true", spec.d_true},
             {"degree", spec.degree}, {"noise_sd", spec.noise_sd}, {"seed", spec.seed}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PCE-Net: VAE latent space + Hermite PCE fitted by MMD"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "pcenet 0.1.0");

  CommonOpts run_o, ols_o, vae_o, fit_o, synth_o;
  std::size_t vae_trial = 0, fit_trial = 0;
  std::string fit_vae, fit_method = "mmd";
  MomentOpts mo;
  std::string eval_model, eval_out;
  SynthSpec spec;
  std::string synth_csv;

  auto* run = app.add_subcommand("run", "full pipeline with MMD fitting, all trials");
  add_common(run, run_o, false);

  auto* ols = app.add_subcommand("baseline-ols", "same pipeline with least-squares fitting");
  add_common(ols, ols_o, false);

  auto* tv = app.add_subcommand("train-vae", "split and train the VAE for one trial");
  add_common(tv, vae_o, false);
  tv->add_option("--trial", vae_trial, "trial index");

  auto* fp = app.add_subcommand("fit-pce", "fit the PCE for one trial");
  add_common(fp, fit_o, false);
  fp->add_option("--trial", fit_trial, "trial index");
  fp->add_option("--vae", fit_vae, "vae.json from train-vae (skips VAE training)");
  fp->add_option("--method", fit_method, "mmd or ols");

  auto* mom = app.add_subcommand("moments", "conditional moments of a fitted model");
  mom->add_option("--model", mo.model, "model.json")->required();
  mom->add_option("--point-index", mo.points, "data row (repeatable)");
  mom->add_flag("--all", mo.all, "every data row");
  mom->add_option("--k", mo.k, "moment order");
  mom->add_option("--method", mo.method, "auto, quadrature or mc");
  mom->add_option("--points", mo.quad_points, "quadrature nodes per dimension");
  mom->add_option("--samples", mo.samples, "Monte Carlo samples")->check(CLI::PositiveNumber);
  mom->add_option("--seed", mo.seed, "Monte Carlo seed");
  mom->add_option("--csv", mo.csv, "also write rows to this CSV");

  auto* ev = app.add_subcommand("evaluate", "test-set metrics of a fitted model");
  ev->add_option("--model", eval_model, "model.json")->required();
  ev->add_option("--output,-o", eval_out, "write eval JSON and histogram CSV here");

  auto* sy = app.add_subcommand("synth", "write a synthetic latent-polynomial dataset as CSV");
  add_common(sy, synth_o, false);
  sy->add_option("--csv", synth_csv, "output CSV")->required();
  sy->add_option("--n", spec.n, "rows");
  sy->add_option("--m", spec.m, "features");
  sy->add_option("--d-true", spec.d_true, "latent dimension");
  sy->add_option("--degree", spec.degree, "polynomial degree");
  sy->add_option("--noise-sd", spec.noise_sd, "target noise");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(run_o, FitMethod::mmd);
    if (*ols) return cmd_run(ols_o, FitMethod::ols);
    if (*tv) return cmd_train_vae(vae_o, vae_trial);
    if (*fp) {
      if (fit_vae.empty() && fit_o.config.empty())
        throw UsageError("fit-pce needs --config or --vae");
      return cmd_fit_pce(fit_o, fit_trial, fit_vae, fit_method);
    }
    if (*mom) return cmd_moments(mo);
    if (*ev) return cmd_evaluate(eval_model, eval_out);
    if (*sy) return cmd_synth(synth_o, spec, synth_csv, !synth_o.config.empty());
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const StageError& e) {
    std::cerr << "error [stage " << e.stage() << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
