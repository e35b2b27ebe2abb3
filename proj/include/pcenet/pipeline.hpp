#pragma once

// End-to-end training and evaluation:
//   split -> VAE on train+validation inputs -> one latent sample per point ->
//   per-sigma MMD fits on train scored on validation -> refit at the chosen
//   sigma -> conditional moments and error metrics on test.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "pcenet/data.hpp"
#include "pcenet/errors.hpp"
#include "pcenet/metrics.hpp"
#include "pcenet/mmd.hpp"
#include "pcenet/moments.hpp"
#include "pcenet/pce.hpp"
#include "pcenet/rng.hpp"
#include "pcenet/serialize.hpp"
#include "pcenet/vae.hpp"

namespace pcenet {

// ---------------------------------------------------------------------------
// Synthetic data

struct SynthSpec {
  std::size_t n = 500;
  std::size_t m = 10;
  std::size_t d_true = 2;
  unsigned degree = 2;
  double noise_sd = 0.0;
  std::uint64_t seed = 1;

  bool operator==(const SynthSpec&) const = default;
};

struct SynthData {
  Dataset dataset;   // min-max scaled features, raw targets
  Matrix latent;     // n x d_true draws w ~ N(0, I)
  PceModel truth;    // y = truth(w) + noise
  Matrix embedding;  // m x d_true
  Vector offset;     // m
};

/// Latent Gaussian w embedded linearly into R^m; target is a random
/// total-degree Hermite polynomial of w plus Gaussian noise.
inline SynthData synth_latent_polynomial(const SynthSpec& spec) {
  if (spec.d_true == 0 || spec.d_true > spec.m)
    throw ConfigError("synth: need 1 <= d_true <= m");
  Rng rng = make_rng(spec.seed, "synth");
  SynthData out;
  out.embedding = Matrix(spec.m, spec.d_true);
  for (auto& a : out.embedding.data()) a = standard_normal(rng);
  out.offset.resize(spec.m);
  for (auto& b : out.offset) b = standard_normal(rng);
  PceBasis basis(spec.d_true, spec.degree);
  Vector coef(basis.size());
  for (auto& c : coef) c = standard_normal(rng);
  out.truth = make_model(std::move(basis), std::move(coef));

  out.latent = Matrix(spec.n, spec.d_true);
  Matrix x(spec.n, spec.m);
  Vector y(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    auto w = out.latent.row(i);
    for (auto& v : w) v = standard_normal(rng);
    const Vector xi = matvec(out.embedding, w);
    for (std::size_t j = 0; j < spec.m; ++j) x(i, j) = xi[j] + out.offset[j];
    y[i] = predict(out.truth, w) + (spec.noise_sd > 0 ? spec.noise_sd * standard_normal(rng) : 0.0);
  }
  Dataset ds;
  ds.features = std::move(x);
  ds.targets = std::move(y);
  for (std::size_t j = 0; j < spec.m; ++j) ds.feature_names.push_back("x" + std::to_string(j));
  out.dataset = minmax_scale(std::move(ds));
  return out;
}

inline void write_csv(std::ostream& out, const Matrix& features, std::span<const double> targets,
                      const std::vector<std::string>& names, const std::string& target_name) {
  for (const auto& n : names) out << n << ',';
  out << target_name << '\n';
  const auto old = out.precision(17);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    for (double v : features.row(i)) out << v << ',';
    out << targets[i] << '\n';
  }
  out.precision(old);
}

// ---------------------------------------------------------------------------
// Configuration

struct DataSource {
  enum class Kind { csv, synthetic };
  Kind kind = Kind::synthetic;
  std::string path;
  std::string target = "y";
  SynthSpec synth;
};

struct EvalConfig {
  std::size_t mc_samples = 1000;
  std::size_t histogram_bins = 30;
};

struct RunConfig {
  DataSource data;
  VaeConfig vae;  // input_dim is filled from the data
  unsigned pce_degree = 2;
  double pce_ridge = 1e-10;
  MmdFitConfig mmd;
  SplitRatios split;
  std::size_t trials = 10;
  std::uint64_t seed = 0;
  std::string output_dir = "pcenet_out";
  EvalConfig eval;
};

inline Json to_json_config(const RunConfig& c) {
  Json data;
  if (c.data.kind == DataSource::Kind::csv) {
    data = Json{{"source", "csv"}, {"path", c.data.path}, {"target", c.data.target}};
  } else {
    const auto& s = c.data.synth;
    data = Json{{"source", "synthetic"}, {"generator", "latent_polynomial"},
                {"n", s.n},              {"m", s.m},
                {"d_true", s.d_true},    {"degree", s.degree},
                {"noise_sd", s.noise_sd}, {"seed", s.seed}};
  }
  return Json{
      {"data", data},
      {"vae",
       {{"hidden_dim", c.vae.hidden_dim},
        {"latent_dim", c.vae.latent_dim},
        {"learning_rate", c.vae.learning_rate},
        {"epochs", c.vae.epochs},
        {"batch_size", c.vae.batch_size},
        {"recon_weight", c.vae.recon_weight}}},
      {"pce", {{"degree", c.pce_degree}, {"ridge", c.pce_ridge}}},
      {"mmd",
       {{"sigma_grid", c.mmd.sigma_grid},
        {"max_iterations", c.mmd.max_iterations},
        {"step_size", c.mmd.step_size},
        {"tolerance", c.mmd.tolerance},
        {"init", c.mmd.init == MmdInit::ols ? "ols" : "zeros"}}},
      {"split",
       {{"train", c.split.train}, {"validation", c.split.validation}, {"test", c.split.test}}},
      {"trials", c.trials},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"eval", {{"mc_samples", c.eval.mc_samples}, {"histogram_bins", c.eval.histogram_bins}}}};
}

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(const Json& root) : root_(root) {}

  template <typename T>
  void read(const std::string& pointer, T& out) {
    seen_.push_back(pointer);
    const Json::json_pointer ptr(pointer);
    if (!root_.contains(ptr)) return;
    const Json& v = root_.at(ptr);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError("expected a number");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer() && !v.is_number_unsigned())
          throw ConfigError("expected an integer");
        if (v.is_number_integer() && v.get<std::int64_t>() < 0)
          throw ConfigError("expected a nonnegative integer");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("expected a string");
      }
      out = v.get<T>();
    } catch (const ConfigError& e) {
      throw ConfigError("config " + pointer + ": " + e.what());
    } catch (const Json::exception& e) {
      throw ConfigError("config " + pointer + ": " + e.what());
    }
  }

  // Rejects keys that no read() call asked for.
  void reject_unknown() const { walk(root_, ""); }

 private:
  void walk(const Json& j, const std::string& prefix) const {
    if (!j.is_object()) {
      if (std::find(seen_.begin(), seen_.end(), prefix) == seen_.end())
        throw ConfigError("config " + prefix + ": unknown key");
      return;
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string p = prefix + "/" + it.key();
      if (std::find(seen_.begin(), seen_.end(), p) != seen_.end()) continue;
      if (!it.value().is_object()) throw ConfigError("config " + p + ": unknown key");
      walk(it.value(), p);
    }
  }

  const Json& root_;
  std::vector<std::string> seen_;
};

}  // namespace detail

/// Parses a run configuration; missing keys keep their defaults. Relative
/// CSV paths are resolved against `base_dir`. Errors name the JSON pointer.
inline RunConfig parse_run_config(const Json& j, const std::filesystem::path& base_dir = {}) {
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  RunConfig c;
  detail::ConfigReader r(j);
  std::string source = "synthetic";
  r.read("/data/source", source);
  if (source == "csv") {
    c.data.kind = DataSource::Kind::csv;
    r.read("/data/path", c.data.path);
    r.read("/data/target", c.data.target);
    if (c.data.path.empty()) throw ConfigError("config /data/path: required for csv source");
    std::filesystem::path p(c.data.path);
    if (p.is_relative() && !base_dir.empty())
      c.data.path = std::filesystem::absolute(base_dir / p).lexically_normal().string();
  } else if (source == "synthetic") {
    c.data.kind = DataSource::Kind::synthetic;
    std::string gen = "latent_polynomial";
    r.read("/data/generator", gen);
    if (gen != "latent_polynomial")
      throw ConfigError("config /data/generator: unknown generator '" + gen + "'");
    r.read("/data/n", c.data.synth.n);
    r.read("/data/m", c.data.synth.m);
    r.read("/data/d_true", c.data.synth.d_true);
    r.read("/data/degree", c.data.synth.degree);
    r.read("/data/noise_sd", c.data.synth.noise_sd);
    r.read("/data/seed", c.data.synth.seed);
  } else {
    throw ConfigError("config /data/source: expected 'csv' or 'synthetic', got '" + source + "'");
  }
  r.read("/vae/hidden_dim", c.vae.hidden_dim);
  r.read("/vae/latent_dim", c.vae.latent_dim);
  r.read("/vae/learning_rate", c.vae.learning_rate);
  r.read("/vae/epochs", c.vae.epochs);
  r.read("/vae/batch_size", c.vae.batch_size);
  r.read("/vae/recon_weight", c.vae.recon_weight);
  r.read("/pce/degree", c.pce_degree);
  r.read("/pce/ridge", c.pce_ridge);
  r.read("/mmd/sigma_grid", c.mmd.sigma_grid);
  r.read("/mmd/max_iterations", c.mmd.max_iterations);
  r.read("/mmd/step_size", c.mmd.step_size);
  r.read("/mmd/tolerance", c.mmd.tolerance);
  std::string init = "ols";
  r.read("/mmd/init", init);
  if (init == "ols")
    c.mmd.init = MmdInit::ols;
  else if (init == "zeros")
    c.mmd.init = MmdInit::zeros;
  else
    throw ConfigError("config /mmd/init: expected 'ols' or 'zeros'");
  r.read("/split/train", c.split.train);
  r.read("/split/validation", c.split.validation);
  r.read("/split/test", c.split.test);
  r.read("/trials", c.trials);
  r.read("/seed", c.seed);
  r.read("/output_dir", c.output_dir);
  r.read("/eval/mc_samples", c.eval.mc_samples);
  r.read("/eval/histogram_bins", c.eval.histogram_bins);
  r.reject_unknown();

  c.mmd.ridge = c.pce_ridge;
  try {
    c.mmd.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config /mmd: ") + e.what());
  }
  if (c.trials == 0) throw ConfigError("config /trials: must be >= 1");
  if (c.eval.mc_samples == 0) throw ConfigError("config /eval/mc_samples: must be >= 1");
  if (c.eval.histogram_bins == 0) throw ConfigError("config /eval/histogram_bins: must be >= 1");
  if (c.pce_ridge < 0) throw ConfigError("config /pce/ridge: must be >= 0");
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  const Json j = read_json_file(path);
  return parse_run_config(j, std::filesystem::path(path).parent_path());
}

/// Applies "a.b.c=value" to a config document. The key must name an
/// existing leaf of the fully populated config; the value is parsed as JSON
/// when possible and kept as a string otherwise.
inline void apply_override(Json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "': expected key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  std::string pointer;
  for (std::size_t start = 0;;) {
    const auto dot = key.find('.', start);
    pointer += "/" + key.substr(start, dot - start);
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  const Json full = to_json_config(parse_run_config(doc));
  const Json::json_pointer ptr(pointer);
  if (!full.contains(ptr) || full.at(ptr).is_object())
    throw ConfigError("override '" + key + "': no such config key");
  Json value = Json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  doc[ptr] = value;
}

// ---------------------------------------------------------------------------
// Stages

inline Dataset load_dataset(const DataSource& src) {
  if (src.kind == DataSource::Kind::csv) return minmax_scale(load_csv(src.path, src.target));
  return synth_latent_polynomial(src.synth).dataset;
}

struct TrialSeeds {
  std::uint64_t trial = 0;
  std::uint64_t split = 0;
  std::uint64_t vae = 0;
  std::uint64_t latent = 0;
  std::uint64_t mmd = 0;
  std::uint64_t mc = 0;

  static TrialSeeds derive(std::uint64_t run_seed, std::size_t trial_index) {
    TrialSeeds s;
    s.trial = derive_seed(run_seed, "trial", trial_index);
    s.split = derive_seed(s.trial, "split");
    s.vae = derive_seed(s.trial, "vae");
    s.latent = derive_seed(s.trial, "latent");
    s.mmd = derive_seed(s.trial, "mmd");
    s.mc = derive_seed(s.trial, "mc");
    return s;
  }
};

/// Everything upstream of the coefficient fit. MMD and OLS fits of the same
/// trial share it.
struct TrialData {
  std::size_t index = 0;
  TrialSeeds seeds;
  SplitIndices split;
  VaeParams vae;
  Vector vae_epoch_losses;
  LatentSample latent;  // one sample per data point, all n rows

  std::vector<std::size_t> vae_rows() const {
    std::vector<std::size_t> rows = split.train;
    rows.insert(rows.end(), split.validation.begin(), split.validation.end());
    return rows;
  }
};

template <typename F>
auto run_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e.what());
  }
}

inline VaeConfig vae_config_for(const RunConfig& cfg, const Dataset& ds, std::uint64_t seed) {
  VaeConfig v = cfg.vae;
  v.input_dim = ds.input_dim();
  v.seed = seed;
  return v;
}

inline TrialData prepare_trial(const Dataset& ds, const RunConfig& cfg, std::size_t trial) {
  TrialData t;
  t.index = trial;
  t.seeds = TrialSeeds::derive(cfg.seed, trial);
  t.split = run_stage("split", [&] { return split(ds.size(), cfg.split, t.seeds.split); });
  run_stage("train-vae", [&] {
    Dataset sub;
    const auto rows = t.vae_rows();
    sub.features = select_rows(ds.features, rows);
    sub.targets = select(ds.targets, rows);
    auto res = train_vae_with_history(sub, vae_config_for(cfg, ds, t.seeds.vae));
    t.vae = std::move(res.params);
    t.vae_epoch_losses = std::move(res.epoch_losses);
    return 0;
  });
  t.latent = run_stage("latent", [&] { return latent_dataset(t.vae, ds.features, t.seeds.latent); });
  return t;
}

enum class FitMethod { mmd, ols };

struct FitOutcome {
  PceModel model;
  FitTrace trace;
};

inline MomentMethod cv_method(const PceModel& model, std::uint64_t seed) {
  return auto_method(model, seed);
}

/// MMD: per-sigma fits on train, sigma chosen by validation CV loss, then a
/// refit on train+validation at that sigma. OLS: one ridge fit on
/// train+validation.
inline FitOutcome fit_stage(const Dataset& ds, const TrialData& t, const RunConfig& cfg,
                            FitMethod method) {
  const PceBasis basis(cfg.vae.latent_dim, cfg.pce_degree);
  const auto fit_rows = t.vae_rows();
  const Matrix fit_design = design_matrix(basis, select_rows(t.latent.z, fit_rows));
  const Vector fit_y = select(ds.targets, fit_rows);

  if (method == FitMethod::ols) {
    return run_stage("fit-ols", [&] {
      FitOutcome out{make_model(basis, ols_fit(fit_design, fit_y, cfg.pce_ridge)), {}};
      return out;
    });
  }

  SigmaSelection sel = run_stage("select-sigma", [&] {
    const Matrix train_design = design_matrix(basis, select_rows(t.latent.z, t.split.train));
    const Vector train_y = select(ds.targets, t.split.train);
    std::vector<LatentPosterior> val_post;
    for (auto i : t.split.validation) val_post.push_back(t.latent.posteriors[i]);
    const Vector val_y = select(ds.targets, t.split.validation);
    const ValidationSet val{&val_post, val_y};
    const std::uint64_t seed = derive_seed(t.seeds.mc, "cv");
    return select_sigma(cfg.mmd.sigma_grid, train_design, train_y, basis, val, cfg.mmd,
                        [&](const PceModel& m) { return cv_method(m, seed); });
  });
  return run_stage("fit-mmd", [&] {
    MmdFitResult refit = fit_mmd(fit_design, fit_y, sel.sigma, cfg.mmd);
    refit.trace.cv_table = sel.table;
    return FitOutcome{make_model(basis, refit.coefficients), refit.trace};
  });
}

/// Conditional means/variances by Monte Carlo over each test posterior.
inline EvalReport evaluate_stage(const Dataset& ds, const TrialData& t, const PceModel& model,
                                 const RunConfig& cfg) {
  return run_stage("evaluate", [&] {
    EvalReport r;
    r.trial_seed = t.seeds.trial;
    const Vector y = select(ds.targets, t.split.test);
    for (auto i : t.split.test) {
      const MonteCarloMethod mc{cfg.eval.mc_samples, derive_seed(t.seeds.mc, "eval", i)};
      const MeanVar mv = conditional_mean_var(model, t.latent.posteriors[i], mc);
      r.cond_means.push_back(mv.mean);
      r.cond_vars.push_back(std::max(mv.variance, kVarianceFloor));
    }
    r.epsilon_gen = relative_generalization_error(y, r.cond_means);
    r.residuals = standardized_residuals(y, r.cond_means, r.cond_vars);
    r.histogram = histogram_density(r.residuals, cfg.eval.histogram_bins);
    return r;
  });
}

struct TrialResult {
  TrialData data;
  FitOutcome fit;
  EvalReport eval;
};

struct RunSummary {
  double median_epsilon_gen = 0.0;
  double q25_epsilon_gen = 0.0;
  double q75_epsilon_gen = 0.0;
  double fraction_within_one_sd = 0.0;  // pooled over trials
};

struct RunResult {
  FitMethod method = FitMethod::mmd;
  std::vector<TrialResult> trials;
  RunSummary summary;
};

inline std::size_t worker_cap() {
  if (const char* env = std::getenv("PCENET_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

inline TrialResult run_trial(const Dataset& ds, const RunConfig& cfg, std::size_t trial,
                             FitMethod method) {
  TrialResult tr;
  tr.data = prepare_trial(ds, cfg, trial);
  tr.fit = fit_stage(ds, tr.data, cfg, method);
  tr.eval = evaluate_stage(ds, tr.data, tr.fit.model, cfg);
  return tr;
}

inline RunSummary summarize(const std::vector<TrialResult>& trials) {
  RunSummary s;
  std::vector<double> eps;
  Vector pooled;
  for (const auto& t : trials) {
    eps.push_back(t.eval.epsilon_gen);
    pooled.insert(pooled.end(), t.eval.residuals.begin(), t.eval.residuals.end());
  }
  s.median_epsilon_gen = quantile(eps, 0.5);
  s.q25_epsilon_gen = quantile(eps, 0.25);
  s.q75_epsilon_gen = quantile(eps, 0.75);
  s.fraction_within_one_sd = fraction_within(pooled, 1.0);
  return s;
}

/// Runs every trial. Trials are independent; with parallel > 1 they run on
/// worker threads and results are stored by trial index.
inline RunResult run_pipeline(const RunConfig& cfg, FitMethod method = FitMethod::mmd,
                              std::size_t parallel = 1) {
  const Dataset ds = run_stage("load-data", [&] { return load_dataset(cfg.data); });
  if (cfg.vae.latent_dim >= ds.input_dim())
    throw StageError("config", "vae.latent_dim must be smaller than the input dimension " +
                                   std::to_string(ds.input_dim()));
  RunResult result;
  result.method = method;
  result.trials.resize(cfg.trials);
  const std::size_t workers = std::min({std::max<std::size_t>(parallel, 1), worker_cap(), cfg.trials});
  if (workers <= 1) {
    for (std::size_t t = 0; t < cfg.trials; ++t) result.trials[t] = run_trial(ds, cfg, t, method);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t t = next++; t < cfg.trials; t = next++) {
          try {
            result.trials[t] = run_trial(ds, cfg, t, method);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }
  result.summary = summarize(result.trials);
  return result;
}

// ---------------------------------------------------------------------------
// Artifacts

/// Self-contained model bundle: enough to re-derive posteriors for any data
/// point (config, scaler, VAE, split) plus the fitted PCE.
inline Json model_bundle(const RunConfig& cfg, const Dataset& ds, const TrialData& t,
                         const PceModel* model) {
  Json j{{"trial", t.index},
         {"seeds",
          {{"trial", t.seeds.trial},
           {"split", t.seeds.split},
           {"vae", t.seeds.vae},
           {"latent", t.seeds.latent},
           {"mmd", t.seeds.mmd},
           {"mc", t.seeds.mc}}},
         {"config", to_json_config(cfg)},
         {"split", t.split},
         {"vae", t.vae}};
  if (ds.scaler) j["scaler"] = *ds.scaler;
  if (model) j["pce"] = *model;
  return j;
}

inline Json result_json(const RunConfig& cfg, const RunResult& r) {
  Json trials = Json::array();
  for (const auto& t : r.trials)
    trials.push_back(Json{{"trial", t.data.index},
                          {"trial_seed", t.data.seeds.trial},
                          {"sigma", t.fit.trace.sigma},
                          {"epsilon_gen", t.eval.epsilon_gen},
                          {"fraction_within_one_sd", fraction_within(t.eval.residuals, 1.0)},
                          {"global_mean", global_moments(t.fit.model).mean},
                          {"global_variance", global_moments(t.fit.model).variance},
                          {"coefficients", t.fit.model.coefficients}});
  return Json{{"method", r.method == FitMethod::mmd ? "mmd" : "ols"},
              {"config", to_json_config(cfg)},
              {"summary",
               {{"median_epsilon_gen", r.summary.median_epsilon_gen},
                {"q25_epsilon_gen", r.summary.q25_epsilon_gen},
                {"q75_epsilon_gen", r.summary.q75_epsilon_gen},
                {"fraction_within_one_sd", r.summary.fraction_within_one_sd}}},
              {"trials", std::move(trials)}};
}

/// Writes model.json (trial 0 bundle), model_trial_k.json, trace.json,
/// eval_trial_k.json, residual_hist.csv (pooled residuals) and result.json.
inline void write_artifacts(const std::filesystem::path& dir, const RunConfig& cfg,
                            const Dataset& ds, const RunResult& r) {
  std::filesystem::create_directories(dir);
  Json traces = Json::array();
  Vector pooled;
  for (const auto& t : r.trials) {
    const std::string k = std::to_string(t.data.index);
    const Json bundle = model_bundle(cfg, ds, t.data, &t.fit.model);
    if (t.data.index == 0) write_json_file((dir / "model.json").string(), bundle);
    write_json_file((dir / ("model_trial_" + k + ".json")).string(), bundle);
    Json trace = t.fit.trace;
    trace["trial"] = t.data.index;
    trace["vae_epoch_losses"] = t.data.vae_epoch_losses;
    traces.push_back(std::move(trace));
    Json ev = t.eval;
    ev["trial"] = t.data.index;
    ev["method"] = r.method == FitMethod::mmd ? "mmd" : "ols";
    write_json_file((dir / ("eval_trial_" + k + ".json")).string(), ev);
    pooled.insert(pooled.end(), t.eval.residuals.begin(), t.eval.residuals.end());
  }
  write_json_file((dir / "trace.json").string(), Json{{"trials", traces}});
  {
    std::ofstream out(dir / "residual_hist.csv");
    write_histogram_csv(out, histogram_density(pooled, cfg.eval.histogram_bins));
  }
  write_json_file((dir / "result.json").string(), result_json(cfg, r));
}

/// A model bundle read back from disk. Posteriors are recomputed from the
/// stored VAE; the latent draws are not.
struct LoadedBundle {
  RunConfig config;
  Dataset dataset;
  TrialData trial;
  std::optional<PceModel> model;
};

inline LoadedBundle load_bundle(const std::string& path) {
  const Json j = read_json_file(path);
  LoadedBundle b;
  try {
    b.config = parse_run_config(j.at("config"));
    b.trial.index = j.at("trial").get<std::size_t>();
    b.trial.split = j.at("split").get<SplitIndices>();
    b.trial.vae = j.at("vae").get<VaeParams>();
    if (j.contains("pce")) b.model = j.at("pce").get<PceModel>();
  } catch (const Json::exception& e) {
    throw ConfigError("model bundle '" + path + "': " + e.what());
  }
  b.trial.seeds = TrialSeeds::derive(b.config.seed, b.trial.index);
  b.dataset = run_stage("load-data", [&] { return load_dataset(b.config.data); });
  if (b.dataset.input_dim() != b.trial.vae.config.input_dim)
    throw DataError("model bundle '" + path + "': data has " +
                    std::to_string(b.dataset.input_dim()) + " features, VAE expects " +
                    std::to_string(b.trial.vae.config.input_dim));
  b.trial.latent.posteriors.reserve(b.dataset.size());
  for (std::size_t i = 0; i < b.dataset.size(); ++i)
    b.trial.latent.posteriors.push_back(encode(b.trial.vae, b.dataset.features.row(i)));
  return b;
}

}  // namespace pcenet
