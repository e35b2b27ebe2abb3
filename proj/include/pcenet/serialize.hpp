#pragma once

// JSON encodings for models, traces and reports. Doubles are written in
// shortest round-trip form, so load(dump(x)) == x bit for bit.

#include <fstream>
#include <string>

#include <json.hpp>

#include "pcenet/data.hpp"
#include "pcenet/errors.hpp"
#include "pcenet/metrics.hpp"
#include "pcenet/mmd.hpp"
#include "pcenet/nncore.hpp"
#include "pcenet/pce.hpp"
#include "pcenet/vae.hpp"

namespace pcenet {

using Json = nlohmann::ordered_json;

inline void to_json(Json& j, const Matrix& m) {
  j = Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

inline void from_json(const Json& j, Matrix& m) {
  m = Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
             j.at("data").get<std::vector<double>>());
}

inline void to_json(Json& j, const DenseLayer& l) {
  j = Json{{"activation", to_string(l.activation)},
           {"out", l.weights.rows()},
           {"in", l.weights.cols()},
           {"weights", l.weights.data()},
           {"bias", l.bias}};
}

inline void from_json(const Json& j, DenseLayer& l) {
  l.activation = activation_from_string(j.at("activation").get<std::string>());
  l.weights = Matrix(j.at("out").get<std::size_t>(), j.at("in").get<std::size_t>(),
                     j.at("weights").get<std::vector<double>>());
  l.bias = j.at("bias").get<Vector>();
  require_shape(l.bias.size() == l.weights.rows(), "layer JSON: bias length != out");
}

inline void to_json(Json& j, const VaeConfig& c) {
  j = Json{{"input_dim", c.input_dim},       {"hidden_dim", c.hidden_dim},
           {"latent_dim", c.latent_dim},     {"learning_rate", c.learning_rate},
           {"epochs", c.epochs},             {"batch_size", c.batch_size},
           {"seed", c.seed},                 {"recon_weight", c.recon_weight}};
}

inline void from_json(const Json& j, VaeConfig& c) {
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.latent_dim = j.at("latent_dim").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.recon_weight = j.value("recon_weight", 1.0);
}

inline void to_json(Json& j, const VaeParams& p) {
  j = Json{{"config", p.config},
           {"layers",
            {{"encoder_hidden", p.encoder_hidden},
             {"encoder_mu", p.encoder_mu},
             {"encoder_logvar", p.encoder_logvar},
             {"decoder_hidden", p.decoder_hidden},
             {"decoder_out", p.decoder_out}}}};
}

inline void from_json(const Json& j, VaeParams& p) {
  p.config = j.at("config").get<VaeConfig>();
  const auto& l = j.at("layers");
  p.encoder_hidden = l.at("encoder_hidden").get<DenseLayer>();
  p.encoder_mu = l.at("encoder_mu").get<DenseLayer>();
  p.encoder_logvar = l.at("encoder_logvar").get<DenseLayer>();
  p.decoder_hidden = l.at("decoder_hidden").get<DenseLayer>();
  p.decoder_out = l.at("decoder_out").get<DenseLayer>();
}

inline void to_json(Json& j, const PceModel& m) {
  j = Json{{"dim", m.basis.dim},
           {"degree", m.basis.degree},
           {"indices", m.basis.indices},
           {"coefficients", m.coefficients}};
}

inline void from_json(const Json& j, PceModel& m) {
  PceBasis basis(j.at("dim").get<std::size_t>(), j.at("degree").get<unsigned>());
  if (j.contains("indices") &&
      j.at("indices").get<std::vector<MultiIndex>>() != basis.indices)
    throw ConfigError("PceModel JSON: index list does not match the graded ordering");
  m = make_model(std::move(basis), j.at("coefficients").get<Vector>());
}

inline void to_json(Json& j, const ScalerParams& s) { j = Json{{"min", s.min}, {"max", s.max}}; }

inline void from_json(const Json& j, ScalerParams& s) {
  s.min = j.at("min").get<Vector>();
  s.max = j.at("max").get<Vector>();
}

inline void to_json(Json& j, const SplitIndices& s) {
  j = Json{{"seed", s.seed}, {"train", s.train}, {"validation", s.validation}, {"test", s.test}};
}

inline void from_json(const Json& j, SplitIndices& s) {
  s.seed = j.at("seed").get<std::uint64_t>();
  s.train = j.at("train").get<std::vector<std::size_t>>();
  s.validation = j.at("validation").get<std::vector<std::size_t>>();
  s.test = j.at("test").get<std::vector<std::size_t>>();
}

inline void to_json(Json& j, const FitTrace& t) {
  Json table = Json::array();
  for (const auto& e : t.cv_table) {
    Json row{{"sigma", e.sigma}};
    row["cv_loss"] = e.cv_loss ? Json(*e.cv_loss) : Json(nullptr);
    if (!e.error.empty()) row["error"] = e.error;
    table.push_back(std::move(row));
  }
  j = Json{{"sigma", t.sigma},
           {"converged", t.converged},
           {"best_iteration", t.best_iteration},
           {"iterations", t.losses.empty() ? 0 : t.losses.size() - 1},
           {"losses", t.losses},
           {"cv_table", std::move(table)}};
}

inline void to_json(Json& j, const Histogram& h) {
  j = Json{{"edges", h.edges}, {"densities", h.densities}};
}

inline void to_json(Json& j, const EvalReport& r) {
  j = Json{{"trial_seed", r.trial_seed},
           {"epsilon_gen", r.epsilon_gen},
           {"fraction_within_one_sd", fraction_within(r.residuals, 1.0)},
           {"residuals", r.residuals},
           {"cond_means", r.cond_means},
           {"cond_vars", r.cond_vars},
           {"histogram", r.histogram}};
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open JSON file '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("malformed JSON in '" + path + "': " + e.what());
  }
}

inline void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

}  // namespace pcenet
