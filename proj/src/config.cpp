// SPDX-License-Identifier: Apache-2.0
#include "sancl/config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include "sancl/errors.hpp"

namespace sancl {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

[[noreturn]] void bad(const std::string& source, const std::string& key, const std::string& what) {
  throw ConfigError(source + ": key '" + key + "': " + what);
}

double get_number(const json& v, const std::string& src, const std::string& key) {
  if (!v.is_number()) bad(src, key, "expected a number");
  return v.get<double>();
}

std::size_t get_count(const json& v, const std::string& src, const std::string& key) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) bad(src, key, "expected a non-negative integer");
  return v.get<std::size_t>();
}

int get_int(const json& v, const std::string& src, const std::string& key) {
  if (!v.is_number_integer()) bad(src, key, "expected an integer");
  return v.get<int>();
}

bool get_bool(const json& v, const std::string& src, const std::string& key) {
  if (!v.is_boolean()) bad(src, key, "expected true or false");
  return v.get<bool>();
}

std::string get_string(const json& v, const std::string& src, const std::string& key) {
  if (!v.is_string()) bad(src, key, "expected a string");
  return v.get<std::string>();
}

corpus::Modality parse_mode(const std::string& s, const std::string& src) {
  if (s == "multimodal") return corpus::Modality::multimodal;
  if (s == "text-only" || s == "text_only") return corpus::Modality::text_only;
  bad(src, "mode", "expected \"multimodal\" or \"text-only\", got \"" + s + "\"");
}

using Setter = std::function<void(TrainConfig&, const json&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"learning_rate", [](auto& c, auto& v, auto& s) { c.learning_rate = get_number(v, s, "learning_rate"); }},
      {"kappa", [](auto& c, auto& v, auto& s) { c.kappa = get_number(v, s, "kappa"); }},
      {"gamma", [](auto& c, auto& v, auto& s) { c.gamma = get_number(v, s, "gamma"); }},
      {"batch_size", [](auto& c, auto& v, auto& s) { c.batch_size = get_count(v, s, "batch_size"); }},
      {"epochs", [](auto& c, auto& v, auto& s) { c.epochs = get_count(v, s, "epochs"); }},
      {"eval_every", [](auto& c, auto& v, auto& s) { c.eval_every = get_count(v, s, "eval_every"); }},
      {"seed", [](auto& c, auto& v, auto& s) { c.seed = get_count(v, s, "seed"); }},
      {"embed_dim", [](auto& c, auto& v, auto& s) { c.model.embed_dim = get_count(v, s, "embed_dim"); }},
      {"hidden_dim", [](auto& c, auto& v, auto& s) { c.model.hidden_dim = get_count(v, s, "hidden_dim"); }},
      {"image_dim", [](auto& c, auto& v, auto& s) { c.model.image_dim = get_count(v, s, "image_dim"); }},
      {"shared_dim", [](auto& c, auto& v, auto& s) { c.model.shared_dim = get_count(v, s, "shared_dim"); }},
      {"dropout", [](auto& c, auto& v, auto& s) { c.model.dropout = get_number(v, s, "dropout"); }},
      {"alpha", [](auto& c, auto& v, auto& s) { c.model.alpha = get_number(v, s, "alpha"); }},
      {"tau", [](auto& c, auto& v, auto& s) { c.model.tau = get_number(v, s, "tau"); }},
      {"mode", [](auto& c, auto& v, auto& s) { c.model.mode = parse_mode(get_string(v, s, "mode"), s); }},
      {"plain_residual", [](auto& c, auto& v, auto& s) { c.model.plain_residual = get_bool(v, s, "plain_residual"); }},
      {"no_probe_mask", [](auto& c, auto& v, auto& s) { c.model.no_probe_mask = get_bool(v, s, "no_probe_mask"); }},
      {"fixed_beta",
       [](auto& c, auto& v, auto& s) {
         if (v.is_null()) {
           c.model.fixed_beta.reset();
         } else {
           c.model.fixed_beta = get_number(v, s, "fixed_beta");
         }
       }},
      {"no_cpc_ii", [](auto& c, auto& v, auto& s) { c.no_cpc_ii = get_bool(v, s, "no_cpc_ii"); }},
      {"no_cpc_pr", [](auto& c, auto& v, auto& s) { c.no_cpc_pr = get_bool(v, s, "no_cpc_pr"); }},
      {"theta_hi", [](auto& c, auto& v, auto& s) { c.theta_hi = get_int(v, s, "theta_hi"); }},
      {"theta_lo", [](auto& c, auto& v, auto& s) { c.theta_lo = get_int(v, s, "theta_lo"); }},
      {"relevance_threshold",
       [](auto& c, auto& v, auto& s) { c.relevance_threshold = get_int(v, s, "relevance_threshold"); }},
      {"float_storage", [](auto& c, auto& v, auto& s) { c.float_storage = get_bool(v, s, "float_storage"); }},
      {"embeddings", [](auto& c, auto& v, auto& s) { c.embeddings = get_string(v, s, "embeddings"); }},
      {"fine_tune_embeddings",
       [](auto& c, auto& v, auto& s) { c.fine_tune_embeddings = get_bool(v, s, "fine_tune_embeddings"); }},
  };
  return table;
}

}  // namespace

void apply_config_json(TrainConfig& cfg, const json& j, const std::string& source) {
  if (!j.is_object()) throw ConfigError(source + ": top level must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    auto it = setters().find(key);
    if (it == setters().end()) bad(source, key, "unknown key");
    it->second(cfg, value, source);
  }
}

TrainConfig load_config_file(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  apply_config_json(base, j, path.string());
  return base;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& what) { bad("config", key, what); };
  if (!(learning_rate > 0.0)) fail("learning_rate", "must be positive");
  if (kappa < 0.0) fail("kappa", "must be non-negative");
  if (!(gamma > 0.0)) fail("gamma", "must be positive");
  if (batch_size == 0) fail("batch_size", "must be at least 1");
  if (eval_every == 0) fail("eval_every", "must be at least 1");
  if (model.embed_dim == 0) fail("embed_dim", "must be at least 1");
  if (model.hidden_dim == 0) fail("hidden_dim", "must be at least 1");
  if (model.shared_dim == 0) fail("shared_dim", "must be at least 1");
  if (model.multimodal() && model.image_dim == 0) fail("image_dim", "must be at least 1 in multimodal mode");
  if (model.dropout < 0.0 || model.dropout >= 1.0) fail("dropout", "must be in [0, 1)");
  if (!(model.alpha <= 1.0 && model.alpha > 0.0)) fail("alpha", "must be in (0, 1]");
  if (model.fixed_beta && !(*model.fixed_beta > 0.0 && *model.fixed_beta < model.alpha))
    fail("fixed_beta", "must satisfy 0 < fixed_beta < alpha");
  if (!(model.tau > 0.0)) fail("tau", "must be positive");
  if (theta_lo >= theta_hi) fail("theta_lo", "must be below theta_hi");
}

ordered_json model_config_to_json(const ModelConfig& m) {
  ordered_json j;
  j["embed_dim"] = m.embed_dim;
  j["hidden_dim"] = m.hidden_dim;
  j["image_dim"] = m.image_dim;
  j["shared_dim"] = m.shared_dim;
  j["mode"] = m.multimodal() ? "multimodal" : "text-only";
  j["alpha"] = m.alpha;
  j["tau"] = m.tau;
  j["dropout"] = m.dropout;
  j["plain_residual"] = m.plain_residual;
  j["no_probe_mask"] = m.no_probe_mask;
  j["fixed_beta"] = m.fixed_beta ? ordered_json(*m.fixed_beta) : ordered_json(nullptr);
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  TrainConfig tmp;
  apply_config_json(tmp, j, "checkpoint model config");
  return tmp.model;
}

ordered_json config_to_json(const TrainConfig& c) {
  ordered_json j = model_config_to_json(c.model);
  j["learning_rate"] = c.learning_rate;
  j["kappa"] = c.kappa;
  j["gamma"] = c.gamma;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["eval_every"] = c.eval_every;
  j["seed"] = c.seed;
  j["no_cpc_ii"] = c.no_cpc_ii;
  j["no_cpc_pr"] = c.no_cpc_pr;
  j["theta_hi"] = c.theta_hi;
  j["theta_lo"] = c.theta_lo;
  j["relevance_threshold"] = c.relevance_threshold;
  j["float_storage"] = c.float_storage;
  j["embeddings"] = c.embeddings;
  j["fine_tune_embeddings"] = c.fine_tune_embeddings;
  return j;
}

}  // namespace sancl
