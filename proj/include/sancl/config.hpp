// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "sancl/model.hpp"

namespace sancl {

struct TrainConfig {
  ModelConfig model;
  double learning_rate = 1e-4;
  double kappa = 0.25;
  double gamma = 1.0;
  std::size_t batch_size = 32;  // products per step
  std::size_t epochs = 10;
  std::size_t eval_every = 1;
  std::uint64_t seed = 1;
  bool no_cpc_ii = false;
  bool no_cpc_pr = false;
  int theta_hi = 3;
  int theta_lo = 1;
  int relevance_threshold = 1;
  bool float_storage = true;
  std::string embeddings;  // optional word-vector text file
  bool fine_tune_embeddings = false;

  /// Throws ConfigError naming the offending key.
  void validate() const;
  LossWeights loss_weights() const { return {kappa, no_cpc_ii, no_cpc_pr}; }
};

/// Flat JSON keys; unknown keys and type errors raise ConfigError with the
/// key path ("<source>: key 'kappa': ...").
void apply_config_json(TrainConfig& cfg, const nlohmann::json& j, const std::string& source);
TrainConfig load_config_file(const std::filesystem::path& path, TrainConfig base = {});
nlohmann::ordered_json config_to_json(const TrainConfig& cfg);

nlohmann::ordered_json model_config_to_json(const ModelConfig& m);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace sancl
