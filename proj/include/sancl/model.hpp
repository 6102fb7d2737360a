// SPDX-License-Identifier: Apache-2.0
#pragma once

// The helpfulness scorer: text and image encoders, probe-masked attention,
// shared-space projections and the linear output head.

#include <optional>
#include <string>
#include <vector>

#include "sancl/attention.hpp"
#include "sancl/contrastive.hpp"
#include "sancl/corpus.hpp"
#include "sancl/encoders.hpp"
#include "sancl/gru.hpp"
#include "sancl/probe.hpp"
#include "sancl/rng.hpp"

namespace sancl {

struct ModelConfig {
  std::size_t embed_dim = 300;
  std::size_t hidden_dim = 128;
  std::size_t image_dim = 128;
  std::size_t shared_dim = 64;
  corpus::Modality mode = corpus::Modality::multimodal;
  double alpha = 1.0;
  double tau = 1.0;
  double dropout = 0.5;
  bool plain_residual = false;
  bool no_probe_mask = false;
  std::optional<double> fixed_beta;

  bool multimodal() const { return mode == corpus::Modality::multimodal; }
};

/// Forward results for one review.
struct ReviewForward {
  ad::Var xi;    // 1 x 1 predicted helpfulness
  double beta = 0.0;
  bool has_beta = false;
  cpc::ReviewView view;
};

/// Forward results for one product and the reviews that were scored.
struct ProductForward {
  cpc::ProductView view;
  std::vector<ReviewForward> reviews;
};

class HelpfulnessModel {
 public:
  /// Parameters zero-initialized; call init() or load from a checkpoint.
  HelpfulnessModel(const ModelConfig& config, enc::EmbeddingTable embeddings);

  /// Uniform(-sqrt(6/(fan_in+fan_out)), +) for weight matrices; biases,
  /// W_gen and b_gen stay zero so beta starts at 0.5.
  void init(Rng& rng);

  const ModelConfig& config() const { return config_; }
  enc::EmbeddingTable& embeddings() { return embeddings_; }
  const enc::EmbeddingTable& embeddings() const { return embeddings_; }

  /// Every parameter, each exactly once, embeddings first.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  /// Registered parameters excluding the embedding table.
  std::size_t parameter_count() const;

  /// Scores `reviews` (all of `product`'s reviews or a subset). masks[i]
  /// belongs to reviews[i]. With `train_rng`, embedding dropout is active.
  ProductForward forward(const corpus::ProductRecord& product,
                         const std::vector<const corpus::ReviewRecord*>& reviews,
                         const std::vector<probe::ProbeMask>& masks, Rng* train_rng = nullptr);

 private:
  ModelConfig config_;
  enc::EmbeddingTable embeddings_;
  GruParams gru_review_, gru_product_;
  attn::SelfAttentionParams text_review_attn_, text_product_attn_;
  attn::CrossAttentionParams text_cross_;
  attn::SelfAttentionParams image_review_attn_, image_product_attn_;
  attn::CrossAttentionParams image_cross_;
  Parameter w_gen_, b_gen_;
  cpc::ProjectionHead text_ii_, image_ii_, text_pr_, image_pr_;
  Parameter w_o_, b_o_;
};

/// sum over pairs with gold(i) > gold(j) of max(0, gamma - xi_i + xi_j).
/// `gold` and `xi` are parallel; xi entries are 1 x 1.
ad::Var ranking_loss(const std::vector<int>& gold, const std::vector<ad::Var>& xi, double gamma = 1.0);

struct LossWeights {
  double kappa = 0.25;
  bool no_cpc_ii = false;
  bool no_cpc_pr = false;
};

/// task + kappa * (cpc_ii + cpc_pr) with switched-off terms dropped.
ad::Var total_loss(const ad::Var& task, const ad::Var& cpc_ii, const ad::Var& cpc_pr, const LossWeights& w);

}  // namespace sancl
