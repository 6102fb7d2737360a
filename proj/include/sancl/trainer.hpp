// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <vector>

#include "sancl/config.hpp"
#include "sancl/corpus.hpp"
#include "sancl/metrics.hpp"
#include "sancl/model.hpp"
#include "sancl/probe.hpp"

namespace sancl {

/// A split with one probe mask per review (same order as split.reviews()).
struct PreparedSplit {
  corpus::DatasetSplit split;
  std::vector<probe::ProbeMask> masks;
};

PreparedSplit prepare_split(corpus::DatasetSplit split);

struct BatchLoss {
  ad::Var task, cpc_ii, cpc_pr_t, cpc_pr_v, cpc_pr, total;
  std::size_t ii_positive = 0, ii_negative = 0, ii_product = 0, pr_positive = 0, pr_negative = 0;
  std::vector<double> betas;
};

/// Loss over the products `groups` (indices into data.split.groups()).
BatchLoss batch_loss(HelpfulnessModel& model, const PreparedSplit& data, const std::vector<std::size_t>& groups,
                     const TrainConfig& cfg, Rng* train_rng);

/// Ranks every product's reviews with dropout off.
metrics::MetricReport evaluate_model(HelpfulnessModel& model, const PreparedSplit& data, int relevance_threshold = 1);
/// Same predictions arranged for the metric functions.
std::vector<metrics::ProductRanking> predict_rankings(HelpfulnessModel& model, const PreparedSplit& data);

/// Vocabulary over the given splits and a freshly initialized model.
std::unique_ptr<HelpfulnessModel> build_model(const TrainConfig& cfg, const std::vector<const corpus::DatasetSplit*>& splits);

struct TrainResult {
  std::unique_ptr<HelpfulnessModel> model;  // best-dev parameters (final ones without dev data)
  std::optional<metrics::MetricReport> best_dev;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
  std::size_t dropped_products = 0;
  double beta_min = 1.0, beta_max = 0.0;
};

/// Runs the training loop. Each step writes one JSON line to `log` (if
/// given). With `out_dir`, the best-dev checkpoint goes to out_dir/model.ckpt;
/// on a non-finite loss the pre-step parameters go to out_dir/last_good.ckpt
/// and DivergenceError is thrown.
TrainResult train(const TrainConfig& cfg, const corpus::DatasetSplit& train_split, const corpus::DatasetSplit* dev_split,
                  std::ostream* log = nullptr, const std::filesystem::path* out_dir = nullptr);

}  // namespace sancl
