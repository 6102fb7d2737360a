// SPDX-License-Identifier: Apache-2.0
#include "sancl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "sancl/checkpoint.hpp"
#include "sancl/errors.hpp"
#include "sancl/optim.hpp"

namespace sancl {

PreparedSplit prepare_split(corpus::DatasetSplit split) {
  PreparedSplit out{std::move(split), {}};
  out.masks.reserve(out.split.reviews().size());
  for (const auto& r : out.split.reviews()) {
    out.masks.push_back(
        probe::build_probe_mask(r, out.split.product(r.product_id), out.split.annotation_for(r.review_id)));
  }
  return out;
}

namespace {

ProductForward forward_group(HelpfulnessModel& model, const PreparedSplit& data, std::size_t g, Rng* rng) {
  const corpus::ProductGroup& group = data.split.groups()[g];
  std::vector<const corpus::ReviewRecord*> reviews;
  std::vector<probe::ProbeMask> masks;
  for (std::size_t r : group.reviews) {
    reviews.push_back(&data.split.reviews()[r]);
    masks.push_back(data.masks[r]);
  }
  return model.forward(data.split.products()[group.product], reviews, masks, rng);
}

}  // namespace

BatchLoss batch_loss(HelpfulnessModel& model, const PreparedSplit& data, const std::vector<std::size_t>& groups,
                     const TrainConfig& cfg, Rng* train_rng) {
  BatchLoss out;
  std::vector<cpc::ProductView> views;
  ad::Var task = ad::constant_scalar(0.0);
  for (std::size_t g : groups) {
    ProductForward f = forward_group(model, data, g, train_rng);
    std::vector<int> gold;
    std::vector<ad::Var> xi;
    for (const auto& r : f.reviews) {
      gold.push_back(r.view.score);
      xi.push_back(r.xi);
      if (r.has_beta) out.betas.push_back(r.beta);
    }
    task = ad::add(task, ranking_loss(gold, xi, cfg.gamma));
    views.push_back(std::move(f.view));
  }
  const bool images = model.config().multimodal();
  const cpc::PairSets sets = cpc::build_pair_sets(views, {cfg.theta_hi, cfg.theta_lo}, images);
  out.ii_positive = sets.ii_positive.size();
  out.ii_negative = sets.ii_negative.size();
  out.ii_product = sets.ii_product.size();
  out.pr_positive = sets.pr_positive_count(false);
  out.pr_negative = sets.pr_negative_count(false);

  out.task = task;
  out.cpc_ii = images ? cpc::cpc_inner_instance(sets, model.config().tau) : ad::constant_scalar(0.0);
  const cpc::CpcLosses pr = cpc::cpc_product_review(sets, model.config().tau);
  out.cpc_pr_t = pr.cpc_pr_t;
  out.cpc_pr_v = pr.cpc_pr_v;
  out.cpc_pr = pr.cpc_pr;
  out.total = total_loss(task, out.cpc_ii, out.cpc_pr, cfg.loss_weights());
  return out;
}

std::vector<metrics::ProductRanking> predict_rankings(HelpfulnessModel& model, const PreparedSplit& data) {
  std::vector<metrics::ProductRanking> out;
  for (std::size_t g = 0; g < data.split.groups().size(); ++g) {
    const auto& group = data.split.groups()[g];
    if (group.reviews.empty()) continue;
    const ProductForward f = forward_group(model, data, g, nullptr);
    metrics::ProductRanking pr;
    pr.product_id = data.split.products()[group.product].product_id;
    for (const auto& r : f.reviews) pr.items.push_back({r.view.id, r.xi.scalar(), r.view.score});
    out.push_back(std::move(pr));
  }
  return out;
}

metrics::MetricReport evaluate_model(HelpfulnessModel& model, const PreparedSplit& data, int relevance_threshold) {
  return metrics::evaluate(predict_rankings(model, data), relevance_threshold);
}

std::unique_ptr<HelpfulnessModel> build_model(const TrainConfig& cfg,
                                              const std::vector<const corpus::DatasetSplit*>& splits) {
  std::vector<std::string> words;
  for (const auto* s : splits) {
    if (!s) continue;
    if (cfg.model.mode == corpus::Modality::multimodal && !s->reviews().empty()) {
      const std::size_t width = s->reviews().front().visual_features.cols();
      if (width != cfg.model.image_dim) {
        throw ConfigError("config: key 'image_dim': is " + std::to_string(cfg.model.image_dim) +
                          " but the corpus has " + std::to_string(width) + "-dim visual features");
      }
    }
    const auto v = enc::Vocabulary::from_split(*s);
    words.insert(words.end(), v.words().begin() + 2, v.words().end());
  }
  Rng root(cfg.seed);
  Rng init_rng = root.fork(1);
  enc::Vocabulary vocab(words);
  std::unique_ptr<HelpfulnessModel> model;
  if (cfg.embeddings.empty()) {
    enc::EmbeddingTable table(std::move(vocab), cfg.model.embed_dim, init_rng);
    model = std::make_unique<HelpfulnessModel>(cfg.model, std::move(table));
  } else {
    auto table = enc::EmbeddingTable::from_text_file(cfg.embeddings, std::move(vocab), init_rng,
                                                     cfg.fine_tune_embeddings);
    if (table.dim() != cfg.model.embed_dim) {
      throw ConfigError("config: key 'embed_dim': is " + std::to_string(cfg.model.embed_dim) + " but " +
                        cfg.embeddings + " has " + std::to_string(table.dim()) + "-dim vectors");
    }
    model = std::make_unique<HelpfulnessModel>(cfg.model, std::move(table));
  }
  model->init(init_rng);
  if (cfg.float_storage) {
    for (Parameter* p : model->parameters())
      for (auto& x : p->value.data()) x = static_cast<float>(x);
  }
  return model;
}

namespace {

using Snapshot = std::vector<Matrix>;

Snapshot snapshot(HelpfulnessModel& m) {
  Snapshot s;
  for (Parameter* p : m.parameters()) s.push_back(p->value);
  return s;
}

void restore(HelpfulnessModel& m, const Snapshot& s) {
  auto params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = s[i];
}

nlohmann::ordered_json metrics_json(const metrics::MetricReport& r) {
  nlohmann::ordered_json j;
  j["map"] = r.map;
  j["ndcg3"] = r.ndcg3;
  j["ndcg5"] = r.ndcg5;
  return j;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const corpus::DatasetSplit& train_split, const corpus::DatasetSplit* dev_split,
                  std::ostream* log, const std::filesystem::path* out_dir) {
  cfg.validate();
  TrainResult result;
  PreparedSplit train_data = prepare_split(train_split.retain_rankable(&result.dropped_products));
  if (train_data.split.groups().empty()) throw ValidationError("training split has no rankable products");
  std::optional<PreparedSplit> dev_data;
  if (dev_split && !dev_split->empty()) dev_data = prepare_split(*dev_split);

  result.model = build_model(cfg, {&train_split, dev_split});
  HelpfulnessModel& model = *result.model;

  std::vector<Parameter*> trainable;
  for (Parameter* p : model.parameters())
    if (p->trainable) trainable.push_back(p);
  AdamOptions opts;
  opts.learning_rate = cfg.learning_rate;
  opts.float_storage = cfg.float_storage;
  Adam adam(trainable, opts);

  Rng root(cfg.seed);
  root.fork(1);  // consumed by build_model
  Rng shuffle_rng = root.fork(2);
  Rng dropout_rng = root.fork(3);

  std::vector<std::size_t> order(train_data.split.groups().size());
  std::iota(order.begin(), order.end(), 0);
  Snapshot best;
  double best_map = -1.0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.index(i)]);
    const bool eval_epoch = dev_data && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + cfg.batch_size)));
      adam.zero_grad();
      const BatchLoss loss = batch_loss(model, train_data, batch, cfg, &dropout_rng);
      const double total = loss.total.scalar();
      ++result.steps;

      nlohmann::ordered_json line;
      line["epoch"] = epoch;
      line["step"] = result.steps;
      line["L_task"] = loss.task.scalar();
      line["cpc_ii"] = loss.cpc_ii.scalar();
      line["cpc_pr_t"] = loss.cpc_pr_t.scalar();
      line["cpc_pr_v"] = loss.cpc_pr_v.scalar();
      line["cpc_pr"] = loss.cpc_pr.scalar();
      line["L"] = total;
      line["sets"] = {{"ii_pos", loss.ii_positive}, {"ii_neg", loss.ii_negative}, {"ii_prod", loss.ii_product},
                      {"pr_pos", loss.pr_positive}, {"pr_neg", loss.pr_negative}};
      if (loss.pr_positive == 0) line["empty_pr_positives"] = true;
      if (!loss.betas.empty()) {
        const auto [lo, hi] = std::minmax_element(loss.betas.begin(), loss.betas.end());
        line["beta_min"] = *lo;
        line["beta_max"] = *hi;
        result.beta_min = std::min(result.beta_min, *lo);
        result.beta_max = std::max(result.beta_max, *hi);
      }

      if (!std::isfinite(total)) {
        if (log) *log << line.dump() << '\n';
        if (out_dir) save_checkpoint(model, *out_dir / "last_good.ckpt");
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(result.steps));
      }
      ad::backward(loss.total);
      adam.step();

      const bool last_of_epoch = start + cfg.batch_size >= order.size();
      if (last_of_epoch && eval_epoch) {
        const auto report = evaluate_model(model, *dev_data, cfg.relevance_threshold);
        line["dev"] = metrics_json(report);
        if (report.map > best_map) {
          best_map = report.map;
          best = snapshot(model);
          result.best_dev = report;
          result.best_epoch = epoch;
          if (out_dir) save_checkpoint(model, *out_dir / "model.ckpt");
        }
      }
      if (log) *log << line.dump() << '\n';
    }
  }
  if (!best.empty()) {
    restore(model, best);
  } else if (out_dir) {
    save_checkpoint(model, *out_dir / "model.ckpt");
  }
  return result;
}

}  // namespace sancl
