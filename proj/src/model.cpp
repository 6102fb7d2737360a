// SPDX-License-Identifier: Apache-2.0
#include "sancl/model.hpp"

#include <cmath>

#include "sancl/errors.hpp"

namespace sancl {

HelpfulnessModel::HelpfulnessModel(const ModelConfig& config, enc::EmbeddingTable embeddings)
    : config_(config),
      embeddings_(std::move(embeddings)),
      gru_review_("review.gru", config.embed_dim, config.hidden_dim),
      gru_product_("product.gru", config.embed_dim, config.hidden_dim),
      text_review_attn_("review.text_attn", config.hidden_dim),
      text_product_attn_("product.text_attn", config.hidden_dim),
      text_cross_("text_cross", config.hidden_dim),
      image_review_attn_("review.image_attn", config.image_dim),
      image_product_attn_("product.image_attn", config.image_dim),
      image_cross_("image_cross", config.image_dim),
      w_gen_("w_gen", Matrix(config.hidden_dim, 1)),
      b_gen_("b_gen", Matrix(1, 1)),
      text_ii_("proj.text_ii", config.hidden_dim, config.shared_dim),
      image_ii_("proj.image_ii", config.image_dim, config.shared_dim),
      text_pr_("proj.text_pr", config.hidden_dim, config.shared_dim),
      image_pr_("proj.image_pr", config.image_dim, config.shared_dim),
      w_o_("w_o", Matrix((config.multimodal() ? 4 : 2) * config.shared_dim, 1)),
      b_o_("b_o", Matrix(1, 1)) {
  if (embeddings_.dim() != config.embed_dim) {
    throw ConfigError("embedding table has dim " + std::to_string(embeddings_.dim()) + " but embed_dim is " +
                      std::to_string(config.embed_dim));
  }
  probe::check_mask_weights(config.alpha, config.fixed_beta.value_or(config.alpha / 2));
  if (!(config.tau > 0.0)) throw ConfigError("tau must be positive");
}

namespace {

bool is_bias(const Parameter& p) { return p.value.rows() == 1; }

}  // namespace

void HelpfulnessModel::init(Rng& rng) {
  for (Parameter* p : parameters()) {
    if (p == &embeddings_.weights() || p == &w_gen_ || p == &b_gen_ || is_bias(*p)) continue;
    const double fan = static_cast<double>(p->value.rows() + p->value.cols());
    const double limit = std::sqrt(6.0 / fan);
    for (auto& x : p->value.data()) x = rng.uniform(-limit, limit);
  }
}

std::vector<Parameter*> HelpfulnessModel::parameters() {
  std::vector<Parameter*> out = {&embeddings_.weights(), &gru_review_.w_x, &gru_review_.w_h, &gru_review_.bias,
                                 &gru_product_.w_x,      &gru_product_.w_h, &gru_product_.bias};
  auto append = [&](std::vector<Parameter*> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
  append(text_review_attn_.parameters());
  append(text_product_attn_.parameters());
  append(text_cross_.parameters());
  if (config_.multimodal()) {
    append(image_review_attn_.parameters());
    append(image_product_attn_.parameters());
    append(image_cross_.parameters());
  }
  out.push_back(&w_gen_);
  out.push_back(&b_gen_);
  append(text_ii_.parameters());
  append(text_pr_.parameters());
  if (config_.multimodal()) {
    append(image_ii_.parameters());
    append(image_pr_.parameters());
  }
  out.push_back(&w_o_);
  out.push_back(&b_o_);
  return out;
}

std::vector<const Parameter*> HelpfulnessModel::parameters() const {
  auto mut = const_cast<HelpfulnessModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::size_t HelpfulnessModel::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters())
    if (p != &embeddings_.weights()) n += p->value.size();
  return n;
}

namespace {

corpus::Tokens flatten(const std::vector<corpus::Tokens>& sentences) {
  corpus::Tokens out;
  for (const auto& s : sentences) out.insert(out.end(), s.begin(), s.end());
  return out;
}

}  // namespace

ProductForward HelpfulnessModel::forward(const corpus::ProductRecord& product,
                                         const std::vector<const corpus::ReviewRecord*>& reviews,
                                         const std::vector<probe::ProbeMask>& masks, Rng* train_rng) {
  if (masks.size() != reviews.size()) throw DimensionError("forward: one probe mask per review required");
  const double dropout = train_rng ? config_.dropout : 0.0;
  const bool mm = config_.multimodal();

  // Product description text: GRU, then mask-free self-attention.
  const GruVars gp = GruVars::bind(gru_product_);
  const auto prod_text = enc::encode_text(embeddings_.embed(flatten(product.sentences), dropout, train_rng), gp);
  const ad::Var hp = attn::plain_self_attention(prod_text.token_states, ad::leaf(text_product_attn_.w_a),
                                                ad::leaf(text_product_attn_.w_v));
  const ad::Var s_tp = ad::mean_rows(hp);

  ProductForward out;
  out.view.id = product.product_id;
  out.view.text_ii = cpc::project(s_tp, text_ii_);
  out.view.text_pr = cpc::project(s_tp, text_pr_);

  ad::Var hv_p;
  if (mm) {
    hv_p = enc::encode_visual(ad::constant(product.visual_features), ad::leaf(image_product_attn_.w_a),
                              ad::leaf(image_product_attn_.w_v));
    const ad::Var s_vp = ad::mean_rows(hv_p);
    out.view.image_ii = cpc::project(s_vp, image_ii_);
    out.view.image_pr = cpc::project(s_vp, image_pr_);
  }

  const GruVars gr = GruVars::bind(gru_review_);
  const ad::Var w_gen = ad::leaf(w_gen_), b_gen = ad::leaf(b_gen_);
  const ad::Var w_a = ad::leaf(text_review_attn_.w_a), w_v = ad::leaf(text_review_attn_.w_v);
  const ad::Var w_c = ad::leaf(text_cross_.w_c), w_u = ad::leaf(text_cross_.w_u);
  const ad::Var w_o = ad::leaf(w_o_), b_o = ad::leaf(b_o_);

  for (std::size_t k = 0; k < reviews.size(); ++k) {
    const corpus::ReviewRecord& r = *reviews[k];
    const probe::ProbeMask& mask = masks[k];
    if (mask.size() != r.token_count()) {
      throw DimensionError("probe mask for " + r.review_id + " has " + std::to_string(mask.size()) +
                           " entries, review has " + std::to_string(r.token_count()) + " tokens");
    }
    ReviewForward rf;
    const auto text = enc::encode_text(embeddings_.embed(r.flat_tokens(), dropout, train_rng), gr);
    const ad::Var& h = text.token_states;

    ad::Var m_real;
    if (config_.no_probe_mask) {
      Matrix ones(1, mask.size());
      ones.fill(1.0);
      m_real = ad::constant(std::move(ones));
    } else {
      const ad::Var beta = config_.fixed_beta ? ad::constant_scalar(*config_.fixed_beta)
                                              : probe::generate_beta(text.sequence_state, w_gen, b_gen);
      rf.beta = beta.scalar();
      rf.has_beta = true;
      m_real = probe::realize_mask(mask, config_.alpha, beta);
    }

    const ad::Var a_prime = attn::reweight(attn::base_attention(h, w_a), m_real);
    const ad::Var h1 = attn::self_attend(h, a_prime, w_v, config_.plain_residual);
    const ad::Var h2 = attn::cross_field_attend(h1, hp, w_c, w_u);
    const ad::Var s_tr = attn::masked_pool(h2, m_real);

    rf.view.id = r.review_id;
    rf.view.score = r.helpfulness;
    rf.view.text_ii = cpc::project(s_tr, text_ii_);
    rf.view.text_pr = cpc::project(s_tr, text_pr_);
    std::vector<ad::Var> features = {rf.view.text_ii, rf.view.text_pr};

    if (mm) {
      const ad::Var hv_r = enc::encode_visual(ad::constant(r.visual_features), ad::leaf(image_review_attn_.w_a),
                                              ad::leaf(image_review_attn_.w_v));
      auto [s_vr, s_vp_pair] =
          attn::visual_pipeline(hv_r, hv_p, ad::leaf(image_cross_.w_c), ad::leaf(image_cross_.w_u));
      rf.view.image_ii = cpc::project(s_vr, image_ii_);
      rf.view.image_pr = cpc::project(s_vr, image_pr_);
      rf.view.product_image_pr = cpc::project(s_vp_pair, image_pr_);
      features.push_back(rf.view.image_ii);
      features.push_back(rf.view.image_pr);
    }

    rf.xi = ad::add(ad::matmul(ad::concat_cols(features), w_o), b_o);
    out.view.reviews.push_back(rf.view);
    out.reviews.push_back(std::move(rf));
  }
  return out;
}

ad::Var ranking_loss(const std::vector<int>& gold, const std::vector<ad::Var>& xi, double gamma) {
  if (gold.size() != xi.size()) throw DimensionError("ranking_loss: gold and scores differ in length");
  if (!(gamma > 0.0)) throw ParameterError("ranking_loss: gamma must be positive");
  ad::Var total = ad::constant_scalar(0.0);
  for (std::size_t i = 0; i < gold.size(); ++i)
    for (std::size_t j = 0; j < gold.size(); ++j) {
      if (gold[i] <= gold[j]) continue;
      total = ad::add(total, ad::relu(ad::add_scalar(ad::sub(xi[j], xi[i]), gamma)));
    }
  return total;
}

ad::Var total_loss(const ad::Var& task, const ad::Var& cpc_ii, const ad::Var& cpc_pr, const LossWeights& w) {
  if (w.kappa < 0.0) throw ParameterError("kappa must be non-negative");
  ad::Var aux;
  if (!w.no_cpc_ii) aux = cpc_ii;
  if (!w.no_cpc_pr) aux = aux.valid() ? ad::add(aux, cpc_pr) : cpc_pr;
  if (!aux.valid() || w.kappa == 0.0) return task;
  return ad::add(task, ad::scale(aux, w.kappa));
}

}  // namespace sancl
