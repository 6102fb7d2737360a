// SPDX-License-Identifier: Apache-2.0
#include "sancl/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "sancl/checkpoint.hpp"
#include "sancl/config.hpp"
#include "sancl/corpus.hpp"
#include "sancl/errors.hpp"
#include "sancl/metrics.hpp"
#include "sancl/probe.hpp"
#include "sancl/synth.hpp"
#include "sancl/trainer.hpp"

namespace sancl::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

/// Bad invocation or configuration; maps to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

std::string sha1_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha1(), nullptr)) throw Error("SHA-1 failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return hex.str();
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw UsageError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force) {
      throw UsageError("output directory " + dir.string() + " is not empty (use --force to overwrite)");
    }
  }
  fs::create_directories(dir);
}

struct Manifest {
  std::string command;
  std::vector<std::string> args;
  ordered_json config;
  std::uint64_t seed = 0;
  std::vector<fs::path> inputs;
  std::string started_at = utc_now();

  void write(const fs::path& dir) const {
    ordered_json j;
    j["command"] = command;
    j["args"] = args;
    j["config"] = config;
    j["seed"] = seed;
    std::vector<std::string> names;
    for (const auto& p : inputs) names.push_back(p.string());
    j["inputs"] = names;
    j["inputs_hash"] = inputs_hash(inputs);
    j["started_at"] = started_at;
    j["finished_at"] = utc_now();
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    out << j.dump(2) << '\n';
    if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
  }
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  out << text;
  if (!out) throw Error("cannot write " + p.string());
}

/// A split directory itself, or <dir>/<split>.
fs::path split_dir(const fs::path& dir, const std::string& split) {
  if (fs::exists(dir / "products.jsonl")) return dir;
  const fs::path sub = dir / split;
  if (!fs::exists(sub / "products.jsonl")) {
    throw UsageError("no " + split + " split under " + dir.string() + " (expected " + (sub / "products.jsonl").string() +
                     ")");
  }
  return sub;
}

// ---- synth ----

struct SynthArgs {
  fs::path out;
  std::uint64_t seed = 7;
  std::string config;
  bool force = false;
  std::optional<std::size_t> train_products, dev_products, test_products, reviews_per_product, feature_dim, embed_dim;
};

int cmd_synth(const SynthArgs& a, const std::vector<std::string>& raw, std::ostream& out) {
  synth::GeneratorConfig gen;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw UsageError("cannot open generator config " + a.config);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(a.config + ": invalid JSON: " + e.what());
    }
    synth::apply_generator_json(gen, j, a.config);
  }
  if (a.train_products) gen.train_products = *a.train_products;
  if (a.dev_products) gen.dev_products = *a.dev_products;
  if (a.test_products) gen.test_products = *a.test_products;
  if (a.reviews_per_product) gen.reviews_per_product = *a.reviews_per_product;
  if (a.feature_dim) gen.feature_dim = *a.feature_dim;
  if (a.embed_dim) gen.embed_dim = *a.embed_dim;
  gen.validate();

  Manifest m{"synth", raw, synth::generator_to_json(gen), a.seed, {}};
  if (!a.config.empty()) m.inputs.push_back(a.config);
  prepare_out_dir(a.out, a.force);
  const auto corpus = synth::synthesize(gen, a.seed);
  synth::write_corpus(corpus, gen, a.seed, a.out);
  m.write(a.out);

  ordered_json summary;
  summary["out"] = a.out.string();
  summary["train_reviews"] = corpus.train.reviews().size();
  summary["dev_reviews"] = corpus.dev.reviews().size();
  summary["test_reviews"] = corpus.test.reviews().size();
  out << summary.dump() << '\n';
  return kExitOk;
}

// ---- train ----

struct TrainArgs {
  fs::path data, out;
  std::string config;
  bool force = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, batch_size, eval_every, embed_dim, hidden_dim, image_dim, shared_dim;
  std::optional<double> learning_rate, kappa, gamma, dropout, fixed_beta;
  std::optional<std::string> mode, embeddings;
  std::optional<int> relevance_threshold;
  bool no_probe_mask = false, no_cpc_ii = false, no_cpc_pr = false, fine_tune = false;
};

nlohmann::json flag_overrides(const TrainArgs& a) {
  nlohmann::json j = nlohmann::json::object();
  if (a.seed) j["seed"] = *a.seed;
  if (a.epochs) j["epochs"] = *a.epochs;
  if (a.batch_size) j["batch_size"] = *a.batch_size;
  if (a.eval_every) j["eval_every"] = *a.eval_every;
  if (a.embed_dim) j["embed_dim"] = *a.embed_dim;
  if (a.hidden_dim) j["hidden_dim"] = *a.hidden_dim;
  if (a.image_dim) j["image_dim"] = *a.image_dim;
  if (a.shared_dim) j["shared_dim"] = *a.shared_dim;
  if (a.learning_rate) j["learning_rate"] = *a.learning_rate;
  if (a.kappa) j["kappa"] = *a.kappa;
  if (a.gamma) j["gamma"] = *a.gamma;
  if (a.dropout) j["dropout"] = *a.dropout;
  if (a.fixed_beta) j["fixed_beta"] = *a.fixed_beta;
  if (a.mode) j["mode"] = *a.mode;
  if (a.embeddings) j["embeddings"] = *a.embeddings;
  if (a.relevance_threshold) j["relevance_threshold"] = *a.relevance_threshold;
  if (a.no_probe_mask) j["no_probe_mask"] = true;
  if (a.no_cpc_ii) j["no_cpc_ii"] = true;
  if (a.no_cpc_pr) j["no_cpc_pr"] = true;
  if (a.fine_tune) j["fine_tune_embeddings"] = true;
  return j;
}

int cmd_train(const TrainArgs& a, const std::vector<std::string>& raw, std::ostream& out) {
  TrainConfig cfg;
  if (!a.config.empty()) cfg = load_config_file(a.config, cfg);
  apply_config_json(cfg, flag_overrides(a), "command line");
  // Relative embedding paths fall back to the data directory.
  if (!cfg.embeddings.empty() && fs::path(cfg.embeddings).is_relative() && !fs::exists(cfg.embeddings) &&
      fs::exists(a.data / cfg.embeddings)) {
    cfg.embeddings = (a.data / cfg.embeddings).string();
  }
  cfg.validate();

  const fs::path train_dir = split_dir(a.data, "train");
  const corpus::LoadOptions load{cfg.model.mode};
  const corpus::DatasetSplit train_split = corpus::load_corpus(train_dir, load);
  std::optional<corpus::DatasetSplit> dev_split;
  if (train_dir != a.data && fs::exists(a.data / "dev" / "products.jsonl"))
    dev_split = corpus::load_corpus(a.data / "dev", load);

  Manifest m{"train", raw, config_to_json(cfg), cfg.seed, {train_dir}};
  if (dev_split) m.inputs.push_back(a.data / "dev");
  if (!a.config.empty()) m.inputs.push_back(a.config);
  if (!cfg.embeddings.empty()) m.inputs.push_back(cfg.embeddings);
  prepare_out_dir(a.out, a.force);
  write_text(a.out / "config.json", config_to_json(cfg).dump(2) + "\n");

  std::ofstream log(a.out / "train_log.jsonl", std::ios::trunc);
  const TrainResult result = train(cfg, train_split, dev_split ? &*dev_split : nullptr, &log, &a.out);
  log.close();
  if (result.best_dev) write_text(a.out / "dev_metrics.json", result.best_dev->to_json(true) + "\n");
  m.write(a.out);

  ordered_json summary;
  summary["steps"] = result.steps;
  summary["best_epoch"] = result.best_epoch;
  summary["dropped_products"] = result.dropped_products;
  if (result.best_dev) summary["dev"] = ordered_json::parse(result.best_dev->to_json(false));
  summary["checkpoint"] = (a.out / "model.ckpt").string();
  out << summary.dump() << '\n';
  return kExitOk;
}

// ---- eval ----

struct EvalArgs {
  fs::path checkpoint, data;
  std::string split = "test";
  std::string config;
  std::string per_product;
  int relevance_threshold = 1;
  bool oracle_check = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  std::optional<TrainConfig> expected;
  if (!a.config.empty()) expected = load_config_file(a.config);
  auto model = load_checkpoint(a.checkpoint, expected ? &expected->model : nullptr);
  const corpus::DatasetSplit split = corpus::load_corpus(split_dir(a.data, a.split), {model->config().mode});
  const PreparedSplit data = prepare_split(split);
  const auto rankings = predict_rankings(*model, data);
  const metrics::MetricReport report = metrics::evaluate(rankings, a.relevance_threshold);
  if (!a.per_product.empty()) write_text(a.per_product, report.to_csv());
  if (a.oracle_check) {
    const double brute = metrics::brute_force_map(rankings, a.relevance_threshold);
    if (!(std::abs(brute - report.map) <= 1e-9)) {
      err << "oracle check failed: MAP " << std::setprecision(17) << report.map << " but brute force gives " << brute
          << '\n';
      return kExitFailure;
    }
  }
  out << report.to_json(false) << '\n';
  return kExitOk;
}

// ---- probe-mask / annotate-heuristic ----

struct ProbeArgs {
  fs::path products, reviews, annotations, out;
};

corpus::DatasetSplit load_text(const ProbeArgs& a) {
  return corpus::load_corpus_files(a.products, a.reviews, a.annotations, {corpus::Modality::text_only});
}

int cmd_probe_mask(const ProbeArgs& a, std::ostream& out) {
  const auto split = load_text(a);
  std::ofstream file(a.out, std::ios::trunc);
  if (!file) throw Error("cannot write " + a.out.string());
  std::size_t hot = 0, tokens = 0;
  for (const auto& r : split.reviews()) {
    const auto mask = probe::build_probe_mask(r, split.product(r.product_id), split.annotation_for(r.review_id));
    ordered_json j;
    j["review_id"] = r.review_id;
    j["mask"] = mask.values;
    file << j.dump() << '\n';
    hot += static_cast<std::size_t>(std::count(mask.values.begin(), mask.values.end(), 1));
    tokens += mask.size();
  }
  out << ordered_json{{"reviews", split.reviews().size()}, {"hot_tokens", hot}, {"tokens", tokens}}.dump() << '\n';
  return kExitOk;
}

int cmd_annotate(const ProbeArgs& a, std::ostream& out) {
  const auto split = load_text(a);
  std::ofstream file(a.out, std::ios::trunc);
  if (!file) throw Error("cannot write " + a.out.string());
  std::size_t with_clusters = 0;
  for (const auto& r : split.reviews()) {
    const auto core = probe::extract_core_words(split.product(r.product_id).name);
    const auto ann = probe::heuristic_annotate(r, core);
    with_clusters += !ann.clusters.empty();
    file << corpus::to_jsonl(ann) << '\n';
  }
  out << ordered_json{{"reviews", split.reviews().size()}, {"with_clusters", with_clusters}}.dump() << '\n';
  return kExitOk;
}

}  // namespace

std::string git_blob_hash(const fs::path& file) {
  const std::string bytes = read_bytes(file);
  std::string obj = "blob " + std::to_string(bytes.size());
  obj.push_back('\0');
  return sha1_hex(obj + bytes);
}

std::string inputs_hash(const std::vector<fs::path>& roots) {
  std::vector<std::string> lines;
  for (const auto& root : roots) {
    if (fs::is_regular_file(root)) {
      lines.push_back(git_blob_hash(root) + " " + root.filename().string() + "\n");
      continue;
    }
    if (!fs::is_directory(root)) throw Error("input not found: " + root.string());
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (!e.is_regular_file()) continue;
      lines.push_back(git_blob_hash(e.path()) + " " + fs::relative(e.path(), root).generic_string() + "\n");
    }
  }
  std::sort(lines.begin(), lines.end());
  std::string all;
  for (const auto& l : lines) all += l;
  return sha1_hex(all);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Review helpfulness ranking with probe masks and contrastive learning", "sancl"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with a planted signal");
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--seed", sa.seed, "Generator seed")->capture_default_str();
  synth->add_option("--config", sa.config, "Generator config JSON")->check(CLI::ExistingFile);
  synth->add_flag("--force", sa.force, "Write into a non-empty output directory");
  synth->add_option("--train-products", sa.train_products);
  synth->add_option("--dev-products", sa.dev_products);
  synth->add_option("--test-products", sa.test_products);
  synth->add_option("--reviews-per-product", sa.reviews_per_product);
  synth->add_option("--feature-dim", sa.feature_dim);
  synth->add_option("--embed-dim", sa.embed_dim);

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train a model; writes model.ckpt, train_log.jsonl and manifest.json");
  trn->add_option("--data", ta.data, "Corpus directory with train/ (and optionally dev/)")
      ->required()
      ->check(CLI::ExistingDirectory);
  trn->add_option("--out", ta.out, "Output directory")->required();
  trn->add_option("--config", ta.config, "Training config JSON (flags override it)")->check(CLI::ExistingFile);
  trn->add_flag("--force", ta.force, "Write into a non-empty output directory");
  trn->add_option("--seed", ta.seed);
  trn->add_option("--epochs", ta.epochs);
  trn->add_option("--batch-size", ta.batch_size, "Products per step");
  trn->add_option("--eval-every", ta.eval_every);
  trn->add_option("--embed-dim", ta.embed_dim);
  trn->add_option("--hidden-dim", ta.hidden_dim);
  trn->add_option("--image-dim", ta.image_dim);
  trn->add_option("--shared-dim", ta.shared_dim);
  trn->add_option("--learning-rate,--lr", ta.learning_rate);
  trn->add_option("--kappa", ta.kappa, "Weight of the contrastive losses");
  trn->add_option("--gamma", ta.gamma, "Hinge margin");
  trn->add_option("--dropout", ta.dropout);
  trn->add_option("--fixed-beta", ta.fixed_beta, "Use a constant cold-token weight instead of the learned one");
  trn->add_option("--mode", ta.mode)->check(CLI::IsMember({"multimodal", "text-only"}));
  trn->add_option("--embeddings", ta.embeddings, "Pretrained word vectors (text file)");
  trn->add_option("--relevance-threshold", ta.relevance_threshold);
  trn->add_flag("--no-probe-mask", ta.no_probe_mask, "Treat every token as hot");
  trn->add_flag("--no-cpc-ii", ta.no_cpc_ii, "Drop the within-review text/image contrastive loss");
  trn->add_flag("--no-cpc-pr", ta.no_cpc_pr, "Drop the product/review contrastive loss");
  trn->add_flag("--fine-tune-embeddings", ta.fine_tune);

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint; prints the metric report as JSON");
  ev->add_option("--checkpoint", ea.checkpoint)->required()->check(CLI::ExistingFile);
  ev->add_option("--data", ea.data, "Corpus directory or a split directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  ev->add_option("--split", ea.split)->capture_default_str();
  ev->add_option("--config", ea.config, "Config whose dimensions the checkpoint must match")
      ->check(CLI::ExistingFile);
  ev->add_option("--per-product", ea.per_product, "Write per-product metrics as CSV");
  ev->add_option("--relevance-threshold", ea.relevance_threshold)->capture_default_str();
  ev->add_flag("--oracle-check", ea.oracle_check, "Recompute MAP by brute force and require agreement");

  ProbeArgs pa;
  auto* pm = app.add_subcommand("probe-mask", "Write per-token probe masks as JSONL");
  auto* an = app.add_subcommand("annotate-heuristic", "Write heuristic core words and clusters as JSONL");
  for (auto* sub : {pm, an}) {
    sub->add_option("--products", pa.products)->required()->check(CLI::ExistingFile);
    sub->add_option("--reviews", pa.reviews)->required()->check(CLI::ExistingFile);
    sub->add_option("--out", pa.out)->required();
  }
  pm->add_option("--annotations", pa.annotations, "Annotations to use instead of the heuristic")
      ->check(CLI::ExistingFile);

  std::vector<const char*> argv{"sancl"};
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(sa, args, out);
    if (trn->parsed()) return cmd_train(ta, args, out);
    if (ev->parsed()) return cmd_eval(ea, out, err);
    if (pm->parsed()) return cmd_probe_mask(pa, out);
    if (an->parsed()) return cmd_annotate(pa, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace sancl::cli
