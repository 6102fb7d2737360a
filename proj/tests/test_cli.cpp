#include <doctest.h>

#include <json.hpp>
#include <sstream>

#include "sancl/cli.hpp"
#include "sancl/corpus.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using sancl::testing::read_file;
using sancl::testing::scratch_dir;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run sancl_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = sancl::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

const std::vector<std::string> kSynthSmall = {"--train-products", "12", "--dev-products", "4", "--test-products",
                                              "4", "--reviews-per-product", "5", "--feature-dim", "8",
                                              "--embed-dim", "8"};

const std::vector<std::string> kTrainSmall = {"--embeddings", "embeddings.txt", "--embed-dim", "8", "--hidden-dim",
                                              "6", "--image-dim", "8", "--shared-dim", "4", "--epochs", "2",
                                              "--batch-size", "4"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

/// A small corpus synthesized once per process.
const fs::path& corpus_dir() {
  static const fs::path dir = [] {
    auto d = scratch_dir("cli_corpus");
    const auto r = sancl_run(concat({"synth", "--out", d.string(), "--force", "--seed", "5"}, kSynthSmall));
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

/// Trains into a fresh directory and returns it.
fs::path train_into(const std::string& name, const std::vector<std::string>& extra = {}) {
  auto out = scratch_dir(name);
  const auto r = sancl_run(
      concat(concat({"train", "--data", corpus_dir().string(), "--out", out.string(), "--force"}, kTrainSmall), extra));
  INFO(r.err);
  REQUIRE(r.code == 0);
  return out;
}

std::vector<json> read_jsonl(const fs::path& p) {
  std::vector<json> rows;
  std::istringstream in(read_file(p));
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) rows.push_back(json::parse(line));
  return rows;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::trunc) << text; }

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(sancl_run({}).code == sancl::cli::kExitUsage);
  CHECK(sancl_run({"frobnicate"}).code == sancl::cli::kExitUsage);
  CHECK(sancl_run({"--help"}).code == sancl::cli::kExitOk);
  CHECK(sancl_run({"train", "--data", "/nonexistent", "--out", "/tmp/x"}).code == sancl::cli::kExitUsage);
  CHECK(sancl_run({"synth"}).code == sancl::cli::kExitUsage);
}

TEST_CASE("synth is byte-reproducible") {
  const auto a = scratch_dir("cli_synth_a");
  const auto b = scratch_dir("cli_synth_b");
  REQUIRE(sancl_run(concat({"synth", "--out", a.string(), "--force", "--seed", "11"}, kSynthSmall)).code == 0);
  REQUIRE(sancl_run(concat({"synth", "--out", b.string(), "--force", "--seed", "11"}, kSynthSmall)).code == 0);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
    ++files;
    const auto rel = fs::relative(e.path(), a);
    CHECK_MESSAGE(read_file(e.path()) == read_file(b / rel), rel.string());
  }
  CHECK(files > 10);
  CHECK(sancl::cli::inputs_hash({a / "train"}) == sancl::cli::inputs_hash({b / "train"}));

  const auto split = sancl::corpus::load_corpus(a / "train");
  CHECK(split.products().size() == 12);
  CHECK(split.reviews().size() == 60);
}

TEST_CASE("non-empty output directory needs --force") {
  const auto d = scratch_dir("cli_nonempty");
  write(d / "keep.txt", "x");
  const auto r = sancl_run(concat({"synth", "--out", d.string()}, kSynthSmall));
  CHECK(r.code == sancl::cli::kExitUsage);
  CHECK(r.err.find("--force") != std::string::npos);
  CHECK(sancl_run(concat({"synth", "--out", d.string(), "--force"}, kSynthSmall)).code == 0);
}

TEST_CASE("config errors name the offending key") {
  const auto d = scratch_dir("cli_config");
  write(d / "bad_type.json", R"({"hidden_dim": "wide"})");
  write(d / "unknown.json", R"({"hiden_dim": 8})");
  write(d / "range.json", R"({"dropout": 1.5})");
  write(d / "broken.json", R"({"hidden_dim": )");
  for (const auto& [file, key] : std::vector<std::pair<std::string, std::string>>{
           {"bad_type.json", "hidden_dim"}, {"unknown.json", "hiden_dim"}, {"range.json", "dropout"},
           {"broken.json", "broken.json"}}) {
    const auto r = sancl_run({"train", "--data", corpus_dir().string(), "--out", (d / "out").string(), "--config",
                              (d / file).string()});
    CHECK_MESSAGE(r.code == sancl::cli::kExitUsage, file);
    CHECK_MESSAGE(r.err.find(key) != std::string::npos, r.err);
  }
  const auto r = sancl_run({"train", "--data", corpus_dir().string(), "--out", (d / "out").string(), "--kappa", "-1"});
  CHECK(r.code == sancl::cli::kExitUsage);
  CHECK(r.err.find("kappa") != std::string::npos);
}

TEST_CASE("train, then eval") {
  const auto run = train_into("cli_train");
  for (const char* f : {"model.ckpt", "train_log.jsonl", "config.json", "dev_metrics.json", "manifest.json"})
    CHECK(fs::exists(run / f));

  const auto manifest = json::parse(read_file(run / "manifest.json"));
  CHECK(manifest["command"] == "train");
  CHECK(manifest["seed"].is_number());
  CHECK(manifest["config"]["hidden_dim"] == 6);
  CHECK(manifest["inputs_hash"] == sancl::cli::inputs_hash({corpus_dir() / "train", corpus_dir() / "dev",
                                                             corpus_dir() / "embeddings.txt"}));
  CHECK(manifest["started_at"].get<std::string>().back() == 'Z');

  const auto log = read_jsonl(run / "train_log.jsonl");
  CHECK(log.size() == 2 * 3);
  for (const auto& line : log) {
    CHECK(line["beta_min"].get<double>() > 0.0);
    CHECK(line["beta_max"].get<double>() < 1.0);
  }

  SUBCASE("eval is repeatable and checks its oracle") {
    const std::vector<std::string> args = {"eval", "--checkpoint", (run / "model.ckpt").string(), "--data",
                                           corpus_dir().string(), "--oracle-check"};
    const auto a = sancl_run(args);
    const auto b = sancl_run(args);
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    const auto report = json::parse(a.out);
    CHECK(report["products"] == 4);
    CHECK(report["map"].get<double>() >= 0.0);
    CHECK(report["map"].get<double>() <= 1.0);
  }

  SUBCASE("eval on dev reproduces the metrics recorded during training") {
    const auto r = sancl_run({"eval", "--checkpoint", (run / "model.ckpt").string(), "--data", corpus_dir().string(),
                              "--split", "dev"});
    REQUIRE(r.code == 0);
    const auto report = json::parse(r.out);
    const auto recorded = json::parse(read_file(run / "dev_metrics.json"));
    CHECK(report["map"].get<double>() == recorded["map"].get<double>());
    CHECK(report["ndcg3"].get<double>() == recorded["ndcg3"].get<double>());
    CHECK(report["ndcg5"].get<double>() == recorded["ndcg5"].get<double>());
  }

  SUBCASE("per-product CSV") {
    const auto csv = run / "per_product.csv";
    REQUIRE(sancl_run({"eval", "--checkpoint", (run / "model.ckpt").string(), "--data", corpus_dir().string(),
                       "--per-product", csv.string()})
                .code == 0);
    std::istringstream in(read_file(csv));
    std::size_t lines = 0;
    for (std::string line; std::getline(in, line);) ++lines;
    CHECK(lines == 1 + 4);
  }

  SUBCASE("dimension mismatch names the field and the version") {
    write(run / "other.json", R"({"embed_dim": 8, "hidden_dim": 7, "image_dim": 8, "shared_dim": 4})");
    const auto r = sancl_run({"eval", "--checkpoint", (run / "model.ckpt").string(), "--data",
                              corpus_dir().string(), "--config", (run / "other.json").string()});
    CHECK(r.code == sancl::cli::kExitFailure);
    CHECK(r.err.find("hidden_dim") != std::string::npos);
    CHECK(r.err.find("version") != std::string::npos);
  }

  SUBCASE("missing split") {
    const auto r = sancl_run({"eval", "--checkpoint", (run / "model.ckpt").string(), "--data",
                              corpus_dir().string(), "--split", "holdout"});
    CHECK(r.code == sancl::cli::kExitUsage);
  }
}

TEST_CASE("training is deterministic and flag overrides compose") {
  const auto a = train_into("cli_det_a", {"--seed", "3"});
  const auto b = train_into("cli_det_b", {"--seed", "3"});
  CHECK(read_file(a / "train_log.jsonl") == read_file(b / "train_log.jsonl"));
  CHECK(read_file(a / "model.ckpt") == read_file(b / "model.ckpt"));

  const auto zero = read_jsonl(train_into("cli_kappa0", {"--seed", "3", "--kappa", "0"}) / "train_log.jsonl");
  const auto off =
      read_jsonl(train_into("cli_cpc_off", {"--seed", "3", "--no-cpc-ii", "--no-cpc-pr"}) / "train_log.jsonl");
  REQUIRE(zero.size() == off.size());
  for (std::size_t i = 0; i < zero.size(); ++i) {
    CHECK(zero[i]["L"].get<double>() == off[i]["L"].get<double>());
    CHECK(zero[i]["L"].get<double>() == zero[i]["L_task"].get<double>());
  }

  const auto fixed = read_jsonl(train_into("cli_fixed_beta", {"--fixed-beta", "0.25"}) / "train_log.jsonl");
  for (const auto& line : fixed) {
    CHECK(line["beta_min"].get<double>() == 0.25);
    CHECK(line["beta_max"].get<double>() == 0.25);
  }
}

TEST_CASE("probe-mask and annotate-heuristic") {
  const auto d = scratch_dir("cli_probe");
  const auto split = corpus_dir() / "train";
  const auto r = sancl_run({"probe-mask", "--products", (split / "products.jsonl").string(), "--reviews",
                            (split / "reviews.jsonl").string(), "--annotations",
                            (split / "annotations.jsonl").string(), "--out", (d / "masks.jsonl").string()});
  REQUIRE(r.code == 0);
  const auto produced = read_jsonl(d / "masks.jsonl");
  const auto truth = read_jsonl(split / "masks.jsonl");
  REQUIRE(produced.size() == truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    CHECK(produced[i]["review_id"] == truth[i]["review_id"]);
    CHECK(produced[i]["mask"] == truth[i]["mask"]);
  }

  const auto h = sancl_run({"annotate-heuristic", "--products", (split / "products.jsonl").string(), "--reviews",
                            (split / "reviews.jsonl").string(), "--out", (d / "heuristic.jsonl").string()});
  REQUIRE(h.code == 0);
  const auto rows = read_jsonl(d / "heuristic.jsonl");
  CHECK(rows.size() == truth.size());
  // The output is itself a valid annotations file.
  const auto reloaded = sancl::corpus::load_corpus_files(split / "products.jsonl", split / "reviews.jsonl",
                                                         d / "heuristic.jsonl", {sancl::corpus::Modality::text_only});
  CHECK(reloaded.reviews().size() == truth.size());

  CHECK(sancl_run({"probe-mask", "--products", "/nonexistent.jsonl", "--reviews", (split / "reviews.jsonl").string(),
                   "--out", (d / "x.jsonl").string()})
            .code == sancl::cli::kExitUsage);
}

TEST_CASE("git blob hash") {
  const auto d = scratch_dir("cli_hash");
  write(d / "hello.txt", "hello\n");
  CHECK(sancl::cli::git_blob_hash(d / "hello.txt") == "ce013625030ba8dba906f756967f9e9ca394464a");
  write(d / "empty.txt", "");
  CHECK(sancl::cli::git_blob_hash(d / "empty.txt") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}
