// SPDX-License-Identifier: Apache-2.0
#include "sancl/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "sancl/binio.hpp"
#include "sancl/config.hpp"
#include "sancl/errors.hpp"

namespace sancl {

namespace {

constexpr char kMagic[4] = {'S', 'N', 'C', 'L'};

void write_string(std::ostream& out, const std::string& s) {
  binio::write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

}  // namespace

void save_checkpoint(const HelpfulnessModel& model, const std::filesystem::path& path) {
  nlohmann::ordered_json meta;
  meta["model"] = model_config_to_json(model.config());
  meta["vocab"] = model.embeddings().vocab().words();
  meta["embedding_trainable"] = model.embeddings().weights().trainable;

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(kMagic, 4);
  binio::write_u32(out, kCheckpointVersion);
  write_string(out, meta.dump());
  const auto params = model.parameters();
  binio::write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    write_string(out, p->name);
    binio::write_u32(out, static_cast<std::uint32_t>(p->value.rows()));
    binio::write_u32(out, static_cast<std::uint32_t>(p->value.cols()));
    for (double x : p->value.data()) binio::write_f32(out, static_cast<float>(x));
  }
  if (!out) throw CheckpointError("write failed for " + path.string());
}

std::unique_ptr<HelpfulnessModel> load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::string where = path.string();
  auto fail = [&](const std::string& what) -> void { throw CheckpointError(where + ": " + what); };

  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4)) fail("not a checkpoint (bad magic)");
  std::uint32_t version = 0;
  if (!binio::read_u32(in, version)) fail("truncated header");
  if (version != kCheckpointVersion) {
    fail("checkpoint version " + std::to_string(version) + " is not supported (this build reads version " +
         std::to_string(kCheckpointVersion) + ")");
  }
  const std::string vtag = " (checkpoint version " + std::to_string(version) + ")";

  auto read_string = [&](std::string& s) {
    std::uint32_t n = 0;
    if (!binio::read_u32(in, n)) fail("truncated string length" + vtag);
    s.assign(n, '\0');
    if (n && !in.read(s.data(), n)) fail("truncated string" + vtag);
  };

  std::string meta_text;
  read_string(meta_text);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_text);
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("corrupt metadata: ") + e.what() + vtag);
  }

  ModelConfig cfg;
  try {
    cfg = model_config_from_json(meta.at("model"));
  } catch (const ConfigError& e) {
    fail(std::string(e.what()) + vtag);
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("corrupt metadata: ") + e.what() + vtag);
  }

  if (expected) {
    auto check = [&](const char* key, std::size_t stored, std::size_t want) {
      if (stored != want) {
        fail(std::string(key) + " is " + std::to_string(stored) + " in the checkpoint but " + std::to_string(want) +
             " in the config" + vtag);
      }
    };
    check("embed_dim", cfg.embed_dim, expected->embed_dim);
    check("hidden_dim", cfg.hidden_dim, expected->hidden_dim);
    check("image_dim", cfg.image_dim, expected->image_dim);
    check("shared_dim", cfg.shared_dim, expected->shared_dim);
    if (cfg.mode != expected->mode) fail("mode differs between checkpoint and config" + vtag);
  }

  enc::Vocabulary vocab(meta.at("vocab").get<std::vector<std::string>>());
  Rng unused(0);
  enc::EmbeddingTable table(std::move(vocab), cfg.embed_dim, unused);
  table.weights().trainable = meta.value("embedding_trainable", true);
  auto model = std::make_unique<HelpfulnessModel>(cfg, std::move(table));

  std::map<std::string, Parameter*> by_name;
  for (Parameter* p : model->parameters()) by_name[p->name] = p;

  std::uint32_t blocks = 0;
  if (!binio::read_u32(in, blocks)) fail("truncated block count" + vtag);
  if (blocks != by_name.size()) {
    fail("has " + std::to_string(blocks) + " parameter blocks, model expects " + std::to_string(by_name.size()) + vtag);
  }
  for (std::uint32_t b = 0; b < blocks; ++b) {
    std::string name;
    read_string(name);
    auto it = by_name.find(name);
    if (it == by_name.end()) fail("unknown parameter block '" + name + "'" + vtag);
    std::uint32_t rows = 0, cols = 0;
    if (!binio::read_u32(in, rows) || !binio::read_u32(in, cols)) fail("truncated block header" + vtag);
    Parameter& p = *it->second;
    if (rows != p.value.rows() || cols != p.value.cols()) {
      fail("block '" + name + "' is " + std::to_string(rows) + "x" + std::to_string(cols) + ", model expects " +
           p.value.shape_string() + vtag);
    }
    for (auto& x : p.value.data()) {
      float f = 0.0f;
      if (!binio::read_f32(in, f)) fail("truncated payload in block '" + name + "'" + vtag);
      if (!std::isfinite(f)) fail("non-finite value in block '" + name + "'" + vtag);
      x = f;
    }
    by_name.erase(it);
  }
  if (in.peek() != std::char_traits<char>::eof()) fail("trailing bytes after the last block" + vtag);
  return model;
}

}  // namespace sancl
