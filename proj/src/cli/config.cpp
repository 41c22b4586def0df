#include "ragdial/cli/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "ragdial/common/atomic_file.hpp"
#include "ragdial/common/errors.hpp"
#include "ragdial/common/hash.hpp"

namespace ragdial::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ValidationError("config: '" + where + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ValidationError("config: unknown key '" + key + "' in " + where);
  }
}

fs::path resolve(const json& j, const char* key, const fs::path& base) {
  if (!j.contains(key)) return {};
  fs::path p = j.at(key).get<std::string>();
  if (p.empty() || p.is_absolute()) return p;
  return base / p;
}

std::string path_string(const fs::path& p) { return p.string(); }

nn::TransformerConfig model_from_json(const json& j, std::size_t vocab_size, const std::string& where) {
  reject_unknown(j, {"d_model", "n_heads", "n_layers", "d_ffn", "max_len", "dropout_rate", "init_std"}, where);
  json copy = j;
  copy["vocab_size"] = vocab_size;
  return nn::TransformerConfig::from_json(copy);
}

json model_to_json(const nn::TransformerConfig& c) {
  json j = c.to_json();
  j.erase("vocab_size");
  return j;
}

}  // namespace

void RunConfig::validate() const {
  if (vocab_size < text::kByteVocabSize) {
    throw ValidationError("config: vocab_size must be at least " + std::to_string(text::kByteVocabSize));
  }
  generator.validate();
  retriever.validate();
  generation.validate();
  if (!(training.lr > 0.0)) throw ValidationError("config: training.lr must be positive");
  if (training.k == 0) throw ValidationError("config: training.k must be positive");
  if (training.max_response_len < 2) throw ValidationError("config: training.max_response_len must be >= 2");
  if (training.epochs == 0 && training.max_steps == 0) {
    throw ValidationError("config: training needs epochs or max_steps");
  }
  if (!(training.query_lr_scale >= 0.0)) throw ValidationError("config: training.query_lr_scale must be >= 0");
  if (!(training.weight_decay >= 0.0)) throw ValidationError("config: training.weight_decay must be >= 0");
}

json RunConfig::to_json() const {
  return json{
      {"seed", seed},
      {"vocab_size", vocab_size},
      {"paths",
       {{"kb", path_string(paths.kb)},
        {"train", path_string(paths.train)},
        {"eval", path_string(paths.eval)},
        {"vocab", path_string(paths.vocab)},
        {"index", path_string(paths.index)},
        {"checkpoint_dir", path_string(paths.checkpoint_dir)},
        {"reports", path_string(paths.reports)}}},
      {"generator", model_to_json(generator)},
      {"retriever", model_to_json(retriever)},
      {"training",
       {{"lr", training.lr},
        {"epochs", training.epochs},
        {"max_steps", training.max_steps},
        {"k", training.k},
        {"checkpoint_every", training.checkpoint_every},
        {"max_response_len", training.max_response_len},
        {"warmup_steps", training.warmup_steps},
        {"weight_decay", training.weight_decay},
        {"query_lr_scale", training.query_lr_scale}}},
      {"generation",
       {{"k", generation.k},
        {"beam_size", generation.beam_size},
        {"max_new_tokens", generation.max_new_tokens},
        {"mode", rag::to_string(generation.mode)},
        {"length_penalty", generation.length_penalty}}},
  };
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  RunConfig c;
  try {
    reject_unknown(j, {"seed", "vocab_size", "paths", "generator", "retriever", "training", "generation"}, "config");
    c.seed = j.value("seed", c.seed);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    if (j.contains("paths")) {
      const json& p = j.at("paths");
      reject_unknown(p, {"kb", "train", "eval", "vocab", "index", "checkpoint_dir", "reports"}, "paths");
      c.paths.kb = resolve(p, "kb", base_dir);
      c.paths.train = resolve(p, "train", base_dir);
      c.paths.eval = resolve(p, "eval", base_dir);
      c.paths.vocab = resolve(p, "vocab", base_dir);
      c.paths.index = resolve(p, "index", base_dir);
      c.paths.checkpoint_dir = resolve(p, "checkpoint_dir", base_dir);
      c.paths.reports = resolve(p, "reports", base_dir);
    }
    c.generator = model_from_json(j.value("generator", json::object()), c.vocab_size, "generator");
    c.retriever = model_from_json(j.value("retriever", json::object()), c.vocab_size, "retriever");
    if (j.contains("training")) {
      const json& t = j.at("training");
      reject_unknown(t,
                     {"lr", "epochs", "max_steps", "k", "checkpoint_every", "max_response_len", "warmup_steps",
                      "weight_decay", "query_lr_scale"},
                     "training");
      c.training.lr = t.value("lr", c.training.lr);
      c.training.epochs = t.value("epochs", c.training.epochs);
      c.training.max_steps = t.value("max_steps", c.training.max_steps);
      c.training.k = t.value("k", c.training.k);
      c.training.checkpoint_every = t.value("checkpoint_every", c.training.checkpoint_every);
      c.training.max_response_len = t.value("max_response_len", c.training.max_response_len);
      c.training.warmup_steps = t.value("warmup_steps", c.training.warmup_steps);
      c.training.weight_decay = t.value("weight_decay", c.training.weight_decay);
      c.training.query_lr_scale = t.value("query_lr_scale", c.training.query_lr_scale);
    }
    if (j.contains("generation")) {
      const json& g = j.at("generation");
      reject_unknown(g, {"k", "beam_size", "max_new_tokens", "mode", "length_penalty"}, "generation");
      c.generation.k = g.value("k", c.generation.k);
      c.generation.beam_size = g.value("beam_size", c.generation.beam_size);
      c.generation.max_new_tokens = g.value("max_new_tokens", c.generation.max_new_tokens);
      if (g.contains("mode")) c.generation.mode = rag::parse_decoding_mode(g.at("mode").get<std::string>());
      c.generation.length_penalty = g.value("length_penalty", c.generation.length_penalty);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

std::uint64_t RunConfig::hash() const {
  const json j{{"seed", seed},
               {"vocab_size", vocab_size},
               {"generator", model_to_json(generator)},
               {"retriever", model_to_json(retriever)}};
  return fnv1a(j.dump());
}

RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return RunConfig::from_json(j, fs::absolute(path).parent_path());
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json artifact_meta(const RunConfig& cfg) {
  return json{{"version", kArtifactVersion}, {"seed", cfg.seed}, {"config_hash", hash_hex(cfg.hash())}};
}

fs::path sidecar_path(const fs::path& artifact) {
  fs::path p = artifact;
  p += ".meta.json";
  return p;
}

void write_sidecar(const fs::path& artifact, const json& meta) {
  write_file_atomic(sidecar_path(artifact), [&](std::ostream& out) { out << meta.dump(2) << "\n"; });
}

json read_sidecar(const fs::path& artifact) {
  const fs::path p = sidecar_path(artifact);
  if (!fs::exists(p)) throw ValidationError("missing artifact metadata: " + p.string());
  try {
    return json::parse(read_text_file(p));
  } catch (const json::exception& e) {
    throw ValidationError("artifact metadata " + p.string() + ": " + e.what());
  }
}

void require_same_config(const json& meta, const RunConfig& cfg, const std::string& what) {
  const std::string expected = hash_hex(cfg.hash());
  const std::string found = meta.is_object() ? meta.value("config_hash", std::string()) : std::string();
  if (found != expected) {
    throw StateMismatchError(what + " was built under config hash " + (found.empty() ? "<none>" : found) +
                             ", current config hash is " + expected);
  }
}

}  // namespace ragdial::cli
