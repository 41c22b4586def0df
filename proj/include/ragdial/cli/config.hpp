#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "ragdial/nn/transformer.hpp"
#include "ragdial/rag/decoding.hpp"

namespace ragdial::cli {

inline constexpr int kArtifactVersion = 1;

struct PathsConfig {
  std::filesystem::path kb;
  std::filesystem::path train;  // dialogue pairs JSONL
  std::filesystem::path eval;   // dialogue pairs JSONL for generate
  std::filesystem::path vocab;
  std::filesystem::path index;
  std::filesystem::path checkpoint_dir;
  std::filesystem::path reports;
};

struct TrainingConfig {
  double lr = 3e-5;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;  // 0: epochs * pairs
  std::size_t k = 5;          // documents marginalized per step
  std::size_t checkpoint_every = 100;
  std::size_t max_response_len = 32;
  std::uint64_t warmup_steps = 0;
  double weight_decay = 0.0;
  double query_lr_scale = 1.0;
};

// JSON run configuration. Relative paths resolve against the directory of
// the config file. Example:
//
//   {
//     "seed": 7,
//     "vocab_size": 2000,
//     "paths": {"kb": "kb.jsonl", "train": "train.jsonl", "eval": "test.jsonl",
//               "vocab": "vocab.json", "index": "kb.index",
//               "checkpoint_dir": "ckpt", "reports": "reports"},
//     "generator": {"d_model": 32, "n_heads": 4, ...},
//     "retriever": {"d_model": 32, ...},
//     "training": {"lr": 2e-3, "epochs": 10, "k": 5, "checkpoint_every": 200},
//     "generation": {"k": 5, "beam_size": 5, "mode": "fast"}
//   }
//
// Missing keys keep their defaults; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t vocab_size = 1024;
  PathsConfig paths;
  nn::TransformerConfig generator;
  nn::TransformerConfig retriever;
  TrainingConfig training;
  rag::GenerationConfig generation;

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

  // Hash over the fields that determine model parameters and their
  // initialization: seed, vocab_size and both transformer configs.
  std::uint64_t hash() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

std::string hash_hex(std::uint64_t h);

// {version, seed, config_hash} embedded in or stored beside every artifact.
nlohmann::json artifact_meta(const RunConfig& cfg);
std::filesystem::path sidecar_path(const std::filesystem::path& artifact);
void write_sidecar(const std::filesystem::path& artifact, const nlohmann::json& meta);
nlohmann::json read_sidecar(const std::filesystem::path& artifact);
// Throws StateMismatchError when `meta` was produced under another config.
void require_same_config(const nlohmann::json& meta, const RunConfig& cfg, const std::string& what);

}  // namespace ragdial::cli
