#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ragdial/nn/ops.hpp"
#include "ragdial/nn/parameter_store.hpp"

namespace ragdial::nn {

using TokenId = ops::TokenId;

struct TransformerConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t d_ffn = 256;
  std::size_t max_len = 256;
  double dropout_rate = 0.1;
  std::size_t vocab_size = 1024;
  double init_std = 0.02;  // weights and embeddings ~ N(0, init_std)

  void validate() const;
  nlohmann::json to_json() const;
  static TransformerConfig from_json(const nlohmann::json& j);

  friend bool operator==(const TransformerConfig&, const TransformerConfig&) = default;
};

// Dropout is only applied when `training` is set; `rng` must then be non-null.
struct RunMode {
  bool training = false;
  std::mt19937_64* rng = nullptr;

  static RunMode eval() { return {}; }
  static RunMode train(std::mt19937_64& rng) { return {true, &rng}; }
};

struct EncoderOutput {
  Var states;  // [len x d_model]
  Var pooled;  // [1 x d_model], first-position final state
};

// Pre-LN transformer encoder stack with its own token and learned position
// embeddings. A lightweight view over parameters named `<prefix>.*`.
class TransformerEncoder {
 public:
  TransformerEncoder(ParameterStore& store, std::string prefix, TransformerConfig cfg,
                     std::string token_embedding_name = "");
  // Read-only view: parameters enter the tape as constants.
  TransformerEncoder(const ParameterStore& store, std::string prefix, TransformerConfig cfg,
                     std::string token_embedding_name = "");

  static void init_params(ParameterStore& store, const std::string& prefix, const TransformerConfig& cfg,
                          bool with_token_embedding = true);

  EncoderOutput forward(Tape& tape, std::span<const TokenId> ids, const RunMode& mode) const;
  const TransformerConfig& config() const { return cfg_; }

 private:
  const ParameterStore* store_;
  ParameterStore* mutable_store_ = nullptr;
  std::string prefix_;
  TransformerConfig cfg_;
  std::string tok_name_;
};

// Encoder-decoder with a shared token embedding and an untied output head.
// Parameter names start with "gen.".
class Seq2Seq {
 public:
  Seq2Seq(TransformerConfig cfg, std::uint64_t seed);
  Seq2Seq(TransformerConfig cfg, ParameterStore params);

  Seq2Seq(const Seq2Seq&) = delete;
  Seq2Seq& operator=(const Seq2Seq&) = delete;
  Seq2Seq(Seq2Seq&&) = default;

  static void init_params(ParameterStore& store, const TransformerConfig& cfg);

  Var encode(Tape& tape, std::span<const TokenId> src, const RunMode& mode);
  // Row i is log p(. | src, tgt_in[0..i]).
  Var decode(Tape& tape, Var memory, std::span<const TokenId> tgt_in, const RunMode& mode);
  Var forward(Tape& tape, std::span<const TokenId> src, std::span<const TokenId> tgt_in, const RunMode& mode);

  const TransformerConfig& config() const { return cfg_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

 private:
  TransformerConfig cfg_;
  ParameterStore params_;
};

// Eval-mode batch convenience: pooled [batch x d] and states
// [batch x max_len_in_batch x d] (zero padded past each sequence's end).
struct EncoderBatchOutput {
  Tensor pooled;
  Tensor states;
};
EncoderBatchOutput forward_encoder(const TransformerEncoder& encoder,
                                   const std::vector<std::vector<TokenId>>& batch);

// Negative log-likelihood of `targets` under row-wise log-probs; PAD
// positions (id `pad`) are masked out.
Var nll_loss(Var logprobs, std::span<const TokenId> targets, TokenId pad);

}  // namespace ragdial::nn
