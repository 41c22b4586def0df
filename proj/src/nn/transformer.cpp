#include "ragdial/nn/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ragdial/common/errors.hpp"

namespace ragdial::nn {

namespace {

void add_linear(ParameterStore& s, const std::string& name, std::size_t in, std::size_t out, double std,
                bool bias = true) {
  s.add(name + ".w", s.normal({in, out}, std));
  if (bias) s.add(name + ".b", Tensor::matrix(1, out));
}

void add_layer_norm(ParameterStore& s, const std::string& name, std::size_t d) {
  s.add(name + ".g", Tensor::matrix(1, d, 1.0));
  s.add(name + ".b", Tensor::matrix(1, d));
}

// Key projections carry no bias: it shifts every logit of a query row by
// the same amount and cancels in the softmax.
void add_attention(ParameterStore& s, const std::string& name, std::size_t d, double std) {
  add_linear(s, name + ".q", d, d, std);
  add_linear(s, name + ".k", d, d, std, false);
  add_linear(s, name + ".v", d, d, std);
  add_linear(s, name + ".o", d, d, std);
}

void add_ffn(ParameterStore& s, const std::string& name, std::size_t d, std::size_t ffn, double std) {
  add_linear(s, name + ".fc1", d, ffn, std);
  add_linear(s, name + ".fc2", ffn, d, std);
}

class Block {
 public:
  Block(Tape& tape, ParameterStore& store) : tape_(tape), store_(store), mutable_store_(&store) {}
  Block(Tape& tape, const ParameterStore& store, ParameterStore* mutable_store)
      : tape_(tape), store_(store), mutable_store_(mutable_store) {}

  Var p(const std::string& name) {
    if (mutable_store_) return tape_.parameter(mutable_store_->get(name));
    return tape_.parameter(store_.get(name));
  }

  Var linear(Var x, const std::string& name, bool bias = true) {
    return bias ? ops::linear(x, p(name + ".w"), p(name + ".b")) : ops::linear(x, p(name + ".w"));
  }

  Var norm(Var x, const std::string& name) { return ops::layer_norm(x, p(name + ".g"), p(name + ".b")); }

  Var attend(Var xq, Var xkv, const std::string& name, std::size_t heads, bool causal) {
    Var q = linear(xq, name + ".q");
    Var k = linear(xkv, name + ".k", false);
    Var v = linear(xkv, name + ".v");
    return linear(ops::attention(q, k, v, heads, causal), name + ".o");
  }

  Var ffn(Var x, const std::string& name) { return linear(ops::gelu(linear(x, name + ".fc1")), name + ".fc2"); }

 private:
  Tape& tape_;
  const ParameterStore& store_;
  ParameterStore* mutable_store_;
};

Var drop(Var x, const RunMode& mode, double rate) {
  if (!mode.training || rate <= 0.0) return x;
  if (!mode.rng) throw std::logic_error("training mode requires an RNG for dropout");
  return ops::dropout(x, rate, *mode.rng);
}

void check_ids(std::span<const TokenId> ids, const TransformerConfig& cfg, const char* what) {
  if (ids.empty()) throw ShapeError(std::string(what) + ": empty token sequence");
  if (ids.size() > cfg.max_len) {
    throw ShapeError(std::string(what) + ": length " + std::to_string(ids.size()) + " exceeds max_len " +
                     std::to_string(cfg.max_len));
  }
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
      throw ShapeError(std::string(what) + ": token id " + std::to_string(id) + " outside vocabulary");
    }
  }
}

Var embed(Block& b, Tape& tape, const std::string& tok_name, const std::string& pos_name,
          std::span<const TokenId> ids, const RunMode& mode, double rate) {
  Var tok = ops::embedding(b.p(tok_name), ids);
  Var pos = ops::take_rows(b.p(pos_name), ids.size());
  (void)tape;
  return drop(ops::add(tok, pos), mode, rate);
}

}  // namespace

void TransformerConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw ValidationError("d_model must be a positive multiple of n_heads");
  }
  if (n_layers == 0 || d_ffn == 0 || max_len == 0 || vocab_size == 0) {
    throw ValidationError("transformer dimensions must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ValidationError("dropout_rate must lie in [0, 1)");
  if (!(init_std > 0.0) || !std::isfinite(init_std)) throw ValidationError("init_std must be positive");
}

nlohmann::json TransformerConfig::to_json() const {
  return {{"d_model", d_model}, {"n_heads", n_heads},   {"n_layers", n_layers},    {"d_ffn", d_ffn},
          {"max_len", max_len}, {"dropout_rate", dropout_rate}, {"vocab_size", vocab_size},
          {"init_std", init_std}};
}

TransformerConfig TransformerConfig::from_json(const nlohmann::json& j) {
  TransformerConfig c;
  c.d_model = j.value("d_model", c.d_model);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.d_ffn = j.value("d_ffn", c.d_ffn);
  c.max_len = j.value("max_len", c.max_len);
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.init_std = j.value("init_std", c.init_std);
  c.validate();
  return c;
}

TransformerEncoder::TransformerEncoder(ParameterStore& store, std::string prefix, TransformerConfig cfg,
                                       std::string token_embedding_name)
    : store_(&store),
      mutable_store_(&store),
      prefix_(std::move(prefix)),
      cfg_(cfg),
      tok_name_(std::move(token_embedding_name)) {
  cfg_.validate();
  if (tok_name_.empty()) tok_name_ = prefix_ + ".tok";
}

TransformerEncoder::TransformerEncoder(const ParameterStore& store, std::string prefix, TransformerConfig cfg,
                                       std::string token_embedding_name)
    : store_(&store), prefix_(std::move(prefix)), cfg_(cfg), tok_name_(std::move(token_embedding_name)) {
  cfg_.validate();
  if (tok_name_.empty()) tok_name_ = prefix_ + ".tok";
}

void TransformerEncoder::init_params(ParameterStore& s, const std::string& prefix, const TransformerConfig& cfg,
                                     bool with_token_embedding) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  if (with_token_embedding) s.add(prefix + ".tok", s.normal({cfg.vocab_size, d}, cfg.init_std));
  s.add(prefix + ".pos", s.normal({cfg.max_len, d}, cfg.init_std));
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string lp = prefix + ".layer" + std::to_string(l);
    add_layer_norm(s, lp + ".ln1", d);
    add_attention(s, lp + ".self", d, cfg.init_std);
    add_layer_norm(s, lp + ".ln2", d);
    add_ffn(s, lp + ".ffn", d, cfg.d_ffn, cfg.init_std);
  }
  add_layer_norm(s, prefix + ".ln_f", d);
}

EncoderOutput TransformerEncoder::forward(Tape& tape, std::span<const TokenId> ids, const RunMode& mode) const {
  check_ids(ids, cfg_, "encoder");
  Block b(tape, *store_, mutable_store_);
  Var x = embed(b, tape, tok_name_, prefix_ + ".pos", ids, mode, cfg_.dropout_rate);
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    const std::string lp = prefix_ + ".layer" + std::to_string(l);
    Var h = b.norm(x, lp + ".ln1");
    x = ops::add(x, drop(b.attend(h, h, lp + ".self", cfg_.n_heads, false), mode, cfg_.dropout_rate));
    h = b.norm(x, lp + ".ln2");
    x = ops::add(x, drop(b.ffn(h, lp + ".ffn"), mode, cfg_.dropout_rate));
  }
  Var states = b.norm(x, prefix_ + ".ln_f");
  return {states, ops::row(states, 0)};
}

Seq2Seq::Seq2Seq(TransformerConfig cfg, std::uint64_t seed) : cfg_(cfg), params_(seed) {
  init_params(params_, cfg_);
}

Seq2Seq::Seq2Seq(TransformerConfig cfg, ParameterStore params) : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  ParameterStore expected(0);
  init_params(expected, cfg_);
  for (const auto& [name, p] : expected.entries()) {
    if (!params_.contains(name) || !params_.get(name).value.same_shape(p.value)) {
      throw StateMismatchError("generator parameters do not match config at " + name);
    }
  }
}

void Seq2Seq::init_params(ParameterStore& s, const TransformerConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  s.add("gen.tok", s.normal({cfg.vocab_size, d}, cfg.init_std));
  TransformerEncoder::init_params(s, "gen.enc", cfg, false);
  s.add("gen.dec.pos", s.normal({cfg.max_len, d}, cfg.init_std));
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string lp = "gen.dec.layer" + std::to_string(l);
    add_layer_norm(s, lp + ".ln1", d);
    add_attention(s, lp + ".self", d, cfg.init_std);
    add_layer_norm(s, lp + ".ln2", d);
    add_attention(s, lp + ".cross", d, cfg.init_std);
    add_layer_norm(s, lp + ".ln3", d);
    add_ffn(s, lp + ".ffn", d, cfg.d_ffn, cfg.init_std);
  }
  add_layer_norm(s, "gen.dec.ln_f", d);
  add_linear(s, "gen.head", d, cfg.vocab_size, cfg.init_std);
}

Var Seq2Seq::encode(Tape& tape, std::span<const TokenId> src, const RunMode& mode) {
  TransformerEncoder enc(params_, "gen.enc", cfg_, "gen.tok");
  return enc.forward(tape, src, mode).states;
}

Var Seq2Seq::decode(Tape& tape, Var memory, std::span<const TokenId> tgt_in, const RunMode& mode) {
  check_ids(tgt_in, cfg_, "decoder");
  Block b(tape, params_);
  Var x = embed(b, tape, "gen.tok", "gen.dec.pos", tgt_in, mode, cfg_.dropout_rate);
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    const std::string lp = "gen.dec.layer" + std::to_string(l);
    Var h = b.norm(x, lp + ".ln1");
    x = ops::add(x, drop(b.attend(h, h, lp + ".self", cfg_.n_heads, true), mode, cfg_.dropout_rate));
    h = b.norm(x, lp + ".ln2");
    x = ops::add(x, drop(b.attend(h, memory, lp + ".cross", cfg_.n_heads, false), mode, cfg_.dropout_rate));
    h = b.norm(x, lp + ".ln3");
    x = ops::add(x, drop(b.ffn(h, lp + ".ffn"), mode, cfg_.dropout_rate));
  }
  Var h = b.norm(x, "gen.dec.ln_f");
  return ops::log_softmax(b.linear(h, "gen.head"));
}

Var Seq2Seq::forward(Tape& tape, std::span<const TokenId> src, std::span<const TokenId> tgt_in,
                     const RunMode& mode) {
  return decode(tape, encode(tape, src, mode), tgt_in, mode);
}

EncoderBatchOutput forward_encoder(const TransformerEncoder& encoder,
                                   const std::vector<std::vector<TokenId>>& batch) {
  const std::size_t d = encoder.config().d_model;
  std::size_t longest = 0;
  for (const auto& seq : batch) longest = std::max(longest, seq.size());
  EncoderBatchOutput out{Tensor::matrix(batch.size(), d), Tensor({batch.size(), longest, d})};
  for (std::size_t b = 0; b < batch.size(); ++b) {
    Tape tape(false);
    EncoderOutput o = encoder.forward(tape, batch[b], RunMode::eval());
    std::copy_n(o.pooled.value().data(), d, out.pooled.data() + b * d);
    const Tensor& st = o.states.value();
    std::copy_n(st.data(), st.size(), out.states.data() + b * longest * d);
  }
  return out;
}

Var nll_loss(Var logprobs, std::span<const TokenId> targets, TokenId pad) {
  return ops::scale(ops::pick_sum(logprobs, targets, pad), -1.0);
}

}  // namespace ragdial::nn
