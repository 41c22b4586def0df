#include "ragdial/retriever/dual_encoder.hpp"

#include <algorithm>

#include "ragdial/common/errors.hpp"
#include "ragdial/nn/ops.hpp"
#include "ragdial/text/context.hpp"

namespace ragdial::retriever {

namespace {

nn::ParameterStore renamed(const nn::ParameterStore& src, const std::string& from, const std::string& to,
                           std::uint64_t seed) {
  nn::ParameterStore out(seed);
  for (const auto& [name, p] : src.entries()) out.add(to + name.substr(from.size()), p.value);
  return out;
}

void check_layout(const nn::ParameterStore& store, const std::string& prefix, const nn::TransformerConfig& cfg) {
  nn::ParameterStore expected(0);
  nn::TransformerEncoder::init_params(expected, prefix, cfg);
  for (const auto& [name, p] : expected.entries()) {
    if (!store.contains(name) || !store.get(name).value.same_shape(p.value)) {
      throw StateMismatchError("retriever parameters do not match config at " + name);
    }
  }
}

}  // namespace

DualEncoder::DualEncoder(nn::TransformerConfig cfg, std::uint64_t seed, bool shared_init)
    : cfg_(cfg), query_(seed), passage_(seed ^ 0x5bd1e995ULL) {
  nn::TransformerEncoder::init_params(passage_, "penc", cfg_);
  if (shared_init) {
    query_ = renamed(passage_, "penc", "qenc", seed);
  } else {
    nn::TransformerEncoder::init_params(query_, "qenc", cfg_);
  }
  passage_fingerprint_ = passage_.fingerprint();
}

DualEncoder::DualEncoder(nn::TransformerConfig cfg, nn::ParameterStore query, nn::ParameterStore passage)
    : cfg_(cfg), query_(std::move(query)), passage_(std::move(passage)) {
  check_layout(query_, "qenc", cfg_);
  check_layout(passage_, "penc", cfg_);
  passage_fingerprint_ = passage_.fingerprint();
}

nn::Var DualEncoder::embed_query(nn::Tape& tape, std::span<const text::TokenId> query_ids, const nn::RunMode& mode) {
  nn::TransformerEncoder enc(query_, "qenc", cfg_);
  return enc.forward(tape, query_ids, mode).pooled;
}

std::vector<double> DualEncoder::embed_passage(std::span<const text::TokenId> passage_ids) const {
  nn::TransformerEncoder enc(passage_, "penc", cfg_);
  nn::Tape tape(false);
  const nn::Tensor& v = enc.forward(tape, passage_ids, nn::RunMode::eval()).pooled.value();
  return {v.values().begin(), v.values().end()};
}

nn::Tensor embed_passages(const DualEncoder& enc, const std::vector<text::TokenSequence>& passages,
                          std::size_t batch_size) {
  if (passages.empty()) throw ValidationError("cannot embed an empty knowledge base");
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  const std::size_t d = enc.config().d_model;
  nn::Tensor out = nn::Tensor::matrix(passages.size(), d);
  for (std::size_t start = 0; start < passages.size(); start += batch_size) {
    const std::size_t end = std::min(passages.size(), start + batch_size);
    for (std::size_t i = start; i < end; ++i) {
      const auto row = enc.embed_passage(passages[i]);
      std::copy(row.begin(), row.end(), out.data() + i * d);
    }
  }
  return out;
}

nn::Tensor embed_passages(const DualEncoder& enc, const text::Vocabulary& vocab, const kb::KnowledgeBase& kb,
                          std::size_t batch_size) {
  std::vector<text::TokenSequence> passages;
  passages.reserve(kb.size());
  for (const auto& d : kb.documents()) {
    passages.push_back(text::build_passage(vocab.encode(d.title), vocab.encode(d.body), enc.config().max_len));
  }
  return embed_passages(enc, passages, batch_size);
}

DenseIndex build_kb_index(const DualEncoder& enc, const text::Vocabulary& vocab, const kb::KnowledgeBase& kb,
                          std::size_t batch_size) {
  if (kb.empty()) throw ValidationError("empty index");
  std::vector<std::string> ids;
  ids.reserve(kb.size());
  for (const auto& d : kb.documents()) ids.push_back(d.id);
  return DenseIndex::build(embed_passages(enc, vocab, kb, batch_size), std::move(ids), enc.passage_fingerprint());
}

void require_fresh_index(const DualEncoder& enc, const DenseIndex& index) {
  if (index.fingerprint() != enc.passage_fingerprint()) {
    throw StateMismatchError("stale index: built by a different passage encoder");
  }
  if (index.dim() != enc.config().d_model) throw StateMismatchError("index dimension does not match the encoder");
}

Retrieval retrieve(nn::Tape& tape, DualEncoder& enc, const DenseIndex& index,
                   std::span<const text::TokenId> utterance_ids, std::size_t k, const nn::RunMode& mode) {
  require_fresh_index(enc, index);
  const text::TokenSequence query = text::build_query(utterance_ids, enc.config().max_len);
  nn::Var q = enc.embed_query(tape, query, mode);
  Retrieval r;
  r.results = index.search_topk(q.value().row(0), k);
  nn::Tensor rows = nn::Tensor::matrix(r.results.size(), index.dim());
  for (std::size_t j = 0; j < r.results.size(); ++j) {
    const auto src = index.row(r.results[j].row);
    std::copy(src.begin(), src.end(), rows.data() + j * index.dim());
  }
  r.scores = nn::ops::matmul_transposed(q, tape.constant(std::move(rows)));
  r.log_priors = nn::ops::log_softmax(r.scores);
  for (std::size_t j = 0; j < r.results.size(); ++j) r.results[j].score = r.scores.value()[j];
  r.results = doc_priors(std::move(r.results));
  return r;
}

std::vector<RetrievalResult> retrieve(DualEncoder& enc, const DenseIndex& index, const text::Vocabulary& vocab,
                                      const std::string& utterance, std::size_t k) {
  nn::Tape tape(false);
  return retrieve(tape, enc, index, vocab.encode(utterance), k, nn::RunMode::eval()).results;
}

}  // namespace ragdial::retriever
