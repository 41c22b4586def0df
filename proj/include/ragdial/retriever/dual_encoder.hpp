#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ragdial/kb/corpus.hpp"
#include "ragdial/nn/transformer.hpp"
#include "ragdial/retriever/dense_index.hpp"
#include "ragdial/text/vocabulary.hpp"

namespace ragdial::retriever {

// Two independent transformer encoders: a trainable query encoder
// ("qenc.*") and a passage encoder ("penc.*") that is read-only once built.
// Embeddings are the first-position final states.
class DualEncoder {
 public:
  // With `shared_init`, the query encoder starts as a copy of the passage
  // encoder (both sides from one checkpoint); otherwise it is drawn
  // independently.
  DualEncoder(nn::TransformerConfig cfg, std::uint64_t seed, bool shared_init = true);
  DualEncoder(nn::TransformerConfig cfg, nn::ParameterStore query, nn::ParameterStore passage);

  DualEncoder(const DualEncoder&) = delete;
  DualEncoder& operator=(const DualEncoder&) = delete;
  DualEncoder(DualEncoder&&) = default;

  const nn::TransformerConfig& config() const { return cfg_; }
  nn::ParameterStore& query_params() { return query_; }
  const nn::ParameterStore& query_params() const { return query_; }
  const nn::ParameterStore& passage_params() const { return passage_; }

  // Fingerprint of the passage encoder taken at construction.
  std::uint64_t passage_fingerprint() const { return passage_fingerprint_; }

  // [1 x d] query embedding of `[BOS] utterance [EOS]` token ids.
  nn::Var embed_query(nn::Tape& tape, std::span<const text::TokenId> query_ids, const nn::RunMode& mode);
  // Eval-mode passage embedding of prepared `[BOS] title [SEP] body [EOS]` ids.
  std::vector<double> embed_passage(std::span<const text::TokenId> passage_ids) const;

 private:
  nn::TransformerConfig cfg_;
  nn::ParameterStore query_;
  nn::ParameterStore passage_;
  std::uint64_t passage_fingerprint_ = 0;
};

// Row i embeds passage i. Sequences are processed independently, so the
// result does not depend on batch_size.
nn::Tensor embed_passages(const DualEncoder& enc, const std::vector<text::TokenSequence>& passages,
                          std::size_t batch_size);
nn::Tensor embed_passages(const DualEncoder& enc, const text::Vocabulary& vocab, const kb::KnowledgeBase& kb,
                          std::size_t batch_size);

DenseIndex build_kb_index(const DualEncoder& enc, const text::Vocabulary& vocab, const kb::KnowledgeBase& kb,
                          std::size_t batch_size = 32);

// Differentiable retrieval: top-k from the index, scores recomputed as
// query . stored_row so gradients reach the query encoder.
struct Retrieval {
  std::vector<RetrievalResult> results;  // with priors
  nn::Var scores;                        // [1 x k]
  nn::Var log_priors;                    // [1 x k]
};

Retrieval retrieve(nn::Tape& tape, DualEncoder& enc, const DenseIndex& index,
                   std::span<const text::TokenId> utterance_ids, std::size_t k, const nn::RunMode& mode);
std::vector<RetrievalResult> retrieve(DualEncoder& enc, const DenseIndex& index, const text::Vocabulary& vocab,
                                      const std::string& utterance, std::size_t k);

// Throws StateMismatchError when the index was built by another passage encoder.
void require_fresh_index(const DualEncoder& enc, const DenseIndex& index);

}  // namespace ragdial::retriever
