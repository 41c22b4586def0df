#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ragdial/kb/corpus.hpp"
#include "ragdial/rag/decoding.hpp"
#include "ragdial/retriever/dual_encoder.hpp"

namespace ragdial::rag {

// A dialogue pair in token space. `response` ends with EOS.
struct EncodedPair {
  TokenSequence utterance;
  TokenSequence response;
};

EncodedPair encode_pair(const text::Vocabulary& vocab, const std::string& utterance, const std::string& response,
                        std::size_t max_response_len);

struct Generation {
  Hypothesis best;
  std::vector<Hypothesis> candidates;         // best first
  std::vector<retriever::RetrievalResult> retrieved;  // empty without retrieval
};

// Common surface of the retrieval-augmented model and the no-retrieval
// baseline, used by the trainer and the CLI.
class DialogueModel {
 public:
  virtual ~DialogueModel() = default;

  // Negative log-likelihood of the response (a scalar on `tape`).
  virtual nn::Var loss(nn::Tape& tape, const EncodedPair& pair, const nn::RunMode& mode) = 0;
  virtual Generation generate(const TokenSequence& utterance, const GenerationConfig& cfg) = 0;
  virtual std::vector<nn::ParameterStore*> trainable() = 0;
  // Learning-rate multiplier per trainable store, same order.
  virtual std::vector<double> lr_scales() const = 0;
  virtual bool uses_retrieval() const = 0;
};

// Generator plus retriever. Training marginalizes over the top-`train_k`
// documents; generation uses the k of its GenerationConfig.
class RagModel final : public DialogueModel {
 public:
  RagModel(nn::Seq2Seq& gen, retriever::DualEncoder& enc, const retriever::DenseIndex& index,
           const kb::KnowledgeBase& kb, const text::Vocabulary& vocab, std::size_t train_k = 5);

  nn::Var loss(nn::Tape& tape, const EncodedPair& pair, const nn::RunMode& mode) override;
  Generation generate(const TokenSequence& utterance, const GenerationConfig& cfg) override;
  std::vector<nn::ParameterStore*> trainable() override;
  std::vector<double> lr_scales() const override { return {1.0, query_lr_scale_}; }
  bool uses_retrieval() const override { return true; }

  std::size_t train_k() const { return train_k_; }
  void set_train_k(std::size_t k);
  // Query-encoder learning rate relative to the generator's.
  void set_query_lr_scale(double scale);

  // Generator inputs for each retrieved document, with log-priors.
  std::vector<DocContext> contexts(const TokenSequence& utterance, const retriever::Retrieval& retrieval) const;
  const kb::Document& document_at_row(std::size_t row) const;

 private:
  struct PreparedDoc {
    std::size_t kb_index = 0;
    TokenSequence title;
    TokenSequence body;
  };

  nn::Seq2Seq& gen_;
  retriever::DualEncoder& enc_;
  const retriever::DenseIndex& index_;
  const kb::KnowledgeBase& kb_;
  std::size_t train_k_;
  double query_lr_scale_ = 1.0;
  std::vector<PreparedDoc> docs_;  // by index row
};

// Generator alone with the degenerate [BOS] utterance [EOS] context.
class BaselineModel final : public DialogueModel {
 public:
  explicit BaselineModel(nn::Seq2Seq& gen) : gen_(gen) {}

  nn::Var loss(nn::Tape& tape, const EncodedPair& pair, const nn::RunMode& mode) override;
  Generation generate(const TokenSequence& utterance, const GenerationConfig& cfg) override;
  std::vector<nn::ParameterStore*> trainable() override { return {&gen_.params()}; }
  std::vector<double> lr_scales() const override { return {1.0}; }
  bool uses_retrieval() const override { return false; }

 private:
  nn::Seq2Seq& gen_;
};

// One line of the generation JSONL output.
struct GenerationRecord {
  std::string utterance;
  std::string response;
  double marginal_logprob = 0.0;
  std::vector<retriever::RetrievalResult> retrieved;
  DecodingMode mode = DecodingMode::fast;
  std::size_t k = 0;
  std::size_t beam = 0;

  nlohmann::json to_json() const;
  static GenerationRecord from_json(const nlohmann::json& j);
};

GenerationRecord make_record(const text::Vocabulary& vocab, const std::string& utterance, const Generation& g,
                             const GenerationConfig& cfg, bool with_retrieval);

}  // namespace ragdial::rag
