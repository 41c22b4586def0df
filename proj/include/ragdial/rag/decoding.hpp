#pragma once

#include <map>
#include <string>
#include <vector>

#include "ragdial/rag/marginal.hpp"

namespace ragdial::rag {

enum class DecodingMode { fast, thorough };
std::string to_string(DecodingMode m);
DecodingMode parse_decoding_mode(const std::string& s);

struct GenerationConfig {
  std::size_t k = 5;
  std::size_t beam_size = 5;
  std::size_t max_new_tokens = 32;
  DecodingMode mode = DecodingMode::fast;
  // Hypotheses are ranked by marginal / length^length_penalty; 0 ranks by
  // the pure marginal log-probability.
  double length_penalty = 0.0;

  void validate() const;
};

struct BeamEntry {
  TokenSequence tokens;  // ends with EOS unless cut at max_new_tokens
  double logprob = 0.0;  // conditional log-probability under one context
};

// Beam search under one context. Keeps the `beam_size` best expansions per
// step; hypotheses ending in EOS (or reaching max_new_tokens) are finished.
// Returns every finished hypothesis, best first. beam_size 1 is greedy.
std::vector<BeamEntry> beam_search(nn::Seq2Seq& gen, std::span<const TokenId> context, std::size_t beam_size,
                                   std::size_t max_new_tokens);

// One retrieved document as seen by the generator.
struct DocContext {
  std::string doc_id;
  TokenSequence context;
  double log_prior = 0.0;
};

struct Hypothesis {
  TokenSequence tokens;
  std::map<std::string, double> per_doc_logprob;  // doc id -> log p(r | u, d)
  double marginal_logprob = 0.0;
  double score = 0.0;  // marginal_logprob / length^length_penalty
};

// Per-document beam search, pooling and de-duplication of hypotheses, then
// marginal ranking. In fast mode a hypothesis is scored only under the
// documents whose beams produced it (a lower bound on the marginal); in
// thorough mode it is rescored under every document. Best first.
std::vector<Hypothesis> generate_from_contexts(nn::Seq2Seq& gen, const std::vector<DocContext>& docs,
                                               const GenerationConfig& cfg);

double length_normalised(double logprob, std::size_t length, double length_penalty);

}  // namespace ragdial::rag
