#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace ragdial::metrics {

using Tokens = std::vector<std::string>;

inline constexpr std::string_view kTokenizerPolicy = "ascii-lowercase;punctuation-split;whitespace-split";

// ASCII lowercase, each ASCII punctuation character becomes its own
// token, then split on whitespace.
Tokens tokenize(std::string_view text);

// Hypothesis/reference pairs at word level.
class EvalCorpus {
 public:
  EvalCorpus() = default;
  EvalCorpus(std::vector<Tokens> hypotheses, std::vector<Tokens> references);
  static EvalCorpus from_text(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references);

  void add(Tokens hypothesis, Tokens reference);
  std::size_t size() const { return hyps_.size(); }
  bool empty() const { return hyps_.empty(); }
  const std::vector<Tokens>& hypotheses() const { return hyps_; }
  const std::vector<Tokens>& references() const { return refs_; }

 private:
  std::vector<Tokens> hyps_;
  std::vector<Tokens> refs_;
};

struct BleuStats {
  std::size_t matches[4] = {0, 0, 0, 0};
  std::size_t totals[4] = {0, 0, 0, 0};
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
};

BleuStats bleu_stats(const EvalCorpus& corpus);
// Corpus BLEU-4 in [0, 100], no smoothing. Throws ValidationError on an
// empty corpus.
double bleu4(const EvalCorpus& corpus);

// Unique n-grams over total n-grams across all responses; 0 when there are none.
double distinct_n(const std::vector<Tokens>& responses, std::size_t n);

struct EvalReport {
  double bleu4 = 0.0;
  double distinct1 = 0.0;  // ratio in [0, 1]
  double distinct2 = 0.0;
  std::size_t n_pairs = 0;
  std::string model_tag;
  std::size_t k = 0;
  std::size_t beam = 0;

  nlohmann::json to_json() const;
};

EvalReport evaluate(const EvalCorpus& corpus, std::string model_tag, std::size_t k, std::size_t beam);

}  // namespace ragdial::metrics
