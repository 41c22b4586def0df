#include "ragdial/metrics/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>

#include "ragdial/common/errors.hpp"

namespace ragdial::metrics {

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

EvalCorpus::EvalCorpus(std::vector<Tokens> hypotheses, std::vector<Tokens> references)
    : hyps_(std::move(hypotheses)), refs_(std::move(references)) {
  if (hyps_.size() != refs_.size()) throw ValidationError("hypothesis and reference counts differ");
}

EvalCorpus EvalCorpus::from_text(const std::vector<std::string>& hypotheses,
                                 const std::vector<std::string>& references) {
  if (hypotheses.size() != references.size()) throw ValidationError("hypothesis and reference counts differ");
  EvalCorpus c;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) c.add(tokenize(hypotheses[i]), tokenize(references[i]));
  return c;
}

void EvalCorpus::add(Tokens hypothesis, Tokens reference) {
  hyps_.push_back(std::move(hypothesis));
  refs_.push_back(std::move(reference));
}

namespace {

std::map<std::vector<std::string>, std::size_t> ngram_counts(const Tokens& toks, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++counts[Tokens(toks.begin() + i, toks.begin() + i + n)];
  return counts;
}

}  // namespace

BleuStats bleu_stats(const EvalCorpus& corpus) {
  BleuStats s;
  for (std::size_t p = 0; p < corpus.size(); ++p) {
    const Tokens& hyp = corpus.hypotheses()[p];
    const Tokens& ref = corpus.references()[p];
    s.hyp_len += hyp.size();
    s.ref_len += ref.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto h = ngram_counts(hyp, n);
      const auto r = ngram_counts(ref, n);
      for (const auto& [gram, count] : h) {
        auto it = r.find(gram);
        if (it != r.end()) s.matches[n - 1] += std::min(count, it->second);
      }
      if (hyp.size() >= n) s.totals[n - 1] += hyp.size() - n + 1;
    }
  }
  return s;
}

double bleu4(const EvalCorpus& corpus) {
  if (corpus.empty()) throw ValidationError("BLEU needs at least one pair");
  const BleuStats s = bleu_stats(corpus);
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (s.matches[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]));
  }
  const double c = static_cast<double>(s.hyp_len);
  const double r = static_cast<double>(s.ref_len);
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return 100.0 * bp * std::exp(log_sum / 4.0);
}

double distinct_n(const std::vector<Tokens>& responses, std::size_t n) {
  if (n < 1) throw ValidationError("distinct-n needs n >= 1");
  std::set<Tokens> unique;
  std::size_t total = 0;
  for (const Tokens& t : responses) {
    for (std::size_t i = 0; i + n <= t.size(); ++i) {
      unique.emplace(t.begin() + i, t.begin() + i + n);
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(unique.size()) / static_cast<double>(total);
}

nlohmann::json EvalReport::to_json() const {
  return {{"bleu4", bleu4},
          {"distinct1", distinct1},
          {"distinct2", distinct2},
          {"distinct1_pct", 100.0 * distinct1},
          {"distinct2_pct", 100.0 * distinct2},
          {"n_pairs", n_pairs},
          {"tokenizer_policy", std::string(kTokenizerPolicy)},
          {"model_tag", model_tag},
          {"k", k},
          {"beam", beam}};
}

EvalReport evaluate(const EvalCorpus& corpus, std::string model_tag, std::size_t k, std::size_t beam) {
  EvalReport r;
  r.bleu4 = metrics::bleu4(corpus);
  r.distinct1 = distinct_n(corpus.hypotheses(), 1);
  r.distinct2 = distinct_n(corpus.hypotheses(), 2);
  r.n_pairs = corpus.size();
  r.model_tag = std::move(model_tag);
  r.k = k;
  r.beam = beam;
  return r;
}

}  // namespace ragdial::metrics
