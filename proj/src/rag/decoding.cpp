#include "ragdial/rag/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ragdial/common/errors.hpp"

namespace ragdial::rag {

namespace {

bool ranks_before(double score_a, const TokenSequence& a, double score_b, const TokenSequence& b) {
  if (score_a != score_b) return score_a > score_b;
  return a < b;
}

}  // namespace

std::string to_string(DecodingMode m) { return m == DecodingMode::fast ? "fast" : "thorough"; }

DecodingMode parse_decoding_mode(const std::string& s) {
  if (s == "fast") return DecodingMode::fast;
  if (s == "thorough") return DecodingMode::thorough;
  throw ValidationError("unknown decoding mode: " + s);
}

void GenerationConfig::validate() const {
  if (k < 1) throw ValidationError("k must be at least 1");
  if (beam_size < 1) throw ValidationError("beam_size must be at least 1");
  if (max_new_tokens < 1) throw ValidationError("max_new_tokens must be at least 1");
  if (length_penalty < 0.0) throw ValidationError("length_penalty must be non-negative");
}

double length_normalised(double logprob, std::size_t length, double length_penalty) {
  if (length_penalty == 0.0) return logprob;
  return logprob / std::pow(static_cast<double>(std::max<std::size_t>(length, 1)), length_penalty);
}

std::vector<BeamEntry> beam_search(nn::Seq2Seq& gen, std::span<const TokenId> context, std::size_t beam_size,
                                   std::size_t max_new_tokens) {
  if (beam_size == 0) throw ValidationError("beam_size must be at least 1");
  const std::size_t limit = std::min(max_new_tokens, gen.config().max_len);
  const std::size_t vocab = gen.config().vocab_size;

  nn::Tape tape(false);
  nn::Var memory = gen.encode(tape, context, nn::RunMode::eval());

  std::vector<BeamEntry> alive{{}};
  std::vector<BeamEntry> finished;
  for (std::size_t step = 0; step < limit && !alive.empty(); ++step) {
    std::vector<BeamEntry> candidates;
    candidates.reserve(alive.size() * vocab);
    for (const BeamEntry& h : alive) {
      TokenSequence tgt_in{text::kBos};
      tgt_in.insert(tgt_in.end(), h.tokens.begin(), h.tokens.end());
      const nn::Tensor& logp = gen.decode(tape, memory, tgt_in, nn::RunMode::eval()).value();
      const auto last = logp.row(logp.rows() - 1);
      for (std::size_t tok = 0; tok < vocab; ++tok) {
        BeamEntry c{h.tokens, h.logprob + last[tok]};
        c.tokens.push_back(static_cast<TokenId>(tok));
        candidates.push_back(std::move(c));
      }
    }
    const std::size_t keep = std::min(beam_size, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      [](const BeamEntry& a, const BeamEntry& b) {
                        return ranks_before(a.logprob, a.tokens, b.logprob, b.tokens);
                      });
    candidates.resize(keep);
    alive.clear();
    for (BeamEntry& c : candidates) {
      if (c.tokens.back() == text::kEos || step + 1 == limit) {
        finished.push_back(std::move(c));
      } else {
        alive.push_back(std::move(c));
      }
    }
    // Log-probabilities only fall as hypotheses grow, so once beam_size
    // finished entries beat every live one the search is settled.
    if (finished.size() >= beam_size && !alive.empty()) {
      std::vector<double> fin;
      for (const auto& f : finished) fin.push_back(f.logprob);
      std::nth_element(fin.begin(), fin.begin() + static_cast<std::ptrdiff_t>(beam_size - 1), fin.end(),
                       std::greater<>());
      if (alive.front().logprob < fin[beam_size - 1]) break;
    }
  }
  std::sort(finished.begin(), finished.end(), [](const BeamEntry& a, const BeamEntry& b) {
    return ranks_before(a.logprob, a.tokens, b.logprob, b.tokens);
  });
  return finished;
}

std::vector<Hypothesis> generate_from_contexts(nn::Seq2Seq& gen, const std::vector<DocContext>& docs,
                                               const GenerationConfig& cfg) {
  cfg.validate();
  if (docs.empty()) throw ValidationError("generation needs at least one context");

  std::map<TokenSequence, Hypothesis> pool;
  for (const DocContext& doc : docs) {
    std::vector<BeamEntry> entries = beam_search(gen, doc.context, cfg.beam_size, cfg.max_new_tokens);
    std::stable_sort(entries.begin(), entries.end(), [&](const BeamEntry& a, const BeamEntry& b) {
      return ranks_before(length_normalised(a.logprob, a.tokens.size(), cfg.length_penalty), a.tokens,
                          length_normalised(b.logprob, b.tokens.size(), cfg.length_penalty), b.tokens);
    });
    if (entries.size() > cfg.beam_size) entries.resize(cfg.beam_size);
    for (BeamEntry& e : entries) {
      Hypothesis& h = pool[e.tokens];
      h.tokens = e.tokens;
      h.per_doc_logprob[doc.doc_id] = e.logprob;
    }
  }

  std::vector<Hypothesis> out;
  out.reserve(pool.size());
  for (auto& [tokens, h] : pool) {
    std::vector<double> priors, conds;
    for (const DocContext& doc : docs) {
      auto it = h.per_doc_logprob.find(doc.doc_id);
      if (it == h.per_doc_logprob.end()) {
        if (cfg.mode == DecodingMode::fast) continue;
        it = h.per_doc_logprob.emplace(doc.doc_id, conditional_logprob(gen, doc.context, tokens)).first;
      }
      priors.push_back(doc.log_prior);
      conds.push_back(it->second);
    }
    h.marginal_logprob = marginal_logprob(priors, conds);
    h.score = length_normalised(h.marginal_logprob, h.tokens.size(), cfg.length_penalty);
    out.push_back(std::move(h));
  }
  std::sort(out.begin(), out.end(), [](const Hypothesis& a, const Hypothesis& b) {
    return ranks_before(a.score, a.tokens, b.score, b.tokens);
  });
  return out;
}

}  // namespace ragdial::rag
