#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ragdial/kb/corpus.hpp"

namespace ragdial::kb {

// Toy retrieval-relevant corpus. Every document is titled by a topic of two
// made-up words; its body pairs the topic with two "answer" words drawn from
// a shared pool. A dialogue pair asks about a topic through an utterance
// template and the response is the topic's document body, so the answer is
// recoverable from the right document but not from the utterance.
struct SyntheticOptions {
  std::size_t num_docs = 200;
  std::size_t answer_pool = 64;
  // Topics [0, train_topics) get training pairs; the rest only exist in the KB.
  std::size_t train_topics = 200;
  // Training pairs per topic, each using a different training template.
  std::size_t templates_per_topic = 3;
  // Held-out pairs use templates never used in training.
  std::size_t heldout_pairs = 50;
  // Held-out topics come from the trained topics when true, from the
  // untrained ones otherwise.
  bool heldout_from_trained = true;
  std::uint64_t seed = 0;
};

struct SyntheticCorpus {
  KnowledgeBase kb;
  std::vector<DialoguePair> train;
  std::vector<std::string> train_gold;  // doc id per training pair
  std::vector<DialoguePair> heldout;
  std::vector<std::string> heldout_gold;
};

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& options);

// Distinct pronounceable pseudo-words, deterministic per seed.
std::vector<std::string> pseudo_words(std::size_t n, std::uint64_t seed);

}  // namespace ragdial::kb
