#include "ragdial/kb/synthetic.hpp"

#include <random>
#include <set>

#include "ragdial/common/errors.hpp"

namespace ragdial::kb {

namespace {

constexpr const char* kTrainTemplates[] = {
    "tell me about {}",
    "what do you know about {} ?",
    "have you heard of {}",
    "{} , any thoughts ?",
    "i want to learn about {}",
};
constexpr std::size_t kNumTrainTemplates = std::size(kTrainTemplates);

constexpr const char* kHeldoutTemplates[] = {
    "so what is the deal with {}",
    "i keep reading about {} lately",
};

std::string fill(const char* tmpl, const std::string& topic) {
  std::string s(tmpl);
  return s.replace(s.find("{}"), 2, topic);
}

// Draws in [0, n) without relying on distribution internals, so the
// sequence is stable across standard libraries.
std::size_t draw(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

}  // namespace

std::vector<std::string> pseudo_words(std::size_t n, std::uint64_t seed) {
  static const std::string consonants = "bdfgklmnprstvz";
  static const std::string vowels = "aeiou";
  std::mt19937_64 rng(seed);
  std::set<std::string> seen;
  std::vector<std::string> out;
  while (out.size() < n) {
    std::string w;
    const std::size_t syllables = 2 + draw(rng, 2);
    for (std::size_t s = 0; s < syllables; ++s) {
      w += consonants[draw(rng, consonants.size())];
      w += vowels[draw(rng, vowels.size())];
    }
    if (seen.insert(w).second) out.push_back(std::move(w));
  }
  return out;
}

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& o) {
  if (o.num_docs == 0) throw ValidationError("synthetic corpus needs at least one document");
  if (o.train_topics > o.num_docs) throw ValidationError("train_topics exceeds num_docs");
  if (o.templates_per_topic > kNumTrainTemplates)
    throw ValidationError("at most " + std::to_string(kNumTrainTemplates) + " templates per topic");
  const std::size_t eligible_topics = o.heldout_from_trained ? o.train_topics : o.num_docs - o.train_topics;
  if (o.heldout_pairs > eligible_topics) throw ValidationError("not enough topics for the held-out pairs");

  if (o.answer_pool < 2) throw ValidationError("answer pool needs at least two words");
  const std::vector<std::string> words = pseudo_words(2 * o.num_docs + o.answer_pool, o.seed);
  const std::vector<std::string> pool(words.begin() + static_cast<std::ptrdiff_t>(2 * o.num_docs), words.end());
  std::mt19937_64 rng(o.seed ^ 0x2545f4914f6cdd1dULL);

  SyntheticCorpus c;
  std::vector<Document> docs;
  std::vector<std::string> topics, responses;
  for (std::size_t i = 0; i < o.num_docs; ++i) {
    const std::string topic = words[2 * i] + " " + words[2 * i + 1];
    const std::size_t first = draw(rng, pool.size());
    const std::size_t second = (first + 1 + draw(rng, pool.size() - 1)) % pool.size();
    const std::string& a1 = pool[first];
    const std::string& a2 = pool[second];
    Document d;
    d.id = "doc" + std::to_string(i);
    d.title = topic;
    d.body = "it likes " + a1 + " and " + a2;
    d.source = Source::smikb;
    docs.push_back(std::move(d));
    topics.push_back(topic);
    responses.push_back("it likes " + a1 + " and " + a2);
  }
  c.kb = KnowledgeBase(std::move(docs));

  for (std::size_t i = 0; i < o.train_topics; ++i) {
    // A rotating window of templates so every template is used.
    const std::size_t first = draw(rng, kNumTrainTemplates);
    for (std::size_t t = 0; t < o.templates_per_topic; ++t) {
      const char* tmpl = kTrainTemplates[(first + t) % kNumTrainTemplates];
      c.train.push_back({fill(tmpl, topics[i]), responses[i], Dataset::synthetic, Split::train});
      c.train_gold.push_back(c.kb.at(i).id);
    }
  }

  // Partial Fisher-Yates over the eligible topics.
  std::vector<std::size_t> eligible;
  const std::size_t lo = o.heldout_from_trained ? 0 : o.train_topics;
  const std::size_t hi = o.heldout_from_trained ? o.train_topics : o.num_docs;
  for (std::size_t i = lo; i < hi; ++i) eligible.push_back(i);
  for (std::size_t i = 0; i < o.heldout_pairs; ++i) {
    std::swap(eligible[i], eligible[i + draw(rng, eligible.size() - i)]);
    const std::size_t topic = eligible[i];
    const char* tmpl = kHeldoutTemplates[i % std::size(kHeldoutTemplates)];
    c.heldout.push_back({fill(tmpl, topics[topic]), responses[topic], Dataset::synthetic, Split::test});
    c.heldout_gold.push_back(c.kb.at(topic).id);
  }
  return c;
}

}  // namespace ragdial::kb
