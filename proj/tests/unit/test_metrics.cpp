#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ragdial/common/errors.hpp"
#include "ragdial/metrics/metrics.hpp"

using namespace ragdial;
using namespace ragdial::metrics;

namespace {

Tokens words(const std::string& s) { return tokenize(s); }

}  // namespace

TEST(Tokenize, LowercasesAndSplitsPunctuation) {
  EXPECT_EQ(tokenize("Hello, World!  ok"), (Tokens{"hello", ",", "world", "!", "ok"}));
  EXPECT_EQ(tokenize("don't"), (Tokens{"don", "'", "t"}));
  EXPECT_TRUE(tokenize("  \t ").empty());
}

TEST(Bleu, PerfectMatchIsHundred) {
  EvalCorpus c;
  c.add(words("the cat sat on the mat"), words("the cat sat on the mat"));
  c.add(words("a b c d"), words("a b c d"));
  EXPECT_NEAR(bleu4(c), 100.0, 1e-9);
}

TEST(Bleu, ZeroOrderFourPrecision) {
  EvalCorpus c;
  c.add(words("the cat sat on the mat"), words("the cat is on the mat"));
  const BleuStats s = bleu_stats(c);
  EXPECT_EQ(s.matches[0], 5u);
  EXPECT_EQ(s.totals[0], 6u);
  EXPECT_EQ(s.matches[1], 3u);
  EXPECT_EQ(s.totals[1], 5u);
  EXPECT_EQ(s.matches[2], 1u);
  EXPECT_EQ(s.totals[2], 4u);
  EXPECT_EQ(s.matches[3], 0u);
  EXPECT_EQ(s.totals[3], 3u);
  EXPECT_EQ(bleu4(c), 0.0);
}

TEST(Bleu, BrevityPenalty) {
  EvalCorpus c;
  c.add(words("a b c d e"), words("a b c d e f"));
  EXPECT_NEAR(bleu4(c), 81.87, 0.01);
  EXPECT_NEAR(bleu4(c), 100.0 * std::exp(1.0 - 6.0 / 5.0), 1e-9);
}

TEST(Bleu, EmptyCorpusAndMismatchedCounts) {
  EXPECT_THROW(bleu4(EvalCorpus()), ValidationError);
  EXPECT_THROW(EvalCorpus({{"a"}}, {}), ValidationError);
}

TEST(Bleu, PermutationInvariant) {
  std::vector<std::string> hyps{"the dog barks loudly at night", "i really like green tea a lot", "see you tomorrow then",
                                "what a lovely day it is"};
  std::vector<std::string> refs{"the dog barks at night", "i really like green tea", "see you tomorrow",
                                "what a lovely sunny day"};
  const double base = bleu4(EvalCorpus::from_text(hyps, refs));
  std::vector<std::size_t> order{2, 0, 3, 1};
  std::vector<std::string> h2, r2;
  for (std::size_t i : order) {
    h2.push_back(hyps[i]);
    r2.push_back(refs[i]);
  }
  EXPECT_EQ(bleu4(EvalCorpus::from_text(h2, r2)), base);
  EXPECT_GT(base, 0.0);
  EXPECT_LT(base, 100.0);
}

TEST(Distinct, DefinitionalCases) {
  EXPECT_NEAR(distinct_n({words("the the the")}, 1), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(distinct_n({words("a b c"), words("d e")}, 1), 1.0);
  EXPECT_EQ(distinct_n({words("a b"), words("a b")}, 2), 0.5);
  EXPECT_EQ(distinct_n({words("a"), words("b")}, 2), 0.0);
  EXPECT_EQ(distinct_n({}, 1), 0.0);
  EXPECT_THROW(distinct_n({words("a")}, 0), ValidationError);
}

TEST(Distinct, DuplicateResponseNeverIncreasesDiversity) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> w(0, 6), len(0, 6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Tokens> corpus;
    for (int i = 0; i < 5; ++i) {
      Tokens t;
      for (int j = len(rng); j > 0; --j) t.push_back(std::string(1, static_cast<char>('a' + w(rng))));
      corpus.push_back(t);
    }
    for (std::size_t n = 1; n <= 2; ++n) {
      const double before = distinct_n(corpus, n);
      auto extended = corpus;
      extended.push_back(corpus[static_cast<std::size_t>(trial) % corpus.size()]);
      EXPECT_LE(distinct_n(extended, n), before + 1e-15);
      EXPECT_GE(before, 0.0);
      EXPECT_LE(before, 1.0);
    }
  }
}

TEST(EvalReport, JsonFields) {
  const EvalCorpus c = EvalCorpus::from_text({"a b c d e"}, {"a b c d e f"});
  const nlohmann::json j = evaluate(c, "rag", 5, 5).to_json();
  EXPECT_NEAR(j.at("bleu4").get<double>(), 81.87, 0.01);
  EXPECT_EQ(j.at("distinct1").get<double>(), 1.0);
  EXPECT_EQ(j.at("distinct1_pct").get<double>(), 100.0);
  EXPECT_EQ(j.at("n_pairs"), 1);
  EXPECT_EQ(j.at("tokenizer_policy"), std::string(kTokenizerPolicy));
  EXPECT_EQ(j.at("model_tag"), "rag");
  EXPECT_EQ(j.at("k"), 5);
  EXPECT_EQ(j.at("beam"), 5);
}
