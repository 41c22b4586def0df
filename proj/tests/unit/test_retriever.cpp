#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>

#include "ragdial/common/errors.hpp"
#include "ragdial/nn/ops.hpp"
#include "ragdial/retriever/dual_encoder.hpp"

using namespace ragdial;
using namespace ragdial::retriever;

namespace {

nn::TransformerConfig tiny_config() {
  nn::TransformerConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 1;
  c.d_ffn = 16;
  c.max_len = 32;
  c.dropout_rate = 0.0;
  c.vocab_size = text::kByteVocabSize;
  return c;
}

DenseIndex random_index(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  nn::Tensor rows = nn::Tensor::matrix(n, d);
  for (double& v : rows.values()) v = nd(rng);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("doc" + std::to_string(i));
  return DenseIndex::build(std::move(rows), std::move(ids), 77);
}

std::vector<std::pair<double, std::string>> brute_force(const DenseIndex& index, std::span<const double> q) {
  std::vector<std::pair<double, std::string>> all;
  for (std::size_t i = 0; i < index.size(); ++i) {
    double s = 0.0;
    const auto r = index.row(i);
    for (std::size_t c = 0; c < q.size(); ++c) s += q[c] * r[c];
    all.emplace_back(s, index.doc_ids()[i]);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  return all;
}

kb::KnowledgeBase tiny_kb() {
  return kb::KnowledgeBase({{"a", "apples", "red fruit", kb::Source::smikb, {}},
                            {"b", "boats", "float on water", kb::Source::smikb, {}},
                            {"c", "apples", "red fruit", kb::Source::wiki, {}},
                            {"d", "cars", "drive on roads", kb::Source::wiki, {}}});
}

}  // namespace

TEST(DenseIndex, EmptyAndShapeErrors) {
  try {
    DenseIndex::build(nn::Tensor::matrix(0, 4), {}, 0);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("empty index"), std::string::npos);
  }
  EXPECT_THROW(DenseIndex::build(nn::Tensor::matrix(2, 4), {"a"}, 0), ShapeError);
  const DenseIndex idx = random_index(3, 4, 1);
  EXPECT_THROW(idx.search_topk(std::vector<double>(3, 0.0), 1), ShapeError);
  EXPECT_THROW(idx.search_topk(std::vector<double>(4, 0.0), 0), ValidationError);
}

TEST(DenseIndex, OrthonormalRows) {
  nn::Tensor rows = nn::Tensor::matrix(4, 4);
  for (std::size_t i = 0; i < 4; ++i) rows.at(i, i) = 1.0;
  const DenseIndex idx = DenseIndex::build(rows, {"w", "x", "y", "z"}, 0);
  const auto top = idx.search_topk(std::vector<double>{0, 0, 1, 0}, 1);
  ASSERT_EQ(top.size(), 1u);
  EXPECT_EQ(top[0].doc_id, "y");
  EXPECT_EQ(top[0].score, 1.0);
  // k > n returns everything; zero-score ties break by ascending id.
  const auto all = idx.search_topk(std::vector<double>{0, 0, 1, 0}, 10);
  ASSERT_EQ(all.size(), 4u);
  EXPECT_EQ(all[1].doc_id, "w");
  EXPECT_EQ(all[3].doc_id, "z");
}

TEST(DenseIndex, MatchesBruteForceOracle) {
  const DenseIndex idx = random_index(1000, 16, 5);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> q(16);
    for (double& v : q) v = nd(rng);
    const auto top = idx.search_topk(q, 10);
    const auto oracle = brute_force(idx, q);
    ASSERT_EQ(top.size(), 10u);
    for (std::size_t i = 0; i < 10; ++i) {
      EXPECT_EQ(top[i].doc_id, oracle[i].second);
      EXPECT_EQ(top[i].score, oracle[i].first);
    }
    // Scaling the query keeps the ranking.
    for (double& v : q) v *= 3.5;
    const auto scaled = idx.search_topk(q, 10);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(scaled[i].doc_id, top[i].doc_id);
  }
}

TEST(DenseIndex, BuildIsFastAndSaveLoadIsBitExact) {
  const auto t0 = std::chrono::steady_clock::now();
  const DenseIndex idx = random_index(1000, 16, 8);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1.0);
  const auto path = std::filesystem::temp_directory_path() / "ragdial_index_test.bin";
  idx.save(path);
  const DenseIndex back = DenseIndex::load(path);
  EXPECT_EQ(back.embeddings(), idx.embeddings());
  EXPECT_EQ(back.doc_ids(), idx.doc_ids());
  EXPECT_EQ(back.fingerprint(), idx.fingerprint());
  EXPECT_EQ(back.rehash(), idx.content_hash());
  std::vector<double> q(16, 0.25);
  const auto a = idx.search_topk(q, 7), b = back.search_topk(q, 7);
  for (std::size_t i = 0; i < 7; ++i) {
    EXPECT_EQ(a[i].doc_id, b[i].doc_id);
    EXPECT_EQ(a[i].score, b[i].score);
  }
  std::filesystem::remove(path);
}

TEST(DocPriors, HandValues) {
  auto one = doc_priors({{"a", 0, 3.0, 0.0}});
  EXPECT_DOUBLE_EQ(one[0].prob, 1.0);
  auto three = doc_priors({{"a", 0, 0.0, 0.0}, {"b", 1, 0.0, 0.0}, {"c", 2, 0.0, 0.0}});
  for (const auto& r : three) EXPECT_NEAR(r.prob, 1.0 / 3.0, 1e-15);
  auto two = doc_priors({{"a", 0, 1.0, 0.0}, {"b", 1, 0.0, 0.0}});
  EXPECT_NEAR(two[0].prob, 0.7311, 1e-4);
  EXPECT_NEAR(two[1].prob, 0.2689, 1e-4);
  EXPECT_NEAR(two[0].prob, std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-15);
  auto shifted = doc_priors({{"a", 0, 101.0, 0.0}, {"b", 1, 100.0, 0.0}});
  EXPECT_NEAR(shifted[0].prob, two[0].prob, 1e-12);
}

TEST(DualEncoder, PassageEmbeddings) {
  const nn::TransformerConfig cfg = tiny_config();
  DualEncoder enc(cfg, 3);
  const text::Vocabulary vocab;
  const kb::KnowledgeBase kb = tiny_kb();
  const nn::Tensor e1 = embed_passages(enc, vocab, kb, 1);
  const nn::Tensor e32 = embed_passages(enc, vocab, kb, 32);
  ASSERT_EQ(e1.shape(), (nn::Shape{4, cfg.d_model}));
  for (std::size_t i = 0; i < e1.size(); ++i) EXPECT_NEAR(e1[i], e32[i], 1e-6);
  for (std::size_t c = 0; c < cfg.d_model; ++c) EXPECT_EQ(e1.at(0, c), e1.at(2, c));

  const kb::KnowledgeBase single({{"z", "t", "b", kb::Source::smikb, {}}});
  EXPECT_EQ(embed_passages(enc, vocab, single, 4).shape(), (nn::Shape{1, cfg.d_model}));
}

TEST(DualEncoder, SharedInitCopiesPassageWeights) {
  DualEncoder enc(tiny_config(), 3);
  const auto& q = enc.query_params().entries();
  const auto& p = enc.passage_params().entries();
  ASSERT_EQ(q.size(), p.size());
  for (auto qi = q.begin(), pi = p.begin(); qi != q.end(); ++qi, ++pi) {
    EXPECT_EQ(qi->first.substr(4), pi->first.substr(4));
    EXPECT_EQ(qi->second.value, pi->second.value);
  }
  DualEncoder independent(tiny_config(), 3, false);
  EXPECT_NE(independent.query_params().get("qenc.tok").value, independent.passage_params().get("penc.tok").value);
}

TEST(Retrieve, PriorsStaleIndexAndGradientPath) {
  const nn::TransformerConfig cfg = tiny_config();
  DualEncoder enc(cfg, 4);
  const text::Vocabulary vocab;
  const kb::KnowledgeBase kb = tiny_kb();
  const DenseIndex index = build_kb_index(enc, vocab, kb);
  EXPECT_EQ(index.fingerprint(), enc.passage_fingerprint());

  const auto one = retrieve(enc, index, vocab, "apples please", 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_DOUBLE_EQ(one[0].prob, 1.0);
  const auto four = retrieve(enc, index, vocab, "apples please", 4);
  ASSERT_EQ(four.size(), 4u);
  double total = 0.0;
  for (std::size_t i = 0; i < four.size(); ++i) {
    total += four[i].prob;
    if (i > 0) EXPECT_GE(four[i - 1].score, four[i].score);
  }
  EXPECT_NEAR(total, 1.0, 1e-12);

  // Gradients reach the query encoder through the priors.
  enc.query_params().zero_grad();
  {
    nn::Tape tape(true);
    Retrieval r = retrieve(tape, enc, index, vocab.encode("boats"), 3, nn::RunMode::eval());
    tape.backward(nn::ops::sum(nn::ops::row(r.log_priors, 0)));
  }
  double grad_norm = 0.0;
  for (const auto& [name, p] : enc.query_params().entries())
    for (double g : p.grad.values()) grad_norm += g * g;
  EXPECT_GT(grad_norm, 0.0);

  DualEncoder other(cfg, 5);
  EXPECT_THROW(require_fresh_index(other, index), StateMismatchError);
  EXPECT_THROW(retrieve(other, index, vocab, "apples", 1), StateMismatchError);
}
