#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>

#include "ragdial/common/errors.hpp"
#include "ragdial/nn/gradcheck.hpp"
#include "ragdial/nn/ops.hpp"
#include "ragdial/rag/decoding.hpp"
#include "ragdial/rag/marginal.hpp"
#include "ragdial/rag/model.hpp"
#include "ragdial/rag/trainer.hpp"
#include "ragdial/text/context.hpp"

using namespace ragdial;
using namespace ragdial::rag;

namespace {

nn::TransformerConfig tiny_config(std::size_t vocab, std::size_t d = 8) {
  nn::TransformerConfig c;
  c.d_model = d;
  c.n_heads = 2;
  c.n_layers = 1;
  c.d_ffn = 2 * d;
  c.max_len = 48;
  c.dropout_rate = 0.0;
  c.vocab_size = vocab;
  return c;
}

// Rescales every weight so a random model has peaked, non-trivial outputs.
void sharpen(nn::ParameterStore& store, double factor) {
  for (auto& [name, p] : store.entries())
    for (double& v : p.value.values()) v *= factor;
}

std::vector<double> normalised_log_priors(std::mt19937_64& rng, std::size_t k) {
  std::normal_distribution<double> nd;
  std::vector<double> s(k);
  for (double& v : s) v = nd(rng);
  const double mx = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double v : s) z += std::exp(v - mx);
  for (double& v : s) v -= mx + std::log(z);
  return s;
}

// Every response of at most `max_len` tokens: EOS-terminated ones, plus
// full-length ones without EOS (the decoder stops there).
std::vector<TokenSequence> enumerate_responses(std::size_t vocab, std::size_t max_len) {
  std::vector<TokenSequence> out;
  std::vector<TokenSequence> frontier{{}};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<TokenSequence> next;
    for (const auto& prefix : frontier) {
      for (TokenId t = 0; t < static_cast<TokenId>(vocab); ++t) {
        TokenSequence s = prefix;
        s.push_back(t);
        if (t == text::kEos || len == max_len) {
          out.push_back(s);
        } else {
          next.push_back(s);
        }
      }
    }
    frontier = std::move(next);
  }
  return out;
}

TokenSequence greedy(nn::Seq2Seq& gen, const TokenSequence& ctx, std::size_t max_new) {
  TokenSequence out;
  nn::Tape tape(false);
  while (out.size() < max_new) {
    TokenSequence in{text::kBos};
    in.insert(in.end(), out.begin(), out.end());
    const nn::Tensor lp = gen.forward(tape, ctx, in, nn::RunMode::eval()).value();
    const auto last = lp.row(lp.rows() - 1);
    const auto best = static_cast<TokenId>(std::max_element(last.begin(), last.end()) - last.begin());
    out.push_back(best);
    if (best == text::kEos) break;
  }
  return out;
}

kb::KnowledgeBase toy_kb() {
  std::vector<kb::Document> docs;
  const char* topics[] = {"apple", "boat", "cloud", "drum", "eagle", "forest", "guitar", "honey"};
  for (std::size_t i = 0; i < 8; ++i) {
    docs.push_back({"d" + std::to_string(i), std::string(topics[i]) + " facts",
                    std::string("all about ") + topics[i], kb::Source::smikb, {}});
  }
  return kb::KnowledgeBase(std::move(docs));
}

struct RagFixture {
  text::Vocabulary vocab;
  kb::KnowledgeBase kb = toy_kb();
  nn::Seq2Seq gen;
  retriever::DualEncoder enc;
  retriever::DenseIndex index;
  RagModel model;

  explicit RagFixture(std::uint64_t seed, std::size_t train_k = 3)
      : gen(tiny_config(text::kByteVocabSize, 16), seed),
        enc(tiny_config(text::kByteVocabSize, 16), seed + 1000),
        index(retriever::build_kb_index(enc, vocab, kb)),
        model(gen, enc, index, kb, vocab, train_k) {}
};

std::vector<EncodedPair> toy_pairs(const text::Vocabulary& vocab, std::size_t n) {
  const char* topics[] = {"apple", "boat", "cloud", "drum", "eagle", "forest", "guitar", "honey"};
  std::vector<EncodedPair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string t = topics[i % 8];
    pairs.push_back(encode_pair(vocab, "tell me about " + t + (i >= 8 ? "s" : ""), t + "!", 16));
  }
  return pairs;
}

}  // namespace

TEST(ConditionalLogprob, UniformModel) {
  nn::Seq2Seq gen(tiny_config(1024), 1);
  gen.params().get("gen.head.w").value.fill(0.0);
  gen.params().get("gen.head.b").value.fill(0.0);
  const TokenSequence ctx{1, 100, 200, 2};
  const TokenSequence r{300, 400, text::kEos};
  EXPECT_NEAR(conditional_logprob(gen, ctx, r), -3.0 * std::log(1024.0), 1e-12);
}

TEST(ConditionalLogprob, MatchesDirectReadout) {
  nn::Seq2Seq gen(tiny_config(5), 2);
  sharpen(gen.params(), 20.0);
  const TokenSequence ctx{1, 3, 4, 2};
  const TokenSequence r{4, text::kEos};
  nn::Tape tape(false);
  const nn::Tensor rows = gen.forward(tape, ctx, TokenSequence{text::kBos, 4}, nn::RunMode::eval()).value();
  const double expected = std::log(std::exp(rows.at(0, 4)) * std::exp(rows.at(1, text::kEos)));
  EXPECT_NEAR(conditional_logprob(gen, ctx, r), expected, 1e-12);
  EXPECT_LE(conditional_logprob(gen, ctx, r), 0.0);
  EXPECT_THROW(conditional_logprob(gen, ctx, TokenSequence{}), ValidationError);
}

TEST(MarginalLogprob, DegenerateCasesAndBounds) {
  const std::vector<double> one_prior{0.0};
  const std::vector<double> one_cond{-7.25};
  EXPECT_EQ(marginal_logprob(one_prior, one_cond), -7.25);

  const double lp = -std::log(3.0);
  const std::vector<double> eq_priors{lp, lp, lp};
  const std::vector<double> same{-4.5, -4.5, -4.5};
  EXPECT_NEAR(marginal_logprob(eq_priors, same), -4.5, 1e-15);

  const std::vector<double> deep{-1e4, -1e4 - 1.0, -1e4 - 2.0};
  const double m = marginal_logprob(eq_priors, deep);
  EXPECT_TRUE(std::isfinite(m));

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ud(-50.0, 0.0);
  for (int i = 0; i < 200; ++i) {
    const auto priors = normalised_log_priors(rng, 4);
    std::vector<double> conds(4);
    for (double& c : conds) c = ud(rng);
    const double v = marginal_logprob(priors, conds);
    EXPECT_GE(v, *std::min_element(conds.begin(), conds.end()) - 1e-12);
    EXPECT_LE(v, *std::max_element(conds.begin(), conds.end()) + 1e-12);
  }
}

TEST(MarginalLogprob, VarMatchesScalar) {
  nn::Tape tape(false);
  const std::vector<double> priors{-0.2, -1.7};
  const std::vector<double> conds{-3.0, -1.0};
  nn::Var lp = tape.constant(nn::Tensor({1, 2}, priors));
  const double v =
      marginal_logprob(lp, {tape.constant(nn::Tensor::scalar(conds[0])), tape.constant(nn::Tensor::scalar(conds[1]))})
          .value()
          .item();
  EXPECT_EQ(v, marginal_logprob(priors, conds));
}

TEST(MarginalLogprob, NormalisesOverEnumerableSpace) {
  nn::Seq2Seq gen(tiny_config(5), 3);
  sharpen(gen.params(), 25.0);
  std::mt19937_64 rng(4);
  const auto priors = normalised_log_priors(rng, 3);
  const std::vector<TokenSequence> ctxs{{1, 3, 4, 2}, {1, 4, 4, 0, 2}, {1, 2}};
  double total = 0.0;
  for (const auto& r : enumerate_responses(5, 2)) {
    std::vector<double> conds;
    for (const auto& c : ctxs) conds.push_back(conditional_logprob(gen, c, r));
    total += std::exp(marginal_logprob(priors, conds));
  }
  EXPECT_NEAR(total, 1.0, 1e-6);
}

TEST(BeamSearch, WidthOneIsGreedy) {
  nn::Seq2Seq gen(tiny_config(7), 5);
  sharpen(gen.params(), 15.0);
  const TokenSequence ctx{1, 5, 6, 2};
  const auto beams = beam_search(gen, ctx, 1, 6);
  ASSERT_EQ(beams.size(), 1u);
  EXPECT_EQ(beams[0].tokens, greedy(gen, ctx, 6));
  EXPECT_NEAR(beams[0].logprob, conditional_logprob(gen, ctx, beams[0].tokens), 1e-9);

  GenerationConfig cfg;
  cfg.k = 1;
  cfg.beam_size = 1;
  cfg.max_new_tokens = 6;
  const auto hyps = generate_from_contexts(gen, {{"d", ctx, 0.0}}, cfg);
  EXPECT_EQ(hyps.front().tokens, beams[0].tokens);
}

TEST(Generate, ExhaustiveBeamFindsBruteForceArgmax) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    nn::Seq2Seq gen(tiny_config(5), 100 + seed);
    sharpen(gen.params(), 25.0);
    std::mt19937_64 rng(seed);
    const auto priors = normalised_log_priors(rng, 2);
    const std::vector<DocContext> docs{{"a", {1, 3, 4, 2}, priors[0]}, {"b", {1, 4, 0, 2}, priors[1]}};
    GenerationConfig cfg;
    cfg.k = 2;
    cfg.beam_size = 25;
    cfg.max_new_tokens = 2;
    for (DecodingMode mode : {DecodingMode::fast, DecodingMode::thorough}) {
      cfg.mode = mode;
      const auto hyps = generate_from_contexts(gen, docs, cfg);
      TokenSequence best;
      double best_score = -std::numeric_limits<double>::infinity();
      for (const auto& r : enumerate_responses(5, 2)) {
        const std::vector<double> conds{conditional_logprob(gen, docs[0].context, r),
                                        conditional_logprob(gen, docs[1].context, r)};
        const double m = marginal_logprob(priors, conds);
        if (m > best_score) {
          best_score = m;
          best = r;
        }
      }
      EXPECT_EQ(hyps.front().tokens, best) << "seed " << seed;
      EXPECT_NEAR(hyps.front().marginal_logprob, best_score, 1e-9);
      EXPECT_EQ(hyps.size(), 21u);
    }
  }
}

TEST(Generate, ThoroughDominatesFastAndIsSelfConsistent) {
  nn::Seq2Seq gen(tiny_config(9), 8);
  sharpen(gen.params(), 15.0);
  std::mt19937_64 rng(2);
  const auto priors = normalised_log_priors(rng, 3);
  const std::vector<DocContext> docs{
      {"a", {1, 5, 6, 2}, priors[0]}, {"b", {1, 7, 8, 2}, priors[1]}, {"c", {1, 6, 6, 6, 2}, priors[2]}};
  GenerationConfig cfg;
  cfg.k = 3;
  cfg.beam_size = 3;
  cfg.max_new_tokens = 5;
  cfg.mode = DecodingMode::fast;
  const auto fast = generate_from_contexts(gen, docs, cfg);
  cfg.mode = DecodingMode::thorough;
  const auto thorough = generate_from_contexts(gen, docs, cfg);
  ASSERT_EQ(fast.size(), thorough.size());
  for (const auto& f : fast) {
    auto it = std::find_if(thorough.begin(), thorough.end(), [&](const auto& t) { return t.tokens == f.tokens; });
    ASSERT_NE(it, thorough.end());
    EXPECT_GE(it->marginal_logprob, f.marginal_logprob - 1e-12);
    EXPECT_LE(f.marginal_logprob, 0.0);
  }
  // Rescore the best thorough hypothesis independently.
  const auto& best = thorough.front();
  std::vector<double> conds;
  for (const auto& d : docs) conds.push_back(conditional_logprob(gen, d.context, best.tokens));
  EXPECT_NEAR(best.marginal_logprob, marginal_logprob(priors, conds), 1e-9);
  EXPECT_EQ(best.per_doc_logprob.size(), 3u);
  // Unique token sequences, ranked.
  for (std::size_t i = 1; i < thorough.size(); ++i) {
    EXPECT_NE(thorough[i].tokens, thorough[i - 1].tokens);
    EXPECT_GE(thorough[i - 1].score, thorough[i].score);
  }
}

TEST(Generate, ConfigValidationAndLengthPenalty) {
  GenerationConfig cfg;
  cfg.k = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg.k = 1;
  cfg.beam_size = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  EXPECT_EQ(length_normalised(-6.0, 3, 0.0), -6.0);
  EXPECT_DOUBLE_EQ(length_normalised(-6.0, 3, 1.0), -2.0);
  EXPECT_EQ(parse_decoding_mode("thorough"), DecodingMode::thorough);
  EXPECT_THROW(parse_decoding_mode("sampling"), ValidationError);
}

TEST(RagModel, LossIsPositiveAndPriorGradientReachesQueryEncoder) {
  RagFixture fx(1);
  const EncodedPair pair = encode_pair(fx.vocab, "tell me about boats", "boat!", 16);
  nn::Tape tape(false);
  const double loss = fx.model.loss(tape, pair, nn::RunMode::eval()).value().item();
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_GT(loss, 0.0);

  // Finite-difference spot check on one query-encoder weight.
  nn::Parameter& w = fx.enc.query_params().get("qenc.layer0.ffn.fc1.w");
  fx.enc.query_params().zero_grad();
  {
    nn::Tape t(true);
    t.backward(fx.model.loss(t, pair, nn::RunMode::eval()));
  }
  const double analytic = w.grad[3];
  const double h = 1e-5;
  const double saved = w.value[3];
  auto at = [&](double x) {
    w.value[3] = x;
    nn::Tape t(false);
    return fx.model.loss(t, pair, nn::RunMode::eval()).value().item();
  };
  const double numeric = (at(saved + h) - at(saved - h)) / (2 * h);
  w.value[3] = saved;
  EXPECT_NE(analytic, 0.0);
  EXPECT_NEAR(analytic, numeric, 1e-4 * std::max(std::abs(analytic), 1e-6));
}

TEST(RagModel, EndToEndGradientCheck) {
  RagFixture fx(2);
  sharpen(fx.gen.params(), 5.0);
  const EncodedPair pair = encode_pair(fx.vocab, "apple", "red", 16);
  auto loss_fn = [&](nn::Tape& t) { return fx.model.loss(t, pair, nn::RunMode::eval()); };
  nn::GradCheckOptions opts;
  opts.points = 4;
  opts.eps = 1e-4;
  for (std::uint64_t seed = 0; seed < 2; ++seed) {
    opts.sample_total = 5;
    opts.seed = seed;
    const auto r = nn::gradient_check(loss_fn, {&fx.gen.params(), &fx.enc.query_params()}, opts);
    EXPECT_LT(r.max_rel_error, 1e-3) << r.worst_param;
  }
}

TEST(RagModel, RejectsIndexFromAnotherEncoderOrKb) {
  RagFixture fx(3);
  retriever::DualEncoder other(tiny_config(text::kByteVocabSize, 16), 9);
  EXPECT_THROW(RagModel(fx.gen, other, fx.index, fx.kb, fx.vocab), StateMismatchError);
  const kb::KnowledgeBase smaller({fx.kb.at(0)});
  EXPECT_THROW(RagModel(fx.gen, fx.enc, fx.index, smaller, fx.vocab), StateMismatchError);
}

TEST(RagModel, GenerateReturnsRetrievedDocsAndRecordRoundTrips) {
  RagFixture fx(4);
  GenerationConfig cfg;
  cfg.k = 3;
  cfg.beam_size = 2;
  cfg.max_new_tokens = 4;
  const TokenSequence utt = fx.vocab.encode("drums?");
  const Generation g = fx.model.generate(utt, cfg);
  ASSERT_EQ(g.retrieved.size(), 3u);
  EXPECT_EQ(g.best.tokens, g.candidates.front().tokens);
  EXPECT_LE(g.best.marginal_logprob, 0.0);

  const GenerationRecord rec = make_record(fx.vocab, "drums?", g, cfg, true);
  const GenerationRecord back = GenerationRecord::from_json(nlohmann::json::parse(rec.to_json().dump()));
  EXPECT_EQ(back.to_json(), rec.to_json());
  EXPECT_EQ(back.k, 3u);
  EXPECT_THROW(GenerationRecord::from_json(nlohmann::json{{"utterance", "x"}}), ValidationError);
}

TEST(BaselineModel, GreedyAndIndependentOfRetrieval) {
  nn::Seq2Seq gen(tiny_config(text::kByteVocabSize, 16), 6);
  sharpen(gen.params(), 10.0);
  BaselineModel base(gen);
  const text::Vocabulary vocab;
  const TokenSequence utt = vocab.encode("hello");
  GenerationConfig cfg;
  cfg.beam_size = 1;
  cfg.max_new_tokens = 5;
  const Generation g = base.generate(utt, cfg);
  EXPECT_TRUE(g.retrieved.empty());
  EXPECT_EQ(g.best.tokens, greedy(gen, text::build_context({}, {}, utt, gen.config().max_len), 5));
  EXPECT_EQ(base.trainable().size(), 1u);
}

TEST(Training, LossHalvesOnToyCorpus) {
  std::vector<double> ratios;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RagFixture fx(10 + seed);
    const auto pairs = toy_pairs(fx.vocab, 16);
    nn::Adam adam(nn::AdamConfig{1e-2});
    TrainLoop loop({seed, 0, 200}, pairs.size());
    std::vector<double> losses;
    loop.run(fx.model, pairs, adam, 0, [&](const StepLog& s) {
      losses.push_back(s.result.loss);
      return true;
    });
    ASSERT_EQ(losses.size(), 200u);
    const double head = std::accumulate(losses.begin(), losses.begin() + 16, 0.0) / 16.0;
    const double tail = std::accumulate(losses.end() - 16, losses.end(), 0.0) / 16.0;
    ratios.push_back(tail / head);
  }
  std::sort(ratios.begin(), ratios.end());
  EXPECT_LE(ratios[2], 0.5);
}

TEST(Training, ResumedRunMatchesUninterruptedRun) {
  auto fingerprint_after = [](std::size_t split_at) {
    RagFixture fx(20);
    const auto pairs = toy_pairs(fx.vocab, 6);
    TrainLoop loop({7, 2, 0}, pairs.size());
    auto adam = std::make_unique<nn::Adam>(nn::AdamConfig{1e-2});
    std::vector<double> losses;
    auto record = [&](const StepLog& s) {
      losses.push_back(s.result.loss);
      return s.step != split_at;
    };
    loop.run(fx.model, pairs, *adam, 0, record);
    if (split_at < loop.total_steps()) {
      // Simulate a restart: fresh optimizer restored from exported state.
      auto restored = std::make_unique<nn::Adam>(adam->config());
      restored->import_state(adam->export_state(), adam->steps_taken());
      adam = std::move(restored);
      loop.run(fx.model, pairs, *adam, split_at, record);
    }
    return std::make_pair(losses, fx.gen.params().fingerprint() ^ fx.enc.query_params().fingerprint());
  };
  const auto full = fingerprint_after(1000);
  const auto resumed = fingerprint_after(5);
  EXPECT_EQ(full.first.size(), 12u);
  EXPECT_EQ(full.first, resumed.first);
  EXPECT_EQ(full.second, resumed.second);
}

TEST(Training, ScheduleIsAPermutationPerEpoch) {
  TrainLoop loop({3, 3, 0}, 5);
  EXPECT_EQ(loop.total_steps(), 15u);
  for (std::size_t e = 0; e < 3; ++e) {
    std::vector<std::size_t> seen;
    for (std::size_t i = 0; i < 5; ++i) seen.push_back(loop.example_at(e * 5 + i));
    std::sort(seen.begin(), seen.end());
    EXPECT_EQ(seen, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  }
  EXPECT_THROW(TrainLoop({0, 1, 0}, 0), ValidationError);
}
