#include "ragdial/rag/model.hpp"

#include <cmath>

#include "ragdial/common/errors.hpp"
#include "ragdial/nn/ops.hpp"
#include "ragdial/text/context.hpp"

namespace ragdial::rag {

EncodedPair encode_pair(const text::Vocabulary& vocab, const std::string& utterance, const std::string& response,
                        std::size_t max_response_len) {
  return {vocab.encode(utterance), encode_response(vocab, response, max_response_len)};
}

RagModel::RagModel(nn::Seq2Seq& gen, retriever::DualEncoder& enc, const retriever::DenseIndex& index,
                   const kb::KnowledgeBase& kb, const text::Vocabulary& vocab, std::size_t train_k)
    : gen_(gen), enc_(enc), index_(index), kb_(kb), train_k_(0) {
  set_train_k(train_k);
  if (index.size() == 0) throw ValidationError("empty index");
  retriever::require_fresh_index(enc, index);
  docs_.reserve(index.size());
  for (const std::string& id : index.doc_ids()) {
    auto pos = kb.index_of(id);
    if (!pos) throw StateMismatchError("index document missing from knowledge base: " + id);
    const kb::Document& d = kb.at(*pos);
    docs_.push_back({*pos, vocab.encode(d.title), vocab.encode(d.body)});
  }
}

void RagModel::set_train_k(std::size_t k) {
  if (k < 1) throw ValidationError("k must be at least 1");
  train_k_ = k;
}

void RagModel::set_query_lr_scale(double scale) {
  if (!(scale >= 0.0) || !std::isfinite(scale)) throw ValidationError("query lr scale must be finite and >= 0");
  query_lr_scale_ = scale;
}

const kb::Document& RagModel::document_at_row(std::size_t row) const { return kb_.at(docs_.at(row).kb_index); }

std::vector<DocContext> RagModel::contexts(const TokenSequence& utterance,
                                           const retriever::Retrieval& retrieval) const {
  std::vector<DocContext> out;
  out.reserve(retrieval.results.size());
  const nn::Tensor& lp = retrieval.log_priors.value();
  for (std::size_t j = 0; j < retrieval.results.size(); ++j) {
    const auto& res = retrieval.results[j];
    const PreparedDoc& d = docs_.at(res.row);
    out.push_back({res.doc_id, text::build_context(d.title, d.body, utterance, gen_.config().max_len), lp[j]});
  }
  return out;
}

nn::Var RagModel::loss(nn::Tape& tape, const EncodedPair& pair, const nn::RunMode& mode) {
  retriever::Retrieval r = retriever::retrieve(tape, enc_, index_, pair.utterance, train_k_, mode);
  std::vector<DocContext> ctx = contexts(pair.utterance, r);
  std::vector<nn::Var> conds;
  conds.reserve(ctx.size());
  for (const DocContext& c : ctx) conds.push_back(conditional_logprob(tape, gen_, c.context, pair.response, mode));
  return nn::ops::scale(marginal_logprob(r.log_priors, conds), -1.0);
}

Generation RagModel::generate(const TokenSequence& utterance, const GenerationConfig& cfg) {
  cfg.validate();
  nn::Tape tape(false);
  retriever::Retrieval r = retriever::retrieve(tape, enc_, index_, utterance, cfg.k, nn::RunMode::eval());
  Generation g;
  g.candidates = generate_from_contexts(gen_, contexts(utterance, r), cfg);
  g.best = g.candidates.front();
  g.retrieved = std::move(r.results);
  return g;
}

std::vector<nn::ParameterStore*> RagModel::trainable() { return {&gen_.params(), &enc_.query_params()}; }

nn::Var BaselineModel::loss(nn::Tape& tape, const EncodedPair& pair, const nn::RunMode& mode) {
  const TokenSequence ctx = text::build_context({}, {}, pair.utterance, gen_.config().max_len);
  return nn::ops::scale(conditional_logprob(tape, gen_, ctx, pair.response, mode), -1.0);
}

Generation BaselineModel::generate(const TokenSequence& utterance, const GenerationConfig& cfg) {
  std::vector<DocContext> docs{{"", text::build_context({}, {}, utterance, gen_.config().max_len), 0.0}};
  Generation g;
  g.candidates = generate_from_contexts(gen_, docs, cfg);
  for (Hypothesis& h : g.candidates) h.per_doc_logprob.clear();
  g.best = g.candidates.front();
  return g;
}

nlohmann::json GenerationRecord::to_json() const {
  nlohmann::json ret = nlohmann::json::array();
  for (const auto& r : retrieved) ret.push_back({{"doc_id", r.doc_id}, {"score", r.score}, {"prob", r.prob}});
  return {{"utterance", utterance},
          {"response", response},
          {"marginal_logprob", marginal_logprob},
          {"retrieved", ret},
          {"mode", rag::to_string(mode)},
          {"k", k},
          {"beam", beam}};
}

GenerationRecord GenerationRecord::from_json(const nlohmann::json& j) {
  try {
    GenerationRecord rec;
    rec.utterance = j.at("utterance").get<std::string>();
    rec.response = j.at("response").get<std::string>();
    rec.marginal_logprob = j.at("marginal_logprob").get<double>();
    for (const auto& r : j.at("retrieved")) {
      retriever::RetrievalResult res;
      res.doc_id = r.at("doc_id").get<std::string>();
      res.score = r.at("score").get<double>();
      res.prob = r.at("prob").get<double>();
      rec.retrieved.push_back(std::move(res));
    }
    rec.mode = parse_decoding_mode(j.at("mode").get<std::string>());
    rec.k = j.at("k").get<std::size_t>();
    rec.beam = j.at("beam").get<std::size_t>();
    return rec;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad generation record: ") + e.what());
  }
}

GenerationRecord make_record(const text::Vocabulary& vocab, const std::string& utterance, const Generation& g,
                             const GenerationConfig& cfg, bool with_retrieval) {
  GenerationRecord rec;
  rec.utterance = utterance;
  rec.response = text::to_valid_utf8(vocab.decode(g.best.tokens));
  rec.marginal_logprob = g.best.marginal_logprob;
  rec.retrieved = g.retrieved;
  rec.mode = cfg.mode;
  rec.k = with_retrieval ? cfg.k : 0;
  rec.beam = cfg.beam_size;
  return rec;
}

}  // namespace ragdial::rag
