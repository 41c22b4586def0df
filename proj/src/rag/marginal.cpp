#include "ragdial/rag/marginal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ragdial/common/errors.hpp"
#include "ragdial/nn/ops.hpp"

namespace ragdial::rag {

TokenSequence teacher_forcing_input(std::span<const TokenId> response) {
  TokenSequence in;
  in.reserve(response.size());
  in.push_back(text::kBos);
  if (!response.empty()) in.insert(in.end(), response.begin(), response.end() - 1);
  return in;
}

TokenSequence encode_response(const text::Vocabulary& vocab, const std::string& response, std::size_t max_len) {
  if (max_len < 1) throw ValidationError("response max_len must be positive");
  TokenSequence r = vocab.encode(response);
  if (r.size() > max_len - 1) r.resize(max_len - 1);
  r.push_back(text::kEos);
  return r;
}

nn::Var conditional_logprob(nn::Tape& tape, nn::Seq2Seq& gen, std::span<const TokenId> context,
                            std::span<const TokenId> response, const nn::RunMode& mode) {
  if (response.empty()) throw ValidationError("cannot score an empty response");
  const TokenSequence tgt_in = teacher_forcing_input(response);
  nn::Var logp = gen.forward(tape, context, tgt_in, mode);
  return nn::ops::pick_sum(logp, response);
}

double conditional_logprob(nn::Seq2Seq& gen, std::span<const TokenId> context, std::span<const TokenId> response) {
  nn::Tape tape(false);
  return conditional_logprob(tape, gen, context, response, nn::RunMode::eval()).value().item();
}

nn::Var marginal_logprob(nn::Var log_priors, const std::vector<nn::Var>& conditionals) {
  if (conditionals.empty()) throw ValidationError("marginal over an empty retrieval set");
  if (log_priors.value().size() != conditionals.size()) {
    throw ShapeError("marginal: " + std::to_string(conditionals.size()) + " conditionals for " +
                     std::to_string(log_priors.value().size()) + " priors");
  }
  return nn::ops::logsumexp(nn::ops::add(log_priors, nn::ops::concat_scalars(conditionals)));
}

double marginal_logprob(std::span<const double> log_priors, std::span<const double> conditionals) {
  if (conditionals.empty() || log_priors.size() != conditionals.size()) {
    throw ShapeError("marginal: prior/conditional count mismatch");
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < conditionals.size(); ++j) mx = std::max(mx, log_priors[j] + conditionals[j]);
  if (!std::isfinite(mx)) return mx;
  double z = 0.0;
  for (std::size_t j = 0; j < conditionals.size(); ++j) z += std::exp(log_priors[j] + conditionals[j] - mx);
  return mx + std::log(z);
}

}  // namespace ragdial::rag
