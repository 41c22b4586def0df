#pragma once

#include <span>
#include <vector>

#include "ragdial/nn/transformer.hpp"
#include "ragdial/text/vocabulary.hpp"

namespace ragdial::rag {

using text::TokenId;
using text::TokenSequence;

// Decoder input for a response under teacher forcing: [BOS] r[0..m-2].
TokenSequence teacher_forcing_input(std::span<const TokenId> response);

// Response tokens followed by EOS, truncated so the whole sequence fits
// the decoder (`max_len` tokens).
TokenSequence encode_response(const text::Vocabulary& vocab, const std::string& response, std::size_t max_len);

// sum_i log p(r_i | context, r_<i). `response` is scored as given, so a
// sequence cut at the length limit (no EOS) is scored without an EOS term.
nn::Var conditional_logprob(nn::Tape& tape, nn::Seq2Seq& gen, std::span<const TokenId> context,
                            std::span<const TokenId> response, const nn::RunMode& mode);
double conditional_logprob(nn::Seq2Seq& gen, std::span<const TokenId> context, std::span<const TokenId> response);

// log sum_j exp(log_prior_j + conditional_j), computed in log space.
nn::Var marginal_logprob(nn::Var log_priors, const std::vector<nn::Var>& conditionals);
double marginal_logprob(std::span<const double> log_priors, std::span<const double> conditionals);

}  // namespace ragdial::rag
