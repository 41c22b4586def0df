#pragma once

#include <span>
#include <string_view>

#include "ragdial/text/vocabulary.hpp"

namespace ragdial::text {

inline constexpr std::size_t kMinContextLen = 8;

// Generator input: [BOS] title [SEP] body [SEP] utterance [EOS], or
// [BOS] utterance [EOS] when both title and body are empty. On overflow the
// body is cut from its end first, then the title; the utterance is only cut
// (from its start, keeping the latest words) once no context is left.
TokenSequence build_context(std::span<const TokenId> title, std::span<const TokenId> body,
                            std::span<const TokenId> utterance, std::size_t max_len);
TokenSequence build_context(const Vocabulary& v, std::string_view title, std::string_view body,
                            std::string_view utterance, std::size_t max_len);

// Passage encoder input: [BOS] title [SEP] body [EOS], body cut first.
TokenSequence build_passage(std::span<const TokenId> title, std::span<const TokenId> body, std::size_t max_len);

// Query encoder input: [BOS] utterance [EOS], keeping the latest words.
TokenSequence build_query(std::span<const TokenId> utterance, std::size_t max_len);

}  // namespace ragdial::text
