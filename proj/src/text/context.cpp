#include "ragdial/text/context.hpp"

#include <algorithm>

#include "ragdial/common/errors.hpp"

namespace ragdial::text {

namespace {

void require_room(std::size_t max_len) {
  if (max_len < kMinContextLen) {
    throw ValidationError("context max_len must be at least " + std::to_string(kMinContextLen));
  }
}

// How much of (first, second) fits in `room`, cutting `second` before `first`.
std::pair<std::size_t, std::size_t> fit_two(std::size_t first, std::size_t second, std::size_t room) {
  const std::size_t keep_first = std::min(first, room);
  const std::size_t keep_second = std::min(second, room - keep_first);
  return {keep_first, keep_second};
}

}  // namespace

TokenSequence build_query(std::span<const TokenId> utterance, std::size_t max_len) {
  require_room(max_len);
  const std::size_t keep = std::min(utterance.size(), max_len - 2);
  TokenSequence out;
  out.reserve(keep + 2);
  out.push_back(kBos);
  out.insert(out.end(), utterance.end() - static_cast<std::ptrdiff_t>(keep), utterance.end());
  out.push_back(kEos);
  return out;
}

TokenSequence build_context(std::span<const TokenId> title, std::span<const TokenId> body,
                            std::span<const TokenId> utterance, std::size_t max_len) {
  if (title.empty() && body.empty()) return build_query(utterance, max_len);
  require_room(max_len);
  const std::size_t room = max_len - 4;
  const std::size_t keep_u = std::min(utterance.size(), room);
  const auto [keep_t, keep_b] = fit_two(title.size(), body.size(), room - keep_u);

  TokenSequence out;
  out.reserve(keep_t + keep_b + keep_u + 4);
  out.push_back(kBos);
  out.insert(out.end(), title.begin(), title.begin() + static_cast<std::ptrdiff_t>(keep_t));
  out.push_back(kSep);
  out.insert(out.end(), body.begin(), body.begin() + static_cast<std::ptrdiff_t>(keep_b));
  out.push_back(kSep);
  out.insert(out.end(), utterance.end() - static_cast<std::ptrdiff_t>(keep_u), utterance.end());
  out.push_back(kEos);
  return out;
}

TokenSequence build_context(const Vocabulary& v, std::string_view title, std::string_view body,
                            std::string_view utterance, std::size_t max_len) {
  return build_context(v.encode(title), v.encode(body), v.encode(utterance), max_len);
}

TokenSequence build_passage(std::span<const TokenId> title, std::span<const TokenId> body, std::size_t max_len) {
  require_room(max_len);
  const auto [keep_t, keep_b] = fit_two(title.size(), body.size(), max_len - 3);
  TokenSequence out;
  out.reserve(keep_t + keep_b + 3);
  out.push_back(kBos);
  out.insert(out.end(), title.begin(), title.begin() + static_cast<std::ptrdiff_t>(keep_t));
  out.push_back(kSep);
  out.insert(out.end(), body.begin(), body.begin() + static_cast<std::ptrdiff_t>(keep_b));
  out.push_back(kEos);
  return out;
}

}  // namespace ragdial::text
