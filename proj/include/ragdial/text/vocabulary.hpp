#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace ragdial::text {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kSep = 3;
inline constexpr TokenId kUnk = 4;
inline constexpr TokenId kNumSpecials = 5;
inline constexpr TokenId kFirstByte = kNumSpecials;
inline constexpr std::size_t kByteVocabSize = 256 + kNumSpecials;

using Merge = std::pair<TokenId, TokenId>;

// Splits text into pre-tokenization chunks: a boundary falls before every
// whitespace byte that follows a non-whitespace byte, so words carry their
// leading whitespace. Concatenating the chunks gives back the input.
std::vector<std::string_view> pretokenize(std::string_view text);

// Byte-level BPE vocabulary: ids 0..4 are PAD/BOS/EOS/SEP/UNK, ids 5..260
// are the 256 single bytes, and merge i creates id 261 + i.
class Vocabulary {
 public:
  static constexpr int kFormatVersion = 1;

  Vocabulary();
  explicit Vocabulary(std::vector<Merge> merges);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<Merge>& merges() const { return merges_; }
  // Raw bytes of a non-special token.
  const std::string& token_bytes(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::optional<TokenId> find(std::string_view bytes) const;

  TokenSequence encode(std::string_view text) const;
  // Specials decode to nothing; UNK and out-of-range ids decode to U+FFFD.
  std::string decode(std::span<const TokenId> ids) const;
  // Replaces out-of-range ids with UNK.
  TokenSequence sanitize(std::span<const TokenId> ids) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  std::uint64_t fingerprint() const;

 private:
  friend Vocabulary train_bpe(std::span<const std::string> corpus, std::size_t vocab_size);

  void encode_chunk(std::string_view chunk, TokenSequence& out) const;
  void append_merge(Merge m);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
  std::vector<Merge> merges_;
  std::unordered_map<std::uint64_t, std::size_t> merge_rank_;
};

// Replaces every ill-formed UTF-8 sequence with U+FFFD (one per maximal
// invalid subpart). Decoded model output is not guaranteed to be valid.
std::string to_valid_utf8(std::string_view bytes);

// Greedy BPE training: repeatedly merges the most frequent adjacent pair
// (ties broken by the lexicographic order of the pair's byte strings) until
// the vocabulary reaches `vocab_size` or no pair remains. Pairs whose merged
// bytes already name a token are skipped. Deterministic given corpus order.
Vocabulary train_bpe(std::span<const std::string> corpus, std::size_t vocab_size);

}  // namespace ragdial::text
