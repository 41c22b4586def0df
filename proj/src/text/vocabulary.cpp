#include "ragdial/text/vocabulary.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>

#include "ragdial/common/atomic_file.hpp"
#include "ragdial/common/errors.hpp"
#include "ragdial/common/hash.hpp"

namespace ragdial::text {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::uint64_t pair_key(TokenId a, TokenId b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

const std::string kSpecialNames[kNumSpecials] = {"<pad>", "<s>", "</s>", "<sep>", "<unk>"};

}  // namespace

std::vector<std::string_view> pretokenize(std::string_view text) {
  std::vector<std::string_view> chunks;
  std::size_t start = 0;
  for (std::size_t i = 1; i < text.size(); ++i) {
    if (is_space(text[i]) && !is_space(text[i - 1])) {
      chunks.push_back(text.substr(start, i - start));
      start = i;
    }
  }
  if (start < text.size()) chunks.push_back(text.substr(start));
  return chunks;
}

Vocabulary::Vocabulary() {
  tokens_.reserve(kByteVocabSize);
  for (const auto& name : kSpecialNames) tokens_.push_back(name);
  for (int b = 0; b < 256; ++b) {
    std::string s(1, static_cast<char>(b));
    ids_.emplace(s, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(std::move(s));
  }
}

Vocabulary::Vocabulary(std::vector<Merge> merges) : Vocabulary() {
  for (const Merge& m : merges) append_merge(m);
}

void Vocabulary::append_merge(Merge m) {
  const auto n = static_cast<TokenId>(tokens_.size());
  if (m.first < kFirstByte || m.second < kFirstByte || m.first >= n || m.second >= n) {
    throw ValidationError("merge refers to a symbol that does not exist yet");
  }
  std::string merged = tokens_[static_cast<std::size_t>(m.first)] + tokens_[static_cast<std::size_t>(m.second)];
  if (ids_.count(merged)) throw ValidationError("merge produces a duplicate token");
  merge_rank_.emplace(pair_key(m.first, m.second), merges_.size());
  merges_.push_back(m);
  ids_.emplace(merged, n);
  tokens_.push_back(std::move(merged));
}

std::optional<TokenId> Vocabulary::find(std::string_view bytes) const {
  auto it = ids_.find(std::string(bytes));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

void Vocabulary::encode_chunk(std::string_view chunk, TokenSequence& out) const {
  TokenSequence sym;
  sym.reserve(chunk.size());
  for (char c : chunk) sym.push_back(kFirstByte + static_cast<unsigned char>(c));
  while (sym.size() > 1) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
      auto it = merge_rank_.find(pair_key(sym[i], sym[i + 1]));
      if (it != merge_rank_.end()) best_rank = std::min(best_rank, it->second);
    }
    if (best_rank == std::numeric_limits<std::size_t>::max()) break;
    const Merge m = merges_[best_rank];
    const auto merged_id = static_cast<TokenId>(kByteVocabSize + best_rank);
    TokenSequence next;
    next.reserve(sym.size());
    for (std::size_t i = 0; i < sym.size();) {
      if (i + 1 < sym.size() && sym[i] == m.first && sym[i + 1] == m.second) {
        next.push_back(merged_id);
        i += 2;
      } else {
        next.push_back(sym[i++]);
      }
    }
    sym.swap(next);
  }
  out.insert(out.end(), sym.begin(), sym.end());
}

TokenSequence Vocabulary::encode(std::string_view text) const {
  TokenSequence out;
  for (std::string_view chunk : pretokenize(text)) encode_chunk(chunk, out);
  return out;
}

std::string to_valid_utf8(std::string_view bytes) {
  static constexpr std::string_view kReplacement = "\xEF\xBF\xBD";
  std::string out;
  out.reserve(bytes.size());
  std::size_t i = 0;
  const std::size_t n = bytes.size();
  auto byte = [&](std::size_t k) { return static_cast<unsigned char>(bytes[k]); };
  while (i < n) {
    const unsigned char c = byte(i);
    std::size_t len = 0;
    unsigned char lo = 0x80, hi = 0xBF;
    if (c < 0x80) {
      out += static_cast<char>(c);
      ++i;
      continue;
    } else if (c >= 0xC2 && c <= 0xDF) {
      len = 2;
    } else if (c >= 0xE0 && c <= 0xEF) {
      len = 3;
      if (c == 0xE0) lo = 0xA0;
      if (c == 0xED) hi = 0x9F;
    } else if (c >= 0xF0 && c <= 0xF4) {
      len = 4;
      if (c == 0xF0) lo = 0x90;
      if (c == 0xF4) hi = 0x8F;
    }
    if (len == 0) {
      out += kReplacement;
      ++i;
      continue;
    }
    std::size_t good = 1;
    while (good < len && i + good < n) {
      const unsigned char cc = byte(i + good);
      const unsigned char l = good == 1 ? lo : 0x80;
      const unsigned char h = good == 1 ? hi : 0xBF;
      if (cc < l || cc > h) break;
      ++good;
    }
    if (good == len) {
      out.append(bytes.substr(i, len));
    } else {
      out += kReplacement;
    }
    i += good;
  }
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id >= kFirstByte && static_cast<std::size_t>(id) < tokens_.size()) {
      out += tokens_[static_cast<std::size_t>(id)];
    } else if (id == kUnk || id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      out += "\xEF\xBF\xBD";
    }
  }
  return out;
}

TokenSequence Vocabulary::sanitize(std::span<const TokenId> ids) const {
  TokenSequence out(ids.begin(), ids.end());
  for (TokenId& id : out)
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) id = kUnk;
  return out;
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& [a, b] : merges_) merges.push_back({a, b});
  return {{"format", "ragdial-bpe"},
          {"version", kFormatVersion},
          {"vocab_size", size()},
          {"specials", {{"pad", kPad}, {"bos", kBos}, {"eos", kEos}, {"sep", kSep}, {"unk", kUnk}}},
          {"merges", merges}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "ragdial-bpe") throw ValidationError("not a BPE vocabulary file");
  if (j.value("version", 0) != kFormatVersion) throw ValidationError("unsupported vocabulary version");
  const auto& sp = j.at("specials");
  if (sp.at("pad") != kPad || sp.at("bos") != kBos || sp.at("eos") != kEos || sp.at("sep") != kSep ||
      sp.at("unk") != kUnk) {
    throw ValidationError("vocabulary special ids do not match this build");
  }
  std::vector<Merge> merges;
  for (const auto& m : j.at("merges")) merges.emplace_back(m.at(0).get<TokenId>(), m.at(1).get<TokenId>());
  Vocabulary v(std::move(merges));
  if (j.contains("vocab_size") && j.at("vocab_size").get<std::size_t>() != v.size()) {
    throw ValidationError("vocabulary size does not match its merge list");
  }
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  write_file_atomic(path, [&](std::ostream& out) { out << to_json().dump() << '\n'; });
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  try {
    return from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed vocabulary " + path.string() + ": " + e.what());
  }
}

std::uint64_t Vocabulary::fingerprint() const {
  Fnv1a h;
  for (const auto& [a, b] : merges_) {
    h.update_pod(a);
    h.update_pod(b);
  }
  h.update_pod(static_cast<std::uint64_t>(size()));
  return h.digest();
}

Vocabulary train_bpe(std::span<const std::string> corpus, std::size_t vocab_size) {
  if (vocab_size < kByteVocabSize) {
    throw ValidationError("vocab_size must be at least " + std::to_string(kByteVocabSize));
  }
  std::map<std::string, std::uint64_t> chunk_freq;
  for (const std::string& line : corpus)
    for (std::string_view chunk : pretokenize(line)) ++chunk_freq[std::string(chunk)];
  if (chunk_freq.empty()) throw ValidationError("cannot train BPE on an empty corpus");

  Vocabulary vocab;
  struct Word {
    TokenSequence sym;
    std::uint64_t freq;
  };
  std::vector<Word> words;
  words.reserve(chunk_freq.size());
  for (const auto& [chunk, freq] : chunk_freq) {
    Word w{{}, freq};
    for (char c : chunk) w.sym.push_back(kFirstByte + static_cast<unsigned char>(c));
    words.push_back(std::move(w));
  }

  std::set<std::uint64_t> banned;
  while (vocab.size() < vocab_size) {
    std::unordered_map<std::uint64_t, std::uint64_t> counts;
    for (const Word& w : words)
      for (std::size_t i = 0; i + 1 < w.sym.size(); ++i) counts[pair_key(w.sym[i], w.sym[i + 1])] += w.freq;

    bool found = false;
    Merge best{};
    std::uint64_t best_count = 0;
    for (const auto& [key, count] : counts) {
      if (banned.count(key)) continue;
      const Merge cand{static_cast<TokenId>(key >> 32), static_cast<TokenId>(key & 0xffffffffULL)};
      bool better = !found || count > best_count;
      if (found && count == best_count) {
        const auto lhs = std::tie(vocab.token_bytes(cand.first), vocab.token_bytes(cand.second));
        const auto rhs = std::tie(vocab.token_bytes(best.first), vocab.token_bytes(best.second));
        better = lhs < rhs;
      }
      if (better) {
        best = cand;
        best_count = count;
        found = true;
      }
    }
    if (!found) break;
    const std::string merged = vocab.token_bytes(best.first) + vocab.token_bytes(best.second);
    if (vocab.find(merged)) {
      banned.insert(pair_key(best.first, best.second));
      continue;
    }
    const auto new_id = static_cast<TokenId>(vocab.size());
    vocab.append_merge(best);
    for (Word& w : words) {
      TokenSequence next;
      next.reserve(w.sym.size());
      for (std::size_t i = 0; i < w.sym.size();) {
        if (i + 1 < w.sym.size() && w.sym[i] == best.first && w.sym[i + 1] == best.second) {
          next.push_back(new_id);
          i += 2;
        } else {
          next.push_back(w.sym[i++]);
        }
      }
      w.sym.swap(next);
    }
  }
  return vocab;
}

}  // namespace ragdial::text
