#include "ragdial/kb/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <regex>
#include <sstream>
#include <cstring>

#include <nlohmann/json.hpp>

#include "ragdial/common/atomic_file.hpp"
#include "ragdial/common/errors.hpp"

namespace ragdial::kb {

using nlohmann::json;

std::string to_string(Source s) { return s == Source::smikb ? "smikb" : "wiki"; }

Source parse_source(const std::string& s) {
  if (s == "smikb") return Source::smikb;
  if (s == "wiki") return Source::wiki;
  throw ValidationError("unknown knowledge source: " + s);
}

std::string to_string(Dataset d) {
  switch (d) {
    case Dataset::dailydialog: return "dailydialog";
    case Dataset::dailydialogpp: return "dailydialogpp";
    case Dataset::cornell: return "cornell";
    case Dataset::reddit_pseudo: return "reddit_pseudo";
    case Dataset::synthetic: return "synthetic";
  }
  return "synthetic";
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "train";
}

Dataset parse_dataset(const std::string& s) {
  for (Dataset d : {Dataset::dailydialog, Dataset::dailydialogpp, Dataset::cornell, Dataset::reddit_pseudo,
                    Dataset::synthetic}) {
    if (to_string(d) == s) return d;
  }
  throw ValidationError("unknown dataset: " + s);
}

Split parse_split(const std::string& s) {
  for (Split sp : {Split::train, Split::valid, Split::test})
    if (to_string(sp) == s) return sp;
  throw ValidationError("unknown split: " + s);
}

KnowledgeBase::KnowledgeBase(std::vector<Document> docs) : docs_(std::move(docs)) {
  for (std::size_t i = 0; i < docs_.size(); ++i) {
    if (!index_.emplace(docs_[i].id, i).second) throw ValidationError("duplicate document id: " + docs_[i].id);
    ++counts_[docs_[i].source];
  }
}

std::optional<std::size_t> KnowledgeBase::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

namespace {

std::string collapse_ws(const std::string& s) {
  std::istringstream in(s);
  std::string word, out;
  while (in >> word) {
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

std::string truncate_words(const std::string& s, std::size_t max_words) {
  if (max_words == 0) return s;
  std::istringstream in(s);
  std::string word, out;
  std::size_t n = 0;
  while (n < max_words && in >> word) {
    if (!out.empty()) out += ' ';
    out += word;
    ++n;
  }
  return out;
}

std::string clean_text(std::string s, const FilterPolicy& p) {
  static const std::regex md_link(R"(\[([^\]]*)\]\([^)]*\))");
  static const std::regex url(R"((https?://|www\.)[^\s)\]]+)");
  static const std::regex md_marks(R"(\*\*|__|~~|`|^\s*#+\s*|^\s*>+\s*)");
  static const std::regex star(R"(\*)");
  if (p.strip_markdown) s = std::regex_replace(s, md_link, "$1");
  if (p.strip_urls) s = std::regex_replace(s, url, "");
  if (p.strip_markdown) {
    s = std::regex_replace(s, md_marks, "");
    s = std::regex_replace(s, star, "");
    for (auto [from, to] : {std::pair{"&amp;", "&"}, {"&lt;", "<"}, {"&gt;", ">"}, {"&quot;", "\""}, {"&#39;", "'"}}) {
      for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += std::strlen(to)) {
        s.replace(pos, std::strlen(from), to);
      }
    }
  }
  if (p.collapse_whitespace) s = collapse_ws(s);
  return s;
}

std::string meta_value(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open input file: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

std::optional<Document> filter_document(Document raw, const FilterPolicy& policy) {
  raw.title = clean_text(std::move(raw.title), policy);
  raw.body = truncate_words(clean_text(std::move(raw.body), policy), policy.max_body_words);
  if (is_blank(raw.title) || is_blank(raw.body)) return std::nullopt;
  return raw;
}

IngestResult ingest_kb_jsonl(const std::filesystem::path& path, Source source, const IngestOptions& options) {
  const std::vector<std::string> lines = read_lines(path);
  IngestResult result;
  result.lines = lines.size();
  std::vector<Document> docs;
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t malformed = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t lineno = i + 1;
    if (is_blank(lines[i])) continue;
    auto bad = [&](std::string reason) {
      result.issues.push_back({lineno, std::move(reason), true});
      ++malformed;
    };
    json j;
    try {
      j = json::parse(lines[i]);
    } catch (const json::parse_error&) {
      bad("invalid JSON");
      continue;
    }
    if (!j.is_object()) {
      bad("line is not a JSON object");
      continue;
    }
    if (!j.contains("title") || !j["title"].is_string() || !j.contains("text") || !j["text"].is_string()) {
      bad("missing string field \"title\" or \"text\"");
      continue;
    }
    Document d;
    d.source = source;
    d.title = j["title"].get<std::string>();
    d.body = j["text"].get<std::string>();
    if (j.contains("id") && !j["id"].is_null()) {
      d.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    } else {
      d.id = to_string(source) + "-" + std::to_string(lineno);
    }
    if (j.contains("meta")) {
      if (!j["meta"].is_object()) {
        bad("\"meta\" is not an object");
        continue;
      }
      for (const auto& [k, v] : j["meta"].items()) d.meta[k] = meta_value(v);
    }
    auto cleaned = filter_document(std::move(d), options.filter);
    if (!cleaned) {
      result.issues.push_back({lineno, "empty title or text after filtering", false});
      continue;
    }
    if (seen.count(cleaned->id)) {
      result.issues.push_back({lineno, "duplicate id " + cleaned->id, false});
      continue;
    }
    seen.emplace(cleaned->id, docs.size());
    docs.push_back(std::move(*cleaned));
  }
  if (!lines.empty() &&
      static_cast<double>(malformed) > options.max_malformed_fraction * static_cast<double>(lines.size())) {
    throw ValidationError(path.string() + ": " + std::to_string(malformed) + " of " + std::to_string(lines.size()) +
                          " lines are malformed");
  }
  result.kb = KnowledgeBase(std::move(docs));
  return result;
}

void save_kb_jsonl(const KnowledgeBase& kb, const std::filesystem::path& path) {
  write_file_atomic(path, [&](std::ostream& out) {
    for (const Document& d : kb.documents()) {
      json j{{"id", d.id}, {"title", d.title}, {"text", d.body}, {"source", to_string(d.source)}};
      if (!d.meta.empty()) j["meta"] = d.meta;
      out << j.dump() << '\n';
    }
  });
}

KnowledgeBase load_kb_jsonl(const std::filesystem::path& path) {
  std::vector<Document> docs;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    try {
      const json j = json::parse(lines[i]);
      Document d;
      d.id = j.at("id").get<std::string>();
      d.title = j.at("title").get<std::string>();
      d.body = j.at("text").get<std::string>();
      d.source = parse_source(j.value("source", std::string("smikb")));
      if (j.contains("meta"))
        for (const auto& [k, v] : j["meta"].items()) d.meta[k] = meta_value(v);
      docs.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return KnowledgeBase(std::move(docs));
}

void save_issue_report(const std::vector<IngestIssue>& issues, const std::filesystem::path& path) {
  write_file_atomic(path, [&](std::ostream& out) {
    for (const IngestIssue& is : issues) out << json{{"line", is.line}, {"reason", is.reason}}.dump() << '\n';
  });
}

KnowledgeBase sample_kb(const KnowledgeBase& kb, std::size_t n, std::uint64_t seed) {
  if (n > kb.size()) {
    throw ValidationError("cannot sample " + std::to_string(n) + " documents from a knowledge base of " +
                          std::to_string(kb.size()));
  }
  std::vector<std::size_t> idx(kb.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  std::vector<Document> docs;
  docs.reserve(n);
  for (std::size_t i : idx) docs.push_back(kb.at(i));
  return KnowledgeBase(std::move(docs));
}

KnowledgeBase mix_kbs(const KnowledgeBase& a, const KnowledgeBase& b, std::pair<std::size_t, std::size_t> counts,
                      std::uint64_t seed) {
  if (counts.first > a.size() || counts.second > b.size()) {
    throw ValidationError("mix requests " + std::to_string(counts.first) + ":" + std::to_string(counts.second) +
                          " documents but sources hold " + std::to_string(a.size()) + ":" + std::to_string(b.size()));
  }
  std::vector<Document> docs;
  docs.reserve(counts.first + counts.second);
  auto append = [&](const KnowledgeBase& part) {
    for (Document d : part.documents()) {
      const std::string ns = to_string(d.source) + "/";
      if (d.id.rfind(ns, 0) != 0) d.id = ns + d.id;
      docs.push_back(std::move(d));
    }
  };
  append(sample_kb(a, counts.first, seed));
  append(sample_kb(b, counts.second, seed ^ 0x9e3779b97f4a7c15ULL));
  return KnowledgeBase(std::move(docs));
}

std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& r) {
  if (r.train < 0 || r.valid < 0 || r.test < 0 || std::abs(r.train + r.valid + r.test - 1.0) > 1e-9) {
    throw ValidationError("split ratios must be non-negative and sum to 1");
  }
  const auto quota = [n](double ratio) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 0.5));
  };
  const std::size_t valid = std::min(quota(r.valid), n);
  const std::size_t test = std::min(quota(r.test), n - valid);
  return {n - valid - test, valid, test};
}

std::vector<DialoguePair> split_pairs(std::vector<DialoguePair> pairs, const SplitRatios& ratios,
                                      std::uint64_t seed) {
  const auto counts = split_counts(pairs.size(), ratios);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t pos = 0;
  for (Split s : {Split::train, Split::valid, Split::test}) {
    for (std::size_t i = 0; i < counts[static_cast<std::size_t>(s)]; ++i) pairs[order[pos++]].split = s;
  }
  return pairs;
}

std::vector<DialoguePair> kb_to_pairs(const KnowledgeBase& kb) {
  std::vector<DialoguePair> out;
  out.reserve(kb.size());
  for (const Document& d : kb.documents()) out.push_back({d.title, d.body, Dataset::reddit_pseudo, std::nullopt});
  return out;
}

std::vector<DialoguePair> load_pairs_jsonl(const std::filesystem::path& path) {
  std::vector<DialoguePair> pairs;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    try {
      const json j = json::parse(lines[i]);
      DialoguePair p;
      p.utterance = j.at("utterance").get<std::string>();
      p.response = j.at("response").get<std::string>();
      p.dataset = parse_dataset(j.value("dataset", std::string("synthetic")));
      if (j.contains("split") && !j["split"].is_null()) p.split = parse_split(j["split"].get<std::string>());
      if (is_blank(p.utterance) || is_blank(p.response)) {
        throw ValidationError("empty utterance or response");
      }
      pairs.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return pairs;
}

void save_pairs_jsonl(const std::vector<DialoguePair>& pairs, const std::filesystem::path& path) {
  write_file_atomic(path, [&](std::ostream& out) {
    for (const DialoguePair& p : pairs) {
      json j{{"utterance", p.utterance}, {"response", p.response}, {"dataset", to_string(p.dataset)}};
      if (p.split) j["split"] = to_string(*p.split);
      out << j.dump() << '\n';
    }
  });
}

std::vector<DialoguePair> load_eou_dialogues(const std::filesystem::path& path, Dataset dataset) {
  std::vector<DialoguePair> pairs;
  for (const std::string& line : read_lines(path)) {
    std::vector<std::string> turns;
    std::size_t start = 0;
    while (start <= line.size()) {
      std::size_t end = line.find("__eou__", start);
      if (end == std::string::npos) end = line.size();
      std::string turn = collapse_ws(line.substr(start, end - start));
      if (!turn.empty()) turns.push_back(std::move(turn));
      start = end + 7;
    }
    for (std::size_t i = 0; i + 1 < turns.size(); ++i) pairs.push_back({turns[i], turns[i + 1], dataset, std::nullopt});
  }
  return pairs;
}

std::vector<DialoguePair> filter_split(const std::vector<DialoguePair>& pairs, Split split) {
  std::vector<DialoguePair> out;
  for (const auto& p : pairs)
    if (p.split == split) out.push_back(p);
  return out;
}

}  // namespace ragdial::kb
