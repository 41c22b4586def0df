#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace ragdial::kb {

enum class Source { smikb, wiki };
std::string to_string(Source s);
Source parse_source(const std::string& s);

struct Document {
  std::string id;
  std::string title;
  std::string body;
  Source source = Source::smikb;
  std::map<std::string, std::string> meta;

  friend bool operator==(const Document&, const Document&) = default;
};

// Ordered, immutable collection of documents with unique ids.
class KnowledgeBase {
 public:
  KnowledgeBase() = default;
  explicit KnowledgeBase(std::vector<Document> docs);

  const std::vector<Document>& documents() const { return docs_; }
  const Document& at(std::size_t i) const { return docs_.at(i); }
  std::size_t size() const { return docs_.size(); }
  bool empty() const { return docs_.empty(); }
  const std::map<Source, std::size_t>& source_counts() const { return counts_; }
  std::optional<std::size_t> index_of(const std::string& id) const;

 private:
  std::vector<Document> docs_;
  std::map<Source, std::size_t> counts_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct FilterPolicy {
  bool strip_urls = true;
  bool strip_markdown = true;
  bool collapse_whitespace = true;
  std::size_t max_body_words = 100;  // 0 = no limit
};

// Cleans title and body; nullopt when either is empty afterwards.
std::optional<Document> filter_document(Document raw, const FilterPolicy& policy);

struct IngestIssue {
  std::size_t line = 0;  // 1-based
  std::string reason;
  bool malformed = false;  // false: well-formed record rejected by the filter
};

struct IngestResult {
  KnowledgeBase kb;
  std::vector<IngestIssue> issues;
  std::size_t lines = 0;
};

struct IngestOptions {
  FilterPolicy filter;
  double max_malformed_fraction = 0.10;
};

// Reads a KB JSONL file ({id?, title, text, meta?} per line). Blank lines are
// skipped. Throws ValidationError when the file is missing or more than
// `max_malformed_fraction` of its lines are malformed.
IngestResult ingest_kb_jsonl(const std::filesystem::path& path, Source source, const IngestOptions& options = {});

// Writes {id, title, text, source, meta} lines.
void save_kb_jsonl(const KnowledgeBase& kb, const std::filesystem::path& path);
// Strict reader for files written by save_kb_jsonl.
KnowledgeBase load_kb_jsonl(const std::filesystem::path& path);

void save_issue_report(const std::vector<IngestIssue>& issues, const std::filesystem::path& path);

// Uniform sample of n documents without replacement; input order is kept.
KnowledgeBase sample_kb(const KnowledgeBase& kb, std::size_t n, std::uint64_t seed);

// Samples counts.first from `a` and counts.second from `b` and concatenates
// them. Ids are namespaced as "<source>/<id>".
KnowledgeBase mix_kbs(const KnowledgeBase& a, const KnowledgeBase& b, std::pair<std::size_t, std::size_t> counts,
                      std::uint64_t seed);

enum class Dataset { dailydialog, dailydialogpp, cornell, reddit_pseudo, synthetic };
enum class Split { train, valid, test };
std::string to_string(Dataset d);
std::string to_string(Split s);
Dataset parse_dataset(const std::string& s);
Split parse_split(const std::string& s);

struct DialoguePair {
  std::string utterance;
  std::string response;
  Dataset dataset = Dataset::synthetic;
  std::optional<Split> split;

  friend bool operator==(const DialoguePair&, const DialoguePair&) = default;
};

struct SplitRatios {
  double train = 0.70;
  double valid = 0.15;
  double test = 0.15;
};

// Split sizes for n items: valid and test get round-half-up(n * ratio) and
// train takes the remainder.
std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& ratios);

// Assigns every pair exactly one split via a seeded shuffle; order is kept.
std::vector<DialoguePair> split_pairs(std::vector<DialoguePair> pairs, const SplitRatios& ratios,
                                      std::uint64_t seed);

// One pseudo dialogue pair per document: utterance = title, response = body.
std::vector<DialoguePair> kb_to_pairs(const KnowledgeBase& kb);

std::vector<DialoguePair> load_pairs_jsonl(const std::filesystem::path& path);
void save_pairs_jsonl(const std::vector<DialoguePair>& pairs, const std::filesystem::path& path);
// DailyDialog-style text: one dialogue per line, turns separated by
// "__eou__"; consecutive turns become (utterance, response) pairs.
std::vector<DialoguePair> load_eou_dialogues(const std::filesystem::path& path, Dataset dataset);

std::vector<DialoguePair> filter_split(const std::vector<DialoguePair>& pairs, Split split);

}  // namespace ragdial::kb
