#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "ragdial/common/errors.hpp"
#include "ragdial/kb/corpus.hpp"

using namespace ragdial;
using namespace ragdial::kb;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("ragdial_kb_test_" + std::to_string(::getpid()) + "_" +
                                         std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  for (const auto& l : lines) out << l << "\n";
}

KnowledgeBase numbered_kb(std::size_t n, Source src, const std::string& prefix) {
  std::vector<Document> docs;
  for (std::size_t i = 0; i < n; ++i) {
    docs.push_back({prefix + std::to_string(i), "title " + std::to_string(i), "body " + std::to_string(i), src, {}});
  }
  return KnowledgeBase(std::move(docs));
}

std::vector<DialoguePair> numbered_pairs(std::size_t n) {
  std::vector<DialoguePair> pairs;
  for (std::size_t i = 0; i < n; ++i) pairs.push_back({"u" + std::to_string(i), "r" + std::to_string(i)});
  return pairs;
}

}  // namespace

TEST(Ingest, EmptyFileGivesEmptyKb) {
  TempDir dir;
  write_lines(dir / "empty.jsonl", {});
  const IngestResult r = ingest_kb_jsonl(dir / "empty.jsonl", Source::smikb);
  EXPECT_TRUE(r.kb.empty());
  EXPECT_TRUE(r.issues.empty());
}

TEST(Ingest, TableRowBecomesOneDocument) {
  TempDir dir;
  write_lines(dir / "one.jsonl",
              {R"({"title":"Apple may be working on a foldable iPhone","text":"I can confirm that Apple would be )"
               R"(stupid to not be working on one..."})"});
  const IngestResult r = ingest_kb_jsonl(dir / "one.jsonl", Source::smikb);
  ASSERT_EQ(r.kb.size(), 1u);
  const Document& d = r.kb.at(0);
  EXPECT_EQ(d.source, Source::smikb);
  EXPECT_EQ(d.id, "smikb-1");
  EXPECT_EQ(d.title, "Apple may be working on a foldable iPhone");
  EXPECT_EQ(d.body, "I can confirm that Apple would be stupid to not be working on one...");
  EXPECT_EQ(r.kb.source_counts().at(Source::smikb), 1u);
}

TEST(Ingest, EmptyBodiesAreReportedByLine) {
  TempDir dir;
  std::vector<std::string> lines;
  const std::set<std::size_t> empty_lines{4, 50, 99};
  for (std::size_t i = 1; i <= 100; ++i) {
    nlohmann::json j{{"title", "title " + std::to_string(i)},
                     {"text", empty_lines.count(i) ? " \t  " : "body " + std::to_string(i)}};
    lines.push_back(j.dump());
  }
  write_lines(dir / "kb.jsonl", lines);
  const IngestResult r = ingest_kb_jsonl(dir / "kb.jsonl", Source::smikb);
  EXPECT_EQ(r.kb.size(), 97u);
  ASSERT_EQ(r.issues.size(), 3u);
  std::set<std::size_t> reported;
  for (const auto& is : r.issues) reported.insert(is.line);
  EXPECT_EQ(reported, empty_lines);

  // Idempotent.
  const IngestResult again = ingest_kb_jsonl(dir / "kb.jsonl", Source::smikb);
  ASSERT_EQ(again.kb.size(), r.kb.size());
  for (std::size_t i = 0; i < r.kb.size(); ++i) {
    EXPECT_EQ(again.kb.at(i).id, r.kb.at(i).id);
    EXPECT_EQ(again.kb.at(i).body, r.kb.at(i).body);
  }
}

TEST(Ingest, MalformedThreshold) {
  TempDir dir;
  std::vector<std::string> lines;
  for (int i = 0; i < 20; ++i) lines.push_back(R"({"title":"t","text":"b","id":"x)" + std::to_string(i) + "\"}");
  lines[3] = "{not json";
  lines[7] = R"({"title": 5, "text": "b"})";
  write_lines(dir / "ok.jsonl", lines);
  const IngestResult r = ingest_kb_jsonl(dir / "ok.jsonl", Source::wiki);
  EXPECT_EQ(r.kb.size(), 18u);
  EXPECT_EQ(std::count_if(r.issues.begin(), r.issues.end(), [](const auto& i) { return i.malformed; }), 2);

  lines[9] = "[]";
  write_lines(dir / "bad.jsonl", lines);
  EXPECT_THROW(ingest_kb_jsonl(dir / "bad.jsonl", Source::wiki), ValidationError);
  IngestOptions lenient;
  lenient.max_malformed_fraction = 0.5;
  EXPECT_EQ(ingest_kb_jsonl(dir / "bad.jsonl", Source::wiki, lenient).kb.size(), 17u);
}

TEST(Ingest, MissingFileNamesPath) {
  try {
    ingest_kb_jsonl("/nonexistent/kb.jsonl", Source::smikb);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/kb.jsonl"), std::string::npos);
  }
}

TEST(FilterDocument, Rules) {
  FilterPolicy policy;
  EXPECT_FALSE(filter_document({"a", "t", "", Source::smikb, {}}, policy));

  std::string long_body;
  for (int i = 0; i < 250; ++i) long_body += "w" + std::to_string(i) + " ";
  auto d = filter_document({"a", "t", long_body, Source::wiki, {}}, policy);
  ASSERT_TRUE(d);
  EXPECT_EQ(std::count(d->body.begin(), d->body.end(), ' ') + 1, 100);

  d = filter_document({"a", "t", "a  b\tc", Source::smikb, {}}, policy);
  ASSERT_TRUE(d);
  EXPECT_EQ(d->body, "a b c");

  d = filter_document({"a", "**Bold** title", "see [the docs](https://x.org/a) or http://y.com now", Source::smikb, {}},
                      policy);
  ASSERT_TRUE(d);
  EXPECT_EQ(d->title, "Bold title");
  EXPECT_EQ(d->body, "see the docs or now");

  EXPECT_FALSE(filter_document({"a", "t", "https://only.a/url", Source::smikb, {}}, policy));
}

TEST(SampleKb, FullSampleAndDeterminism) {
  const KnowledgeBase kb = numbered_kb(50, Source::smikb, "d");
  const KnowledgeBase all = sample_kb(kb, 50, 3);
  ASSERT_EQ(all.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(all.at(i).id, kb.at(i).id);

  const KnowledgeBase a = sample_kb(kb, 20, 9), b = sample_kb(kb, 20, 9);
  ASSERT_EQ(a.size(), 20u);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(a.at(i).id, b.at(i).id);
  // Order preserved and a subset.
  std::size_t last = 0;
  for (const auto& d : a.documents()) {
    const std::size_t pos = *kb.index_of(d.id);
    EXPECT_GE(pos, last);
    last = pos;
  }
  EXPECT_THROW(sample_kb(kb, 51, 1), ValidationError);
}

TEST(SampleKb, OverlapMatchesHypergeometricExpectation) {
  const KnowledgeBase kb = numbered_kb(1000, Source::smikb, "d");
  const KnowledgeBase a = sample_kb(kb, 600, 1), b = sample_kb(kb, 600, 2);
  std::set<std::string> ids;
  for (const auto& d : a.documents()) ids.insert(d.id);
  std::size_t overlap = 0;
  for (const auto& d : b.documents()) overlap += ids.count(d.id);
  EXPECT_GE(overlap, 300u);
  EXPECT_LE(overlap, 420u);
  EXPECT_LT(overlap, 600u);
}

TEST(MixKbs, CountsAndNamespacing) {
  const KnowledgeBase a = numbered_kb(10, Source::smikb, "x");
  const KnowledgeBase b = numbered_kb(10, Source::wiki, "x");
  const KnowledgeBase m = mix_kbs(a, b, {10, 10}, 4);
  EXPECT_EQ(m.size(), 20u);
  EXPECT_EQ(m.source_counts().at(Source::smikb), 10u);
  EXPECT_EQ(m.source_counts().at(Source::wiki), 10u);
  EXPECT_TRUE(m.index_of("smikb/x0"));
  EXPECT_TRUE(m.index_of("wiki/x0"));

  const KnowledgeBase only_a = mix_kbs(a, b, {5, 0}, 4);
  EXPECT_EQ(only_a.size(), 5u);
  for (const auto& d : only_a.documents()) EXPECT_EQ(d.source, Source::smikb);
  EXPECT_THROW(mix_kbs(a, b, {11, 1}, 4), ValidationError);
}

TEST(KbJsonl, SaveLoadRoundTrip) {
  TempDir dir;
  std::vector<Document> docs{{"a", "T1", "B1", Source::smikb, {{"score", "12"}}}, {"b", "T2", "B2", Source::wiki, {}}};
  const KnowledgeBase kb(docs);
  save_kb_jsonl(kb, dir / "kb.jsonl");
  const KnowledgeBase back = load_kb_jsonl(dir / "kb.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.at(0).meta.at("score"), "12");
  EXPECT_EQ(back.at(1).source, Source::wiki);
  EXPECT_THROW(KnowledgeBase(std::vector<Document>{docs[0], docs[0]}), ValidationError);
}

TEST(SplitCounts, TableCountsFromTotals) {
  EXPECT_EQ(split_counts(76743, {}), (std::array<std::size_t, 3>{53721, 11511, 11511}));
  EXPECT_EQ(split_counts(221088, {}), (std::array<std::size_t, 3>{154762, 33163, 33163}));
  EXPECT_EQ(split_counts(39913, {}), (std::array<std::size_t, 3>{27939, 5987, 5987}));
  EXPECT_EQ(split_counts(200000, {}), (std::array<std::size_t, 3>{140000, 30000, 30000}));
  EXPECT_EQ(split_counts(10, {}), (std::array<std::size_t, 3>{6, 2, 2}));
  EXPECT_EQ(split_counts(0, {}), (std::array<std::size_t, 3>{0, 0, 0}));
  EXPECT_THROW(split_counts(10, {0.5, 0.2, 0.2}), ValidationError);
}

TEST(SplitPairs, PartitionAndDeterminism) {
  const auto pairs = numbered_pairs(101);
  const auto a = split_pairs(pairs, {}, 5);
  const auto b = split_pairs(pairs, {}, 5);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), pairs.size());
  std::array<std::size_t, 3> counts{};
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_TRUE(a[i].split);
    EXPECT_EQ(a[i].utterance, pairs[i].utterance);
    ++counts[static_cast<std::size_t>(*a[i].split)];
  }
  EXPECT_EQ(counts, split_counts(101, {}));
  EXPECT_EQ(filter_split(a, Split::train).size() + filter_split(a, Split::valid).size() +
                filter_split(a, Split::test).size(),
            101u);
  EXPECT_NE(split_pairs(pairs, {}, 6), a);
  EXPECT_TRUE(split_pairs({}, {}, 1).empty());
}

TEST(KbToPairs, TitleToBody) {
  EXPECT_TRUE(kb_to_pairs(KnowledgeBase()).empty());
  std::vector<Document> docs{{"r1",
                              "LPT: If you borrow something like a tool or a generator, return it in better "
                              "condition than you got it.",
                              "My dad always said return it with a full tank.", Source::smikb, {}},
                             {"r2", "t2", "b2", Source::smikb, {}}};
  const auto pairs = kb_to_pairs(KnowledgeBase(docs));
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].utterance, docs[0].title);
  EXPECT_EQ(pairs[0].response, docs[0].body);
  EXPECT_EQ(pairs[0].dataset, Dataset::reddit_pseudo);
  EXPECT_EQ(pairs[1].utterance, "t2");
}

TEST(Pairs, JsonlAndEouImport) {
  TempDir dir;
  auto pairs = split_pairs(numbered_pairs(5), {}, 1);
  save_pairs_jsonl(pairs, dir / "p.jsonl");
  EXPECT_EQ(load_pairs_jsonl(dir / "p.jsonl"), pairs);

  write_lines(dir / "dd.txt", {"Hi there . __eou__ Hello ! __eou__ How are you ? __eou__", "", "One turn __eou__"});
  const auto dd = load_eou_dialogues(dir / "dd.txt", Dataset::dailydialog);
  ASSERT_EQ(dd.size(), 2u);
  EXPECT_EQ(dd[0].utterance, "Hi there .");
  EXPECT_EQ(dd[0].response, "Hello !");
  EXPECT_EQ(dd[1].utterance, "Hello !");
  EXPECT_EQ(dd[1].response, "How are you ?");
}
