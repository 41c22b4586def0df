#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace ragdial::cli {

namespace fs = std::filesystem;

struct IngestArgs {
  std::string source = "smikb";
  fs::path in;
  std::vector<fs::path> mix;
  std::string mix_sources = "smikb,wiki";
  std::string ratio = "1:1";
  fs::path out;
  std::size_t sample = 0;  // 0 keeps everything
  std::uint64_t seed = 0;
  fs::path report;  // default: <out>.errors.jsonl
  std::size_t max_body_words = 100;
};

struct SynthArgs {
  fs::path out_dir;
  std::uint64_t seed = 0;
  std::size_t num_docs = 200;
  std::size_t train_topics = 200;
  std::size_t templates_per_topic = 3;
  std::size_t heldout_pairs = 50;
  bool heldout_untrained = false;
};

struct SplitArgs {
  fs::path in;
  bool eou = false;
  std::string dataset = "dailydialog";
  fs::path out;
  std::uint64_t seed = 0;
  std::string ratios = "0.7,0.15,0.15";
};

// Flags shared by commands that read a run config. Unset overrides keep
// the config's values.
struct RunArgs {
  fs::path config;
  bool has_seed = false;
  std::uint64_t seed = 0;
};

struct TrainArgs {
  RunArgs run;
  bool no_retrieval = false;
  bool merge_kb_into_train = false;
  bool resume = false;
  long long max_steps = -1;
  long long epochs = -1;
  double lr = -1.0;
  long long k = -1;
  long long checkpoint_every = -1;
};

struct GenerateArgs {
  RunArgs run;
  fs::path checkpoint;  // default: <checkpoint_dir>/last.ckpt
  fs::path in;          // default: paths.eval
  std::string split;    // optional split filter
  std::vector<std::size_t> ks;
  long long beam = -1;
  std::string mode;
  fs::path out_dir;  // default: paths.reports
  std::size_t limit = 0;
};

struct EvaluateArgs {
  fs::path hyp;
  fs::path ref;
  fs::path out;
  std::string tag = "external";
  std::size_t k = 0;
  std::size_t beam = 0;
};

struct ChatArgs {
  RunArgs run;
  fs::path checkpoint;
  long long k = -1;
  std::string mode;
  fs::path log;
};

void cmd_ingest(const IngestArgs& a, std::ostream& out);
void cmd_synth(const SynthArgs& a, std::ostream& out);
void cmd_split(const SplitArgs& a, std::ostream& out);
void cmd_build_vocab(const RunArgs& a, std::ostream& out);
void cmd_build_index(const RunArgs& a, std::ostream& out);
void cmd_train(const TrainArgs& a, std::ostream& out);
void cmd_generate(const GenerateArgs& a, std::ostream& out);
void cmd_evaluate(const EvaluateArgs& a, std::ostream& out);
void cmd_chat(const ChatArgs& a, std::istream& in, std::ostream& out);

}  // namespace ragdial::cli
