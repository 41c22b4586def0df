#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ragdial/cli/config.hpp"
#include "ragdial/common/atomic_file.hpp"
#include "ragdial/common/errors.hpp"
#include "ragdial/common/hash.hpp"
#include "ragdial/kb/corpus.hpp"
#include "ragdial/kb/synthetic.hpp"
#include "ragdial/metrics/metrics.hpp"
#include "ragdial/nn/adam.hpp"
#include "ragdial/nn/checkpoint.hpp"
#include "ragdial/rag/model.hpp"
#include "ragdial/rag/trainer.hpp"
#include "ragdial/retriever/dual_encoder.hpp"

namespace ragdial::cli {

using nlohmann::json;

namespace {

constexpr const char* kLastCheckpoint = "last.ckpt";
constexpr const char* kLossLog = "loss.jsonl";
constexpr std::uint64_t kRetrieverSeedOffset = 1;

void require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw ValidationError(what + " path is not set");
  if (!fs::exists(p)) throw ValidationError(what + " not found: " + p.string());
}

void require_set(const fs::path& p, const std::string& what) {
  if (p.empty()) throw ValidationError(what + " path is not set");
}

void ensure_parent(const fs::path& p) {
  const fs::path parent = p.parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

RunConfig load_config(const RunArgs& a) {
  if (a.config.empty()) throw ValidationError("--config is required");
  RunConfig cfg = load_run_config(a.config);
  if (a.has_seed) cfg.seed = a.seed;
  return cfg;
}

nn::TransformerConfig sized(nn::TransformerConfig c, const text::Vocabulary& vocab) {
  c.vocab_size = vocab.size();
  return c;
}

text::Vocabulary load_vocab(const RunConfig& cfg) {
  require_file(cfg.paths.vocab, "vocabulary");
  require_same_config(read_sidecar(cfg.paths.vocab), cfg, "vocabulary " + cfg.paths.vocab.string());
  return text::Vocabulary::load(cfg.paths.vocab);
}

retriever::DenseIndex load_index(const RunConfig& cfg) {
  require_file(cfg.paths.index, "index");
  require_same_config(read_sidecar(cfg.paths.index), cfg, "index " + cfg.paths.index.string());
  return retriever::DenseIndex::load(cfg.paths.index);
}

// Training pairs: the train split when the file carries splits, else all.
std::vector<kb::DialoguePair> training_pairs(const fs::path& path) {
  std::vector<kb::DialoguePair> pairs = kb::load_pairs_jsonl(path);
  const bool has_splits = std::any_of(pairs.begin(), pairs.end(), [](const auto& p) { return p.split.has_value(); });
  if (has_splits) pairs = kb::filter_split(pairs, kb::Split::train);
  if (pairs.empty()) throw ValidationError("no training pairs in " + path.string());
  return pairs;
}

std::string model_tag(bool retrieval, bool merged) {
  if (retrieval) return "rag";
  return merged ? "baseline2" : "baseline1";
}

void write_jsonl(const fs::path& path, const std::vector<std::string>& lines) {
  ensure_parent(path);
  write_file_atomic(path, [&](std::ostream& out) {
    for (const auto& l : lines) out << l << "\n";
  });
}

void write_json(const fs::path& path, const json& j) {
  ensure_parent(path);
  write_file_atomic(path, [&](std::ostream& out) { out << j.dump(2) << "\n"; });
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::size_t parse_count(const std::string& s, const std::string& what) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    throw ValidationError("bad " + what + ": '" + s + "'");
  }
  if (pos != s.size()) throw ValidationError("bad " + what + ": '" + s + "'");
  return static_cast<std::size_t>(v);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) parts.push_back(cur);
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

// A trained model restored from a checkpoint together with everything it
// references. Held by pointer so the references inside `model` stay valid.
struct System {
  RunConfig cfg;
  json header;
  std::string tag;
  text::Vocabulary vocab;
  kb::KnowledgeBase kb;
  std::unique_ptr<retriever::DenseIndex> index;
  std::unique_ptr<nn::Seq2Seq> gen;
  std::unique_ptr<retriever::DualEncoder> enc;
  std::unique_ptr<rag::DialogueModel> model;
  rag::RagModel* rag = nullptr;
};

void check_header(const json& header, const RunConfig& cfg, const text::Vocabulary& vocab, const fs::path& path) {
  require_same_config(header, cfg, "checkpoint " + path.string());
  if (header.value("vocab_fingerprint", std::string()) != hash_hex(vocab.fingerprint())) {
    throw StateMismatchError("checkpoint " + path.string() + " was trained with another vocabulary");
  }
}

std::unique_ptr<System> load_system(const RunConfig& cfg, fs::path checkpoint) {
  if (checkpoint.empty()) {
    require_set(cfg.paths.checkpoint_dir, "checkpoint_dir");
    checkpoint = cfg.paths.checkpoint_dir / kLastCheckpoint;
  }
  require_file(checkpoint, "checkpoint");
  auto sys = std::make_unique<System>();
  sys->cfg = cfg;
  const nn::Checkpoint ckpt = nn::load_checkpoint(checkpoint);
  sys->header = ckpt.header;
  require_same_config(ckpt.header, cfg, "checkpoint " + checkpoint.string());
  sys->tag = ckpt.header.value("model", std::string());
  if (sys->tag == "rag") {
    require_file(cfg.paths.kb, "knowledge base");
    require_file(cfg.paths.index, "index");
  }
  sys->vocab = load_vocab(cfg);
  check_header(ckpt.header, cfg, sys->vocab, checkpoint);
  sys->gen = std::make_unique<nn::Seq2Seq>(sized(cfg.generator, sys->vocab), ckpt.extract_store("gen.", cfg.seed));
  if (sys->tag == "rag") {
    sys->kb = kb::load_kb_jsonl(cfg.paths.kb);
    sys->index = std::make_unique<retriever::DenseIndex>(load_index(cfg));
    sys->enc = std::make_unique<retriever::DualEncoder>(sized(cfg.retriever, sys->vocab),
                                                        ckpt.extract_store("qenc.", cfg.seed + kRetrieverSeedOffset),
                                                        ckpt.extract_store("penc.", cfg.seed + kRetrieverSeedOffset));
    auto m = std::make_unique<rag::RagModel>(*sys->gen, *sys->enc, *sys->index, sys->kb, sys->vocab,
                                             ckpt.header.value("train_k", cfg.training.k));
    sys->rag = m.get();
    sys->model = std::move(m);
  } else if (sys->tag == "baseline1" || sys->tag == "baseline2") {
    sys->model = std::make_unique<rag::BaselineModel>(*sys->gen);
  } else {
    throw ValidationError("checkpoint " + checkpoint.string() + " has unknown model tag '" + sys->tag + "'");
  }
  return sys;
}

json loss_line(const rag::StepLog& s) {
  return json{{"step", s.step},
              {"epoch", s.epoch},
              {"example", s.example},
              {"loss", s.result.loss},
              {"tokens", s.result.tokens},
              {"loss_per_token", s.result.loss_per_token()}};
}

}  // namespace

void cmd_ingest(const IngestArgs& a, std::ostream& out) {
  require_set(a.out, "--out");
  kb::IngestOptions opts;
  opts.filter.max_body_words = a.max_body_words;
  std::vector<kb::IngestIssue> issues;
  std::size_t lines = 0;
  kb::KnowledgeBase result;
  json args;
  if (!a.mix.empty()) {
    if (a.mix.size() != 2) throw ValidationError("--mix takes exactly two files");
    const auto sources = split_on(a.mix_sources, ',');
    if (sources.size() != 2) throw ValidationError("--mix-sources takes two comma-separated sources");
    const auto ratio = split_on(a.ratio, ':');
    if (ratio.size() != 2) throw ValidationError("--ratio must look like A:B");
    const std::size_t ra = parse_count(ratio[0], "ratio"), rb = parse_count(ratio[1], "ratio");
    if (ra + rb == 0) throw ValidationError("--ratio must not be 0:0");
    for (const auto& p : a.mix) require_file(p, "input");
    auto ia = kb::ingest_kb_jsonl(a.mix[0], kb::parse_source(sources[0]), opts);
    auto ib = kb::ingest_kb_jsonl(a.mix[1], kb::parse_source(sources[1]), opts);
    std::size_t ca = 0, cb = 0;
    if (a.sample > 0) {
      ca = static_cast<std::size_t>(std::llround(static_cast<double>(a.sample) * ra / static_cast<double>(ra + rb)));
      cb = a.sample - ca;
    } else {
      std::size_t unit = std::min(ra ? ia.kb.size() / ra : SIZE_MAX, rb ? ib.kb.size() / rb : SIZE_MAX);
      ca = unit * ra;
      cb = unit * rb;
    }
    if (ca > ia.kb.size() || cb > ib.kb.size()) {
      throw ValidationError("not enough documents for the requested mix (" + std::to_string(ca) + " + " +
                            std::to_string(cb) + ")");
    }
    result = kb::mix_kbs(ia.kb, ib.kb, {ca, cb}, a.seed);
    issues = ia.issues;
    issues.insert(issues.end(), ib.issues.begin(), ib.issues.end());
    lines = ia.lines + ib.lines;
    args = {{"mix", {a.mix[0].string(), a.mix[1].string()}}, {"ratio", a.ratio}, {"sources", a.mix_sources}};
  } else {
    require_file(a.in, "input");
    auto r = kb::ingest_kb_jsonl(a.in, kb::parse_source(a.source), opts);
    result = a.sample > 0 ? kb::sample_kb(r.kb, std::min(a.sample, r.kb.size()), a.seed) : std::move(r.kb);
    issues = std::move(r.issues);
    lines = r.lines;
    args = {{"in", a.in.string()}, {"source", a.source}};
  }
  args["sample"] = a.sample;
  args["seed"] = a.seed;
  args["max_body_words"] = a.max_body_words;

  ensure_parent(a.out);
  kb::save_kb_jsonl(result, a.out);
  fs::path report = a.report;
  if (report.empty()) {
    report = a.out;
    report += ".errors.jsonl";
  }
  kb::save_issue_report(issues, report);
  write_sidecar(a.out, json{{"version", kArtifactVersion},
                            {"seed", a.seed},
                            {"config_hash", hash_hex(fnv1a(args.dump()))},
                            {"documents", result.size()},
                            {"lines", lines}});
  out << "ingested " << result.size() << " documents from " << lines << " lines; " << issues.size()
      << " issues written to " << report.string() << "\n";
}

void cmd_synth(const SynthArgs& a, std::ostream& out) {
  require_set(a.out_dir, "--out-dir");
  kb::SyntheticOptions o;
  o.num_docs = a.num_docs;
  o.train_topics = std::min(a.train_topics, a.num_docs);
  o.templates_per_topic = a.templates_per_topic;
  o.heldout_pairs = a.heldout_pairs;
  o.heldout_from_trained = !a.heldout_untrained;
  o.seed = a.seed;
  kb::SyntheticCorpus c = kb::make_synthetic_corpus(o);
  fs::create_directories(a.out_dir);
  for (auto& p : c.train) p.split = kb::Split::train;
  for (auto& p : c.heldout) p.split = kb::Split::test;
  kb::save_kb_jsonl(c.kb, a.out_dir / "kb.jsonl");
  kb::save_pairs_jsonl(c.train, a.out_dir / "train.jsonl");
  kb::save_pairs_jsonl(c.heldout, a.out_dir / "test.jsonl");

  const json meta{{"version", kArtifactVersion}, {"seed", a.seed}, {"config_hash", hash_hex(fnv1a("synthetic"))}};
  write_sidecar(a.out_dir / "kb.jsonl", meta);

  // Small model that trains in minutes on one core.
  const json model{{"d_model", 32}, {"n_heads", 4},  {"n_layers", 2},       {"d_ffn", 64},
                   {"max_len", 64}, {"dropout_rate", 0.0}, {"init_std", 0.15}};
  const json config{
      {"seed", a.seed},
      {"vocab_size", 2000},
      {"paths",
       {{"kb", "kb.jsonl"},
        {"train", "train.jsonl"},
        {"eval", "test.jsonl"},
        {"vocab", "vocab.json"},
        {"index", "kb.index"},
        {"checkpoint_dir", "ckpt"},
        {"reports", "reports"}}},
      {"generator", model},
      {"retriever", model},
      {"training", {{"lr", 2e-3}, {"epochs", 2}, {"k", 5}, {"checkpoint_every", 200}, {"max_response_len", 32}}},
      {"generation", {{"k", 5}, {"beam_size", 5}, {"max_new_tokens", 16}, {"mode", "fast"}}},
  };
  write_json(a.out_dir / "config.json", config);
  out << "wrote " << c.kb.size() << " documents, " << c.train.size() << " training and " << c.heldout.size()
      << " held-out pairs to " << a.out_dir.string() << "\n";
}

void cmd_split(const SplitArgs& a, std::ostream& out) {
  require_file(a.in, "input");
  require_set(a.out, "--out");
  const auto parts = split_on(a.ratios, ',');
  if (parts.size() != 3) throw ValidationError("--ratios takes three comma-separated fractions");
  kb::SplitRatios r;
  try {
    r.train = std::stod(parts[0]);
    r.valid = std::stod(parts[1]);
    r.test = std::stod(parts[2]);
  } catch (const std::exception&) {
    throw ValidationError("bad --ratios '" + a.ratios + "'");
  }
  std::vector<kb::DialoguePair> pairs = a.eou ? kb::load_eou_dialogues(a.in, kb::parse_dataset(a.dataset))
                                              : kb::load_pairs_jsonl(a.in);
  pairs = kb::split_pairs(std::move(pairs), r, a.seed);
  ensure_parent(a.out);
  kb::save_pairs_jsonl(pairs, a.out);
  const auto counts = kb::split_counts(pairs.size(), r);
  out << "train " << counts[0] << " valid " << counts[1] << " test " << counts[2] << "\n";
}

void cmd_build_vocab(const RunArgs& a, std::ostream& out) {
  const RunConfig cfg = load_config(a);
  require_file(cfg.paths.kb, "knowledge base");
  require_file(cfg.paths.train, "training pairs");
  require_set(cfg.paths.vocab, "vocabulary");
  const kb::KnowledgeBase kb = kb::load_kb_jsonl(cfg.paths.kb);
  std::vector<std::string> texts;
  for (const auto& d : kb.documents()) {
    texts.push_back(d.title);
    texts.push_back(d.body);
  }
  for (const auto& p : training_pairs(cfg.paths.train)) {
    texts.push_back(p.utterance);
    texts.push_back(p.response);
  }
  const text::Vocabulary vocab = text::train_bpe(texts, cfg.vocab_size);
  ensure_parent(cfg.paths.vocab);
  vocab.save(cfg.paths.vocab);
  json meta = artifact_meta(cfg);
  meta["vocab_fingerprint"] = hash_hex(vocab.fingerprint());
  write_sidecar(cfg.paths.vocab, meta);
  out << "vocabulary of " << vocab.size() << " tokens written to " << cfg.paths.vocab.string() << "\n";
}

void cmd_build_index(const RunArgs& a, std::ostream& out) {
  const RunConfig cfg = load_config(a);
  require_file(cfg.paths.kb, "knowledge base");
  require_set(cfg.paths.index, "index");
  const text::Vocabulary vocab = load_vocab(cfg);
  const kb::KnowledgeBase kb = kb::load_kb_jsonl(cfg.paths.kb);
  retriever::DualEncoder enc(sized(cfg.retriever, vocab), cfg.seed + kRetrieverSeedOffset);
  const retriever::DenseIndex index = retriever::build_kb_index(enc, vocab, kb);
  ensure_parent(cfg.paths.index);
  index.save(cfg.paths.index);
  json meta = artifact_meta(cfg);
  meta["passage_fingerprint"] = hash_hex(index.fingerprint());
  meta["vocab_fingerprint"] = hash_hex(vocab.fingerprint());
  write_sidecar(cfg.paths.index, meta);
  out << "indexed " << index.size() << " documents (d=" << index.dim() << ") into " << cfg.paths.index.string()
      << "\n";
}

void cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = load_config(a.run);
  if (a.max_steps >= 0) cfg.training.max_steps = static_cast<std::size_t>(a.max_steps);
  if (a.epochs >= 0) cfg.training.epochs = static_cast<std::size_t>(a.epochs);
  if (a.lr >= 0) cfg.training.lr = a.lr;
  if (a.k >= 0) cfg.training.k = static_cast<std::size_t>(a.k);
  if (a.checkpoint_every >= 0) cfg.training.checkpoint_every = static_cast<std::size_t>(a.checkpoint_every);
  cfg.validate();

  const bool retrieval = !a.no_retrieval && !a.merge_kb_into_train;
  const std::string tag = model_tag(retrieval, a.merge_kb_into_train);

  // Every input is checked before any work starts.
  require_file(cfg.paths.train, "training pairs");
  require_file(cfg.paths.vocab, "vocabulary");
  require_set(cfg.paths.checkpoint_dir, "checkpoint_dir");
  if (retrieval || a.merge_kb_into_train) require_file(cfg.paths.kb, "knowledge base");
  if (retrieval) require_file(cfg.paths.index, "index");

  const text::Vocabulary vocab = load_vocab(cfg);
  std::vector<kb::DialoguePair> pairs = training_pairs(cfg.paths.train);
  kb::KnowledgeBase kb;
  if (retrieval || a.merge_kb_into_train) kb = kb::load_kb_jsonl(cfg.paths.kb);
  if (a.merge_kb_into_train) {
    auto extra = kb::kb_to_pairs(kb);
    pairs.insert(pairs.end(), extra.begin(), extra.end());
  }
  std::vector<rag::EncodedPair> encoded;
  encoded.reserve(pairs.size());
  for (const auto& p : pairs) {
    encoded.push_back(rag::encode_pair(vocab, p.utterance, p.response, cfg.training.max_response_len));
  }

  const fs::path ckpt_path = cfg.paths.checkpoint_dir / kLastCheckpoint;
  const fs::path log_path = cfg.paths.checkpoint_dir / kLossLog;
  std::optional<nn::Checkpoint> restored;
  if (a.resume && fs::exists(ckpt_path)) {
    restored = nn::load_checkpoint(ckpt_path);
    check_header(restored->header, cfg, vocab, ckpt_path);
    if (restored->header.value("model", std::string()) != tag) {
      throw StateMismatchError("checkpoint " + ckpt_path.string() + " holds a '" +
                               restored->header.value("model", std::string()) + "' model, not '" + tag + "'");
    }
  }

  const auto gen_cfg = sized(cfg.generator, vocab);
  auto gen = restored ? std::make_unique<nn::Seq2Seq>(gen_cfg, restored->extract_store("gen.", cfg.seed))
                      : std::make_unique<nn::Seq2Seq>(gen_cfg, cfg.seed);
  std::unique_ptr<retriever::DualEncoder> enc;
  std::unique_ptr<retriever::DenseIndex> index;
  std::unique_ptr<rag::DialogueModel> model;
  if (retrieval) {
    const auto ret_cfg = sized(cfg.retriever, vocab);
    const std::uint64_t rseed = cfg.seed + kRetrieverSeedOffset;
    enc = restored ? std::make_unique<retriever::DualEncoder>(ret_cfg, restored->extract_store("qenc.", rseed),
                                                              restored->extract_store("penc.", rseed))
                   : std::make_unique<retriever::DualEncoder>(ret_cfg, rseed);
    index = std::make_unique<retriever::DenseIndex>(load_index(cfg));
    auto m = std::make_unique<rag::RagModel>(*gen, *enc, *index, kb, vocab, cfg.training.k);
    m->set_query_lr_scale(cfg.training.query_lr_scale);
    model = std::move(m);
  } else {
    model = std::make_unique<rag::BaselineModel>(*gen);
  }

  nn::AdamConfig acfg;
  acfg.lr = cfg.training.lr;
  acfg.weight_decay = cfg.training.weight_decay;
  acfg.warmup_steps = cfg.training.warmup_steps;
  nn::Adam adam(acfg);

  const rag::TrainLoop loop({cfg.seed, cfg.training.epochs, cfg.training.max_steps}, encoded.size());
  std::size_t start = 0;
  std::vector<std::string> log_lines;
  if (restored) {
    start = restored->header.at("step").get<std::size_t>();
    std::map<std::string, nn::Tensor> moments;
    for (const auto& [name, t] : restored->tensors) {
      if (name.rfind("adam.", 0) == 0) moments.emplace(name, t);
    }
    adam.import_state(moments, restored->header.at("adam_steps").get<std::uint64_t>());
    if (fs::exists(log_path)) log_lines = read_lines(log_path);
    if (log_lines.size() < start) {
      throw StateMismatchError("loss log " + log_path.string() + " is shorter than the checkpoint step");
    }
    log_lines.resize(start);
    out << "resuming at step " << start << "\n";
  }

  fs::create_directories(cfg.paths.checkpoint_dir);
  json meta = artifact_meta(cfg);
  meta["model"] = tag;

  auto save = [&](std::size_t step) {
    nn::Checkpoint ck;
    ck.header = meta;
    ck.header["step"] = step;
    ck.header["total_steps"] = loop.total_steps();
    ck.header["adam_steps"] = adam.steps_taken();
    ck.header["vocab_fingerprint"] = hash_hex(vocab.fingerprint());
    ck.header["train_k"] = cfg.training.k;
    ck.header["config"] = cfg.to_json();
    for (auto* store : model->trainable()) ck.add_store(*store);
    if (enc) {
      ck.add_store(enc->passage_params());
      ck.header["passage_fingerprint"] = hash_hex(enc->passage_fingerprint());
    }
    for (auto& [name, t] : adam.export_state()) ck.tensors.emplace(name, std::move(t));
    nn::save_checkpoint(ckpt_path, ck);
    write_jsonl(log_path, log_lines);
    write_sidecar(log_path, meta);
  };

  double first_loss = std::nan(""), window = 0.0;
  std::size_t window_n = 0, last_saved = start;
  loop.run(*model, encoded, adam, start, [&](const rag::StepLog& s) {
    log_lines.push_back(loss_line(s).dump());
    if (std::isnan(first_loss)) first_loss = s.result.loss_per_token();
    window += s.result.loss_per_token();
    ++window_n;
    if (cfg.training.checkpoint_every > 0 && s.step % cfg.training.checkpoint_every == 0) {
      save(s.step);
      last_saved = s.step;
      out << "step " << s.step << "/" << loop.total_steps() << " loss/token " << std::setprecision(4)
          << window / static_cast<double>(window_n) << "\n";
      window = 0.0;
      window_n = 0;
    }
    return true;
  });
  if (last_saved != loop.total_steps() || !fs::exists(ckpt_path)) save(loop.total_steps());
  out << "trained " << tag << " for " << loop.total_steps() << " steps; checkpoint " << ckpt_path.string()
      << ", loss log " << log_path.string() << "\n";
}

void cmd_generate(const GenerateArgs& a, std::ostream& out) {
  RunConfig cfg = load_config(a.run);
  if (a.beam >= 0) cfg.generation.beam_size = static_cast<std::size_t>(a.beam);
  if (!a.mode.empty()) cfg.generation.mode = rag::parse_decoding_mode(a.mode);
  const fs::path in = a.in.empty() ? cfg.paths.eval : a.in;
  const fs::path out_dir = a.out_dir.empty() ? cfg.paths.reports : a.out_dir;
  require_file(in, "evaluation pairs");
  require_set(out_dir, "reports");
  std::vector<std::size_t> ks = a.ks;
  if (ks.empty()) ks.push_back(cfg.generation.k);
  for (std::size_t k : ks) {
    if (k == 0) throw ValidationError("--k values must be positive");
  }

  auto sys = load_system(cfg, a.checkpoint);
  std::vector<kb::DialoguePair> pairs = kb::load_pairs_jsonl(in);
  if (!a.split.empty()) pairs = kb::filter_split(pairs, kb::parse_split(a.split));
  if (a.limit > 0 && pairs.size() > a.limit) pairs.resize(a.limit);
  if (pairs.empty()) throw ValidationError("no evaluation pairs in " + in.string());

  const bool retrieval = sys->model->uses_retrieval();
  // The baseline ignores k, so a sweep collapses to one run.
  if (!retrieval) ks = {0};
  fs::create_directories(out_dir);
  for (std::size_t k : ks) {
    rag::GenerationConfig g = cfg.generation;
    if (retrieval) g.k = k;
    g.validate();
    std::vector<std::string> lines, hyps, refs;
    for (const auto& p : pairs) {
      const rag::Generation gen = sys->model->generate(sys->vocab.encode(p.utterance), g);
      rag::GenerationRecord rec = rag::make_record(sys->vocab, p.utterance, gen, g, retrieval);
      if (!retrieval) rec.k = 0;
      lines.push_back(rec.to_json().dump());
      hyps.push_back(rec.response);
      refs.push_back(p.response);
    }
    const std::string stem = sys->tag + "-k" + std::to_string(k);
    const fs::path gen_path = out_dir / (stem + ".jsonl");
    write_jsonl(gen_path, lines);
    json meta = artifact_meta(cfg);
    meta["model"] = sys->tag;
    write_sidecar(gen_path, meta);

    const metrics::EvalReport report =
        metrics::evaluate(metrics::EvalCorpus::from_text(hyps, refs), sys->tag, k, g.beam_size);
    json rj = report.to_json();
    rj.update(meta);
    rj["mode"] = rag::to_string(g.mode);
    rj["checkpoint_step"] = sys->header.value("step", 0);
    rj["generations"] = gen_path.filename().string();
    write_json(out_dir / (stem + ".report.json"), rj);
    out << stem << ": BLEU-4 " << std::fixed << std::setprecision(2) << report.bleu4 << " Distinct-1 "
        << 100.0 * report.distinct1 << "% Distinct-2 " << 100.0 * report.distinct2 << "% over " << report.n_pairs
        << " pairs\n"
        << std::defaultfloat;
  }
}

namespace {

std::vector<std::string> read_responses(const fs::path& path) {
  require_file(path, "input");
  std::vector<std::string> out;
  std::size_t n = 0;
  for (const auto& line : read_lines(path)) {
    ++n;
    try {
      out.push_back(json::parse(line).at("response").get<std::string>());
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ": record " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

void cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const auto hyps = read_responses(a.hyp);
  const auto refs = read_responses(a.ref);
  if (hyps.size() != refs.size()) {
    throw ValidationError("hypothesis and reference counts differ (" + std::to_string(hyps.size()) + " vs " +
                          std::to_string(refs.size()) + ")");
  }
  const metrics::EvalReport report = metrics::evaluate(metrics::EvalCorpus::from_text(hyps, refs), a.tag, a.k, a.beam);
  json rj = report.to_json();
  rj["version"] = kArtifactVersion;
  rj["hyp"] = a.hyp.string();
  rj["ref"] = a.ref.string();
  if (!a.out.empty()) write_json(a.out, rj);
  out << "BLEU-4 " << std::fixed << std::setprecision(2) << report.bleu4 << " Distinct-1 " << 100.0 * report.distinct1
      << "% Distinct-2 " << 100.0 * report.distinct2 << "% over " << report.n_pairs << " pairs\n"
      << std::defaultfloat;
}

void cmd_chat(const ChatArgs& a, std::istream& in, std::ostream& out) {
  RunConfig cfg = load_config(a.run);
  if (a.k >= 0) cfg.generation.k = static_cast<std::size_t>(a.k);
  if (!a.mode.empty()) cfg.generation.mode = rag::parse_decoding_mode(a.mode);
  cfg.generation.validate();
  auto sys = load_system(cfg, a.checkpoint);
  const bool retrieval = sys->model->uses_retrieval();
  rag::GenerationConfig g = cfg.generation;
  std::vector<std::string> log;

  std::string line;
  for (;;) {
    out << "> " << std::flush;
    if (!std::getline(in, line)) break;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    line = line.substr(first, line.find_last_not_of(" \t\r") - first + 1);
    if (line == "/quit") break;
    if (line.rfind("/k", 0) == 0) {
      try {
        const std::size_t k = parse_count(line.size() > 3 ? line.substr(3) : "", "k");
        if (k == 0) throw ValidationError("k must be positive");
        g.k = k;
        out << "k = " << g.k << "\n";
      } catch (const ValidationError& e) {
        out << "usage: /k <positive integer>\n";
      }
      continue;
    }
    if (line.rfind("/mode", 0) == 0) {
      try {
        g.mode = rag::parse_decoding_mode(line.size() > 6 ? line.substr(6) : "");
        out << "mode = " << rag::to_string(g.mode) << "\n";
      } catch (const ValidationError&) {
        out << "usage: /mode fast|thorough\n";
      }
      continue;
    }
    if (line[0] == '/') {
      out << "commands: /k <n>, /mode fast|thorough, /quit\n";
      continue;
    }
    const rag::Generation gen = sys->model->generate(sys->vocab.encode(line), g);
    const rag::GenerationRecord rec = rag::make_record(sys->vocab, line, gen, g, retrieval);
    out << rec.response << "\n";
    for (const auto& r : gen.retrieved) {
      out << "  " << std::fixed << std::setprecision(4) << r.prob << std::defaultfloat << "  "
          << sys->rag->document_at_row(r.row).title << "\n";
    }
    if (!a.log.empty()) {
      log.push_back(rec.to_json().dump());
      write_jsonl(a.log, log);
    }
  }
}

}  // namespace ragdial::cli
