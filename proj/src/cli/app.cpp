#include "ragdial/cli/app.hpp"

#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "ragdial/common/errors.hpp"

namespace ragdial::cli {

namespace {

void add_run_args(CLI::App* cmd, RunArgs& r) {
  cmd->add_option("--config", r.config, "JSON run config")->required();
  cmd->add_option("--seed", r.seed, "override the config seed");
}

void finish_run_args(CLI::App* cmd, RunArgs& r) { r.has_seed = cmd->count("--seed") > 0; }

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Retrieval-augmented dialogue generation toolkit", "ragdial"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "filter, sample or mix KB dumps into a KB file");
  c_ingest->add_option("--source", ingest.source, "smikb or wiki");
  c_ingest->add_option("--in", ingest.in, "raw KB JSONL");
  c_ingest->add_option("--mix", ingest.mix, "two raw KB JSONL files to mix")->expected(2);
  c_ingest->add_option("--mix-sources", ingest.mix_sources, "sources of the --mix files");
  c_ingest->add_option("--ratio", ingest.ratio, "mix ratio A:B");
  c_ingest->add_option("--out", ingest.out, "output KB JSONL")->required();
  c_ingest->add_option("--sample", ingest.sample, "keep this many documents");
  c_ingest->add_option("--seed", ingest.seed);
  c_ingest->add_option("--report", ingest.report, "error report JSONL");
  c_ingest->add_option("--max-body-words", ingest.max_body_words, "0 disables truncation");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "write a toy retrieval-relevant corpus and config");
  c_synth->add_option("--out-dir", synth.out_dir)->required();
  c_synth->add_option("--seed", synth.seed);
  c_synth->add_option("--num-docs", synth.num_docs);
  c_synth->add_option("--train-topics", synth.train_topics);
  c_synth->add_option("--templates-per-topic", synth.templates_per_topic);
  c_synth->add_option("--heldout-pairs", synth.heldout_pairs);
  c_synth->add_flag("--heldout-untrained", synth.heldout_untrained, "held-out pairs ask about untrained topics");

  SplitArgs split;
  auto* c_split = app.add_subcommand("split", "assign train/valid/test splits to dialogue pairs");
  c_split->add_option("--in", split.in)->required();
  c_split->add_flag("--eou", split.eou, "input is __eou__-delimited dialogue text");
  c_split->add_option("--dataset", split.dataset, "dataset tag for --eou input");
  c_split->add_option("--out", split.out)->required();
  c_split->add_option("--seed", split.seed);
  c_split->add_option("--ratios", split.ratios, "train,valid,test fractions");

  RunArgs vocab_args;
  auto* c_vocab = app.add_subcommand("build-vocab", "train the BPE vocabulary");
  add_run_args(c_vocab, vocab_args);

  RunArgs index_args;
  auto* c_index = app.add_subcommand("build-index", "embed the KB with the passage encoder");
  add_run_args(c_index, index_args);

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "train the generator (and query encoder)");
  add_run_args(c_train, train.run);
  c_train->add_flag("--no-retrieval", train.no_retrieval, "baseline without retrieval");
  c_train->add_flag("--merge-kb-into-train", train.merge_kb_into_train,
                    "baseline without retrieval, KB documents added as training pairs");
  c_train->add_flag("--resume", train.resume, "continue from <checkpoint_dir>/last.ckpt");
  c_train->add_option("--max-steps", train.max_steps);
  c_train->add_option("--epochs", train.epochs);
  c_train->add_option("--lr", train.lr);
  c_train->add_option("--k", train.k, "documents marginalized per step");
  c_train->add_option("--checkpoint-every", train.checkpoint_every);

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "generate responses and evaluate them, one report per k");
  add_run_args(c_gen, gen.run);
  c_gen->add_option("--checkpoint", gen.checkpoint);
  c_gen->add_option("--in", gen.in, "dialogue pairs JSONL");
  c_gen->add_option("--split", gen.split, "only pairs of this split");
  c_gen->add_option("--k", gen.ks, "retrieved documents, e.g. 3,5,7")->delimiter(',');
  c_gen->add_option("--beam", gen.beam);
  c_gen->add_option("--mode", gen.mode, "fast or thorough");
  c_gen->add_option("--out-dir", gen.out_dir);
  c_gen->add_option("--limit", gen.limit, "first N pairs only");

  EvaluateArgs eval;
  auto* c_eval = app.add_subcommand("evaluate", "BLEU-4 and Distinct-N of a response file");
  c_eval->add_option("--hyp", eval.hyp, "JSONL with a response field per line")->required();
  c_eval->add_option("--ref", eval.ref, "JSONL with a response field per line")->required();
  c_eval->add_option("--out", eval.out, "report JSON");
  c_eval->add_option("--tag", eval.tag);
  c_eval->add_option("--k", eval.k);
  c_eval->add_option("--beam", eval.beam);

  ChatArgs chat;
  auto* c_chat = app.add_subcommand("chat", "interactive loop over a trained checkpoint");
  add_run_args(c_chat, chat.run);
  c_chat->add_option("--checkpoint", chat.checkpoint);
  c_chat->add_option("--k", chat.k);
  c_chat->add_option("--mode", chat.mode);
  c_chat->add_option("--log", chat.log, "generation JSONL of the session");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (c_ingest->parsed()) {
      cmd_ingest(ingest, out);
    } else if (c_synth->parsed()) {
      cmd_synth(synth, out);
    } else if (c_split->parsed()) {
      cmd_split(split, out);
    } else if (c_vocab->parsed()) {
      finish_run_args(c_vocab, vocab_args);
      cmd_build_vocab(vocab_args, out);
    } else if (c_index->parsed()) {
      finish_run_args(c_index, index_args);
      cmd_build_index(index_args, out);
    } else if (c_train->parsed()) {
      finish_run_args(c_train, train.run);
      cmd_train(train, out);
    } else if (c_gen->parsed()) {
      finish_run_args(c_gen, gen.run);
      cmd_generate(gen, out);
    } else if (c_eval->parsed()) {
      cmd_evaluate(eval, out);
    } else if (c_chat->parsed()) {
      finish_run_args(c_chat, chat.run);
      cmd_chat(chat, in, out);
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const StateMismatchError& e) {
    err << "state mismatch: " << e.what() << "\n";
    return kExitStateMismatch;
  } catch (const std::exception& e) {
    err << "failed: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace ragdial::cli
