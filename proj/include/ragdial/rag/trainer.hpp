#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "ragdial/nn/adam.hpp"
#include "ragdial/rag/model.hpp"

namespace ragdial::rag {

struct StepResult {
  double loss = 0.0;      // nats for the whole response
  std::size_t tokens = 0;  // response length, EOS included
  double loss_per_token() const { return tokens ? loss / static_cast<double>(tokens) : 0.0; }
};

// One optimizer update on a single pair (batch size 1).
StepResult train_step(DialogueModel& model, const EncodedPair& pair, nn::Adam& optimizer,
                      std::mt19937_64& dropout_rng);

struct TrainLoopConfig {
  std::uint64_t seed = 0;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;  // 0: epochs * pairs
};

struct StepLog {
  std::size_t step = 0;  // 1-based
  std::size_t epoch = 0;
  std::size_t example = 0;  // index into the training pairs
  StepResult result;
};

// Deterministic schedule: the visiting order of epoch e is a shuffle
// seeded by (seed, e) and step s draws dropout from a generator seeded by
// (seed, s), so a run restored at `start_step` continues exactly as the
// uninterrupted run would have.
class TrainLoop {
 public:
  TrainLoop(TrainLoopConfig cfg, std::size_t num_pairs);

  std::size_t total_steps() const { return total_; }
  std::size_t example_at(std::size_t step) const;  // step is 0-based
  std::size_t epoch_of(std::size_t step) const { return step / n_; }

  // Runs steps [start_step, total_steps). `on_step` may return false to stop.
  void run(DialogueModel& model, const std::vector<EncodedPair>& pairs, nn::Adam& optimizer,
           std::size_t start_step, const std::function<bool(const StepLog&)>& on_step) const;

  static std::mt19937_64 rng_for(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

 private:
  std::vector<std::size_t> order_for_epoch(std::size_t epoch) const;

  TrainLoopConfig cfg_;
  std::size_t n_;
  std::size_t total_;
};

}  // namespace ragdial::rag
