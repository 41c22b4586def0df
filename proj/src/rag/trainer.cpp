#include "ragdial/rag/trainer.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ragdial/common/errors.hpp"

namespace ragdial::rag {

namespace {
constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kDropoutStream = 2;
}  // namespace

StepResult train_step(DialogueModel& model, const EncodedPair& pair, nn::Adam& optimizer,
                      std::mt19937_64& dropout_rng) {
  std::vector<nn::ParameterStore*> stores = model.trainable();
  for (nn::ParameterStore* s : stores) s->zero_grad();
  nn::Tape tape(true);
  nn::Var loss = model.loss(tape, pair, nn::RunMode::train(dropout_rng));
  const double value = loss.value().item();
  if (!std::isfinite(value)) throw std::runtime_error("non-finite training loss");
  tape.backward(loss);
  optimizer.step(stores, model.lr_scales());
  return {value, pair.response.size()};
}

TrainLoop::TrainLoop(TrainLoopConfig cfg, std::size_t num_pairs) : cfg_(cfg), n_(num_pairs) {
  if (n_ == 0) throw ValidationError("no training pairs");
  if (cfg_.epochs == 0 && cfg_.max_steps == 0) throw ValidationError("epochs must be at least 1");
  total_ = cfg_.max_steps ? cfg_.max_steps : cfg_.epochs * n_;
}

std::mt19937_64 TrainLoop::rng_for(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

std::vector<std::size_t> TrainLoop::order_for_epoch(std::size_t epoch) const {
  std::vector<std::size_t> order(n_);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng = rng_for(cfg_.seed, kShuffleStream, epoch);
  // Explicit Fisher-Yates: std::shuffle's draw pattern is unspecified.
  for (std::size_t i = n_; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::size_t TrainLoop::example_at(std::size_t step) const { return order_for_epoch(epoch_of(step))[step % n_]; }

void TrainLoop::run(DialogueModel& model, const std::vector<EncodedPair>& pairs, nn::Adam& optimizer,
                    std::size_t start_step, const std::function<bool(const StepLog&)>& on_step) const {
  if (pairs.size() != n_) throw ValidationError("pair count differs from the schedule");
  std::size_t cached_epoch = static_cast<std::size_t>(-1);
  std::vector<std::size_t> order;
  for (std::size_t step = start_step; step < total_; ++step) {
    const std::size_t epoch = epoch_of(step);
    if (epoch != cached_epoch) {
      order = order_for_epoch(epoch);
      cached_epoch = epoch;
    }
    const std::size_t ex = order[step % n_];
    std::mt19937_64 rng = rng_for(cfg_.seed, kDropoutStream, step);
    StepLog log{step + 1, epoch, ex, train_step(model, pairs[ex], optimizer, rng)};
    if (on_step && !on_step(log)) break;
  }
}

}  // namespace ragdial::rag
