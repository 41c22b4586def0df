#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ragdial/nn/parameter_store.hpp"

namespace ragdial::nn {

struct AdamConfig {
  double lr = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;    // decoupled (AdamW-style); 0 disables
  std::uint64_t warmup_steps = 0;  // linear warmup; 0 disables
};

// Bias-corrected Adam. State is keyed by parameter name, so one optimizer
// can drive several stores as long as their names do not collide.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // One update over every parameter of every store; the step counter
  // advances once per call.
  void step(const std::vector<ParameterStore*>& stores);
  // As above with a learning-rate multiplier per store.
  void step(const std::vector<ParameterStore*>& stores, const std::vector<double>& lr_scales);
  void step(ParameterStore& store) { step(std::vector<ParameterStore*>{&store}); }

  double current_lr() const;
  std::uint64_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  // Moments exported as "adam.m.<name>" / "adam.v.<name>" for checkpoints.
  std::map<std::string, Tensor> export_state() const;
  void import_state(const std::map<std::string, Tensor>& tensors, std::uint64_t steps_taken);

 private:
  struct Moments {
    Tensor m;
    Tensor v;
  };
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace ragdial::nn
