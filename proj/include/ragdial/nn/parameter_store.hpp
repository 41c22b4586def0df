#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ragdial/nn/tensor.hpp"

namespace ragdial::nn {

struct Parameter {
  Tensor value;
  Tensor grad;
};

// Named trainable tensors with matching gradient slots. Names are kept
// sorted, which fixes the order for checkpoints and fingerprints.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed), rng_(seed) {}

  Parameter& add(const std::string& name, Tensor init);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  std::map<std::string, Parameter>& entries() { return params_; }
  const std::map<std::string, Parameter>& entries() const { return params_; }
  std::vector<std::string> names() const;

  void zero_grad();
  std::size_t num_elements() const;

  std::uint64_t seed() const { return seed_; }
  std::mt19937_64& rng() { return rng_; }

  // Normal(0, stddev) initialisation drawn from the store's RNG.
  Tensor normal(Shape shape, double stddev);

  // Hash over names, shapes and raw values.
  std::uint64_t fingerprint() const;

 private:
  std::map<std::string, Parameter> params_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
};

}  // namespace ragdial::nn
