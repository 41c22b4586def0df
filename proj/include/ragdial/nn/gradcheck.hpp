#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ragdial/nn/parameter_store.hpp"
#include "ragdial/nn/tape.hpp"

namespace ragdial::nn {

struct GradCheckOptions {
  double eps = 1e-5;
  // 0 checks every element of every tensor.
  std::size_t max_elements_per_tensor = 0;
  // When > 0, check this many elements drawn uniformly over all stores
  // instead (max_elements_per_tensor is then ignored).
  std::size_t sample_total = 0;
  std::uint64_t seed = 0;
  // Central-difference stencil: 2 points (second order) or 4 points
  // (fourth order, tolerates a larger eps and so less cancellation).
  int points = 2;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

using LossFn = std::function<Var(Tape&)>;

// Compares the tape's analytic gradient against central differences,
// by default (f(x+eps) - f(x-eps)) / (2 eps); relative error measured against
// max(|analytic|, |numeric|, 1e-8). `loss` must be deterministic.
GradCheckResult gradient_check(const LossFn& loss, const std::vector<ParameterStore*>& stores,
                               const GradCheckOptions& opts = {});
GradCheckResult gradient_check(const LossFn& loss, ParameterStore& store, const GradCheckOptions& opts = {});

}  // namespace ragdial::nn
