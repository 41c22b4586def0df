#include "ragdial/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace ragdial::nn {

namespace {

struct Probe {
  ParameterStore* store;
  std::string name;
  std::size_t index;
};

std::vector<Probe> select_probes(const std::vector<ParameterStore*>& stores, const GradCheckOptions& opts) {
  std::mt19937_64 rng(opts.seed);
  std::vector<Probe> probes;
  if (opts.sample_total > 0) {
    std::vector<Probe> all_tensors;
    std::vector<double> weights;
    for (ParameterStore* s : stores)
      for (const auto& [name, p] : s->entries()) {
        all_tensors.push_back({s, name, 0});
        weights.push_back(static_cast<double>(p.value.size()));
      }
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    for (std::size_t i = 0; i < opts.sample_total; ++i) {
      Probe pr = all_tensors[pick(rng)];
      std::uniform_int_distribution<std::size_t> idx(0, pr.store->get(pr.name).value.size() - 1);
      pr.index = idx(rng);
      probes.push_back(pr);
    }
    return probes;
  }
  for (ParameterStore* s : stores) {
    for (const auto& [name, p] : s->entries()) {
      const std::size_t n = p.value.size();
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      if (opts.max_elements_per_tensor > 0 && n > opts.max_elements_per_tensor) {
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(opts.max_elements_per_tensor);
        std::sort(idx.begin(), idx.end());
      }
      for (std::size_t i : idx) probes.push_back({s, name, i});
    }
  }
  return probes;
}

double evaluate(const LossFn& loss) {
  Tape tape(false);
  return loss(tape).value().item();
}

}  // namespace

GradCheckResult gradient_check(const LossFn& loss, const std::vector<ParameterStore*>& stores,
                               const GradCheckOptions& opts) {
  if (opts.points != 2 && opts.points != 4) throw std::invalid_argument("points must be 2 or 4");
  for (ParameterStore* s : stores) s->zero_grad();
  {
    Tape tape(true);
    Var l = loss(tape);
    tape.backward(l);
  }
  GradCheckResult result;
  for (const Probe& pr : select_probes(stores, opts)) {
    Parameter& p = pr.store->get(pr.name);
    const double analytic = p.grad[pr.index];
    const double saved = p.value[pr.index];
    auto f_at = [&](double offset) {
      p.value[pr.index] = saved + offset;
      return evaluate(loss);
    };
    const double h = opts.eps;
    double numeric = 0.0;
    if (opts.points == 4) {
      numeric = (8.0 * (f_at(h) - f_at(-h)) - (f_at(2 * h) - f_at(-2 * h))) / (12.0 * h);
    } else {
      numeric = (f_at(h) - f_at(-h)) / (2.0 * h);
    }
    p.value[pr.index] = saved;
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic - numeric) / denom;
    ++result.checked;
    if (rel > result.max_rel_error || result.checked == 1) {
      result.max_rel_error = std::max(result.max_rel_error, rel);
      if (rel >= result.max_rel_error) {
        result.worst_param = pr.name;
        result.worst_index = pr.index;
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

GradCheckResult gradient_check(const LossFn& loss, ParameterStore& store, const GradCheckOptions& opts) {
  return gradient_check(loss, std::vector<ParameterStore*>{&store}, opts);
}

}  // namespace ragdial::nn
