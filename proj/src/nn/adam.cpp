#include "ragdial/nn/adam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ragdial::nn {

double Adam::current_lr() const {
  if (cfg_.warmup_steps == 0) return cfg_.lr;
  const double frac = static_cast<double>(std::max<std::uint64_t>(t_, 1)) / static_cast<double>(cfg_.warmup_steps);
  return cfg_.lr * std::min(1.0, frac);
}

void Adam::step(const std::vector<ParameterStore*>& stores) {
  step(stores, std::vector<double>(stores.size(), 1.0));
}

void Adam::step(const std::vector<ParameterStore*>& stores, const std::vector<double>& lr_scales) {
  if (lr_scales.size() != stores.size()) throw std::invalid_argument("one lr scale per store");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t s = 0; s < stores.size(); ++s) {
    ParameterStore* store = stores[s];
    const double lr = current_lr() * lr_scales[s];
    for (auto& [name, p] : store->entries()) {
      auto [it, inserted] = state_.try_emplace(name);
      Moments& mo = it->second;
      if (inserted) {
        mo.m = Tensor(p.value.shape());
        mo.v = Tensor(p.value.shape());
      }
      double* x = p.value.data();
      const double* g = p.grad.data();
      double* m = mo.m.data();
      double* v = mo.v.data();
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        x[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * x[i]);
      }
    }
  }
}

std::map<std::string, Tensor> Adam::export_state() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, mo] : state_) {
    out.emplace("adam.m." + name, mo.m);
    out.emplace("adam.v." + name, mo.v);
  }
  return out;
}

void Adam::import_state(const std::map<std::string, Tensor>& tensors, std::uint64_t steps_taken) {
  state_.clear();
  const std::string mp = "adam.m.", vp = "adam.v.";
  for (const auto& [key, t] : tensors) {
    if (key.rfind(mp, 0) == 0) state_[key.substr(mp.size())].m = t;
    if (key.rfind(vp, 0) == 0) state_[key.substr(vp.size())].v = t;
  }
  t_ = steps_taken;
}

}  // namespace ragdial::nn
