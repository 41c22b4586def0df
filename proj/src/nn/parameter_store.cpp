#include "ragdial/nn/parameter_store.hpp"

#include "ragdial/common/errors.hpp"
#include "ragdial/common/hash.hpp"

namespace ragdial::nn {

Parameter& ParameterStore::add(const std::string& name, Tensor init) {
  if (params_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Tensor grad(init.shape());
  auto [it, _] = params_.emplace(name, Parameter{std::move(init), std::move(grad)});
  return it->second;
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& [_, p] : params_) p.grad.fill(0.0);
}

std::size_t ParameterStore::num_elements() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.size();
  return n;
}

Tensor ParameterStore::normal(Shape shape, double stddev) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& x : t.values()) x = dist(rng_);
  return t;
}

std::uint64_t ParameterStore::fingerprint() const {
  Fnv1a h;
  for (const auto& [name, p] : params_) {
    h.update(name);
    for (std::size_t d : p.value.shape()) h.update_pod(static_cast<std::uint64_t>(d));
    h.update(std::as_bytes(p.value.values()));
  }
  return h.digest();
}

}  // namespace ragdial::nn
