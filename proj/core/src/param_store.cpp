#include "gmeld/dc/param_store.hpp"

#include <cmath>

#include "gmeld/error.hpp"

namespace gmeld::dc {

void ParamStore::add(const std::string& name, Tensor value) {
  if (!value.defined()) throw ContractError("parameter '" + name + "' is undefined");
  if (!params_.emplace(name, std::move(value)).second) {
    throw ContractError("duplicate parameter name '" + name + "'");
  }
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

std::size_t ParamStore::total_numel() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

ParamStore ParamStore::view(const std::string& prefix) const {
  ParamStore out;
  for (auto it = params_.lower_bound(prefix); it != params_.end() && it->first.starts_with(prefix); ++it) {
    out.params_.emplace(it->first, it->second);
  }
  for (const auto& f : frozen_prefixes_) out.frozen_prefixes_.insert(f);
  return out;
}

ParamStore ParamStore::deep_copy() const {
  ParamStore out;
  for (const auto& [name, t] : params_) out.params_.emplace(name, t.clone(t.requires_grad()));
  out.frozen_prefixes_ = frozen_prefixes_;
  out.step_count = step_count;
  return out;
}

void ParamStore::merge(const ParamStore& other, const std::string& prefix) {
  for (const auto& [name, t] : other.params_) add(prefix + name, t);
}

void ParamStore::freeze(const std::string& prefix) { frozen_prefixes_.insert(prefix); }

bool ParamStore::is_frozen(const std::string& name) const {
  for (const auto& f : frozen_prefixes_) {
    if (name.starts_with(f)) return true;
  }
  return false;
}

void ParamStore::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

void ParamStore::clear_grad() {
  for (auto& [_, t] : params_) t.clear_grad();
}

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  std::vector<double> values(numel(shape));
  for (double& v : values) v = dist(rng);
  return Tensor(std::move(shape), std::move(values), true);
}

bool same_manifest(const ParamStore& a, const ParamStore& b) {
  if (a.size() != b.size()) return false;
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.shape() != ib->second.shape()) return false;
  }
  return true;
}

}  // namespace gmeld::dc
