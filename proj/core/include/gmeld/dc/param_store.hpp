#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "gmeld/dc/tensor.hpp"

namespace gmeld::dc {

/// Named trainable leaves. Iteration is lexicographic by name.
class ParamStore {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  std::vector<std::string> names() const;
  std::size_t size() const { return params_.size(); }
  std::size_t total_numel() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  // Shares the tensors whose names start with `prefix`.
  ParamStore view(const std::string& prefix) const;
  // Independent copy with fresh leaves.
  ParamStore deep_copy() const;
  // Adds every entry of `other` (names must not collide).
  void merge(const ParamStore& other, const std::string& prefix = "");

  void freeze(const std::string& prefix);
  bool is_frozen(const std::string& name) const;

  void zero_grad();
  void clear_grad();

  std::uint64_t step_count = 0;

 private:
  std::map<std::string, Tensor> params_;
  std::set<std::string> frozen_prefixes_;
};

/// uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

bool same_manifest(const ParamStore& a, const ParamStore& b);

}  // namespace gmeld::dc
