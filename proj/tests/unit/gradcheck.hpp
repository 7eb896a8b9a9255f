#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gmeld/dc/ops.hpp"

namespace gmeld::testing {

struct GradCheckResult {
  bool ok = true;
  double worst_abs = 0.0;
  std::string where;
};

inline dc::Tensor random_leaf(dc::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(dc::numel(shape));
  for (auto& x : v) x = n(rng);
  return dc::Tensor(std::move(shape), std::move(v), true);
}

// Central differences on every coordinate of every leaf; passes when
// |analytic - numeric| <= atol + rtol * |numeric|.
inline GradCheckResult gradcheck(const std::function<dc::Tensor()>& loss_fn, std::vector<dc::Tensor> leaves,
                                 double rtol = 1e-3, double atol = 1e-6, double h = 1e-4) {
  dc::backward(loss_fn());
  std::vector<std::vector<double>> analytic;
  for (auto& t : leaves) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.numel(), 0.0);
    }
  }
  GradCheckResult r;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    auto values = leaves[k].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double keep = values[i];
      values[i] = keep + h;
      const double up = loss_fn().item();
      values[i] = keep - h;
      const double down = loss_fn().item();
      values[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double diff = std::abs(analytic[k][i] - numeric);
      r.worst_abs = std::max(r.worst_abs, diff);
      if (diff > atol + rtol * std::abs(numeric)) {
        r.ok = false;
        r.where = "leaf " + std::to_string(k) + " index " + std::to_string(i) + ": analytic " +
                  std::to_string(analytic[k][i]) + " numeric " + std::to_string(numeric);
        return r;
      }
    }
  }
  return r;
}

}  // namespace gmeld::testing
