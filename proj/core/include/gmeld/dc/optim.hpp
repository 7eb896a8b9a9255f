#pragma once

#include <map>
#include <string>
#include <vector>

#include "gmeld/dc/param_store.hpp"

namespace gmeld::dc {

struct AdamWConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment accumulators for decoupled-weight-decay Adam, keyed by parameter name.
struct OptimizerState {
  explicit OptimizerState(AdamWConfig cfg = {}) : config(cfg) {}

  AdamWConfig config;
  std::map<std::string, std::vector<double>> first_moment;
  std::map<std::string, std::vector<double>> second_moment;

  void set_learning_rate(double lr) { config.learning_rate = lr; }
  double learning_rate() const { return config.learning_rate; }
};

// One AdamW update of every parameter in `params`, then step_count += 1 and
// grads cleared. A frozen parameter in `params` is a contract violation.
void adamw_step(ParamStore& params, OptimizerState& state);

}  // namespace gmeld::dc
