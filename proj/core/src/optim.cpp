#include "gmeld/dc/optim.hpp"

#include <cmath>

#include "gmeld/error.hpp"

namespace gmeld::dc {

void adamw_step(ParamStore& params, OptimizerState& state) {
  std::string missing;
  for (const auto& [name, t] : params) {
    if (params.is_frozen(name)) throw ContractError("attempt to update frozen parameter '" + name + "'");
    if (!t.has_grad()) missing += (missing.empty() ? "" : ", ") + name;
  }
  if (!missing.empty()) throw ContractError("adamw_step: missing gradient for " + missing);

  const auto& cfg = state.config;
  const double t = static_cast<double>(params.step_count + 1);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - cfg.learning_rate * cfg.weight_decay;

  for (auto& [name, param] : params) {
    auto& m = state.first_moment[name];
    auto& v = state.second_moment[name];
    if (m.size() != param.numel()) m.assign(param.numel(), 0.0);
    if (v.size() != param.numel()) v.assign(param.numel(), 0.0);
    auto w = param.mutable_data();
    const auto g = param.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      w[i] = w[i] * decay - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
      if (!std::isfinite(w[i])) throw NumericError("adamw_step produced non-finite value in '" + name + "'");
    }
  }
  params.step_count += 1;
  params.clear_grad();
}

}  // namespace gmeld::dc
