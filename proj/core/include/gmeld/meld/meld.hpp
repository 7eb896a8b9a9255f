#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gmeld/dc/ops.hpp"
#include "gmeld/dc/param_store.hpp"
#include "gmeld/world/world.hpp"

namespace gmeld::meld {

using dc::ParamStore;
using dc::Tensor;

struct KappaRange {
  double lo = 0.0;
  double hi = 0.0;
};

/// Sensor keep flags (each column of the mask is all ones or all zeros).
struct MaskMatrix {
  std::vector<std::uint8_t> keep;
  std::vector<double> kappa;  // ratio drawn per sensor group
  std::size_t kept = 0;

  std::size_t num_sensors() const { return keep.size(); }
  std::size_t masked() const { return keep.size() - kept; }
  MaskMatrix complement() const;

  static MaskMatrix all_kept(std::size_t num_sensors, std::size_t num_groups = 1);
};

// floor((1 - kappa) * size), guarded against representation error just below an integer.
std::size_t kept_count(std::size_t group_size, double kappa);

// Per group: kappa_g ~ U[lo, hi], keep kept_count(|g|, kappa_g) sensors drawn without replacement.
MaskMatrix sample_mask(const std::vector<world::SensorGroup>& groups, std::size_t num_sensors,
                       std::span<const KappaRange> ranges, std::mt19937_64& rng);

// [N, S, D] with masked sensors zeroed.
Tensor apply_mask(const Tensor& features, const MaskMatrix& mask);

// (1/N)(1/kept) * sum over frames and masked sensors of |zhat - z|^2, N = frame rows.
// With normalize_by_masked_count the divisor is the masked count instead.
Tensor distill_loss(const Tensor& z, const Tensor& zhat, const MaskMatrix& mask, bool normalize_by_masked_count = false);

// target <- rho * target + (1 - rho) * online, name by name.
void ema_update(const ParamStore& online, ParamStore& target, double rho);

enum class Strategy { Increase, Decrease, Constant };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);

struct ScheduleSpec {
  double lambda0 = 0.01;
  double gamma = 1.05;
  Strategy strategy = Strategy::Increase;
  std::size_t max_epoch = 50;

  void validate() const;
};

double lambda_at(const ScheduleSpec& schedule, std::size_t epoch);

Tensor total_loss(const Tensor& task_loss, const Tensor& distill, double lambda);

}  // namespace gmeld::meld
