#include "gmeld/meld/meld.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gmeld/error.hpp"

namespace gmeld::meld {

using namespace gmeld::dc;

MaskMatrix MaskMatrix::complement() const {
  MaskMatrix out = *this;
  for (auto& k : out.keep) k = k ? 0 : 1;
  out.kept = keep.size() - kept;
  return out;
}

MaskMatrix MaskMatrix::all_kept(std::size_t num_sensors, std::size_t num_groups) {
  MaskMatrix m;
  m.keep.assign(num_sensors, 1);
  m.kappa.assign(num_groups, 0.0);
  m.kept = num_sensors;
  return m;
}

std::size_t kept_count(std::size_t group_size, double kappa) {
  return static_cast<std::size_t>(std::floor((1.0 - kappa) * static_cast<double>(group_size) + 1e-9));
}

MaskMatrix sample_mask(const std::vector<world::SensorGroup>& groups, std::size_t num_sensors,
                       std::span<const KappaRange> ranges, std::mt19937_64& rng) {
  if (ranges.size() != groups.size()) {
    throw ConfigError("meld.kappa: expected " + std::to_string(groups.size()) + " group ranges, got " +
                      std::to_string(ranges.size()));
  }
  MaskMatrix m;
  m.keep.assign(num_sensors, 0);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& sensors = groups[g].sensors;
    const auto r = ranges[g];
    if (sensors.empty()) throw ConfigError("meld.kappa: sensor group '" + groups[g].name + "' is empty");
    if (!(0.0 <= r.lo && r.lo <= r.hi && r.hi <= 1.0)) {
      throw ConfigError("meld.kappa[" + std::to_string(g) + "]: range must satisfy 0 <= lo <= hi <= 1");
    }
    const double kappa = std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
    m.kappa.push_back(kappa);
    std::vector<std::size_t> order = sensors;
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n = kept_count(sensors.size(), kappa);
    for (std::size_t i = 0; i < n; ++i) {
      if (order[i] >= num_sensors) throw ConfigError("meld.kappa: sensor index out of range");
      m.keep[order[i]] = 1;
    }
    m.kept += n;
  }
  if (m.kept == 0) throw ContractError("mask keeps no sensor; the distillation normalizer would be zero");
  return m;
}

namespace {

Tensor column_selector(const Shape& shape, const MaskMatrix& mask, bool select_masked) {
  const std::size_t N = shape[0], S = shape[1], D = shape[2];
  std::vector<double> sel(N * S * D);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t s = 0; s < S; ++s) {
      const double v = (mask.keep[s] != 0) != select_masked ? 1.0 : 0.0;
      std::fill_n(sel.begin() + static_cast<std::ptrdiff_t>((n * S + s) * D), D, v);
    }
  return Tensor(shape, std::move(sel));
}

void check_masked_input(const Tensor& x, const MaskMatrix& mask, const char* op) {
  if (x.rank() != 3 || x.dim(1) != mask.num_sensors()) {
    throw DimensionError(std::string(op) + ": expected [N, " + std::to_string(mask.num_sensors()) + ", D], got " +
                         dc::to_string(x.shape()));
  }
}

}  // namespace

Tensor apply_mask(const Tensor& features, const MaskMatrix& mask) {
  check_masked_input(features, mask, "apply_mask");
  return hadamard(features, column_selector(features.shape(), mask, false));
}

Tensor distill_loss(const Tensor& z, const Tensor& zhat, const MaskMatrix& mask, bool normalize_by_masked_count) {
  check_masked_input(z, mask, "distill_loss");
  if (z.shape() != zhat.shape()) {
    throw DimensionError("distill_loss: online " + dc::to_string(z.shape()) + " vs target " + dc::to_string(zhat.shape()));
  }
  const std::size_t denom = normalize_by_masked_count ? mask.masked() : mask.kept;
  if (denom == 0 && !normalize_by_masked_count) throw ContractError("distill_loss: kept count is zero");
  const Tensor diff = hadamard(sub(zhat, z), column_selector(z.shape(), mask, true));
  const double norm = static_cast<double>(z.dim(0)) * static_cast<double>(std::max<std::size_t>(denom, 1));
  return scale(reduce_all(diff, Reduce::L2Sq), 1.0 / norm);
}

void ema_update(const ParamStore& online, ParamStore& target, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("meld.rho: must lie in [0, 1]");
  if (!same_manifest(online, target)) throw ContractError("ema_update: online and target manifests differ");
  for (auto& [name, zeta] : target) {
    const auto theta = online.get(name).data();
    auto z = zeta.mutable_data();
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = rho * z[i] + (1.0 - rho) * theta[i];
  }
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Increase: return "increase";
    case Strategy::Decrease: return "decrease";
    case Strategy::Constant: return "constant";
  }
  return "unknown";
}

Strategy strategy_from_string(const std::string& name) {
  if (name == "increase") return Strategy::Increase;
  if (name == "decrease") return Strategy::Decrease;
  if (name == "constant") return Strategy::Constant;
  throw ConfigError("meld.strategy: unknown strategy '" + name + "'");
}

void ScheduleSpec::validate() const {
  if (!(gamma >= 1.0)) throw ConfigError("meld.gamma: must be >= 1");
  if (!(lambda0 >= 0.0) || !std::isfinite(lambda0)) throw ConfigError("meld.lambda0: must be finite and >= 0");
  if (max_epoch == 0) throw ConfigError("optimizer.max_epoch: must be positive");
}

double lambda_at(const ScheduleSpec& schedule, std::size_t epoch) {
  schedule.validate();
  if (epoch > schedule.max_epoch) {
    throw ContractError("lambda_at: epoch " + std::to_string(epoch) + " beyond max_epoch " +
                        std::to_string(schedule.max_epoch));
  }
  const double n = static_cast<double>(epoch);
  const double m = static_cast<double>(schedule.max_epoch);
  switch (schedule.strategy) {
    case Strategy::Increase: return schedule.lambda0 * std::pow(schedule.gamma, n);
    case Strategy::Decrease: return schedule.lambda0 * std::pow(schedule.gamma, m) * std::pow(schedule.gamma, -n);
    case Strategy::Constant: {
      double sum = 0.0;
      for (std::size_t k = 0; k <= schedule.max_epoch; ++k) sum += schedule.lambda0 * std::pow(schedule.gamma, static_cast<double>(k));
      return sum / m;
    }
  }
  throw ContractError("unknown schedule strategy");
}

Tensor total_loss(const Tensor& task_loss, const Tensor& distill, double lambda) {
  if (task_loss.numel() != 1 || distill.numel() != 1) throw DimensionError("total_loss: both losses must be scalar");
  return add(task_loss, scale(distill, lambda));
}

}  // namespace gmeld::meld
