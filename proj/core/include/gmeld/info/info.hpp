#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmeld/world/world.hpp"

namespace gmeld::info {

/// P(o | y) for one sensor over a finite alphabet. table[y * alphabet + o].
struct Channel {
  std::size_t alphabet = 0;
  std::vector<double> table;
};

/// Joint law of the event vector y in {0,1}^C and conditionally independent
/// per-sensor observations. y is indexed by its bitmask (bit c = class c).
class DiscreteWorld {
 public:
  static constexpr std::uint64_t kDefaultCap = std::uint64_t{1} << 24;

  DiscreteWorld(std::size_t num_classes, std::vector<double> event_prior, std::vector<Channel> channels,
                std::uint64_t enumeration_cap = kDefaultCap);

  std::size_t num_classes() const { return num_classes_; }
  std::size_t num_sensors() const { return channels_.size(); }
  const std::vector<double>& event_prior() const { return prior_; }
  const Channel& channel(std::size_t k) const { return channels_.at(k); }
  // Number of nonzero-probability (y, o) tuples visited for the full sensor set.
  std::uint64_t enumeration_size() const { return enumeration_size_; }

  double event_entropy() const;

 private:
  std::size_t num_classes_;
  std::vector<double> prior_;
  std::vector<Channel> channels_;
  std::uint64_t enumeration_size_ = 0;
};

enum class SensorRole { Background, Redundant, Unique };
std::string to_string(SensorRole role);

struct SensorGainReport {
  double total_information = 0;          // bits
  double event_entropy = 0;              // H(y), bits
  std::vector<double> per_sensor_marginal;
  std::vector<double> per_sensor_gain;
  std::vector<SensorRole> role_labels;
  double eps = 0.01;
};

void to_json(nlohmann::json& j, const SensorGainReport& r);

// Exact I({O_k}_{k in sensors}; y) in bits.
double mutual_information(const DiscreteWorld& world, const std::vector<std::size_t>& sensors);
// I(all) - I(all \ {sensor}).
double sensor_gain(const DiscreteWorld& world, std::size_t sensor);
SensorGainReport classify_roles(const DiscreteWorld& world, double eps = 0.01);

// Noiseless per-coordinate sign quantization of render_features: each
// sensor's observation is the pattern of strictly positive coordinates of
// its summed signatures. y follows independent Bernoulli(event_rate) per
// class restricted to at most max_concurrent active classes.
DiscreteWorld discretize(const world::WorldSpec& spec, std::uint64_t enumeration_cap = DiscreteWorld::kDefaultCap);

}  // namespace gmeld::info
