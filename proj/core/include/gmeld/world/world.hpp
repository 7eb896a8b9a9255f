#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace gmeld::world {

struct SensorGroup {
  std::string name;
  std::vector<std::size_t> sensors;
};

/// Generative description of a synthetic distributed-sensor scene.
struct WorldSpec {
  std::size_t num_classes = 6;
  std::size_t num_sensors = 8;
  std::vector<SensorGroup> sensor_groups;
  std::size_t frames_per_clip = 32;
  std::size_t feature_dim_raw = 16;
  // coverage[c][s] == 1 iff sensor s observes class c.
  std::vector<std::vector<std::uint8_t>> coverage;
  std::vector<std::pair<std::size_t, std::size_t>> redundancy_pairs;
  std::vector<std::size_t> background_sensors;
  double noise_sigma = 0.0;
  std::vector<double> event_rate;
  std::size_t min_events = 1;
  std::size_t max_concurrent = 2;
  std::size_t min_event_frames = 4;
  std::size_t max_event_frames = 12;
  // Fraction of each signature's coordinates forced to zero.
  double fragmentation = 0.5;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the offending field.
  void validate() const;

  std::size_t group_of(std::size_t sensor) const;

  // C=6, S=8 (cameras 0-2, microphones 3-7), background {2,7},
  // redundant pairs (0,1) and (3,4), T=32, 16-dim raw features.
  static WorldSpec desk_default();
};

void to_json(nlohmann::json& j, const WorldSpec& spec);
void from_json(const nlohmann::json& j, WorldSpec& spec);

/// One clip. features are laid out [sensor][frame][dim]; strong_labels [frame][class].
struct ClipSample {
  std::string clip_id;
  std::vector<double> features;
  std::vector<std::uint8_t> strong_labels;
  std::vector<std::uint8_t> weak_label;

  bool operator==(const ClipSample&) const = default;
};

struct DatasetSplit {
  std::vector<ClipSample> train;
  std::vector<ClipSample> validation;
  std::vector<ClipSample> test;
  std::vector<std::size_t> class_counts;

  bool operator==(const DatasetSplit&) const = default;
};

struct Dataset {
  WorldSpec spec;
  DatasetSplit split;
};

struct SplitSizes {
  std::size_t train = 80;
  std::size_t validation = 10;
  std::size_t test = 10;
};

/// e_{c,s}: unit-norm per-(class, sensor) signatures, laid out [c][s][dim].
/// Entries for uncovered (c, s) pairs are zero.
std::vector<double> make_signatures(const WorldSpec& spec);

std::vector<std::uint8_t> sample_event_script(const WorldSpec& spec, std::mt19937_64& rng);
std::vector<double> render_features(const WorldSpec& spec, const std::vector<double>& signatures,
                                    const std::vector<std::uint8_t>& script, std::mt19937_64& rng);
std::vector<std::uint8_t> make_weak_label(const std::vector<std::uint8_t>& strong, std::size_t num_frames,
                                          std::size_t num_classes);
// Contiguous active intervals per class.
std::vector<std::size_t> count_event_instances(const std::vector<std::uint8_t>& strong, std::size_t num_frames,
                                               std::size_t num_classes);

Dataset generate_dataset(const WorldSpec& spec, const SplitSizes& sizes);

}  // namespace gmeld::world
