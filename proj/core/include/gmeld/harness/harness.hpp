#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmeld/eval/eval.hpp"
#include "gmeld/info/info.hpp"
#include "gmeld/methods/methods.hpp"
#include "gmeld/world/world.hpp"

namespace gmeld::harness {

struct EvalSettings {
  double alpha = 0.5;
  std::vector<std::size_t> sweep_sizes{1, 2};
};

struct ExperimentConfig {
  world::WorldSpec world = world::WorldSpec::desk_default();
  world::SplitSizes sizes;
  methods::MethodSpec method;
  meld::NetworkConfig model;
  methods::MeldSettings meld;
  methods::TrainSettings optimizer;
  EvalSettings eval;
  std::vector<std::uint64_t> seeds{1, 2, 3};

  void validate() const;
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
// Keys absent from `doc` keep their defaults; unknown keys and type errors
// raise ConfigError naming the JSON path.
ExperimentConfig config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
world::WorldSpec load_world_spec(const std::filesystem::path& path);

// SHA-256 of the canonical (key-sorted) config without the seed list.
std::string config_hash(const ExperimentConfig& cfg);
std::string world_hash(const world::WorldSpec& spec, const world::SplitSizes& sizes);

struct RunRecord {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string method;
  double wall_time_s = 0.0;
  std::filesystem::path run_dir;
  std::filesystem::path history_path;
  std::filesystem::path checkpoint_path;
  std::filesystem::path metrics_path;
  std::filesystem::path sweep_path;
};

void to_json(nlohmann::json& j, const RunRecord& r);

struct RunOutcome {
  RunRecord record;
  eval::MetricsReport tagging;
  eval::MetricsReport detection;
  eval::SweepResult sweep;
  double best_val_task_loss = 0.0;
  std::size_t pretrain_label_reads = 0;
};

// Generates the dataset, or reuses it from $MELD_LAB_CACHE when set.
world::Dataset obtain_dataset(const world::WorldSpec& spec, const world::SplitSizes& sizes);

std::filesystem::path run_directory(const std::filesystem::path& out_root, const ExperimentConfig& cfg,
                                    std::uint64_t seed);

RunOutcome run_experiment(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_root,
                          const world::Dataset& data);

struct LoadedModel {
  meld::Network net;
  nlohmann::json meta;
};

void save_model(const std::filesystem::path& path, const meld::Network& net, const dc::ParamStore& target,
                const nlohmann::json& meta);
LoadedModel load_model(const std::filesystem::path& path);

struct EvalOutcome {
  eval::MetricsReport tagging;
  eval::MetricsReport detection;
  double val_task_loss = 0.0;
};

// Writes metrics.json and preds.jsonl under out_dir.
EvalOutcome evaluate_checkpoint(const std::filesystem::path& checkpoint, const world::Dataset& data,
                                const std::filesystem::path& out_dir, double alpha = 0.5);
// Writes sweep.csv under out_dir.
eval::SweepResult sweep_checkpoint(const std::filesystem::path& checkpoint, const world::Dataset& data,
                                   const std::filesystem::path& out_dir, const std::vector<std::size_t>& sizes = {1, 2});
// Writes info_report.json under out_dir.
info::SensorGainReport analyze_info(const world::WorldSpec& spec, const std::filesystem::path& out_dir);

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& values);
double pooled_se(const std::vector<double>& a, const std::vector<double>& b);

// Every (method, seed) pair; writes comparison.csv and summary.csv under out_root.
std::vector<RunOutcome> compare(const ExperimentConfig& base, const std::vector<methods::MethodSpec>& method_list,
                                const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out_root,
                                std::size_t threads = 1);

}  // namespace gmeld::harness
