#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmeld/meld/network.hpp"
#include "gmeld/meld/trainer.hpp"

namespace gmeld::eval {

struct ScoredSet {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
};

// Non-interpolated step-wise AP. Ties are ordered by a shuffle seeded with
// `tie_seed` followed by a stable sort. nullopt when there is no positive.
std::optional<double> average_precision(const ScoredSet& set, std::uint64_t tie_seed = 0);

// Mann-Whitney U / (P * N), ties count one half. nullopt for one-class input.
std::optional<double> roauc(const ScoredSet& set);

enum class Task { Tagging, Detection };

std::string to_string(Task task);

struct MetricsReport {
  Task task = Task::Tagging;
  std::vector<double> per_class_ap;     // NaN where skipped
  std::vector<double> per_class_roauc;  // NaN where skipped
  double macro_map = 0.0;
  double macro_roauc = 0.0;
  std::vector<std::size_t> skipped_classes;        // no positive
  std::vector<std::size_t> skipped_roauc_classes;  // one class only
};

void to_json(nlohmann::json& j, const MetricsReport& r);

// scores and labels laid out [item][class].
MetricsReport score_matrix(Task task, std::span<const double> scores, std::span<const std::uint8_t> labels,
                           std::size_t num_classes, std::uint64_t tie_seed = 0);

struct ClipPrediction {
  std::string clip_id;
  std::vector<double> frames;  // [T][C]
  std::vector<double> bag;     // [C]
};

// Posteriors for every clip; `keep` removes sensors at inference.
std::vector<ClipPrediction> predict(const meld::Network& net, const meld::ClipSource& clips,
                                    const std::vector<std::uint8_t>* keep = nullptr, std::size_t batch_size = 16);

MetricsReport score_tagging(const std::vector<ClipPrediction>& preds, const meld::ClipSource& truths,
                            std::uint64_t tie_seed = 0);
MetricsReport score_detection(const std::vector<ClipPrediction>& preds, const meld::ClipSource& truths,
                              std::uint64_t tie_seed = 0);

nlohmann::json metrics_json(const MetricsReport& tagging, const MetricsReport& detection);

// One JSON object per line: clip_id, bag, frames and thresholded activity.
void write_predictions(const std::filesystem::path& path, const std::vector<ClipPrediction>& preds,
                       std::size_t num_classes, double alpha);

struct SweepEntry {
  std::vector<std::size_t> removed;
  double detection_map = 0.0;
};

struct SweepResult {
  double full_map = 0.0;
  std::vector<SweepEntry> entries;
  double min_map = 0.0;
  double median_map = 0.0;
  double max_map = 0.0;
};

// Every removal set of the given sizes, in lexicographic order per size.
SweepResult sensor_reduction_sweep(const meld::Network& net, const meld::ClipSource& test,
                                   const std::vector<std::size_t>& sizes = {1, 2}, std::uint64_t tie_seed = 0);

double detection_map_without(const meld::Network& net, const meld::ClipSource& test,
                             const std::vector<std::size_t>& removed, std::uint64_t tie_seed = 0);

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& sweep);

double median(std::vector<double> values);

}  // namespace gmeld::eval
