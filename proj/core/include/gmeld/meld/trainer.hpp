#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gmeld/dc/optim.hpp"
#include "gmeld/meld/meld.hpp"
#include "gmeld/meld/network.hpp"
#include "gmeld/weak/weak.hpp"
#include "gmeld/world/world.hpp"

namespace gmeld::meld {

/// Read-only view over clips that counts every label access.
class ClipSource {
 public:
  ClipSource(const std::vector<world::ClipSample>& clips, const world::WorldSpec& spec);

  std::size_t size() const { return clips_->size(); }
  const world::WorldSpec& spec() const { return *spec_; }
  const std::string& clip_id(std::size_t i) const;
  std::span<const double> features(std::size_t i) const;
  std::span<const std::uint8_t> weak_label(std::size_t i) const;
  std::span<const std::uint8_t> strong_labels(std::size_t i) const;

  std::size_t label_reads() const { return label_reads_; }

 private:
  const world::ClipSample& at(std::size_t i) const;

  const std::vector<world::ClipSample>* clips_;
  const world::WorldSpec* spec_;
  mutable std::size_t label_reads_ = 0;
};

/// Frames of several clips as rows: raw [B*T, S, F_raw], weak labels [B][C].
struct Batch {
  Tensor raw;
  std::vector<std::uint8_t> weak;
  std::size_t clips = 0;
  std::size_t frames = 0;
};

Batch make_batch(const ClipSource& source, std::span<const std::size_t> indices, bool with_labels);

struct StepOptions {
  bool mask_enabled = false;
  std::vector<KappaRange> kappa;  // one range per sensor group
  bool distill = false;
  bool task_loss = true;
  bool reverse_target_mask = false;
  bool normalize_by_masked_count = false;
};

struct StepGraph {
  Tensor loss;
  Tensor task;     // undefined without task loss
  Tensor distill;  // undefined without distillation
};

// Builds L = L_G + lambda * L_M for one batch. The target encoder (EMA copy of
// enc.*) sees the unmasked clip, or the complementary mask when reversed.
StepGraph build_step_graph(const Network& net, const ParamStore& target, const Batch& batch, const MaskMatrix& mask,
                           double lambda, const StepOptions& options, const weak::ClassWeights& weights);

struct TrainState {
  ParamStore trainable;
  ParamStore target;
  dc::OptimizerState optimizer;
  double rho = 0.95;
  weak::ClassWeights weights;
};

struct StepMetrics {
  double loss = 0.0;
  double task_loss = 0.0;
  double distill_loss = 0.0;
  double lambda = 0.0;
  MaskMatrix mask;
};

StepMetrics train_step(Network& net, TrainState& state, const Batch& batch, double lambda, const StepOptions& options,
                       std::mt19937_64& mask_rng);

enum class LrDecay { Geometric, PerEpoch, None };

std::string to_string(LrDecay mode);
LrDecay lr_decay_from_string(const std::string& name);

struct TrainConfig {
  StepOptions step;
  ScheduleSpec schedule;
  double rho = 0.95;
  dc::AdamWConfig optimizer;
  std::size_t max_epoch = 50;
  std::size_t batch_size = 4;
  LrDecay lr_decay = LrDecay::Geometric;
  bool validate = true;
  std::string trainable_prefix;
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;
};

struct HistoryRow {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  double task_loss = 0.0;
  double distill_loss = 0.0;
  double lambda = 0.0;
  double lr = 0.0;
  double val_task_loss = 0.0;
};

struct TrainResult {
  ParamStore best;
  ParamStore target;
  std::size_t best_epoch = 0;
  double best_val_task_loss = 0.0;
  std::size_t steps = 0;
  std::vector<HistoryRow> history;
};

// Unmasked weak-label loss over a split, mean over clips.
double validation_loss(const Network& net, const ClipSource& source, const weak::ClassWeights& weights,
                       std::size_t batch_size = 16);

// Trains `net` in place. On return net holds the best-validation parameters
// (the last epoch's when validation is off).
TrainResult train_loop(Network& net, const ClipSource& train, const ClipSource* validation,
                       const weak::ClassWeights& weights, const TrainConfig& config);

void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& history);

}  // namespace gmeld::meld
