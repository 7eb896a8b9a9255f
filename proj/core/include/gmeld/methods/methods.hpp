#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmeld/meld/trainer.hpp"
#include "gmeld/world/world.hpp"

namespace gmeld::methods {

using meld::KappaRange;
using meld::Network;
using meld::NetworkConfig;

// A late fusion, B concat, C CRF, D MultiTrans, E masked-modeling pretrain
// then probe, F guided distillation, G F without L_M, H F on a CRF encoder.
enum class MethodId { A, B, C, D, E, F, G, H };

struct MethodSpec {
  MethodId id = MethodId::F;
  meld::Strategy strategy = meld::Strategy::Increase;  // F and H only
  std::size_t pretrain_epochs = 50;                     // E stage 1
  std::size_t probe_epochs = 20;                        // E stage 2

  // "A".."H"; F variants print as F-1 (decrease), F-2 (constant), F-3 (increase).
  std::string label() const;
  static MethodSpec parse(const std::string& label);
};

struct MeldSettings {
  std::vector<KappaRange> kappa;  // per sensor group; empty means [0, min(2/|g|, 1 - 1/|g|)] per group
  double rho = 0.95;
  double lambda0 = 0.01;
  double gamma = 1.05;
  bool normalize_by_masked_count = false;
};

struct TrainSettings {
  dc::AdamWConfig optimizer;
  std::size_t max_epoch = 50;
  std::size_t batch_size = 4;
  meld::LrDecay lr_decay = meld::LrDecay::Geometric;
};

std::vector<KappaRange> default_kappa(const world::WorldSpec& spec);

NetworkConfig network_config(const MethodSpec& method, NetworkConfig base);

// Single-stage training configuration; E is rejected (see msm_pretrain_then_probe).
meld::TrainConfig train_config(const MethodSpec& method, const world::WorldSpec& spec, const MeldSettings& meld,
                               const TrainSettings& train, std::uint64_t seed);

struct MethodRun {
  Network net;
  meld::TrainResult result;
  std::vector<meld::HistoryRow> pretrain_history;  // E only
  std::size_t pretrain_label_reads = 0;            // E only
};

MethodRun run_method(const MethodSpec& method, const world::Dataset& data, const NetworkConfig& model,
                     const MeldSettings& meld, const TrainSettings& train, std::uint64_t seed);

// Stage 1: L_M only on unlabeled clips, target sees the complementary mask.
// Stage 2: encoder frozen, classifier trained on L_G.
MethodRun msm_pretrain_then_probe(const MethodSpec& method, const world::Dataset& data, const NetworkConfig& model,
                                  const MeldSettings& meld, const TrainSettings& train, std::uint64_t seed);

}  // namespace gmeld::methods
