#include "gmeld/methods/methods.hpp"

#include <algorithm>

#include "gmeld/error.hpp"

namespace gmeld::methods {

using meld::FusionKind;
using meld::Strategy;

std::string MethodSpec::label() const {
  const std::string base(1, static_cast<char>('A' + static_cast<int>(id)));
  if (id != MethodId::F) return base;
  switch (strategy) {
    case Strategy::Decrease: return "F-1";
    case Strategy::Constant: return "F-2";
    case Strategy::Increase: return "F-3";
  }
  return base;
}

MethodSpec MethodSpec::parse(const std::string& label) {
  MethodSpec m;
  if (label == "F-1") {
    m.strategy = Strategy::Decrease;
  } else if (label == "F-2") {
    m.strategy = Strategy::Constant;
  } else if (label == "F-3" || label == "F") {
    m.strategy = Strategy::Increase;
  } else if (label.size() == 1 && label[0] >= 'A' && label[0] <= 'H') {
    m.id = static_cast<MethodId>(label[0] - 'A');
  } else {
    throw ConfigError("method.id: unknown method '" + label + "'");
  }
  return m;
}

std::vector<KappaRange> default_kappa(const world::WorldSpec& spec) {
  std::vector<KappaRange> out;
  for (const auto& g : spec.sensor_groups) {
    const double n = static_cast<double>(g.sensors.size());
    out.push_back({0.0, std::min(2.0 / n, (n - 1.0) / n)});
  }
  return out;
}

NetworkConfig network_config(const MethodSpec& method, NetworkConfig base) {
  switch (method.id) {
    case MethodId::A: base.fusion = FusionKind::LateFusion; break;
    case MethodId::B: base.fusion = FusionKind::Concat; break;
    case MethodId::C:
    case MethodId::H: base.fusion = FusionKind::Crf; break;
    case MethodId::D:
    case MethodId::E:
    case MethodId::F:
    case MethodId::G: base.fusion = FusionKind::MultiTrans; break;
  }
  return base;
}

meld::TrainConfig train_config(const MethodSpec& method, const world::WorldSpec& spec, const MeldSettings& meld,
                               const TrainSettings& train, std::uint64_t seed) {
  if (method.id == MethodId::E) throw ContractError("method E trains in two stages");
  meld::TrainConfig cfg;
  cfg.rho = meld.rho;
  cfg.optimizer = train.optimizer;
  cfg.max_epoch = train.max_epoch;
  cfg.batch_size = train.batch_size;
  cfg.lr_decay = train.lr_decay;
  cfg.seed = seed;
  cfg.schedule = {meld.lambda0, meld.gamma, method.strategy, train.max_epoch};
  cfg.step.kappa = meld.kappa.empty() ? default_kappa(spec) : meld.kappa;
  cfg.step.normalize_by_masked_count = meld.normalize_by_masked_count;
  const bool masked = method.id == MethodId::F || method.id == MethodId::G || method.id == MethodId::H;
  cfg.step.mask_enabled = masked;
  cfg.step.distill = method.id == MethodId::F || method.id == MethodId::H;
  return cfg;
}

namespace {

MethodRun train_single(const MethodSpec& method, const world::Dataset& data, const NetworkConfig& model,
                       const MeldSettings& meld, const TrainSettings& train, std::uint64_t seed) {
  MethodRun run{Network(data.spec, network_config(method, model), seed), {}, {}, 0};
  const meld::ClipSource tr(data.split.train, data.spec);
  const meld::ClipSource va(data.split.validation, data.spec);
  const auto weights = weak::ClassWeights::from_counts(data.split.class_counts);
  run.result = meld::train_loop(run.net, tr, &va, weights, train_config(method, data.spec, meld, train, seed));
  return run;
}

}  // namespace

MethodRun msm_pretrain_then_probe(const MethodSpec& method, const world::Dataset& data, const NetworkConfig& model,
                                  const MeldSettings& meld, const TrainSettings& train, std::uint64_t seed) {
  if (method.id != MethodId::E) throw ContractError("two-stage training is specific to method E");
  MethodRun run{Network(data.spec, network_config(method, model), seed), {}, {}, 0};

  meld::TrainConfig stage1;
  stage1.rho = meld.rho;
  stage1.optimizer = train.optimizer;
  stage1.max_epoch = method.pretrain_epochs;
  stage1.batch_size = train.batch_size;
  stage1.lr_decay = train.lr_decay;
  stage1.seed = seed;
  stage1.stream = 1;
  stage1.validate = false;
  stage1.trainable_prefix = Network::kEncoder;
  stage1.schedule.max_epoch = method.pretrain_epochs;
  stage1.step.mask_enabled = true;
  stage1.step.distill = true;
  stage1.step.task_loss = false;
  stage1.step.reverse_target_mask = true;
  stage1.step.kappa = meld.kappa.empty() ? default_kappa(data.spec) : meld.kappa;
  stage1.step.normalize_by_masked_count = meld.normalize_by_masked_count;

  const meld::ClipSource unlabeled(data.split.train, data.spec);
  const auto pre = meld::train_loop(run.net, unlabeled, nullptr, weak::ClassWeights{}, stage1);
  run.pretrain_history = pre.history;
  run.pretrain_label_reads = unlabeled.label_reads();

  run.net.params().freeze(Network::kEncoder);
  meld::TrainConfig stage2;
  stage2.optimizer = train.optimizer;
  stage2.max_epoch = method.probe_epochs;
  stage2.batch_size = train.batch_size;
  stage2.lr_decay = train.lr_decay;
  stage2.seed = seed;
  stage2.stream = 2;
  stage2.trainable_prefix = Network::kClassifier;
  const meld::ClipSource tr(data.split.train, data.spec);
  const meld::ClipSource va(data.split.validation, data.spec);
  const auto weights = weak::ClassWeights::from_counts(data.split.class_counts);
  run.result = meld::train_loop(run.net, tr, &va, weights, stage2);
  return run;
}

MethodRun run_method(const MethodSpec& method, const world::Dataset& data, const NetworkConfig& model,
                     const MeldSettings& meld, const TrainSettings& train, std::uint64_t seed) {
  if (method.id == MethodId::E) return msm_pretrain_then_probe(method, data, model, meld, train, seed);
  return train_single(method, data, model, meld, train, seed);
}

}  // namespace gmeld::methods
