#include "gmeld/meld/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "gmeld/error.hpp"

namespace gmeld::meld {

using namespace gmeld::dc;

ClipSource::ClipSource(const std::vector<world::ClipSample>& clips, const world::WorldSpec& spec)
    : clips_(&clips), spec_(&spec) {}

const world::ClipSample& ClipSource::at(std::size_t i) const {
  if (i >= clips_->size()) throw ContractError("clip index " + std::to_string(i) + " out of range");
  return (*clips_)[i];
}

const std::string& ClipSource::clip_id(std::size_t i) const { return at(i).clip_id; }

std::span<const double> ClipSource::features(std::size_t i) const { return at(i).features; }

std::span<const std::uint8_t> ClipSource::weak_label(std::size_t i) const {
  const auto& c = at(i);
  ++label_reads_;
  return c.weak_label;
}

std::span<const std::uint8_t> ClipSource::strong_labels(std::size_t i) const {
  const auto& c = at(i);
  ++label_reads_;
  return c.strong_labels;
}

Batch make_batch(const ClipSource& source, std::span<const std::size_t> indices, bool with_labels) {
  const auto& spec = source.spec();
  const std::size_t S = spec.num_sensors, T = spec.frames_per_clip, F = spec.feature_dim_raw, C = spec.num_classes;
  Batch b;
  b.clips = indices.size();
  b.frames = T;
  std::vector<double> raw(b.clips * T * S * F);
  for (std::size_t k = 0; k < b.clips; ++k) {
    const auto feats = source.features(indices[k]);
    if (feats.size() != S * T * F) throw DimensionError("clip " + source.clip_id(indices[k]) + " has wrong feature size");
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t t = 0; t < T; ++t) {
        const double* src = feats.data() + (s * T + t) * F;
        std::copy(src, src + F, raw.begin() + static_cast<std::ptrdiff_t>(((k * T + t) * S + s) * F));
      }
    if (with_labels) {
      const auto w = source.weak_label(indices[k]);
      if (w.size() != C) throw DimensionError("clip " + source.clip_id(indices[k]) + " has wrong weak label size");
      b.weak.insert(b.weak.end(), w.begin(), w.end());
    }
  }
  b.raw = Tensor({b.clips * T, S, F}, std::move(raw));
  return b;
}

StepGraph build_step_graph(const Network& net, const ParamStore& target, const Batch& batch, const MaskMatrix& mask,
                           double lambda, const StepOptions& options, const weak::ClassWeights& weights) {
  StepGraph g;
  const Tensor psi = net.project(batch.raw);
  const Tensor online_in = options.mask_enabled ? apply_mask(psi, mask) : psi;
  const Tensor z = net.fuse(online_in, net.params());
  if (options.task_loss) {
    const Tensor frames = net.classify(z);
    const std::size_t C = frames.dim(1);
    const Tensor bags = weak::bag_pool(reshape(frames, {batch.clips, batch.frames, C}));
    g.task = weak::weighted_bce(bags, batch.weak, weights);
  }
  if (options.distill) {
    Tensor zhat;
    {
      NoGradGuard guard;
      const Tensor psi_t = net.project(batch.raw, target);
      zhat = net.fuse(options.reverse_target_mask ? apply_mask(psi_t, mask.complement()) : psi_t, target);
    }
    g.distill = distill_loss(z, stop_gradient(zhat), mask, options.normalize_by_masked_count);
  }
  if (g.task.defined() && g.distill.defined()) {
    g.loss = total_loss(g.task, g.distill, lambda);
  } else if (g.task.defined()) {
    g.loss = g.task;
  } else if (g.distill.defined()) {
    g.loss = g.distill;
  } else {
    throw ContractError("train step has neither a task loss nor a distillation loss");
  }
  return g;
}

StepMetrics train_step(Network& net, TrainState& state, const Batch& batch, double lambda, const StepOptions& options,
                       std::mt19937_64& mask_rng) {
  StepMetrics m;
  const auto& spec = net.world();
  m.mask = options.mask_enabled ? sample_mask(spec.sensor_groups, spec.num_sensors, options.kappa, mask_rng)
                                : MaskMatrix::all_kept(spec.num_sensors, spec.sensor_groups.size());
  const StepGraph g = build_step_graph(net, state.target, batch, m.mask, lambda, options, state.weights);
  backward(g.loss, state.trainable);
  adamw_step(state.trainable, state.optimizer);
  if (options.distill) ema_update(net.encoder_params(), state.target, state.rho);
  m.loss = g.loss.item();
  m.task_loss = g.task.defined() ? g.task.item() : 0.0;
  m.distill_loss = g.distill.defined() ? g.distill.item() : 0.0;
  m.lambda = options.distill && options.task_loss ? lambda : 0.0;
  return m;
}

std::string to_string(LrDecay mode) {
  switch (mode) {
    case LrDecay::Geometric: return "geometric";
    case LrDecay::PerEpoch: return "per_epoch";
    case LrDecay::None: return "none";
  }
  return "unknown";
}

LrDecay lr_decay_from_string(const std::string& name) {
  if (name == "geometric") return LrDecay::Geometric;
  if (name == "per_epoch") return LrDecay::PerEpoch;
  if (name == "none") return LrDecay::None;
  throw ConfigError("optimizer.lr_decay_mode: unknown mode '" + name + "'");
}

double validation_loss(const Network& net, const ClipSource& source, const weak::ClassWeights& weights,
                       std::size_t batch_size) {
  if (source.size() == 0) throw ContractError("validation split is empty");
  NoGradGuard guard;
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < source.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(source.size(), start + batch_size); ++i) idx.push_back(i);
    const Batch b = make_batch(source, idx, true);
    const Tensor frames = net.forward(b.raw);
    const Tensor bags = weak::bag_pool(reshape(frames, {b.clips, b.frames, frames.dim(1)}));
    total += weak::weighted_bce(bags, b.weak, weights).item() * static_cast<double>(b.clips);
  }
  return total / static_cast<double>(source.size());
}

namespace {

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream, std::uint32_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), salt};
  return std::mt19937_64(seq);
}

void copy_values(const ParamStore& from, ParamStore& to) {
  for (auto& [name, t] : to) {
    const auto src = from.get(name).data();
    std::copy(src.begin(), src.end(), t.mutable_data().begin());
  }
}

}  // namespace

TrainResult train_loop(Network& net, const ClipSource& train, const ClipSource* validation,
                       const weak::ClassWeights& weights, const TrainConfig& config) {
  if (config.max_epoch == 0) throw ConfigError("optimizer.max_epoch: must be positive");
  if (config.batch_size == 0) throw ConfigError("optimizer.batch_size: must be positive");
  if (train.size() == 0) throw ContractError("training split is empty");
  if (config.validate && (!validation || validation->size() == 0)) throw ContractError("validation split is empty");
  if (config.step.distill) config.schedule.validate();

  TrainState state{net.params().view(config.trainable_prefix), {}, OptimizerState(config.optimizer), config.rho, weights};
  if (state.trainable.size() == 0) throw ConfigError("no parameters match prefix '" + config.trainable_prefix + "'");
  if (config.step.distill) state.target = net.encoder_params().deep_copy();

  auto shuffle_rng = stream_rng(config.seed, config.stream, 0x5348u);
  auto mask_rng = stream_rng(config.seed, config.stream, 0x4d41u);

  TrainResult result;
  result.best_val_task_loss = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const double decay = config.lr_decay == LrDecay::Geometric ? std::pow(0.1, 1.0 / static_cast<double>(config.max_epoch))
                       : config.lr_decay == LrDecay::PerEpoch ? 0.1
                                                               : 1.0;
  double lr = config.optimizer.learning_rate;

  for (std::size_t epoch = 0; epoch < config.max_epoch; ++epoch) {
    const double lambda = config.step.distill ? lambda_at(config.schedule, epoch) : 0.0;
    state.optimizer.set_learning_rate(lr);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    HistoryRow row;
    row.epoch = epoch;
    row.lr = lr;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(config.batch_size, order.size() - start));
      const Batch batch = make_batch(train, idx, config.step.task_loss);
      StepMetrics m;
      try {
        m = train_step(net, state, batch, lambda, config.step, mask_rng);
      } catch (const NumericError& e) {
        throw NumericError(fmt::format("training diverged at epoch {} step {}: {}", epoch, result.steps, e.what()));
      }
      ++result.steps;
      ++batches;
      row.loss += m.loss;
      row.task_loss += m.task_loss;
      row.distill_loss += m.distill_loss;
      row.lambda = m.lambda;
    }
    row.loss /= static_cast<double>(batches);
    row.task_loss /= static_cast<double>(batches);
    row.distill_loss /= static_cast<double>(batches);
    row.step = result.steps;
    if (!std::isfinite(row.loss)) throw NumericError(fmt::format("training diverged at epoch {}: loss is not finite", epoch));

    if (config.validate) {
      row.val_task_loss = validation_loss(net, *validation, weights);
      if (row.val_task_loss < result.best_val_task_loss) {
        result.best_val_task_loss = row.val_task_loss;
        result.best_epoch = epoch;
        result.best = net.params().deep_copy();
      }
    } else {
      row.val_task_loss = std::numeric_limits<double>::quiet_NaN();
    }
    result.history.push_back(row);
    lr *= decay;
  }
  if (!config.validate) {
    result.best_epoch = config.max_epoch - 1;
    result.best_val_task_loss = std::numeric_limits<double>::quiet_NaN();
    result.best = net.params().deep_copy();
  } else {
    copy_values(result.best, net.params());
  }
  result.target = std::move(state.target);
  return result;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,step,L,L_G,L_M,lambda,lr,val_LG\n";
  for (const auto& r : history) {
    out << fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.epoch, r.step, r.loss, r.task_loss,
                       r.distill_loss, r.lambda, r.lr, r.val_task_loss);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace gmeld::meld
