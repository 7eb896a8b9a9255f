#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gmeld/dc/ops.hpp"
#include "gmeld/dc/param_store.hpp"

namespace gmeld::weak {

using dc::ParamStore;
using dc::Tensor;

inline constexpr double kProbClamp = 1e-7;

/// w_c = 1 / (train-split event instances of class c).
struct ClassWeights {
  std::vector<double> w;

  static ClassWeights from_counts(const std::vector<std::size_t>& counts);
  static ClassWeights uniform(std::size_t num_classes, double value = 1.0);
};

struct ActivityDecision {
  std::vector<std::uint8_t> active;  // [T][C]
  double threshold = 0.5;
};

void init_classifier(ParamStore& params, const std::string& prefix, std::size_t input_dim, std::size_t num_classes,
                     std::mt19937_64& rng);

// Frame embeddings [N, ...] are flattened per frame, then sigmoid(linear(.)) -> [N, C].
Tensor classify(const Tensor& frames, const ParamStore& params, const std::string& prefix);

// [B, T, C] -> [B, C], mean over frames.
Tensor bag_pool(const Tensor& frame_probs);

// Mean over the B bags of -sum_c w_c [y log p + (1 - y) log(1 - p)], with p
// clamped to [1e-7, 1 - 1e-7]. labels are [B][C] in {0, 1}.
Tensor weighted_bce(const Tensor& bag_probs, std::span<const std::uint8_t> labels, const ClassWeights& weights);

// Frame-wise mean of the per-class-averaged BCE; [T, C] against strong labels.
Tensor strong_bce(const Tensor& frame_probs, std::span<const std::uint8_t> labels);

ActivityDecision threshold_activity(std::span<const double> probs, double alpha);

}  // namespace gmeld::weak
