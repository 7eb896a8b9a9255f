#include "gmeld/weak/weak.hpp"

#include "gmeld/error.hpp"

namespace gmeld::weak {

using namespace gmeld::dc;

ClassWeights ClassWeights::from_counts(const std::vector<std::size_t>& counts) {
  ClassWeights out;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) throw ContractError("class " + std::to_string(c) + " has zero events; weight undefined");
    out.w.push_back(1.0 / static_cast<double>(counts[c]));
  }
  return out;
}

ClassWeights ClassWeights::uniform(std::size_t num_classes, double value) {
  return ClassWeights{std::vector<double>(num_classes, value)};
}

void init_classifier(ParamStore& params, const std::string& prefix, std::size_t input_dim, std::size_t num_classes,
                     std::mt19937_64& rng) {
  params.add(prefix + "W", xavier_uniform({input_dim, num_classes}, input_dim, num_classes, rng));
  params.add(prefix + "b", Tensor::zeros({num_classes}, true));
}

Tensor classify(const Tensor& frames, const ParamStore& params, const std::string& prefix) {
  const Tensor& w = params.get(prefix + "W");
  const std::size_t n = frames.dim(0);
  const std::size_t width = frames.numel() / n;
  if (width != w.dim(0)) {
    throw DimensionError("classify: frame width " + std::to_string(width) + " does not match classifier input " +
                         std::to_string(w.dim(0)));
  }
  return sigmoid(linear(reshape(frames, {n, width}), w, params.get(prefix + "b")));
}

Tensor bag_pool(const Tensor& frame_probs) {
  if (frame_probs.rank() != 3) throw DimensionError("bag_pool: expected [B, T, C], got " + to_string(frame_probs.shape()));
  return reduce(frame_probs, Reduce::Mean, 1);
}

namespace {

Tensor bce_terms(const Tensor& probs, std::span<const std::uint8_t> labels) {
  if (labels.size() != probs.numel()) throw DimensionError("bce: label count does not match predictions");
  std::vector<double> y(labels.begin(), labels.end());
  const Tensor target(probs.shape(), y);
  for (double& v : y) v = 1.0 - v;
  const Tensor not_target(probs.shape(), std::move(y));
  const Tensor p = clamp(probs, kProbClamp, 1.0 - kProbClamp);
  const Tensor log_p = log(p);
  const Tensor log_q = log(add_scalar(scale(p, -1.0), 1.0));
  return add(hadamard(log_p, target), hadamard(log_q, not_target));
}

}  // namespace

Tensor weighted_bce(const Tensor& bag_probs, std::span<const std::uint8_t> labels, const ClassWeights& weights) {
  if (bag_probs.rank() != 2 || bag_probs.dim(1) != weights.w.size()) {
    throw DimensionError("weighted_bce: expected [B, " + std::to_string(weights.w.size()) + "], got " +
                         to_string(bag_probs.shape()));
  }
  const std::size_t B = bag_probs.dim(0), C = bag_probs.dim(1);
  std::vector<double> wb(B * C);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) wb[b * C + c] = weights.w[c];
  const Tensor terms = hadamard(bce_terms(bag_probs, labels), Tensor({B, C}, std::move(wb)));
  return scale(reduce_all(terms, Reduce::Sum), -1.0 / static_cast<double>(B));
}

Tensor strong_bce(const Tensor& frame_probs, std::span<const std::uint8_t> labels) {
  if (frame_probs.rank() != 2) throw DimensionError("strong_bce: expected [T, C], got " + to_string(frame_probs.shape()));
  return scale(reduce_all(bce_terms(frame_probs, labels), Reduce::Mean), -1.0);
}

ActivityDecision threshold_activity(std::span<const double> probs, double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ContractError("threshold must lie in [0, 1)");
  ActivityDecision d;
  d.threshold = alpha;
  d.active.reserve(probs.size());
  for (double p : probs) d.active.push_back(p > alpha ? 1 : 0);
  return d;
}

}  // namespace gmeld::weak
