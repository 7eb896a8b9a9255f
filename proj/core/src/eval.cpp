#include "gmeld/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "gmeld/error.hpp"

namespace gmeld::eval {

using namespace gmeld::dc;

namespace {

void check_set(const ScoredSet& set) {
  if (set.scores.size() != set.labels.size()) throw DimensionError("scored set: scores and labels differ in length");
}

nlohmann::json nullable(const std::vector<double>& v) {
  auto out = nlohmann::json::array();
  for (double x : v) out.push_back(std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x));
  return out;
}

}  // namespace

std::optional<double> average_precision(const ScoredSet& set, std::uint64_t tie_seed) {
  check_set(set);
  const std::size_t n = set.scores.size();
  const std::size_t positives = static_cast<std::size_t>(std::count(set.labels.begin(), set.labels.end(), 1));
  if (positives == 0) return std::nullopt;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(tie_seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return set.scores[a] > set.scores[b]; });
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (set.labels[order[k]] != 1) continue;
    ++hits;
    ap += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  return ap / static_cast<double>(positives);
}

std::optional<double> roauc(const ScoredSet& set) {
  check_set(set);
  const std::size_t n = set.scores.size();
  const std::size_t pos = static_cast<std::size_t>(std::count(set.labels.begin(), set.labels.end(), 1));
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return set.scores[a] < set.scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && set.scores[order[j]] == set.scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (set.labels[order[k]] == 1) rank_sum += avg_rank;
    i = j;
  }
  const double p = static_cast<double>(pos);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(neg));
}

std::string to_string(Task task) { return task == Task::Tagging ? "tagging" : "detection"; }

void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = nlohmann::json{{"task", to_string(r.task)},
                     {"per_class_ap", nullable(r.per_class_ap)},
                     {"macro_map", std::isnan(r.macro_map) ? nlohmann::json(nullptr) : nlohmann::json(r.macro_map)},
                     {"per_class_roauc", nullable(r.per_class_roauc)},
                     {"macro_roauc", std::isnan(r.macro_roauc) ? nlohmann::json(nullptr) : nlohmann::json(r.macro_roauc)},
                     {"skipped_classes", r.skipped_classes},
                     {"skipped_roauc_classes", r.skipped_roauc_classes}};
}

MetricsReport score_matrix(Task task, std::span<const double> scores, std::span<const std::uint8_t> labels,
                           std::size_t num_classes, std::uint64_t tie_seed) {
  if (num_classes == 0 || scores.size() != labels.size() || scores.size() % num_classes != 0) {
    throw DimensionError("score: expected matching [items][classes] score and label arrays");
  }
  const std::size_t items = scores.size() / num_classes;
  MetricsReport r;
  r.task = task;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  double ap_sum = 0.0, auc_sum = 0.0;
  std::size_t ap_n = 0, auc_n = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    ScoredSet set;
    set.scores.reserve(items);
    set.labels.reserve(items);
    for (std::size_t i = 0; i < items; ++i) {
      set.scores.push_back(scores[i * num_classes + c]);
      set.labels.push_back(labels[i * num_classes + c]);
    }
    const auto ap = average_precision(set, tie_seed * 1000003u + c);
    const auto auc = roauc(set);
    r.per_class_ap.push_back(ap.value_or(nan));
    r.per_class_roauc.push_back(auc.value_or(nan));
    if (ap) {
      ap_sum += *ap;
      ++ap_n;
    } else {
      r.skipped_classes.push_back(c);
    }
    if (auc) {
      auc_sum += *auc;
      ++auc_n;
    } else {
      r.skipped_roauc_classes.push_back(c);
    }
  }
  r.macro_map = ap_n ? ap_sum / static_cast<double>(ap_n) : nan;
  r.macro_roauc = auc_n ? auc_sum / static_cast<double>(auc_n) : nan;
  return r;
}

std::vector<ClipPrediction> predict(const meld::Network& net, const meld::ClipSource& clips,
                                    const std::vector<std::uint8_t>* keep, std::size_t batch_size) {
  NoGradGuard guard;
  const std::size_t T = clips.spec().frames_per_clip, C = clips.spec().num_classes;
  std::vector<ClipPrediction> out;
  out.reserve(clips.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < clips.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(clips.size(), start + batch_size); ++i) idx.push_back(i);
    const auto batch = meld::make_batch(clips, idx, false);
    const Tensor frames = net.forward(batch.raw, keep);
    const Tensor bags = weak::bag_pool(reshape(frames, {batch.clips, T, C}));
    const auto f = frames.data();
    const auto b = bags.data();
    for (std::size_t k = 0; k < batch.clips; ++k) {
      ClipPrediction p;
      p.clip_id = clips.clip_id(idx[k]);
      p.frames.assign(f.begin() + static_cast<std::ptrdiff_t>(k * T * C), f.begin() + static_cast<std::ptrdiff_t>((k + 1) * T * C));
      p.bag.assign(b.begin() + static_cast<std::ptrdiff_t>(k * C), b.begin() + static_cast<std::ptrdiff_t>((k + 1) * C));
      out.push_back(std::move(p));
    }
  }
  return out;
}

MetricsReport score_tagging(const std::vector<ClipPrediction>& preds, const meld::ClipSource& truths,
                            std::uint64_t tie_seed) {
  if (preds.size() != truths.size()) throw DimensionError("score_tagging: prediction and truth counts differ");
  const std::size_t C = truths.spec().num_classes;
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].bag.size() != C) throw DimensionError("score_tagging: bag prediction has wrong width");
    const auto y = truths.weak_label(i);
    scores.insert(scores.end(), preds[i].bag.begin(), preds[i].bag.end());
    labels.insert(labels.end(), y.begin(), y.end());
  }
  return score_matrix(Task::Tagging, scores, labels, C, tie_seed);
}

MetricsReport score_detection(const std::vector<ClipPrediction>& preds, const meld::ClipSource& truths,
                              std::uint64_t tie_seed) {
  if (preds.size() != truths.size()) throw DimensionError("score_detection: prediction and truth counts differ");
  const std::size_t C = truths.spec().num_classes;
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto y = truths.strong_labels(i);
    if (preds[i].frames.size() != y.size()) throw DimensionError("score_detection: frame prediction has wrong size");
    scores.insert(scores.end(), preds[i].frames.begin(), preds[i].frames.end());
    labels.insert(labels.end(), y.begin(), y.end());
  }
  return score_matrix(Task::Detection, scores, labels, C, tie_seed);
}

nlohmann::json metrics_json(const MetricsReport& tagging, const MetricsReport& detection) {
  return nlohmann::json{{"tagging", tagging}, {"detection", detection}};
}

void write_predictions(const std::filesystem::path& path, const std::vector<ClipPrediction>& preds,
                       std::size_t num_classes, double alpha) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& p : preds) {
    const auto decision = weak::threshold_activity(p.frames, alpha);
    nlohmann::json frames = nlohmann::json::array(), active = nlohmann::json::array();
    const std::size_t T = p.frames.size() / num_classes;
    for (std::size_t t = 0; t < T; ++t) {
      frames.push_back(std::vector<double>(p.frames.begin() + static_cast<std::ptrdiff_t>(t * num_classes),
                                           p.frames.begin() + static_cast<std::ptrdiff_t>((t + 1) * num_classes)));
      active.push_back(std::vector<int>(decision.active.begin() + static_cast<std::ptrdiff_t>(t * num_classes),
                                        decision.active.begin() + static_cast<std::ptrdiff_t>((t + 1) * num_classes)));
    }
    out << nlohmann::json{{"clip_id", p.clip_id}, {"bag", p.bag}, {"frames", frames}, {"active", active}}.dump()
        << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

double detection_map_without(const meld::Network& net, const meld::ClipSource& test,
                             const std::vector<std::size_t>& removed, std::uint64_t tie_seed) {
  const std::size_t S = net.world().num_sensors;
  std::vector<std::uint8_t> keep(S, 1);
  for (auto s : removed) {
    if (s >= S) throw ContractError("sweep: sensor " + std::to_string(s) + " out of range");
    keep[s] = 0;
  }
  if (std::count(keep.begin(), keep.end(), 1) == 0) throw ContractError("sweep: removal set covers every sensor");
  const auto preds = predict(net, test, removed.empty() ? nullptr : &keep);
  return score_detection(preds, test, tie_seed).macro_map;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

SweepResult sensor_reduction_sweep(const meld::Network& net, const meld::ClipSource& test,
                                   const std::vector<std::size_t>& sizes, std::uint64_t tie_seed) {
  const std::size_t S = net.world().num_sensors;
  SweepResult r;
  r.full_map = detection_map_without(net, test, {}, tie_seed);
  for (std::size_t k : sizes) {
    if (k == 0 || k >= S) throw ContractError("sweep: removal size " + std::to_string(k) + " must lie in [1, S)");
    std::vector<std::uint8_t> pick(S, 0);
    std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(k), 1);
    do {
      SweepEntry e;
      for (std::size_t s = 0; s < S; ++s)
        if (pick[s]) e.removed.push_back(s);
      e.detection_map = detection_map_without(net, test, e.removed, tie_seed);
      r.entries.push_back(std::move(e));
    } while (std::prev_permutation(pick.begin(), pick.end()));
  }
  if (!r.entries.empty()) {
    std::vector<double> maps;
    for (const auto& e : r.entries) maps.push_back(e.detection_map);
    r.min_map = *std::min_element(maps.begin(), maps.end());
    r.max_map = *std::max_element(maps.begin(), maps.end());
    r.median_map = median(maps);
  }
  return r;
}

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& sweep) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "removed_set,detection_map\n";
  out << fmt::format("{},{:.17g}\n", "none", sweep.full_map);
  for (const auto& e : sweep.entries) out << fmt::format("{},{:.17g}\n", fmt::join(e.removed, "+"), e.detection_map);
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace gmeld::eval
