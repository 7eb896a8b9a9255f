#include "gmeld/world/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "gmeld/error.hpp"

namespace gmeld::world {

namespace {

constexpr int kScriptRetries = 200;
constexpr int kPlacementTries = 32;

[[noreturn]] void bad(const std::string& field, const std::string& why) {
  throw ConfigError("world." + field + ": " + why);
}

template <class T>
T field(const nlohmann::json& j, const char* name) {
  if (!j.contains(name)) bad(name, "missing required field");
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception& e) {
    bad(name, e.what());
  }
}

}  // namespace

void WorldSpec::validate() const {
  if (num_classes == 0) bad("num_classes", "must be positive");
  if (num_sensors == 0) bad("num_sensors", "must be positive");
  if (frames_per_clip == 0) bad("frames_per_clip", "must be positive");
  if (feature_dim_raw == 0) bad("feature_dim_raw", "must be positive");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) bad("noise_sigma", "must be a nonnegative real");
  if (!(fragmentation >= 0.0 && fragmentation < 1.0)) bad("fragmentation", "must lie in [0,1)");

  std::vector<int> owner(num_sensors, -1);
  if (sensor_groups.empty()) bad("sensor_groups", "at least one group required");
  for (std::size_t g = 0; g < sensor_groups.size(); ++g) {
    if (sensor_groups[g].sensors.empty()) bad("sensor_groups[" + std::to_string(g) + "]", "empty group");
    for (auto s : sensor_groups[g].sensors) {
      if (s >= num_sensors) bad("sensor_groups[" + std::to_string(g) + "]", "sensor index out of range");
      if (owner[s] != -1) bad("sensor_groups", "sensor " + std::to_string(s) + " belongs to two groups");
      owner[s] = static_cast<int>(g);
    }
  }
  for (std::size_t s = 0; s < num_sensors; ++s) {
    if (owner[s] == -1) bad("sensor_groups", "sensor " + std::to_string(s) + " is in no group");
  }

  if (coverage.size() != num_classes) bad("coverage", "expected " + std::to_string(num_classes) + " rows");
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (coverage[c].size() != num_sensors) bad("coverage[" + std::to_string(c) + "]", "wrong length");
    bool covered = false;
    for (auto v : coverage[c]) {
      if (v > 1) bad("coverage[" + std::to_string(c) + "]", "entries must be 0 or 1");
      covered = covered || v == 1;
    }
    if (!covered) bad("coverage[" + std::to_string(c) + "]", "class is observed by no sensor (unlearnable world)");
  }
  for (auto s : background_sensors) {
    if (s >= num_sensors) bad("background_sensors", "sensor index out of range");
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (coverage[c][s]) bad("background_sensors", "sensor " + std::to_string(s) + " has nonzero coverage");
    }
  }
  for (const auto& [u, v] : redundancy_pairs) {
    if (u >= num_sensors || v >= num_sensors || u == v) bad("redundancy_pairs", "invalid pair");
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (coverage[c][u] != coverage[c][v]) {
        bad("redundancy_pairs", "sensors " + std::to_string(u) + " and " + std::to_string(v) + " differ in coverage");
      }
    }
  }

  if (event_rate.size() != num_classes) bad("event_rate", "expected one rate per class");
  for (double r : event_rate) {
    if (!(r > 0.0 && r < 1.0)) bad("event_rate", "rates must lie in (0,1)");
  }
  if (min_events == 0 || min_events > num_classes) bad("min_events", "must lie in [1, num_classes]");
  if (max_concurrent == 0) bad("max_concurrent", "must be positive");
  if (min_event_frames == 0 || min_event_frames > max_event_frames || max_event_frames > frames_per_clip) {
    bad("min_event_frames", "need 1 <= min_event_frames <= max_event_frames <= frames_per_clip");
  }
}

std::size_t WorldSpec::group_of(std::size_t sensor) const {
  for (std::size_t g = 0; g < sensor_groups.size(); ++g) {
    const auto& ss = sensor_groups[g].sensors;
    if (std::find(ss.begin(), ss.end(), sensor) != ss.end()) return g;
  }
  throw ContractError("sensor " + std::to_string(sensor) + " has no group");
}

WorldSpec WorldSpec::desk_default() {
  WorldSpec w;
  w.num_classes = 6;
  w.num_sensors = 8;
  w.sensor_groups = {{"camera", {0, 1, 2}}, {"microphone", {3, 4, 5, 6, 7}}};
  w.frames_per_clip = 32;
  w.feature_dim_raw = 16;
  // sensors:          0  1  2  3  4  5  6  7
  w.coverage = {{1, 1, 0, 0, 0, 1, 0, 0},
                {1, 1, 0, 1, 1, 0, 0, 0},
                {1, 1, 0, 1, 1, 0, 0, 0},
                {0, 0, 0, 1, 1, 0, 1, 0},
                {0, 0, 0, 0, 0, 1, 0, 0},
                {0, 0, 0, 0, 0, 0, 1, 0}};
  w.redundancy_pairs = {{0, 1}, {3, 4}};
  w.background_sensors = {2, 7};
  w.noise_sigma = 0.3;
  w.event_rate = std::vector<double>(6, 0.35);
  w.min_events = 1;
  w.max_concurrent = 2;
  w.min_event_frames = 4;
  w.max_event_frames = 12;
  w.fragmentation = 0.5;
  w.seed = 2024;
  return w;
}

void to_json(nlohmann::json& j, const WorldSpec& w) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : w.sensor_groups) groups.push_back({{"name", g.name}, {"sensors", g.sensors}});
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [u, v] : w.redundancy_pairs) pairs.push_back({u, v});
  j = nlohmann::json{{"num_classes", w.num_classes},
                     {"num_sensors", w.num_sensors},
                     {"sensor_groups", groups},
                     {"frames_per_clip", w.frames_per_clip},
                     {"feature_dim_raw", w.feature_dim_raw},
                     {"coverage", w.coverage},
                     {"redundancy_pairs", pairs},
                     {"background_sensors", w.background_sensors},
                     {"noise_sigma", w.noise_sigma},
                     {"event_rate", w.event_rate},
                     {"min_events", w.min_events},
                     {"max_concurrent", w.max_concurrent},
                     {"min_event_frames", w.min_event_frames},
                     {"max_event_frames", w.max_event_frames},
                     {"fragmentation", w.fragmentation},
                     {"seed", w.seed}};
}

void from_json(const nlohmann::json& j, WorldSpec& w) {
  if (!j.is_object()) throw ConfigError("world: expected an object");
  w.num_classes = field<std::size_t>(j, "num_classes");
  w.num_sensors = field<std::size_t>(j, "num_sensors");
  w.sensor_groups.clear();
  const auto groups = field<nlohmann::json>(j, "sensor_groups");
  if (!groups.is_array()) bad("sensor_groups", "expected an array");
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto& g = groups[i];
    if (!g.is_object() || !g.contains("name") || !g.contains("sensors")) {
      bad("sensor_groups[" + std::to_string(i) + "]", "expected {name, sensors}");
    }
    try {
      w.sensor_groups.push_back({g.at("name").get<std::string>(), g.at("sensors").get<std::vector<std::size_t>>()});
    } catch (const nlohmann::json::exception& e) {
      bad("sensor_groups[" + std::to_string(i) + "]", e.what());
    }
  }
  w.frames_per_clip = field<std::size_t>(j, "frames_per_clip");
  w.feature_dim_raw = field<std::size_t>(j, "feature_dim_raw");
  w.coverage = field<std::vector<std::vector<std::uint8_t>>>(j, "coverage");
  w.redundancy_pairs.clear();
  for (const auto& p : field<std::vector<std::vector<std::size_t>>>(j, "redundancy_pairs")) {
    if (p.size() != 2) bad("redundancy_pairs", "each pair needs exactly two sensors");
    w.redundancy_pairs.emplace_back(p[0], p[1]);
  }
  w.background_sensors = field<std::vector<std::size_t>>(j, "background_sensors");
  w.noise_sigma = field<double>(j, "noise_sigma");
  w.event_rate = field<std::vector<double>>(j, "event_rate");
  w.min_events = field<std::size_t>(j, "min_events");
  w.max_concurrent = field<std::size_t>(j, "max_concurrent");
  w.min_event_frames = field<std::size_t>(j, "min_event_frames");
  w.max_event_frames = field<std::size_t>(j, "max_event_frames");
  w.fragmentation = field<double>(j, "fragmentation");
  w.seed = field<std::uint64_t>(j, "seed");
}

std::vector<double> make_signatures(const WorldSpec& spec) {
  spec.validate();
  const std::size_t C = spec.num_classes, S = spec.num_sensors, F = spec.feature_dim_raw;
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32), 0x5167u};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto zeroed = static_cast<std::size_t>(std::floor(spec.fragmentation * static_cast<double>(F)));

  std::vector<double> sig(C * S * F, 0.0);
  std::vector<std::size_t> coords(F);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t s = 0; s < S; ++s) {
      double* e = sig.data() + (c * S + s) * F;
      for (std::size_t f = 0; f < F; ++f) e[f] = normal(rng);
      std::iota(coords.begin(), coords.end(), 0);
      std::shuffle(coords.begin(), coords.end(), rng);
      for (std::size_t i = 0; i < zeroed; ++i) e[coords[i]] = 0.0;
      double norm = 0;
      for (std::size_t f = 0; f < F; ++f) norm += e[f] * e[f];
      norm = std::sqrt(norm);
      if (norm == 0.0) {
        e[coords[F - 1]] = 1.0;
        norm = 1.0;
      }
      for (std::size_t f = 0; f < F; ++f) e[f] /= norm;
      if (!spec.coverage[c][s]) std::fill(e, e + F, 0.0);
    }
  }
  for (const auto& [u, v] : spec.redundancy_pairs) {
    for (std::size_t c = 0; c < C; ++c) {
      std::copy_n(sig.data() + (c * S + u) * F, F, sig.data() + (c * S + v) * F);
    }
  }
  return sig;
}

std::vector<std::uint8_t> sample_event_script(const WorldSpec& spec, std::mt19937_64& rng) {
  const std::size_t T = spec.frames_per_clip, C = spec.num_classes;
  std::uniform_int_distribution<std::size_t> duration(spec.min_event_frames, spec.max_event_frames);

  for (int attempt = 0; attempt < kScriptRetries; ++attempt) {
    std::vector<std::uint8_t> script(T * C, 0);
    std::vector<std::size_t> load(T, 0);
    std::vector<bool> active(C, false);
    std::size_t events = 0;

    auto place = [&](std::size_t c) {
      for (int tries = 0; tries < kPlacementTries; ++tries) {
        const std::size_t len = duration(rng);
        const std::size_t onset = std::uniform_int_distribution<std::size_t>(0, T - len)(rng);
        bool fits = true;
        for (std::size_t t = onset; t < onset + len; ++t) fits = fits && load[t] < spec.max_concurrent;
        if (!fits) continue;
        for (std::size_t t = onset; t < onset + len; ++t) {
          script[t * C + c] = 1;
          ++load[t];
        }
        active[c] = true;
        ++events;
        return true;
      }
      return false;
    };

    for (std::size_t c = 0; c < C; ++c) {
      if (std::bernoulli_distribution(spec.event_rate[c])(rng)) place(c);
    }
    while (events < spec.min_events) {
      std::vector<std::size_t> idle;
      for (std::size_t c = 0; c < C; ++c) {
        if (!active[c]) idle.push_back(c);
      }
      if (idle.empty()) break;
      const std::size_t c = idle[std::uniform_int_distribution<std::size_t>(0, idle.size() - 1)(rng)];
      if (!place(c)) break;
    }
    if (events >= spec.min_events) return script;
  }
  throw GenerationError("could not satisfy event constraints after " + std::to_string(kScriptRetries) + " attempts");
}

std::vector<double> render_features(const WorldSpec& spec, const std::vector<double>& signatures,
                                    const std::vector<std::uint8_t>& script, std::mt19937_64& rng) {
  const std::size_t C = spec.num_classes, S = spec.num_sensors, T = spec.frames_per_clip, F = spec.feature_dim_raw;
  if (script.size() != T * C) throw DimensionError("render_features: script must be T x C");
  if (signatures.size() != C * S * F) throw DimensionError("render_features: signature table has wrong size");
  std::vector<double> out(S * T * F, 0.0);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0 ? spec.noise_sigma : 1.0);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t t = 0; t < T; ++t) {
      double* x = out.data() + (s * T + t) * F;
      for (std::size_t c = 0; c < C; ++c) {
        if (!script[t * C + c] || !spec.coverage[c][s]) continue;
        const double* e = signatures.data() + (c * S + s) * F;
        for (std::size_t f = 0; f < F; ++f) x[f] += e[f];
      }
      if (spec.noise_sigma > 0) {
        for (std::size_t f = 0; f < F; ++f) x[f] += noise(rng);
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> make_weak_label(const std::vector<std::uint8_t>& strong, std::size_t num_frames,
                                          std::size_t num_classes) {
  if (strong.size() != num_frames * num_classes) throw DimensionError("make_weak_label: strong labels must be T x C");
  std::vector<std::uint8_t> weak(num_classes, 0);
  for (std::size_t t = 0; t < num_frames; ++t)
    for (std::size_t c = 0; c < num_classes; ++c) weak[c] |= strong[t * num_classes + c] ? 1 : 0;
  return weak;
}

std::vector<std::size_t> count_event_instances(const std::vector<std::uint8_t>& strong, std::size_t num_frames,
                                               std::size_t num_classes) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t c = 0; c < num_classes; ++c) {
    bool prev = false;
    for (std::size_t t = 0; t < num_frames; ++t) {
      const bool on = strong[t * num_classes + c] != 0;
      if (on && !prev) ++counts[c];
      prev = on;
    }
  }
  return counts;
}

Dataset generate_dataset(const WorldSpec& spec, const SplitSizes& sizes) {
  spec.validate();
  if (sizes.train == 0 || sizes.validation == 0 || sizes.test == 0) {
    throw ConfigError("split sizes must be positive");
  }
  const auto signatures = make_signatures(spec);
  Dataset ds;
  ds.spec = spec;

  auto make_split = [&](std::vector<ClipSample>& out, std::size_t count, std::uint32_t split_id, const char* tag) {
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32), split_id,
                        static_cast<std::uint32_t>(i)};
      std::mt19937_64 rng(seq);
      ClipSample clip;
      char id[32];
      std::snprintf(id, sizeof(id), "%s-%05zu", tag, i);
      clip.clip_id = id;
      clip.strong_labels = sample_event_script(spec, rng);
      clip.features = render_features(spec, signatures, clip.strong_labels, rng);
      clip.weak_label = make_weak_label(clip.strong_labels, spec.frames_per_clip, spec.num_classes);
      out.push_back(std::move(clip));
    }
  };
  make_split(ds.split.train, sizes.train, 1, "train");
  make_split(ds.split.validation, sizes.validation, 2, "val");
  make_split(ds.split.test, sizes.test, 3, "test");

  ds.split.class_counts.assign(spec.num_classes, 0);
  for (const auto& clip : ds.split.train) {
    const auto counts = count_event_instances(clip.strong_labels, spec.frames_per_clip, spec.num_classes);
    for (std::size_t c = 0; c < spec.num_classes; ++c) ds.split.class_counts[c] += counts[c];
  }
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    if (ds.split.class_counts[c] == 0) {
      throw GenerationError("class " + std::to_string(c) + " has no event in the train split");
    }
  }
  return ds;
}

}  // namespace gmeld::world
