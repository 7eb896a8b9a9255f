#include "gmeld/harness/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "gmeld/dc/checkpoint.hpp"
#include "gmeld/error.hpp"
#include "gmeld/io_util.hpp"
#include "gmeld/world/dataset_io.hpp"

namespace gmeld::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- strict JSON overlay ----

class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, _] : j_.items())
      if (!ok.count(k)) throw ConfigError(sub(k) + ": unknown key");
  }

  bool has(const char* key) const { return j_.contains(key); }
  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const json& at(const char* key) const { return j_.at(key); }

  void num(const char* key, double& out) const {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(sub(key) + ": expected a number");
    out = v.get<double>();
  }
  void count(const char* key, std::size_t& out) const {
    if (!has(key)) return;
    out = as_count(j_.at(key), sub(key));
  }
  void u64(const char* key, std::uint64_t& out) const {
    if (!has(key)) return;
    out = as_count(j_.at(key), sub(key));
  }
  void flag(const char* key, bool& out) const {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(sub(key) + ": expected a boolean");
    out = v.get<bool>();
  }
  void text(const char* key, std::string& out) const {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(sub(key) + ": expected a string");
    out = v.get<std::string>();
  }

  static std::uint64_t as_count(const json& v, const std::string& path) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      throw ConfigError(path + ": expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  static const json& array(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path + ": expected an array");
    return v;
  }

 private:
  const json& j_;
  std::string path_;
};

std::vector<std::size_t> count_list(const json& v, const std::string& path) {
  std::vector<std::size_t> out;
  const auto& arr = Obj::array(v, path);
  for (std::size_t i = 0; i < arr.size(); ++i) out.push_back(Obj::as_count(arr[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

void overlay_world(const Obj& o, world::WorldSpec& w) {
  o.allow({"num_classes", "num_sensors", "sensor_groups", "frames_per_clip", "feature_dim_raw", "coverage",
           "redundancy_pairs", "background_sensors", "noise_sigma", "event_rate", "min_events", "max_concurrent",
           "min_event_frames", "max_event_frames", "fragmentation", "seed"});
  o.count("num_classes", w.num_classes);
  o.count("num_sensors", w.num_sensors);
  o.count("frames_per_clip", w.frames_per_clip);
  o.count("feature_dim_raw", w.feature_dim_raw);
  o.num("noise_sigma", w.noise_sigma);
  o.count("min_events", w.min_events);
  o.count("max_concurrent", w.max_concurrent);
  o.count("min_event_frames", w.min_event_frames);
  o.count("max_event_frames", w.max_event_frames);
  o.num("fragmentation", w.fragmentation);
  o.u64("seed", w.seed);
  if (o.has("sensor_groups")) {
    const std::string p = o.sub("sensor_groups");
    const auto& arr = Obj::array(o.at("sensor_groups"), p);
    w.sensor_groups.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string gp = p + "[" + std::to_string(i) + "]";
      const Obj g(arr[i], gp);
      g.allow({"name", "sensors"});
      if (!g.has("name") || !g.has("sensors")) throw ConfigError(gp + ": requires name and sensors");
      world::SensorGroup sg;
      g.text("name", sg.name);
      sg.sensors = count_list(g.at("sensors"), g.sub("sensors"));
      w.sensor_groups.push_back(std::move(sg));
    }
  }
  if (o.has("coverage")) {
    const std::string p = o.sub("coverage");
    const auto& arr = Obj::array(o.at("coverage"), p);
    w.coverage.clear();
    for (std::size_t c = 0; c < arr.size(); ++c) {
      std::vector<std::uint8_t> row;
      for (auto v : count_list(arr[c], p + "[" + std::to_string(c) + "]")) {
        if (v > 1) throw ConfigError(p + "[" + std::to_string(c) + "]: entries must be 0 or 1");
        row.push_back(static_cast<std::uint8_t>(v));
      }
      w.coverage.push_back(std::move(row));
    }
  }
  if (o.has("redundancy_pairs")) {
    const std::string p = o.sub("redundancy_pairs");
    const auto& arr = Obj::array(o.at("redundancy_pairs"), p);
    w.redundancy_pairs.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto pair = count_list(arr[i], p + "[" + std::to_string(i) + "]");
      if (pair.size() != 2) throw ConfigError(p + "[" + std::to_string(i) + "]: expected two sensor indices");
      w.redundancy_pairs.emplace_back(pair[0], pair[1]);
    }
  }
  if (o.has("background_sensors")) w.background_sensors = count_list(o.at("background_sensors"), o.sub("background_sensors"));
  if (o.has("event_rate")) {
    const std::string p = o.sub("event_rate");
    const auto& arr = Obj::array(o.at("event_rate"), p);
    w.event_rate.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (!arr[i].is_number()) throw ConfigError(p + "[" + std::to_string(i) + "]: expected a number");
      w.event_rate.push_back(arr[i].get<double>());
    }
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  world.validate();
  if (sizes.train == 0 || sizes.validation == 0 || sizes.test == 0) throw ConfigError("sizes: every split needs clips");
  if (model.feature_dim == 0) throw ConfigError("model.feature_dim: must be positive");
  if (model.num_heads == 0) throw ConfigError("model.num_heads: must be positive");
  if (model.num_blocks == 0) throw ConfigError("model.num_blocks: must be positive");
  if (model.ffn_hidden == 0) throw ConfigError("model.ffn_hidden: must be positive");
  if (!meld.kappa.empty() && meld.kappa.size() != world.sensor_groups.size()) {
    throw ConfigError("meld.kappa: expected one range per sensor group (" + std::to_string(world.sensor_groups.size()) + ")");
  }
  for (std::size_t g = 0; g < meld.kappa.size(); ++g) {
    const auto r = meld.kappa[g];
    if (!(0.0 <= r.lo && r.lo <= r.hi && r.hi <= 1.0)) {
      throw ConfigError("meld.kappa[" + std::to_string(g) + "]: range must satisfy 0 <= lo <= hi <= 1");
    }
    const std::size_t n = world.sensor_groups[g].sensors.size();
    if (meld::kept_count(n, r.hi) == 0) throw ConfigError("meld.kappa[" + std::to_string(g) + "]: upper ratio masks the whole group");
  }
  if (!(meld.rho >= 0.0 && meld.rho <= 1.0)) throw ConfigError("meld.rho: must lie in [0, 1]");
  meld::ScheduleSpec{meld.lambda0, meld.gamma, method.strategy, optimizer.max_epoch}.validate();
  if (!(optimizer.optimizer.learning_rate > 0.0)) throw ConfigError("optimizer.lr: must be positive");
  if (!(optimizer.optimizer.weight_decay >= 0.0)) throw ConfigError("optimizer.weight_decay: must be >= 0");
  if (optimizer.batch_size == 0) throw ConfigError("optimizer.batch_size: must be positive");
  if (method.pretrain_epochs == 0 || method.probe_epochs == 0) throw ConfigError("method: stage epochs must be positive");
  if (!(eval.alpha >= 0.0 && eval.alpha < 1.0)) throw ConfigError("eval.alpha: must lie in [0, 1)");
  for (auto k : eval.sweep_sizes)
    if (k == 0 || k >= world.num_sensors) throw ConfigError("eval.sweep_sizes: sizes must lie in [1, num_sensors)");
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
}

json config_to_json(const ExperimentConfig& cfg) {
  json kappa = json::array();
  for (const auto& r : cfg.meld.kappa) kappa.push_back({r.lo, r.hi});
  json world;
  world::to_json(world, cfg.world);
  return json{
      {"world", world},
      {"sizes", {{"train", cfg.sizes.train}, {"validation", cfg.sizes.validation}, {"test", cfg.sizes.test}}},
      {"method",
       {{"id", cfg.method.label()},
        {"strategy", meld::to_string(cfg.method.strategy)},
        {"pretrain_epochs", cfg.method.pretrain_epochs},
        {"probe_epochs", cfg.method.probe_epochs}}},
      {"model",
       {{"feature_dim", cfg.model.feature_dim},
        {"num_blocks", cfg.model.num_blocks},
        {"num_heads", cfg.model.num_heads},
        {"ffn_hidden", cfg.model.ffn_hidden}}},
      {"meld",
       {{"kappa", kappa},
        {"rho", cfg.meld.rho},
        {"lambda0", cfg.meld.lambda0},
        {"gamma", cfg.meld.gamma},
        {"normalize_by_masked_count", cfg.meld.normalize_by_masked_count}}},
      {"optimizer",
       {{"lr", cfg.optimizer.optimizer.learning_rate},
        {"weight_decay", cfg.optimizer.optimizer.weight_decay},
        {"max_epoch", cfg.optimizer.max_epoch},
        {"batch_size", cfg.optimizer.batch_size},
        {"lr_decay_mode", meld::to_string(cfg.optimizer.lr_decay)}}},
      {"eval", {{"alpha", cfg.eval.alpha}, {"sweep_sizes", cfg.eval.sweep_sizes}}},
      {"seeds", cfg.seeds}};
}

ExperimentConfig config_from_json(const json& doc) {
  ExperimentConfig cfg;
  const Obj root(doc, "");
  root.allow({"world", "sizes", "method", "model", "meld", "optimizer", "eval", "seeds"});
  if (root.has("world")) overlay_world(Obj(root.at("world"), "world"), cfg.world);
  if (root.has("sizes")) {
    const Obj o(root.at("sizes"), "sizes");
    o.allow({"train", "validation", "test"});
    o.count("train", cfg.sizes.train);
    o.count("validation", cfg.sizes.validation);
    o.count("test", cfg.sizes.test);
  }
  if (root.has("method")) {
    const Obj o(root.at("method"), "method");
    o.allow({"id", "strategy", "pretrain_epochs", "probe_epochs"});
    std::string id = cfg.method.label();
    o.text("id", id);
    try {
      cfg.method = methods::MethodSpec::parse(id);
    } catch (const ConfigError&) {
      throw ConfigError("method.id: unknown method '" + id + "'");
    }
    if (o.has("strategy")) {
      std::string s;
      o.text("strategy", s);
      try {
        const auto strategy = meld::strategy_from_string(s);
        if (o.has("id") && id.size() > 1 && strategy != cfg.method.strategy) {
          throw ConfigError("method.strategy: conflicts with method.id '" + id + "'");
        }
        cfg.method.strategy = strategy;
      } catch (const ConfigError& e) {
        if (std::string(e.what()).rfind("method.", 0) == 0) throw;
        throw ConfigError("method.strategy: unknown strategy '" + s + "'");
      }
    }
    o.count("pretrain_epochs", cfg.method.pretrain_epochs);
    o.count("probe_epochs", cfg.method.probe_epochs);
  }
  if (root.has("model")) {
    const Obj o(root.at("model"), "model");
    o.allow({"feature_dim", "num_blocks", "num_heads", "ffn_hidden"});
    o.count("feature_dim", cfg.model.feature_dim);
    o.count("num_blocks", cfg.model.num_blocks);
    o.count("num_heads", cfg.model.num_heads);
    o.count("ffn_hidden", cfg.model.ffn_hidden);
  }
  if (root.has("meld")) {
    const Obj o(root.at("meld"), "meld");
    o.allow({"kappa", "rho", "lambda0", "gamma", "normalize_by_masked_count"});
    if (o.has("kappa")) {
      const auto& arr = Obj::array(o.at("kappa"), "meld.kappa");
      cfg.meld.kappa.clear();
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string p = "meld.kappa[" + std::to_string(i) + "]";
        if (!arr[i].is_array() || arr[i].size() != 2 || !arr[i][0].is_number() || !arr[i][1].is_number()) {
          throw ConfigError(p + ": expected [lo, hi]");
        }
        cfg.meld.kappa.push_back({arr[i][0].get<double>(), arr[i][1].get<double>()});
      }
    }
    o.num("rho", cfg.meld.rho);
    o.num("lambda0", cfg.meld.lambda0);
    o.num("gamma", cfg.meld.gamma);
    o.flag("normalize_by_masked_count", cfg.meld.normalize_by_masked_count);
  }
  if (root.has("optimizer")) {
    const Obj o(root.at("optimizer"), "optimizer");
    o.allow({"lr", "weight_decay", "max_epoch", "batch_size", "lr_decay_mode"});
    o.num("lr", cfg.optimizer.optimizer.learning_rate);
    o.num("weight_decay", cfg.optimizer.optimizer.weight_decay);
    o.count("max_epoch", cfg.optimizer.max_epoch);
    o.count("batch_size", cfg.optimizer.batch_size);
    if (o.has("lr_decay_mode")) {
      std::string m;
      o.text("lr_decay_mode", m);
      cfg.optimizer.lr_decay = meld::lr_decay_from_string(m);
    }
  }
  if (root.has("eval")) {
    const Obj o(root.at("eval"), "eval");
    o.allow({"alpha", "sweep_sizes"});
    o.num("alpha", cfg.eval.alpha);
    if (o.has("sweep_sizes")) cfg.eval.sweep_sizes = count_list(o.at("sweep_sizes"), "eval.sweep_sizes");
  }
  if (root.has("seeds")) {
    cfg.seeds.clear();
    for (auto s : count_list(root.at("seeds"), "seeds")) cfg.seeds.push_back(s);
  }
  cfg.validate();
  return cfg;
}

namespace {

json parse_json_file(const fs::path& path) {
  const std::string text = io::read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": invalid JSON at byte " + std::to_string(e.byte));
  }
}

}  // namespace

ExperimentConfig load_config(const fs::path& path) { return config_from_json(parse_json_file(path)); }

world::WorldSpec load_world_spec(const fs::path& path) {
  world::WorldSpec spec = world::WorldSpec::desk_default();
  overlay_world(Obj(parse_json_file(path), "world"), spec);
  spec.validate();
  return spec;
}

std::string config_hash(const ExperimentConfig& cfg) {
  json j = config_to_json(cfg);
  j.erase("seeds");
  return io::sha256_hex(j.dump());
}

std::string world_hash(const world::WorldSpec& spec, const world::SplitSizes& sizes) {
  json w;
  world::to_json(w, spec);
  const json j{{"world", w}, {"sizes", {sizes.train, sizes.validation, sizes.test}}};
  return io::sha256_hex(j.dump());
}

void to_json(json& j, const RunRecord& r) {
  j = json{{"config_hash", r.config_hash},
           {"seed", r.seed},
           {"method", r.method},
           {"wall_time_s", r.wall_time_s},
           {"run_dir", r.run_dir.string()},
           {"history", r.history_path.filename().string()},
           {"checkpoint", r.checkpoint_path.filename().string()},
           {"metrics", r.metrics_path.filename().string()},
           {"sweep", r.sweep_path.empty() ? json(nullptr) : json(r.sweep_path.filename().string())}};
}

world::Dataset obtain_dataset(const world::WorldSpec& spec, const world::SplitSizes& sizes) {
  const char* cache = std::getenv("MELD_LAB_CACHE");
  if (!cache || !*cache) return world::generate_dataset(spec, sizes);
  static std::mutex cache_mutex;
  std::lock_guard lock(cache_mutex);
  const fs::path dir = fs::path(cache) / ("world-" + world_hash(spec, sizes).substr(0, 16));
  if (fs::exists(dir / "checksums.txt")) {
    auto data = world::load_dataset(dir);
    json a, b;
    world::to_json(a, data.spec);
    world::to_json(b, spec);
    if (a != b) throw ChecksumError("cached dataset at " + dir.string() + " does not match the requested world");
    return data;
  }
  auto data = world::generate_dataset(spec, sizes);
  const fs::path tmp = dir.string() + ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  world::save_dataset(tmp, data);
  fs::remove_all(dir);
  fs::rename(tmp, dir);
  return data;
}

fs::path run_directory(const fs::path& out_root, const ExperimentConfig& cfg, std::uint64_t seed) {
  return out_root / (config_hash(cfg).substr(0, 12) + "-s" + std::to_string(seed));
}

namespace {

const std::string kTargetPrefix = "target:";

std::uint64_t tie_seed_for(std::uint64_t seed) { return seed; }

}  // namespace

void save_model(const fs::path& path, const meld::Network& net, const dc::ParamStore& target, const json& meta) {
  dc::ParamStore all = net.params().view("");
  for (const auto& [name, t] : target) all.add(kTargetPrefix + name, t);
  json m = meta;
  json w, model;
  world::to_json(w, net.world());
  meld::to_json(model, net.config());
  m["world"] = w;
  m["model"] = model;
  dc::save_checkpoint(path, all, m);
}

LoadedModel load_model(const fs::path& path) {
  auto ckpt = dc::load_checkpoint(path);
  if (!ckpt.meta.contains("world") || !ckpt.meta.contains("model")) {
    throw FormatError(path.string() + ": checkpoint lacks world or model metadata");
  }
  world::WorldSpec spec;
  meld::NetworkConfig model;
  try {
    world::from_json(ckpt.meta.at("world"), spec);
    meld::from_json(ckpt.meta.at("model"), model);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": malformed checkpoint metadata (" + e.what() + ")");
  }
  dc::ParamStore online;
  for (const auto& [name, t] : ckpt.params)
    if (name.rfind(kTargetPrefix, 0) != 0) online.add(name, t);
  return {meld::Network(spec, model, std::move(online)), ckpt.meta};
}

namespace {

void check_dataset_matches(const LoadedModel& m, const world::Dataset& data) {
  json w;
  world::to_json(w, data.spec);
  if (w != m.meta.at("world")) throw ChecksumError("dataset world does not match the checkpoint's world");
}

std::uint64_t meta_seed(const LoadedModel& m) { return m.meta.value("seed", std::uint64_t{0}); }

}  // namespace

EvalOutcome evaluate_checkpoint(const fs::path& checkpoint, const world::Dataset& data, const fs::path& out_dir,
                                double alpha) {
  const auto model = load_model(checkpoint);
  check_dataset_matches(model, data);
  const meld::ClipSource test(data.split.test, data.spec);
  const meld::ClipSource val(data.split.validation, data.spec);
  const auto preds = eval::predict(model.net, test);
  const std::uint64_t tie = tie_seed_for(meta_seed(model));
  EvalOutcome out{eval::score_tagging(preds, test, tie), eval::score_detection(preds, test, tie),
                  meld::validation_loss(model.net, val, weak::ClassWeights::from_counts(data.split.class_counts))};
  fs::create_directories(out_dir);
  io::write_text(out_dir / "metrics.json", eval::metrics_json(out.tagging, out.detection).dump(2) + "\n");
  eval::write_predictions(out_dir / "preds.jsonl", preds, data.spec.num_classes, alpha);
  return out;
}

eval::SweepResult sweep_checkpoint(const fs::path& checkpoint, const world::Dataset& data, const fs::path& out_dir,
                                   const std::vector<std::size_t>& sizes) {
  const auto model = load_model(checkpoint);
  check_dataset_matches(model, data);
  const meld::ClipSource test(data.split.test, data.spec);
  auto sweep = eval::sensor_reduction_sweep(model.net, test, sizes, tie_seed_for(meta_seed(model)));
  fs::create_directories(out_dir);
  eval::write_sweep_csv(out_dir / "sweep.csv", sweep);
  return sweep;
}

info::SensorGainReport analyze_info(const world::WorldSpec& spec, const fs::path& out_dir) {
  const auto report = info::classify_roles(info::discretize(spec));
  json j = report;
  j["background_declared"] = spec.background_sensors;
  fs::create_directories(out_dir);
  io::write_text(out_dir / "info_report.json", j.dump(2) + "\n");
  return report;
}

RunOutcome run_experiment(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& out_root,
                          const world::Dataset& data) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::string hash = config_hash(cfg);
  const fs::path dir = run_directory(out_root, cfg, seed);
  fs::create_directories(dir);

  ExperimentConfig single = cfg;
  single.seeds = {seed};
  io::write_text(dir / "config.json", config_to_json(single).dump(2) + "\n");

  auto run = methods::run_method(cfg.method, data, cfg.model, cfg.meld, cfg.optimizer, seed);

  RunOutcome out;
  out.record.config_hash = hash;
  out.record.seed = seed;
  out.record.method = cfg.method.label();
  out.record.run_dir = dir;
  out.record.history_path = dir / "history.csv";
  out.record.checkpoint_path = dir / "best.ckpt";
  out.record.metrics_path = dir / "metrics.json";
  out.best_val_task_loss = run.result.best_val_task_loss;
  out.pretrain_label_reads = run.pretrain_label_reads;

  meld::write_history_csv(out.record.history_path, run.result.history);
  if (!run.pretrain_history.empty()) meld::write_history_csv(dir / "pretrain_history.csv", run.pretrain_history);
  const json meta{{"method", cfg.method.label()},
                  {"seed", seed},
                  {"config_hash", hash},
                  {"epoch", run.result.best_epoch},
                  {"val_LG", run.result.best_val_task_loss}};
  save_model(out.record.checkpoint_path, run.net, run.result.target, meta);
  io::write_text(dir / "best.meta.json",
                 json{{"epoch", run.result.best_epoch}, {"val_LG", run.result.best_val_task_loss}, {"seed", seed},
                      {"config_hash", hash}}
                         .dump(2) +
                     "\n");

  const meld::ClipSource test(data.split.test, data.spec);
  const auto preds = eval::predict(run.net, test);
  const std::uint64_t tie = tie_seed_for(seed);
  out.tagging = eval::score_tagging(preds, test, tie);
  out.detection = eval::score_detection(preds, test, tie);
  io::write_text(out.record.metrics_path, eval::metrics_json(out.tagging, out.detection).dump(2) + "\n");
  eval::write_predictions(dir / "preds.jsonl", preds, data.spec.num_classes, cfg.eval.alpha);
  if (!cfg.eval.sweep_sizes.empty()) {
    out.sweep = eval::sensor_reduction_sweep(run.net, test, cfg.eval.sweep_sizes, tie);
    out.record.sweep_path = dir / "sweep.csv";
    eval::write_sweep_csv(out.record.sweep_path, out.sweep);
  }
  out.record.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  io::write_text(dir / "run.json", json(out.record).dump(2) + "\n");
  return out;
}

MeanSe mean_se(const std::vector<double>& values) {
  if (values.empty()) throw ContractError("mean_se of an empty list");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

double pooled_se(const std::vector<double>& a, const std::vector<double>& b) {
  const double sa = mean_se(a).se, sb = mean_se(b).se;
  return std::sqrt(sa * sa + sb * sb);
}

std::vector<RunOutcome> compare(const ExperimentConfig& base, const std::vector<methods::MethodSpec>& method_list,
                                const std::vector<std::uint64_t>& seeds, const fs::path& out_root, std::size_t threads) {
  if (method_list.empty() || seeds.empty()) throw ConfigError("compare: needs at least one method and one seed");
  base.validate();
  const auto data = obtain_dataset(base.world, base.sizes);
  struct Job {
    ExperimentConfig cfg;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& m : method_list)
    for (auto s : seeds) {
      ExperimentConfig c = base;
      c.method = m;
      jobs.push_back({c, s});
    }
  std::vector<RunOutcome> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) {
      try {
        results[i] = run_experiment(jobs[i].cfg, jobs[i].seed, out_root, data);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::clamp<std::size_t>(threads, 1, jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  fs::create_directories(out_root);
  std::ofstream csv(out_root / "comparison.csv", std::ios::binary);
  csv << "method_id,seed,tagging_map,tagging_roauc,detection_map,detection_roauc\n";
  std::map<std::string, std::vector<const RunOutcome*>> by_method;
  std::vector<std::string> order;
  for (const auto& r : results) {
    csv << fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.record.method, r.record.seed, r.tagging.macro_map,
                       r.tagging.macro_roauc, r.detection.macro_map, r.detection.macro_roauc);
    if (!by_method.count(r.record.method)) order.push_back(r.record.method);
    by_method[r.record.method].push_back(&r);
  }
  if (!csv) throw IoError("failed writing comparison.csv");
  std::ofstream summary(out_root / "summary.csv", std::ios::binary);
  summary << "method_id,runs,tagging_map_mean,tagging_map_se,tagging_roauc_mean,tagging_roauc_se,"
             "detection_map_mean,detection_map_se,detection_roauc_mean,detection_roauc_se\n";
  for (const auto& m : order) {
    std::vector<double> tm, tr, dm, dr;
    for (const auto* r : by_method[m]) {
      tm.push_back(r->tagging.macro_map);
      tr.push_back(r->tagging.macro_roauc);
      dm.push_back(r->detection.macro_map);
      dr.push_back(r->detection.macro_roauc);
    }
    const auto a = mean_se(tm), b = mean_se(tr), c = mean_se(dm), d = mean_se(dr);
    summary << fmt::format("{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n", m, tm.size(), a.mean, a.se,
                           b.mean, b.se, c.mean, c.se, d.mean, d.se);
  }
  if (!summary) throw IoError("failed writing summary.csv");
  return results;
}

}  // namespace gmeld::harness
