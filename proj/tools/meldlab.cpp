#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gmeld/error.hpp"
#include "gmeld/harness/harness.hpp"
#include "gmeld/world/dataset_io.hpp"

namespace fs = std::filesystem;
using namespace gmeld;
using harness::ExperimentConfig;

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& s : split_list(text)) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      out.push_back(v);
    } catch (const std::logic_error&) {
      throw ConfigError("--seeds: '" + s + "' is not a seed");
    }
  }
  if (out.empty()) throw ConfigError("--seeds: at least one seed is required");
  return out;
}

ExperimentConfig config_or_default(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : harness::load_config(path);
}

world::Dataset dataset_for(const ExperimentConfig& cfg, const std::string& data_dir) {
  if (data_dir.empty()) return harness::obtain_dataset(cfg.world, cfg.sizes);
  auto data = world::load_dataset(data_dir);
  nlohmann::json a, b;
  world::to_json(a, data.spec);
  world::to_json(b, cfg.world);
  if (a != b) throw ChecksumError(data_dir + ": dataset world does not match the config's world");
  return data;
}

void print_run(const harness::RunOutcome& r) {
  std::cout << r.record.method << " seed=" << r.record.seed << " tagging_map=" << r.tagging.macro_map
            << " detection_map=" << r.detection.macro_map << " dir=" << r.record.run_dir.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guided-MELD experiment runner"};
  app.require_subcommand(1);

  std::string config_path, spec_path, out_dir = "runs", method, data_dir, checkpoint, seeds_text, methods_text;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  world::SplitSizes sizes;
  bool sizes_given = false;
  double alpha = 0.5;
  std::vector<std::size_t> sweep_sizes{1, 2};

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--spec", spec_path, "World spec JSON");
  gen->add_option("--config", config_path, "Experiment config JSON (world and sizes)");
  gen->add_option("--out", out_dir, "Output directory")->required();
  gen->add_option("--seed", seed, "Override the world seed");
  auto* tr = gen->add_option("--train", sizes.train, "Training clips");
  auto* va = gen->add_option("--validation", sizes.validation, "Validation clips");
  auto* te = gen->add_option("--test", sizes.test, "Test clips");

  auto* train = app.add_subcommand("train", "Train one method for each seed");
  train->add_option("--config", config_path, "Experiment config JSON");
  train->add_option("--out", out_dir, "Output root");
  train->add_option("--seed", seed, "Train this seed only");
  train->add_option("--method", method, "Override the method id");
  train->add_option("--data", data_dir, "Dataset directory from gen-data");

  auto* ev = app.add_subcommand("eval", "Score a checkpoint on the test split");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--data", data_dir, "Dataset directory")->required();
  ev->add_option("--out", out_dir, "Output directory")->required();
  ev->add_option("--alpha", alpha, "Activity threshold");

  auto* sw = app.add_subcommand("sweep-sensors", "Sensor-removal sweep for a checkpoint");
  sw->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  sw->add_option("--data", data_dir, "Dataset directory")->required();
  sw->add_option("--out", out_dir, "Output directory")->required();
  sw->add_option("--sizes", sweep_sizes, "Removal set sizes")->delimiter(',');

  auto* info = app.add_subcommand("analyze-info", "Information-theoretic sensor roles");
  info->add_option("--spec", spec_path, "World spec JSON");
  info->add_option("--config", config_path, "Experiment config JSON");
  info->add_option("--out", out_dir, "Output directory")->required();

  auto* cmp = app.add_subcommand("compare", "Every (method, seed) pair with summary tables");
  cmp->add_option("--config", config_path, "Experiment config JSON");
  cmp->add_option("--out", out_dir, "Output root");
  cmp->add_option("--method,--methods", methods_text, "Comma-separated method ids")->required();
  cmp->add_option("--seed,--seeds", seeds_text, "Comma-separated seeds");
  cmp->add_option("--threads", threads, "Parallel runs")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "E_USAGE: " << e.what() << "\n";
    return 2;
  }
  sizes_given = tr->count() + va->count() + te->count() > 0;

  try {
    if (*gen) {
      world::WorldSpec spec;
      world::SplitSizes use = sizes;
      if (!spec_path.empty()) {
        spec = harness::load_world_spec(spec_path);
      } else {
        const auto cfg = config_or_default(config_path);
        spec = cfg.world;
        if (!sizes_given) use = cfg.sizes;
      }
      if (seed) spec.seed = *seed;
      spec.validate();
      const auto data = world::generate_dataset(spec, use);
      world::save_dataset(out_dir, data);
      std::cout << "dataset " << out_dir << " world=" << harness::world_hash(spec, use).substr(0, 16) << "\n";
    } else if (*train) {
      auto cfg = config_or_default(config_path);
      if (!method.empty()) cfg.method = methods::MethodSpec::parse(method);
      if (seed) cfg.seeds = {*seed};
      cfg.validate();
      const auto data = dataset_for(cfg, data_dir);
      for (auto s : cfg.seeds) print_run(harness::run_experiment(cfg, s, out_dir, data));
    } else if (*ev) {
      const auto data = world::load_dataset(data_dir);
      const auto r = harness::evaluate_checkpoint(checkpoint, data, out_dir, alpha);
      std::cout << "tagging_map=" << r.tagging.macro_map << " detection_map=" << r.detection.macro_map
                << " val_LG=" << r.val_task_loss << "\n";
    } else if (*sw) {
      const auto data = world::load_dataset(data_dir);
      const auto r = harness::sweep_checkpoint(checkpoint, data, out_dir, sweep_sizes);
      std::cout << "full=" << r.full_map << " min=" << r.min_map << " median=" << r.median_map
                << " max=" << r.max_map << "\n";
    } else if (*info) {
      const auto spec = spec_path.empty() ? config_or_default(config_path).world : harness::load_world_spec(spec_path);
      const auto r = harness::analyze_info(spec, out_dir);
      std::cout << "I(all)=" << r.total_information << " bits -> " << (fs::path(out_dir) / "info_report.json").string()
                << "\n";
    } else if (*cmp) {
      auto cfg = config_or_default(config_path);
      std::vector<methods::MethodSpec> list;
      for (const auto& m : split_list(methods_text)) list.push_back(methods::MethodSpec::parse(m));
      const auto seeds = seeds_text.empty() ? cfg.seeds : parse_seeds(seeds_text);
      for (const auto& r : harness::compare(cfg, list, seeds, out_dir, threads)) print_run(r);
      std::cout << "summary " << (fs::path(out_dir) / "summary.csv").string() << "\n";
    }
  } catch (const Error& e) {
    std::cerr << e.code() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "E_IO: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "E_INTERNAL: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
