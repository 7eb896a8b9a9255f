#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "fixtures.hpp"
#include "gmeld/error.hpp"
#include "gmeld/meld/meld.hpp"
#include "gmeld/meld/trainer.hpp"
#include "gradcheck.hpp"

using namespace gmeld;
using namespace gmeld::dc;
using namespace gmeld::meld;
using gmeld::testing::tiny_model;
using gmeld::testing::tiny_world;

namespace {

std::vector<world::SensorGroup> one_group(std::size_t n) {
  world::SensorGroup g{"all", {}};
  for (std::size_t i = 0; i < n; ++i) g.sensors.push_back(i);
  return {g};
}

MaskMatrix mask_from(std::vector<std::uint8_t> keep) {
  MaskMatrix m;
  m.kept = 0;
  for (auto k : keep) m.kept += k;
  m.keep = std::move(keep);
  m.kappa = {0.0};
  return m;
}

struct Fixture {
  world::WorldSpec spec = tiny_world();
  world::Dataset data = world::generate_dataset(spec, {5, 3, 2});
  ClipSource train{data.split.train, data.spec};
  ClipSource val{data.split.validation, data.spec};
  weak::ClassWeights weights = weak::ClassWeights::from_counts(data.split.class_counts);
};

}  // namespace

TEST(KeptCount, FloorWithRepresentationGuard) {
  EXPECT_EQ(kept_count(6, 0.0), 6u);
  EXPECT_EQ(kept_count(6, 2.0 / 6.0), 4u);
  EXPECT_EQ(kept_count(18, 2.0 / 18.0), 16u);
  EXPECT_EQ(kept_count(18, 1.0 / 18.0), 17u);
  EXPECT_EQ(kept_count(3, 0.5), 1u);
}

TEST(SampleMask, ZeroKappaKeepsEverything) {
  std::mt19937_64 rng(1);
  const std::vector<KappaRange> r = {{0.0, 0.0}};
  const auto m = sample_mask(one_group(5), 5, r, rng);
  EXPECT_EQ(m.kept, 5u);
  EXPECT_EQ(m.keep, std::vector<std::uint8_t>(5, 1));
}

TEST(SampleMask, FixedKappaGivesExactCount) {
  std::mt19937_64 rng(2);
  const std::vector<KappaRange> r = {{2.0 / 6.0, 2.0 / 6.0}};
  for (int i = 0; i < 200; ++i) {
    const auto m = sample_mask(one_group(6), 6, r, rng);
    EXPECT_EQ(m.kept, 4u);
  }
}

TEST(SampleMask, PerGroupCountsAndUniformKeepFrequency) {
  const auto spec = world::WorldSpec::desk_default();
  std::vector<KappaRange> r;
  for (const auto& g : spec.sensor_groups) r.push_back({0.0, 2.0 / static_cast<double>(g.sensors.size())});
  std::mt19937_64 rng(3);
  const int n = 10000;
  std::vector<double> kept(spec.num_sensors, 0.0);
  std::vector<double> expected(spec.num_sensors, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto m = sample_mask(spec.sensor_groups, spec.num_sensors, r, rng);
    std::size_t total = 0;
    for (std::size_t g = 0; g < spec.sensor_groups.size(); ++g) {
      const auto& ss = spec.sensor_groups[g].sensors;
      std::size_t in_group = 0;
      for (auto s : ss) in_group += m.keep[s];
      EXPECT_EQ(in_group, kept_count(ss.size(), m.kappa[g]));
      for (auto s : ss) expected[s] += static_cast<double>(in_group) / static_cast<double>(ss.size());
      total += in_group;
    }
    EXPECT_EQ(total, m.kept);
    for (std::size_t s = 0; s < spec.num_sensors; ++s) kept[s] += m.keep[s];
  }
  for (const auto& g : spec.sensor_groups) {
    const double p = expected[g.sensors.front()] / n;
    const double sd = std::sqrt(p * (1 - p) / n);
    for (auto s : g.sensors) EXPECT_NEAR(kept[s] / n, p, 3 * sd) << "sensor " << s;
  }
}

TEST(SampleMask, Errors) {
  std::mt19937_64 rng(4);
  const std::vector<KappaRange> two = {{0, 0}, {0, 0}};
  EXPECT_THROW(sample_mask(one_group(3), 3, two, rng), ConfigError);
  const std::vector<KappaRange> bad = {{0.5, 0.2}};
  EXPECT_THROW(sample_mask(one_group(3), 3, bad, rng), ConfigError);
  const std::vector<KappaRange> all = {{1.0, 1.0}};
  EXPECT_THROW(sample_mask(one_group(3), 3, all, rng), ContractError);
  std::vector<world::SensorGroup> empty = {{"x", {}}};
  const std::vector<KappaRange> one = {{0, 0}};
  EXPECT_THROW(sample_mask(empty, 3, one, rng), ConfigError);
}

TEST(ApplyMask, ZeroesMaskedColumnsAndIsIdempotent) {
  std::mt19937_64 rng(5);
  const Tensor x = gmeld::testing::random_leaf({2, 3, 4}, rng);
  const auto m = mask_from({1, 0, 1});
  const Tensor y = apply_mask(x, m);
  const Tensor yy = apply_mask(y, m);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t d = 0; d < 4; ++d) {
        const std::size_t i = (n * 3 + s) * 4 + d;
        EXPECT_EQ(y[i], s == 1 ? 0.0 : x[i]);
        EXPECT_EQ(yy[i], y[i]);
      }
  const Tensor id = apply_mask(x, MaskMatrix::all_kept(3));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(id[i], x[i]);
  EXPECT_THROW(apply_mask(Tensor::zeros({2, 4, 4}), m), DimensionError);
}

TEST(DistillLoss, HandCaseAsPrinted) {
  // T=1, S=2, sensor 1 masked with difference (3, 4), kept count 1.
  const Tensor z({1, 2, 2}, {0, 0, 0, 0});
  const Tensor zhat({1, 2, 2}, {7, -1, 3, 4});
  auto m = mask_from({1, 0});
  m.kappa = {0.5};
  EXPECT_DOUBLE_EQ(distill_loss(z, zhat, m).item(), 25.0);
  EXPECT_DOUBLE_EQ(distill_loss(z, zhat, m, true).item(), 25.0);
  const auto m3 = mask_from({1, 1, 0});
  const Tensor z3 = Tensor::zeros({1, 3, 2});
  const Tensor h3({1, 3, 2}, {1, 1, 1, 1, 3, 4});
  EXPECT_DOUBLE_EQ(distill_loss(z3, h3, m3).item(), 12.5);
  EXPECT_DOUBLE_EQ(distill_loss(z3, h3, m3, true).item(), 25.0);
}

TEST(DistillLoss, ZeroWhenEqualOrNothingMaskedAndBlindToKeptSlots) {
  std::mt19937_64 rng(6);
  const Tensor z = gmeld::testing::random_leaf({3, 3, 2}, rng);
  const Tensor h = gmeld::testing::random_leaf({3, 3, 2}, rng);
  EXPECT_EQ(distill_loss(z, z, mask_from({1, 0, 0})).item(), 0.0);
  EXPECT_EQ(distill_loss(z, h, MaskMatrix::all_kept(3)).item(), 0.0);
  const auto m = mask_from({1, 0, 1});
  std::vector<double> changed(z.data().begin(), z.data().end());
  for (std::size_t n = 0; n < 3; ++n) changed[(n * 3 + 0) * 2] += 5.0;
  EXPECT_EQ(distill_loss(z, h, m).item(), distill_loss(Tensor(z.shape(), changed), h, m).item());
}

TEST(Ema, EndpointsAndHandValue) {
  ParamStore online, target;
  online.add("w", Tensor({2}, {0.0, 2.0}, true));
  target.add("w", Tensor({2}, {1.0, 1.0}, true));
  ema_update(online, target, 1.0);
  EXPECT_EQ(target.get("w")[0], 1.0);
  ema_update(online, target, 0.95);
  EXPECT_DOUBLE_EQ(target.get("w")[0], 0.95);
  ema_update(online, target, 0.0);
  EXPECT_EQ(target.get("w")[1], 2.0);
  EXPECT_THROW(ema_update(online, target, 1.5), ConfigError);
  ParamStore other;
  other.add("v", Tensor({2}, {0, 0}, true));
  EXPECT_THROW(ema_update(online, other, 0.5), ContractError);
}

TEST(Schedule, LambdaValues) {
  ScheduleSpec s;
  EXPECT_DOUBLE_EQ(lambda_at(s, 0), 0.01);
  EXPECT_NEAR(lambda_at(s, 50), 0.01 * std::pow(1.05, 50), 1e-15);
  EXPECT_NEAR(lambda_at(s, 50), 0.11467, 1e-5);
  s.strategy = Strategy::Decrease;
  EXPECT_NEAR(lambda_at(s, 0), 0.01 * std::pow(1.05, 50), 1e-15);
  EXPECT_NEAR(lambda_at(s, 50), 0.01, 1e-15);
  s.strategy = Strategy::Constant;
  double sum = 0;
  for (int n = 0; n <= 50; ++n) sum += 0.01 * std::pow(1.05, n);
  EXPECT_NEAR(lambda_at(s, 7), sum / 50, 1e-15);
  EXPECT_THROW(lambda_at(s, 51), ContractError);
}

TEST(Schedule, MonotoneAndDegenerateBase) {
  ScheduleSpec inc, dec;
  dec.strategy = Strategy::Decrease;
  for (std::size_t n = 1; n <= 50; ++n) {
    EXPECT_GE(lambda_at(inc, n), lambda_at(inc, n - 1));
    EXPECT_LE(lambda_at(dec, n), lambda_at(dec, n - 1));
  }
  ScheduleSpec flat{0.01, 1.0, Strategy::Increase, 50};
  EXPECT_EQ(lambda_at(flat, 30), 0.01);
  flat.strategy = Strategy::Decrease;
  EXPECT_EQ(lambda_at(flat, 30), 0.01);
  flat.strategy = Strategy::Constant;
  EXPECT_NEAR(lambda_at(flat, 30), 0.01 * 51 / 50, 1e-15);
  ScheduleSpec bad{0.01, 0.99, Strategy::Increase, 50};
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(TotalLoss, Arithmetic) {
  EXPECT_DOUBLE_EQ(total_loss(Tensor::scalar(1), Tensor::scalar(2), 0.5).item(), 2.0);
  EXPECT_DOUBLE_EQ(total_loss(Tensor::scalar(1), Tensor::scalar(2), 0.0).item(), 1.0);
}

TEST(StepGraph, FullGuidedGraphGradientCheck) {
  Fixture f;
  const Network net(f.spec, tiny_model(), 7);
  ParamStore target = net.encoder_params().deep_copy();
  // Target perturbed away from the online weights.
  std::mt19937_64 rng(8);
  for (auto& [n, t] : target)
    for (auto& v : t.mutable_data()) v += 0.2 * std::normal_distribution<double>()(rng);
  const std::vector<std::size_t> idx = {0, 1};
  const Batch batch = make_batch(f.train, idx, true);
  const auto mask = mask_from({1, 0, 1});
  StepOptions opt;
  opt.mask_enabled = true;
  opt.distill = true;
  std::vector<Tensor> leaves;
  for (auto& [n, t] : net.params()) leaves.push_back(t);
  const auto g = build_step_graph(net, target, batch, mask, 0.3, opt, f.weights);
  EXPECT_GT(g.distill.item(), 0.0);
  auto r = gmeld::testing::gradcheck(
      [&] { return build_step_graph(net, target, batch, mask, 0.3, opt, f.weights).loss; }, leaves);
  EXPECT_TRUE(r.ok) << r.where;
}

TEST(StepGraph, NoGradientReachesTheTarget) {
  Fixture f;
  const Network net(f.spec, tiny_model(), 9);
  ParamStore target = net.encoder_params().deep_copy();
  const std::vector<std::size_t> idx = {0, 1, 2};
  const Batch batch = make_batch(f.train, idx, true);
  StepOptions opt;
  opt.mask_enabled = true;
  opt.distill = true;
  const auto g = build_step_graph(net, target, batch, mask_from({0, 1, 1}), 1.0, opt, f.weights);
  backward(g.loss);
  for (const auto& [n, t] : target) {
    if (!t.has_grad()) continue;
    for (double v : t.grad()) EXPECT_EQ(v, 0.0) << n;
  }
  bool online_moved = false;
  for (const auto& [n, t] : net.params())
    if (t.has_grad())
      for (double v : t.grad()) online_moved |= v != 0.0;
  EXPECT_TRUE(online_moved);
}

TEST(TrainStep, EmaUsesPostStepOnlineWeights) {
  Fixture f;
  Network net(f.spec, tiny_model(), 10);
  TrainState st{net.params().view(""), net.encoder_params().deep_copy(), OptimizerState{}, 0.9, f.weights};
  StepOptions opt;
  opt.mask_enabled = true;
  opt.distill = true;
  opt.kappa = {{0, 0.5}, {0, 0}};
  std::mt19937_64 rng(11);
  const std::vector<std::size_t> idx = {0, 1};
  const Batch batch = make_batch(f.train, idx, true);
  for (int step = 0; step < 5; ++step) {
    const ParamStore before = st.target.deep_copy();
    train_step(net, st, batch, 0.1, opt, rng);
    for (const auto& [n, z] : st.target) {
      const auto theta = net.params().get(n).data();
      const auto prev = before.get(n).data();
      for (std::size_t i = 0; i < z.numel(); ++i) EXPECT_EQ(z[i], 0.9 * prev[i] + (1.0 - 0.9) * theta[i]);
    }
  }
}

TEST(TrainLoop, OverfitsFiveClips) {
  Fixture f;
  Network net(f.spec, tiny_model(), 12);
  TrainConfig cfg;
  cfg.step.mask_enabled = true;
  cfg.step.distill = true;
  cfg.step.kappa = {{0, 0.5}, {0, 0}};
  cfg.optimizer.learning_rate = 0.01;
  cfg.max_epoch = 100;
  cfg.schedule.max_epoch = 100;
  cfg.batch_size = 3;
  cfg.lr_decay = LrDecay::None;
  cfg.validate = false;
  const auto r = train_loop(net, f.train, nullptr, f.weights, cfg);
  ASSERT_EQ(r.history.size(), 100u);
  EXPECT_EQ(r.steps, 200u);
  for (const auto& row : r.history) EXPECT_TRUE(std::isfinite(row.loss));
  EXPECT_LT(r.history.back().task_loss, 0.5 * r.history.front().task_loss);
}

TEST(TrainLoop, BestCheckpointIsTheValidationArgmin) {
  Fixture f;
  Network net(f.spec, tiny_model(), 13);
  TrainConfig cfg;
  cfg.max_epoch = 6;
  cfg.schedule.max_epoch = 6;
  cfg.batch_size = 2;
  const auto r = train_loop(net, f.train, &f.val, f.weights, cfg);
  ASSERT_EQ(r.history.size(), 6u);
  double best = INFINITY;
  for (const auto& row : r.history) best = std::min(best, row.val_task_loss);
  EXPECT_EQ(r.best_val_task_loss, best);
  EXPECT_LE(r.best_val_task_loss, r.history.back().val_task_loss);
  EXPECT_EQ(r.history[r.best_epoch].val_task_loss, best);
  EXPECT_EQ(validation_loss(net, f.val, f.weights), best);
  for (const auto& row : r.history) EXPECT_EQ(row.lambda, 0.0);
}

TEST(TrainLoop, HistoryRecordsScheduleAndDecay) {
  Fixture f;
  Network net(f.spec, tiny_model(), 14);
  TrainConfig cfg;
  cfg.step.mask_enabled = true;
  cfg.step.distill = true;
  cfg.step.kappa = {{0, 1.0}, {0, 0}};
  cfg.max_epoch = 3;
  cfg.schedule.max_epoch = 3;
  const auto r = train_loop(net, f.train, &f.val, f.weights, cfg);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_DOUBLE_EQ(r.history[e].lambda, lambda_at(cfg.schedule, e));
    EXPECT_NEAR(r.history[e].lr, 1e-3 * std::pow(0.1, static_cast<double>(e) / 3.0), 1e-15);
  }
}

TEST(TrainLoop, DeterministicGivenSeed) {
  Fixture f;
  TrainConfig cfg;
  cfg.step.mask_enabled = true;
  cfg.step.distill = true;
  cfg.step.kappa = {{0, 1.0}, {0, 0}};
  cfg.max_epoch = 2;
  cfg.schedule.max_epoch = 2;
  Network a(f.spec, tiny_model(), 15), b(f.spec, tiny_model(), 15);
  train_loop(a, f.train, &f.val, f.weights, cfg);
  train_loop(b, f.train, &f.val, f.weights, cfg);
  for (const auto& [n, t] : a.params()) {
    const auto u = b.params().get(n).data();
    for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_EQ(t[i], u[i]);
  }
}

TEST(TrainLoop, ConfigErrors) {
  Fixture f;
  Network net(f.spec, tiny_model(), 16);
  TrainConfig cfg;
  cfg.max_epoch = 0;
  EXPECT_THROW(train_loop(net, f.train, &f.val, f.weights, cfg), ConfigError);
  cfg.max_epoch = 1;
  EXPECT_THROW(train_loop(net, f.train, nullptr, f.weights, cfg), ContractError);
  cfg.trainable_prefix = "nothing.";
  EXPECT_THROW(train_loop(net, f.train, &f.val, f.weights, cfg), ConfigError);
}

TEST(ClipSource, CountsLabelReads) {
  Fixture f;
  EXPECT_EQ(f.train.label_reads(), 0u);
  const std::vector<std::size_t> idx = {0, 1};
  make_batch(f.train, idx, false);
  EXPECT_EQ(f.train.label_reads(), 0u);
  make_batch(f.train, idx, true);
  EXPECT_EQ(f.train.label_reads(), 2u);
  f.train.strong_labels(0);
  EXPECT_EQ(f.train.label_reads(), 3u);
}

TEST(History, CsvHeader) {
  const auto path = std::filesystem::temp_directory_path() / "gmeld_unit_history.csv";
  write_history_csv(path, {HistoryRow{0, 2, 1.5, 1.0, 5.0, 0.1, 1e-3, 0.7}});
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "epoch,step,L,L_G,L_M,lambda,lr,val_LG");
  EXPECT_EQ(row.substr(0, 8), "0,2,1.5,");
}
