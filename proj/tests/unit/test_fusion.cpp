#include <gtest/gtest.h>

#include <random>

#include "gmeld/error.hpp"
#include "gmeld/fusion/fusion.hpp"
#include "gradcheck.hpp"

using namespace gmeld;
using namespace gmeld::dc;
using namespace gmeld::fusion;
using gmeld::testing::gradcheck;
using gmeld::testing::random_leaf;

namespace {

Tensor probe(const Tensor& t) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n;
  std::vector<double> w(t.numel());
  for (auto& x : w) x = n(rng);
  return reduce_all(hadamard(t, Tensor(t.shape(), std::move(w))), Reduce::Sum);
}

void set_identity(Tensor& t) {
  auto d = t.mutable_data();
  std::fill(d.begin(), d.end(), 0.0);
  for (std::size_t i = 0; i < t.dim(0); ++i) d[i * t.dim(1) + i] = 1.0;
}

void set_zero(Tensor& t) {
  auto d = t.mutable_data();
  std::fill(d.begin(), d.end(), 0.0);
}

void zero_outputs(ParamStore& p, const std::string& prefix, std::size_t blocks) {
  for (std::size_t i = 0; i < blocks; ++i) {
    const std::string b = prefix + "b" + std::to_string(i) + ".";
    set_zero(p.get(b + "attn.wo"));
    set_zero(p.get(b + "ffn.w2"));
    set_zero(p.get(b + "ffn.b2"));
  }
}

world::WorldSpec small_world() {
  world::WorldSpec s = world::WorldSpec::desk_default();
  return s;
}

}  // namespace

TEST(MultiTransConfig, PadsToHeadMultiple) {
  const auto a = MultiTransConfig::for_dims(64, 8, 2, 4, 256);
  EXPECT_EQ(a.pad, 0u);
  EXPECT_EQ(a.model_dim, 72u);
  const auto b = MultiTransConfig::for_dims(4, 3, 1, 4, 8);
  EXPECT_EQ(b.pad, 1u);
  EXPECT_EQ(b.model_dim, 8u);
  EXPECT_THROW(MultiTransConfig::for_dims(4, 3, 1, 0, 8), ConfigError);
}

TEST(Projection, ZeroInputGivesBiasAndGroupsShareWeights) {
  const auto spec = small_world();
  ParamStore p;
  std::mt19937_64 rng(1);
  init_projection(p, "proj.", spec, 5, rng);
  const auto& g = spec.sensor_groups.front();
  auto& bias = p.get("proj." + g.name + ".b");
  for (std::size_t i = 0; i < 5; ++i) bias.mutable_data()[i] = 0.1 * static_cast<double>(i + 1);
  const Tensor zero = Tensor::zeros({2, spec.num_sensors, spec.feature_dim_raw});
  const Tensor y = project(zero, p, "proj.", spec);
  ASSERT_EQ(y.shape(), (Shape{2, spec.num_sensors, 5}));
  for (std::size_t d = 0; d < 5; ++d) EXPECT_DOUBLE_EQ(y[g.sensors.front() * 5 + d], 0.1 * static_cast<double>(d + 1));

  std::vector<double> raw(spec.num_sensors * spec.feature_dim_raw);
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = std::sin(static_cast<double>(i % spec.feature_dim_raw));
  const Tensor same = project(Tensor({1, spec.num_sensors, spec.feature_dim_raw}, raw), p, "proj.", spec);
  const auto u = g.sensors[0], v = g.sensors[1];
  for (std::size_t d = 0; d < 5; ++d) EXPECT_EQ(same[u * 5 + d], same[v * 5 + d]);
  EXPECT_THROW(project(Tensor::zeros({2, spec.num_sensors, 3}), p, "proj.", spec), DimensionError);
}

TEST(SensorEncode, AppendsOneHotAndPad) {
  std::mt19937_64 rng(2);
  const Tensor x = random_leaf({1, 3, 4}, rng);
  const Tensor e = sensor_encode(x, 1);
  ASSERT_EQ(e.shape(), (Shape{1, 3, 8}));
  const std::vector<double> tail = {e[1 * 8 + 4], e[1 * 8 + 5], e[1 * 8 + 6], e[1 * 8 + 7]};
  EXPECT_EQ(tail, (std::vector<double>{0, 1, 0, 0}));
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t d = 0; d < 4; ++d) EXPECT_EQ(e[s * 8 + d], x[s * 4 + d]);
}

TEST(SensorEncode, EqualFeaturesBecomeDistinguishable) {
  const Tensor x = Tensor::full({1, 2, 3}, 0.5);
  const Tensor e = sensor_encode(x);
  bool differ = false;
  for (std::size_t d = 0; d < 5; ++d) differ |= e[d] != e[5 + d];
  EXPECT_TRUE(differ);
}

TEST(Mhsa, SingletonWithIdentityProjectionsIsIdentity) {
  ParamStore p;
  for (const char* n : {"wq", "wk", "wv", "wo"}) {
    Tensor w = Tensor::zeros({4, 4}, true);
    set_identity(w);
    p.add(n, w);
  }
  const Tensor x({1, 1, 4}, {0.3, -1.0, 2.0, 0.5});
  const auto r = mhsa(x, p, "", 2);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(r.output[i], x[i], 1e-15);
}

TEST(Mhsa, AttentionRowsAreDistributionsAndRowsPermuteEquivariantly) {
  ParamStore p;
  std::mt19937_64 rng(3);
  for (const char* n : {"wq", "wk", "wv", "wo"}) p.add(n, xavier_uniform({8, 8}, 8, 8, rng));
  const Tensor x = random_leaf({2, 4, 8}, rng);
  const auto r = mhsa(x, p, "", 4);
  ASSERT_EQ(r.attention.shape(), (Shape{8, 4, 4}));
  for (std::size_t row = 0; row < 8 * 4; ++row) {
    double sum = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_GE(r.attention[row * 4 + j], 0.0);
      sum += r.attention[row * 4 + j];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  const std::vector<std::size_t> perm = {2, 0, 3, 1};
  std::vector<double> xp(x.numel());
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t d = 0; d < 8; ++d) xp[(n * 4 + s) * 8 + d] = x[(n * 4 + perm[s]) * 8 + d];
  const auto rp = mhsa(Tensor({2, 4, 8}, xp), p, "", 4);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t d = 0; d < 8; ++d)
        EXPECT_NEAR(rp.output[(n * 4 + s) * 8 + d], r.output[(n * 4 + perm[s]) * 8 + d], 1e-12);
}

TEST(Mhsa, WidthMustDivideByHeads) {
  ParamStore p;
  std::mt19937_64 rng(4);
  for (const char* n : {"wq", "wk", "wv", "wo"}) p.add(n, xavier_uniform({6, 6}, 6, 6, rng));
  EXPECT_THROW(mhsa(Tensor::zeros({1, 2, 6}), p, "", 4), DimensionError);
}

TEST(Transformer, ZeroOutputProjectionsGiveIdentity) {
  const auto cfg = MultiTransConfig::for_dims(5, 3, 2, 4, 16);
  ParamStore p;
  std::mt19937_64 rng(5);
  init_multitrans(p, "mt.", cfg, rng);
  zero_outputs(p, "mt.", cfg.num_blocks);
  const Tensor x = random_leaf({3, 3, cfg.model_dim}, rng);
  const Tensor y = multitrans_forward(x, p, "mt.", cfg);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Transformer, ZeroBlocksIsIdentity) {
  auto cfg = MultiTransConfig::for_dims(5, 3, 0, 4, 16);
  ParamStore p;
  std::mt19937_64 rng(6);
  init_multitrans(p, "mt.", cfg, rng);
  EXPECT_EQ(p.size(), 0u);
  const Tensor x = random_leaf({2, 3, cfg.model_dim}, rng);
  const Tensor y = multitrans_forward(x, p, "mt.", cfg);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Transformer, FramesAreIndependent) {
  const auto cfg = MultiTransConfig::for_dims(4, 4, 2, 4, 8);
  ParamStore p;
  std::mt19937_64 rng(7);
  init_multitrans(p, "mt.", cfg, rng);
  const std::size_t row = 4 * cfg.model_dim;
  const Tensor x = random_leaf({3, 4, cfg.model_dim}, rng);
  std::vector<double> swapped(x.data().begin(), x.data().end());
  std::swap_ranges(swapped.begin(), swapped.begin() + row, swapped.begin() + 2 * row);
  const Tensor a = multitrans_forward(x, p, "mt.", cfg);
  const Tensor b = multitrans_forward(Tensor(x.shape(), swapped), p, "mt.", cfg);
  for (std::size_t i = 0; i < row; ++i) {
    EXPECT_EQ(a[i], b[2 * row + i]);
    EXPECT_EQ(a[2 * row + i], b[i]);
    EXPECT_EQ(a[row + i], b[row + i]);
  }
}

TEST(Transformer, BlockGradientCheck) {
  const auto cfg = MultiTransConfig::for_dims(3, 3, 1, 2, 5);
  ParamStore p;
  std::mt19937_64 rng(8);
  init_multitrans(p, "mt.", cfg, rng);
  const Tensor x = random_leaf({2, 3, cfg.model_dim}, rng);
  std::vector<Tensor> leaves = {x};
  for (auto& [name, t] : p) {
    // Perturb the unit gains and zero biases so every path is exercised.
    for (auto& v : t.mutable_data()) v += 0.1 * std::normal_distribution<double>()(rng);
    leaves.push_back(t);
  }
  auto r = gradcheck([&] { return probe(transformer_block(x, p, "mt.b0.", cfg)); }, leaves);
  EXPECT_TRUE(r.ok) << r.where;
}

TEST(Crf, ZeroCouplingIsIdentity) {
  ParamStore p;
  std::mt19937_64 rng(9);
  init_crf(p, "crf.", 3, 4, rng);
  for (std::size_t u = 0; u < 3; ++u)
    for (std::size_t v = 0; v < 3; ++v)
      if (u != v) set_zero(p.get(crf_coupling_name("crf.", u, v)));
  p.get("crf.log_alpha").mutable_data()[1] = 0.7;
  const Tensor x = random_leaf({2, 3, 4}, rng);
  const Tensor y = crf_fuse(x, p, "crf.");
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y[i], x[i], 1e-15);
}

TEST(Crf, TwoSensorHandCase) {
  ParamStore p;
  std::mt19937_64 rng(10);
  init_crf(p, "crf.", 2, 2, rng);
  // z_1' = z_1 + z_2 W_{2,1} with alpha = 1 and W_{2,1} = I.
  set_identity(p.get(crf_coupling_name("crf.", 1, 0)));
  set_zero(p.get(crf_coupling_name("crf.", 0, 1)));
  const Tensor x({1, 2, 2}, {1.0, 2.0, 10.0, 20.0});
  const Tensor y = crf_fuse(x, p, "crf.");
  EXPECT_DOUBLE_EQ(y[0], 11.0);
  EXPECT_DOUBLE_EQ(y[1], 22.0);
  EXPECT_DOUBLE_EQ(y[2], 10.0);
  EXPECT_DOUBLE_EQ(y[3], 20.0);
}

TEST(Crf, LargeRetentionApproachesIdentityAndSuperpositionHolds) {
  ParamStore p;
  std::mt19937_64 rng(11);
  init_crf(p, "crf.", 3, 4, rng);
  const Tensor a = random_leaf({2, 3, 4}, rng), b = random_leaf({2, 3, 4}, rng);
  const Tensor fa = crf_fuse(a, p, "crf."), fb = crf_fuse(b, p, "crf.");
  const Tensor fab = crf_fuse(add(scale(a, 2.0), scale(b, -3.0)), p, "crf.");
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(fab[i], 2.0 * fa[i] - 3.0 * fb[i], 1e-12);

  for (auto& v : p.get("crf.log_alpha").mutable_data()) v = 30.0;
  const Tensor big = crf_fuse(a, p, "crf.");
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(big[i], a[i], 1e-9);
}

TEST(Crf, GradientCheck) {
  ParamStore p;
  std::mt19937_64 rng(12);
  init_crf(p, "crf.", 3, 2, rng);
  for (auto& v : p.get("crf.log_alpha").mutable_data()) v = 0.3 * std::normal_distribution<double>()(rng);
  const Tensor x = random_leaf({2, 3, 2}, rng);
  std::vector<Tensor> leaves = {x};
  for (auto& [name, t] : p) leaves.push_back(t);
  auto r = gradcheck([&] { return probe(crf_fuse(x, p, "crf.")); }, leaves);
  EXPECT_TRUE(r.ok) << r.where;
}
