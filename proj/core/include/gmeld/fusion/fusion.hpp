#pragma once

#include <random>
#include <string>
#include <vector>

#include "gmeld/dc/ops.hpp"
#include "gmeld/dc/param_store.hpp"
#include "gmeld/world/world.hpp"

namespace gmeld::fusion {

using dc::ParamStore;
using dc::Tensor;

/// Shape of the MultiTrans encoder. model_dim = D + S + pad where pad is the
/// smallest value making model_dim divisible by num_heads.
struct MultiTransConfig {
  std::size_t num_blocks = 2;
  std::size_t num_heads = 4;
  std::size_t ffn_hidden = 256;
  std::size_t model_dim = 0;
  std::size_t pad = 0;

  static MultiTransConfig for_dims(std::size_t feature_dim, std::size_t num_sensors, std::size_t num_blocks = 2,
                                   std::size_t num_heads = 4, std::size_t ffn_hidden = 256);
};

// ---- per-group linear projection raw -> D ----

void init_projection(ParamStore& params, const std::string& prefix, const world::WorldSpec& spec,
                     std::size_t feature_dim, std::mt19937_64& rng);
// raw: [N, S, feature_dim_raw] -> [N, S, D]. Sensors of one group share weights.
Tensor project(const Tensor& raw, const ParamStore& params, const std::string& prefix, const world::WorldSpec& spec);

// [N, S, D] -> [N, S, D + S + pad]; trailing block is onehot_S(s) then zeros.
Tensor sensor_encode(const Tensor& features, std::size_t pad = 0);

// ---- MultiTrans ----

void init_multitrans(ParamStore& params, const std::string& prefix, const MultiTransConfig& cfg,
                     std::mt19937_64& rng);

struct MhsaResult {
  Tensor output;     // [N, S, model_dim]
  Tensor attention;  // [N * H, S, S]
};

// Q = K = V = x; heads of width model_dim / H, scaled by 1/sqrt(d_k),
// concatenated and multiplied by W_O. Parameters: <prefix>wq, wk, wv, wo.
MhsaResult mhsa(const Tensor& x, const ParamStore& params, const std::string& prefix, std::size_t num_heads);

// Pre-norm residual block: h = x + mhsa(ln1(x)); out = h + ffn(ln2(h)).
Tensor transformer_block(const Tensor& x, const ParamStore& params, const std::string& prefix,
                         const MultiTransConfig& cfg);

// Stacks cfg.num_blocks blocks over the sensor axis of each frame.
Tensor multitrans_forward(const Tensor& x, const ParamStore& params, const std::string& prefix,
                          const MultiTransConfig& cfg);

// ---- CRF fusion (one mean-field iteration) ----

// <prefix>log_alpha [S] (alpha_v = exp(log_alpha_v)) and <prefix>W.<u>.<v> [D, D]
// for u != v, stored as right-multipliers of row feature vectors.
void init_crf(ParamStore& params, const std::string& prefix, std::size_t num_sensors, std::size_t feature_dim,
              std::mt19937_64& rng);
std::string crf_coupling_name(const std::string& prefix, std::size_t from, std::size_t to);

// z_v' = (1/alpha_v) (alpha_v z_v + sum_{u != v} z_u W_{u,v}) for [N, S, D] input.
Tensor crf_fuse(const Tensor& features, const ParamStore& params, const std::string& prefix);

}  // namespace gmeld::fusion
