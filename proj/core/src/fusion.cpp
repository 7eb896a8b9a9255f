#include "gmeld/fusion/fusion.hpp"

#include <cmath>

#include "gmeld/error.hpp"

namespace gmeld::fusion {

using namespace gmeld::dc;

MultiTransConfig MultiTransConfig::for_dims(std::size_t feature_dim, std::size_t num_sensors, std::size_t num_blocks,
                                            std::size_t num_heads, std::size_t ffn_hidden) {
  if (num_heads == 0) throw ConfigError("model.num_heads: must be positive");
  MultiTransConfig cfg;
  cfg.num_blocks = num_blocks;
  cfg.num_heads = num_heads;
  cfg.ffn_hidden = ffn_hidden;
  const std::size_t base = feature_dim + num_sensors;
  cfg.pad = (num_heads - base % num_heads) % num_heads;
  cfg.model_dim = base + cfg.pad;
  return cfg;
}

void init_projection(ParamStore& params, const std::string& prefix, const world::WorldSpec& spec,
                     std::size_t feature_dim, std::mt19937_64& rng) {
  for (const auto& g : spec.sensor_groups) {
    params.add(prefix + g.name + ".W",
               xavier_uniform({spec.feature_dim_raw, feature_dim}, spec.feature_dim_raw, feature_dim, rng));
    params.add(prefix + g.name + ".b", Tensor::zeros({feature_dim}, true));
  }
}

Tensor project(const Tensor& raw, const ParamStore& params, const std::string& prefix, const world::WorldSpec& spec) {
  if (raw.rank() != 3 || raw.dim(1) != spec.num_sensors || raw.dim(2) != spec.feature_dim_raw) {
    throw DimensionError("project: expected [N, " + std::to_string(spec.num_sensors) + ", " +
                         std::to_string(spec.feature_dim_raw) + "], got " + to_string(raw.shape()));
  }
  std::vector<Tensor> per_sensor(spec.num_sensors);
  for (const auto& g : spec.sensor_groups) {
    const Tensor& w = params.get(prefix + g.name + ".W");
    const Tensor& b = params.get(prefix + g.name + ".b");
    for (auto s : g.sensors) per_sensor[s] = linear(select(raw, 1, s), w, b);
  }
  return stack(per_sensor, 1);
}

Tensor sensor_encode(const Tensor& features, std::size_t pad) {
  if (features.rank() != 3) throw DimensionError("sensor_encode: expected [N, S, D], got " + to_string(features.shape()));
  const std::size_t N = features.dim(0), S = features.dim(1);
  const std::size_t width = S + pad;
  std::vector<double> code(N * S * width, 0.0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t s = 0; s < S; ++s) code[(n * S + s) * width + s] = 1.0;
  const Tensor parts[] = {features, Tensor({N, S, width}, std::move(code))};
  return concat(parts, 2);
}

void init_multitrans(ParamStore& params, const std::string& prefix, const MultiTransConfig& cfg,
                     std::mt19937_64& rng) {
  const std::size_t d = cfg.model_dim, h = cfg.ffn_hidden;
  if (d == 0 || d % cfg.num_heads != 0) throw ConfigError("model_dim must be a positive multiple of num_heads");
  for (std::size_t i = 0; i < cfg.num_blocks; ++i) {
    const std::string b = prefix + "b" + std::to_string(i) + ".";
    params.add(b + "ln1.g", Tensor(Shape{d}, std::vector<double>(d, 1.0), true));
    params.add(b + "ln1.b", Tensor::zeros({d}, true));
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) params.add(b + w, xavier_uniform({d, d}, d, d, rng));
    params.add(b + "ln2.g", Tensor(Shape{d}, std::vector<double>(d, 1.0), true));
    params.add(b + "ln2.b", Tensor::zeros({d}, true));
    params.add(b + "ffn.w1", xavier_uniform({d, h}, d, h, rng));
    params.add(b + "ffn.b1", Tensor::zeros({h}, true));
    params.add(b + "ffn.w2", xavier_uniform({h, d}, h, d, rng));
    params.add(b + "ffn.b2", Tensor::zeros({d}, true));
  }
}

MhsaResult mhsa(const Tensor& x, const ParamStore& params, const std::string& prefix, std::size_t num_heads) {
  if (x.rank() != 3) throw DimensionError("mhsa: expected [N, S, model_dim], got " + to_string(x.shape()));
  const std::size_t N = x.dim(0), S = x.dim(1), dm = x.dim(2);
  if (num_heads == 0 || dm % num_heads != 0) {
    throw DimensionError("mhsa: model_dim " + std::to_string(dm) + " not divisible by " + std::to_string(num_heads) +
                         " heads");
  }
  const std::size_t H = num_heads, dk = dm / H;
  auto split_heads = [&](const Tensor& t) {
    return reshape(permute(reshape(t, {N, S, H, dk}), {0, 2, 1, 3}), {N * H, S, dk});
  };
  const Tensor q = split_heads(linear(x, params.get(prefix + "wq")));
  const Tensor k = split_heads(linear(x, params.get(prefix + "wk")));
  const Tensor v = split_heads(linear(x, params.get(prefix + "wv")));
  const Tensor attn = softmax(scale(bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(dk))), 2);
  const Tensor ctx = bmm(attn, v);
  const Tensor merged = reshape(permute(reshape(ctx, {N, H, S, dk}), {0, 2, 1, 3}), {N, S, dm});
  return {linear(merged, params.get(prefix + "wo")), attn};
}

Tensor transformer_block(const Tensor& x, const ParamStore& params, const std::string& prefix,
                         const MultiTransConfig& cfg) {
  const Tensor a = layer_norm(x, params.get(prefix + "ln1.g"), params.get(prefix + "ln1.b"));
  const Tensor h = add(x, mhsa(a, params, prefix + "attn.", cfg.num_heads).output);
  const Tensor n = layer_norm(h, params.get(prefix + "ln2.g"), params.get(prefix + "ln2.b"));
  const Tensor f = linear(gelu(linear(n, params.get(prefix + "ffn.w1"), params.get(prefix + "ffn.b1"))),
                          params.get(prefix + "ffn.w2"), params.get(prefix + "ffn.b2"));
  return add(h, f);
}

Tensor multitrans_forward(const Tensor& x, const ParamStore& params, const std::string& prefix,
                          const MultiTransConfig& cfg) {
  Tensor out = x;
  for (std::size_t i = 0; i < cfg.num_blocks; ++i) {
    out = transformer_block(out, params, prefix + "b" + std::to_string(i) + ".", cfg);
  }
  return out;
}

std::string crf_coupling_name(const std::string& prefix, std::size_t from, std::size_t to) {
  return prefix + "W." + std::to_string(from) + "." + std::to_string(to);
}

void init_crf(ParamStore& params, const std::string& prefix, std::size_t num_sensors, std::size_t feature_dim,
              std::mt19937_64& rng) {
  params.add(prefix + "log_alpha", Tensor::zeros({num_sensors}, true));
  for (std::size_t u = 0; u < num_sensors; ++u)
    for (std::size_t v = 0; v < num_sensors; ++v) {
      if (u == v) continue;
      params.add(crf_coupling_name(prefix, u, v), xavier_uniform({feature_dim, feature_dim}, feature_dim, feature_dim, rng));
    }
}

Tensor crf_fuse(const Tensor& features, const ParamStore& params, const std::string& prefix) {
  if (features.rank() != 3) throw DimensionError("crf_fuse: expected [N, S, D], got " + to_string(features.shape()));
  const std::size_t S = features.dim(1);
  const Tensor& log_alpha = params.get(prefix + "log_alpha");
  if (log_alpha.shape() != Shape{S}) throw DimensionError("crf_fuse: log_alpha must have one entry per sensor");
  std::vector<Tensor> z0(S);
  for (std::size_t s = 0; s < S; ++s) z0[s] = select(features, 1, s);
  std::vector<Tensor> fused(S);
  for (std::size_t v = 0; v < S; ++v) {
    Tensor message;
    for (std::size_t u = 0; u < S; ++u) {
      if (u == v) continue;
      const Tensor term = linear(z0[u], params.get(crf_coupling_name(prefix, u, v)));
      message = message.defined() ? add(message, term) : term;
    }
    if (!message.defined()) {
      fused[v] = z0[v];
      continue;
    }
    const Tensor inv_alpha = exp(scale(select(log_alpha, 0, v), -1.0));
    fused[v] = add(z0[v], hadamard(message, inv_alpha));
  }
  return stack(fused, 1);
}

}  // namespace gmeld::fusion
