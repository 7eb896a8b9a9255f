#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmeld/dc/param_store.hpp"
#include "gmeld/fusion/fusion.hpp"
#include "gmeld/world/world.hpp"

namespace gmeld::meld {

using dc::ParamStore;
using dc::Tensor;

enum class FusionKind { Concat, LateFusion, Crf, MultiTrans };

std::string to_string(FusionKind kind);
FusionKind fusion_kind_from_string(const std::string& name);

struct NetworkConfig {
  FusionKind fusion = FusionKind::MultiTrans;
  std::size_t feature_dim = 64;
  std::size_t num_blocks = 2;
  std::size_t num_heads = 4;
  std::size_t ffn_hidden = 256;
};

void to_json(nlohmann::json& j, const NetworkConfig& cfg);
void from_json(const nlohmann::json& j, NetworkConfig& cfg);

/// Projection, fusion encoder and frame classifier sharing one ParamStore.
/// Names: enc.proj.<group>.{W,b}, enc.fuse.*, cls.* (cls.s<k>.* for late fusion).
class Network {
 public:
  static inline const std::string kProjection = "enc.proj.";
  static inline const std::string kFusion = "enc.fuse.";
  static inline const std::string kEncoder = "enc.";
  static inline const std::string kClassifier = "cls.";

  Network(world::WorldSpec spec, NetworkConfig cfg, std::uint64_t seed);
  // Adopts `params`, which must match the manifest of a fresh network.
  Network(world::WorldSpec spec, NetworkConfig cfg, ParamStore params);

  const world::WorldSpec& world() const { return spec_; }
  const NetworkConfig& config() const { return cfg_; }
  const fusion::MultiTransConfig& multitrans() const { return mt_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  // enc.proj.* and enc.fuse.*; the part mirrored by the target network.
  ParamStore encoder_params() const { return params_.view(kEncoder); }

  // [N, S, F_raw] -> [N, S, D]; `encoder` holds enc.proj.* tensors (online or target).
  Tensor project(const Tensor& raw, const ParamStore& encoder) const;
  Tensor project(const Tensor& raw) const { return project(raw, params_); }
  // [N, S, D] -> [N, S, W]; `encoder` holds enc.fuse.* tensors (online or target).
  Tensor fuse(const Tensor& features, const ParamStore& encoder) const;
  // [N, S, W] -> [N, C]
  Tensor classify(const Tensor& fused) const;
  // Frame posteriors [N, C]; `keep` (one flag per sensor) zeroes removed sensors after projection.
  Tensor forward(const Tensor& raw, const std::vector<std::uint8_t>* keep = nullptr) const;

 private:
  void init(std::uint64_t seed);

  world::WorldSpec spec_;
  NetworkConfig cfg_;
  fusion::MultiTransConfig mt_;
  ParamStore params_;
};

}  // namespace gmeld::meld
