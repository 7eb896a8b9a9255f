#include "gmeld/meld/network.hpp"

#include <algorithm>
#include <random>

#include "gmeld/error.hpp"
#include "gmeld/meld/meld.hpp"
#include "gmeld/weak/weak.hpp"

namespace gmeld::meld {

using namespace gmeld::dc;

std::string to_string(FusionKind kind) {
  switch (kind) {
    case FusionKind::Concat: return "concat";
    case FusionKind::LateFusion: return "late";
    case FusionKind::Crf: return "crf";
    case FusionKind::MultiTrans: return "multitrans";
  }
  return "unknown";
}

FusionKind fusion_kind_from_string(const std::string& name) {
  if (name == "concat") return FusionKind::Concat;
  if (name == "late") return FusionKind::LateFusion;
  if (name == "crf") return FusionKind::Crf;
  if (name == "multitrans") return FusionKind::MultiTrans;
  throw ConfigError("model.fusion: unknown kind '" + name + "'");
}

void to_json(nlohmann::json& j, const NetworkConfig& cfg) {
  j = nlohmann::json{{"fusion", to_string(cfg.fusion)},
                     {"feature_dim", cfg.feature_dim},
                     {"num_blocks", cfg.num_blocks},
                     {"num_heads", cfg.num_heads},
                     {"ffn_hidden", cfg.ffn_hidden}};
}

void from_json(const nlohmann::json& j, NetworkConfig& cfg) {
  cfg.fusion = fusion_kind_from_string(j.at("fusion").get<std::string>());
  cfg.feature_dim = j.at("feature_dim").get<std::size_t>();
  cfg.num_blocks = j.at("num_blocks").get<std::size_t>();
  cfg.num_heads = j.at("num_heads").get<std::size_t>();
  cfg.ffn_hidden = j.at("ffn_hidden").get<std::size_t>();
}

Network::Network(world::WorldSpec spec, NetworkConfig cfg, std::uint64_t seed)
    : spec_(std::move(spec)), cfg_(cfg) {
  init(seed);
}

Network::Network(world::WorldSpec spec, NetworkConfig cfg, ParamStore params)
    : spec_(std::move(spec)), cfg_(cfg) {
  init(0);
  if (!same_manifest(params_, params)) throw FormatError("checkpoint parameters do not match the network layout");
  params_ = std::move(params);
}

void Network::init(std::uint64_t seed) {
  spec_.validate();
  if (cfg_.feature_dim == 0) throw ConfigError("model.feature_dim: must be positive");
  const std::size_t S = spec_.num_sensors, D = cfg_.feature_dim, C = spec_.num_classes;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x1417u};
  std::mt19937_64 rng(seq);
  params_ = ParamStore{};
  fusion::init_projection(params_, kProjection, spec_, D, rng);
  switch (cfg_.fusion) {
    case FusionKind::Concat:
      weak::init_classifier(params_, kClassifier, S * D, C, rng);
      break;
    case FusionKind::LateFusion:
      for (std::size_t s = 0; s < S; ++s) weak::init_classifier(params_, kClassifier + "s" + std::to_string(s) + ".", D, C, rng);
      break;
    case FusionKind::Crf:
      fusion::init_crf(params_, kFusion, S, D, rng);
      weak::init_classifier(params_, kClassifier, S * D, C, rng);
      break;
    case FusionKind::MultiTrans:
      mt_ = fusion::MultiTransConfig::for_dims(D, S, cfg_.num_blocks, cfg_.num_heads, cfg_.ffn_hidden);
      fusion::init_multitrans(params_, kFusion, mt_, rng);
      weak::init_classifier(params_, kClassifier, S * mt_.model_dim, C, rng);
      break;
  }
}

Tensor Network::project(const Tensor& raw, const ParamStore& encoder) const {
  return fusion::project(raw, encoder, kProjection, spec_);
}

Tensor Network::fuse(const Tensor& features, const ParamStore& encoder) const {
  switch (cfg_.fusion) {
    case FusionKind::Concat:
    case FusionKind::LateFusion:
      return features;
    case FusionKind::Crf:
      return fusion::crf_fuse(features, encoder, kFusion);
    case FusionKind::MultiTrans:
      return fusion::multitrans_forward(fusion::sensor_encode(features, mt_.pad), encoder, kFusion, mt_);
  }
  throw ContractError("unknown fusion kind");
}

Tensor Network::classify(const Tensor& fused) const {
  if (cfg_.fusion != FusionKind::LateFusion) return weak::classify(fused, params_, kClassifier);
  const std::size_t S = fused.dim(1);
  Tensor sum;
  for (std::size_t s = 0; s < S; ++s) {
    const Tensor p = weak::classify(select(fused, 1, s), params_, kClassifier + "s" + std::to_string(s) + ".");
    sum = sum.defined() ? add(sum, p) : p;
  }
  return scale(sum, 1.0 / static_cast<double>(S));
}

Tensor Network::forward(const Tensor& raw, const std::vector<std::uint8_t>* keep) const {
  Tensor psi = project(raw);
  if (keep) {
    if (keep->size() != spec_.num_sensors) throw DimensionError("forward: keep flags must have one entry per sensor");
    MaskMatrix mask;
    mask.keep = *keep;
    mask.kept = static_cast<std::size_t>(std::count(keep->begin(), keep->end(), 1));
    psi = apply_mask(psi, mask);
  }
  return classify(fuse(psi, params_));
}

}  // namespace gmeld::meld
