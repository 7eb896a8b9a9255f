#pragma once

#include "gmeld/meld/network.hpp"
#include "gmeld/world/world.hpp"

namespace gmeld::testing {

// Three sensors in two groups, two classes, four frames.
inline world::WorldSpec tiny_world() {
  world::WorldSpec s;
  s.num_classes = 2;
  s.num_sensors = 3;
  s.sensor_groups = {{"cam", {0, 1}}, {"mic", {2}}};
  s.frames_per_clip = 4;
  s.feature_dim_raw = 3;
  s.coverage = {{1, 1, 0}, {0, 1, 1}};
  s.noise_sigma = 0.05;
  s.event_rate = {0.4, 0.4};
  s.min_events = 1;
  s.max_concurrent = 2;
  s.min_event_frames = 1;
  s.max_event_frames = 3;
  s.fragmentation = 0.3;
  s.seed = 5;
  return s;
}

inline meld::NetworkConfig tiny_model(meld::FusionKind kind = meld::FusionKind::MultiTrans) {
  meld::NetworkConfig c;
  c.fusion = kind;
  c.feature_dim = 3;
  c.num_blocks = 1;
  c.num_heads = 2;
  c.ffn_hidden = 4;
  return c;
}

}  // namespace gmeld::testing
