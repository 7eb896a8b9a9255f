#include "gmeld/info/info.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_map>

#include "gmeld/error.hpp"

namespace gmeld::info {

namespace {

constexpr double kNormTol = 1e-12;

struct Support {
  // supp[y] = list of (o, p) with p > 0.
  std::vector<std::vector<std::pair<std::uint32_t, double>>> by_event;
};

Support support_of(const Channel& ch, std::size_t num_events) {
  Support s;
  s.by_event.resize(num_events);
  for (std::size_t y = 0; y < num_events; ++y) {
    for (std::size_t o = 0; o < ch.alphabet; ++o) {
      const double p = ch.table[y * ch.alphabet + o];
      if (p > 0) s.by_event[y].emplace_back(static_cast<std::uint32_t>(o), p);
    }
  }
  return s;
}

template <class Visit>
void enumerate(const std::vector<const Support*>& supports, const std::vector<std::uint64_t>& radix, std::size_t y,
               Visit&& visit) {
  // Depth-first product over each sensor's support for event y.
  const std::size_t n = supports.size();
  std::vector<std::size_t> idx(n, 0);
  for (std::size_t k = 0; k < n; ++k) {
    if (supports[k]->by_event[y].empty()) return;
  }
  while (true) {
    std::uint64_t key = 0;
    double p = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
      const auto& [o, pk] = supports[k]->by_event[y][idx[k]];
      key += radix[k] * o;
      p *= pk;
    }
    visit(key, p);
    bool exhausted = true;
    for (std::size_t k = n; k-- > 0;) {
      if (++idx[k] < supports[k]->by_event[y].size()) {
        exhausted = false;
        break;
      }
      idx[k] = 0;
    }
    if (exhausted) return;
  }
}

}  // namespace

DiscreteWorld::DiscreteWorld(std::size_t num_classes, std::vector<double> event_prior, std::vector<Channel> channels,
                             std::uint64_t enumeration_cap)
    : num_classes_(num_classes), prior_(std::move(event_prior)), channels_(std::move(channels)) {
  if (num_classes == 0 || num_classes > 30) throw ConfigError("discrete world: num_classes must lie in [1, 30]");
  const std::size_t events = std::size_t{1} << num_classes;
  if (prior_.size() != events) throw DimensionError("discrete world: prior must have 2^C entries");
  double total = 0;
  for (double p : prior_) {
    if (!(p >= 0)) throw ConfigError("discrete world: negative prior probability");
    total += p;
  }
  if (std::abs(total - 1.0) > kNormTol) throw ConfigError("discrete world: prior does not sum to 1");

  for (std::size_t k = 0; k < channels_.size(); ++k) {
    const auto& ch = channels_[k];
    if (ch.alphabet == 0 || ch.table.size() != events * ch.alphabet) {
      throw DimensionError("discrete world: channel " + std::to_string(k) + " table has wrong size");
    }
    for (std::size_t y = 0; y < events; ++y) {
      double row = 0;
      for (std::size_t o = 0; o < ch.alphabet; ++o) {
        const double p = ch.table[y * ch.alphabet + o];
        if (!(p >= 0)) throw ConfigError("discrete world: negative probability in channel " + std::to_string(k));
        row += p;
      }
      if (std::abs(row - 1.0) > kNormTol) {
        throw ConfigError("discrete world: channel " + std::to_string(k) + " row " + std::to_string(y) +
                          " does not sum to 1");
      }
    }
  }

  // Size of the joint enumeration actually performed: sum over events of the
  // product of per-sensor support sizes.
  long double visits = 0;
  for (std::size_t y = 0; y < events; ++y) {
    if (prior_[y] <= 0) continue;
    long double prod = 1;
    for (const auto& ch : channels_) {
      std::size_t support = 0;
      for (std::size_t o = 0; o < ch.alphabet; ++o) support += ch.table[y * ch.alphabet + o] > 0;
      prod *= static_cast<long double>(support);
    }
    visits += prod;
  }
  if (visits > static_cast<long double>(enumeration_cap)) {
    throw ConfigError("discrete world: joint enumeration of " + std::to_string(static_cast<double>(visits)) +
                      " tuples exceeds cap " + std::to_string(enumeration_cap));
  }
  long double radix = 1;
  for (const auto& ch : channels_) radix *= static_cast<long double>(ch.alphabet);
  if (radix > static_cast<long double>(std::numeric_limits<std::uint64_t>::max() / 2)) {
    throw ConfigError("discrete world: joint alphabet too large to index");
  }
  enumeration_size_ = static_cast<std::uint64_t>(visits);
}

double DiscreteWorld::event_entropy() const {
  double h = 0;
  for (double p : prior_) {
    if (p > 0) h -= p * std::log2(p);
  }
  return h;
}

std::string to_string(SensorRole role) {
  switch (role) {
    case SensorRole::Background: return "background";
    case SensorRole::Redundant: return "redundant";
    case SensorRole::Unique: return "unique";
  }
  return "unknown";
}

void to_json(nlohmann::json& j, const SensorGainReport& r) {
  std::vector<std::string> roles;
  for (auto role : r.role_labels) roles.push_back(to_string(role));
  j = nlohmann::json{{"total_information", r.total_information},
                     {"event_entropy", r.event_entropy},
                     {"per_sensor_marginal", r.per_sensor_marginal},
                     {"per_sensor_gain", r.per_sensor_gain},
                     {"role_labels", roles},
                     {"thresholds", {{"eps", r.eps}}}};
}

double mutual_information(const DiscreteWorld& world, const std::vector<std::size_t>& sensors) {
  if (sensors.empty()) return 0.0;
  const std::size_t events = std::size_t{1} << world.num_classes();
  std::vector<Support> supports;
  supports.reserve(sensors.size());
  std::vector<std::uint64_t> radix;
  std::uint64_t r = 1;
  for (auto k : sensors) {
    if (k >= world.num_sensors()) throw ContractError("mutual_information: sensor " + std::to_string(k) + " invalid");
    supports.push_back(support_of(world.channel(k), events));
    radix.push_back(r);
    r *= world.channel(k).alphabet;
  }
  std::vector<const Support*> ptrs;
  for (const auto& s : supports) ptrs.push_back(&s);

  std::unordered_map<std::uint64_t, double> marginal;
  for (std::size_t y = 0; y < events; ++y) {
    const double py = world.event_prior()[y];
    if (py <= 0) continue;
    enumerate(ptrs, radix, y, [&](std::uint64_t key, double p) { marginal[key] += py * p; });
  }
  double info = 0;
  for (std::size_t y = 0; y < events; ++y) {
    const double py = world.event_prior()[y];
    if (py <= 0) continue;
    enumerate(ptrs, radix, y, [&](std::uint64_t key, double p) { info += py * p * std::log2(p / marginal[key]); });
  }
  return std::max(info, 0.0);
}

double sensor_gain(const DiscreteWorld& world, std::size_t sensor) {
  if (sensor >= world.num_sensors()) throw ContractError("sensor_gain: sensor " + std::to_string(sensor) + " invalid");
  std::vector<std::size_t> all, rest;
  for (std::size_t k = 0; k < world.num_sensors(); ++k) {
    all.push_back(k);
    if (k != sensor) rest.push_back(k);
  }
  return std::max(mutual_information(world, all) - mutual_information(world, rest), 0.0);
}

SensorGainReport classify_roles(const DiscreteWorld& world, double eps) {
  if (!(eps > 0)) throw ConfigError("classify_roles: eps must be positive");
  SensorGainReport report;
  report.eps = eps;
  std::vector<std::size_t> all;
  for (std::size_t k = 0; k < world.num_sensors(); ++k) all.push_back(k);
  report.total_information = mutual_information(world, all);
  report.event_entropy = world.event_entropy();
  for (std::size_t k = 0; k < world.num_sensors(); ++k) {
    const double marginal = mutual_information(world, {k});
    const double gain = sensor_gain(world, k);
    report.per_sensor_marginal.push_back(marginal);
    report.per_sensor_gain.push_back(gain);
    if (marginal < eps) {
      report.role_labels.push_back(SensorRole::Background);
    } else if (gain < eps) {
      report.role_labels.push_back(SensorRole::Redundant);
    } else {
      report.role_labels.push_back(SensorRole::Unique);
    }
  }
  return report;
}

DiscreteWorld discretize(const world::WorldSpec& spec, std::uint64_t enumeration_cap) {
  spec.validate();
  const std::size_t C = spec.num_classes, S = spec.num_sensors, F = spec.feature_dim_raw;
  if (C > 20) throw ConfigError("discretize: too many classes for exact enumeration");
  const std::size_t events = std::size_t{1} << C;
  const auto sig = world::make_signatures(spec);

  std::vector<double> prior(events, 0.0);
  double total = 0;
  for (std::size_t y = 0; y < events; ++y) {
    if (static_cast<std::size_t>(std::popcount(y)) > spec.max_concurrent) continue;
    double p = 1;
    for (std::size_t c = 0; c < C; ++c) p *= ((y >> c) & 1u) ? spec.event_rate[c] : 1.0 - spec.event_rate[c];
    prior[y] = p;
    total += p;
  }
  for (double& p : prior) p /= total;

  std::vector<Channel> channels(S);
  for (std::size_t s = 0; s < S; ++s) {
    std::map<std::vector<bool>, std::uint32_t> alphabet;
    std::vector<std::uint32_t> symbol(events);
    for (std::size_t y = 0; y < events; ++y) {
      std::vector<bool> pattern(F, false);
      for (std::size_t f = 0; f < F; ++f) {
        double x = 0;
        for (std::size_t c = 0; c < C; ++c) {
          if (((y >> c) & 1u) && spec.coverage[c][s]) x += sig[(c * S + s) * F + f];
        }
        pattern[f] = x > 0;
      }
      auto [it, _] = alphabet.emplace(std::move(pattern), static_cast<std::uint32_t>(alphabet.size()));
      symbol[y] = it->second;
    }
    channels[s].alphabet = alphabet.size();
    channels[s].table.assign(events * alphabet.size(), 0.0);
    for (std::size_t y = 0; y < events; ++y) channels[s].table[y * alphabet.size() + symbol[y]] = 1.0;
  }
  return DiscreteWorld(C, std::move(prior), std::move(channels), enumeration_cap);
}

}  // namespace gmeld::info
