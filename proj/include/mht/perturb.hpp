#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "mht/instance.hpp"
#include "mht/rng.hpp"
#include "mht/util.hpp"

namespace mht {

struct BatteryPerturbation {
  int robot_id = 0;
  double battery_kj = 0.0;
};

struct PayloadPerturbation {
  int robot_id = 0;
  double payload_cap = 0.0;
};

/// Jitters every non-depot location by an independent uniform draw in
/// [-xi*range, +xi*range] per axis, where range is the coordinate span of the
/// current layout. Depot moves only when include_depot is set.
struct SpatialPerturbation {
  double xi = 0.0;
  std::uint64_t seed = 0;
  bool include_depot = false;
};

/// Replaces one type's energy matrix wholesale.
struct EnergyOverride {
  int type_id = 0;
  std::vector<double> de;
};

using Perturbation =
    std::variant<BatteryPerturbation, PayloadPerturbation, SpatialPerturbation, EnergyOverride>;

namespace detail {

inline std::map<std::string, std::string> parse_kv(const std::vector<std::string_view>& toks,
                                                   std::size_t from, const char* kind) {
  std::map<std::string, std::string> kv;
  for (std::size_t i = from; i < toks.size(); ++i) {
    auto eq = toks[i].find('=');
    if (eq == std::string_view::npos)
      throw ParseError(std::string("perturbation '") + kind + "': expected key=value, got '" +
                       std::string(toks[i]) + "'");
    std::string key(toks[i].substr(0, eq));
    if (kv.count(key)) throw ParseError(std::string("perturbation '") + kind + "': duplicate key '" + key + "'");
    kv[key] = std::string(toks[i].substr(eq + 1));
  }
  return kv;
}

inline std::string take(std::map<std::string, std::string>& kv, const std::string& key, const char* kind) {
  auto it = kv.find(key);
  if (it == kv.end())
    throw ParseError(std::string("perturbation '") + kind + "': missing key '" + key + "'");
  std::string v = it->second;
  kv.erase(it);
  return v;
}

inline void reject_leftovers(const std::map<std::string, std::string>& kv, const char* kind) {
  if (!kv.empty())
    throw ParseError(std::string("perturbation '") + kind + "': unknown key '" + kv.begin()->first + "'");
}

}  // namespace detail

/// Grammar, one perturbation per string:
///   battery robot=<id> B=<kJ>
///   payload robot=<id> Q=<units>
///   spatial xi=<fraction> seed=<u64> [depot=0|1]
///   energy  type=<id> file=<path-to-whitespace-separated-matrix>
inline Perturbation parse_perturbation(std::string_view spec) {
  auto toks = split_ws(spec);
  if (toks.empty()) throw ParseError("empty perturbation spec");
  std::string kind(toks[0]);
  auto kv = detail::parse_kv(toks, 1, kind.c_str());

  if (kind == "battery") {
    BatteryPerturbation p;
    p.robot_id = static_cast<int>(parse_int(detail::take(kv, "robot", "battery")));
    p.battery_kj = parse_double(detail::take(kv, "B", "battery"));
    detail::reject_leftovers(kv, "battery");
    return p;
  }
  if (kind == "payload") {
    PayloadPerturbation p;
    p.robot_id = static_cast<int>(parse_int(detail::take(kv, "robot", "payload")));
    p.payload_cap = parse_double(detail::take(kv, "Q", "payload"));
    detail::reject_leftovers(kv, "payload");
    return p;
  }
  if (kind == "spatial") {
    SpatialPerturbation p;
    p.xi = parse_double(detail::take(kv, "xi", "spatial"));
    if (!(p.xi >= 0.0) || p.xi >= 1.0) throw ParseError("spatial perturbation: xi must lie in [0,1)");
    p.seed = parse_uint(detail::take(kv, "seed", "spatial"));
    if (kv.count("depot")) p.include_depot = parse_int(detail::take(kv, "depot", "spatial")) != 0;
    detail::reject_leftovers(kv, "spatial");
    return p;
  }
  if (kind == "energy") {
    EnergyOverride p;
    p.type_id = static_cast<int>(parse_int(detail::take(kv, "type", "energy")));
    std::string path = detail::take(kv, "file", "energy");
    detail::reject_leftovers(kv, "energy");
    std::ifstream in(path);
    if (!in) throw ParseError("energy override: cannot open '" + path + "'");
    double v;
    while (in >> v) p.de.push_back(v);
    if (!in.eof()) throw ParseError("energy override: non-numeric content in '" + path + "'");
    if (p.de.empty()) throw ParseError("energy override: '" + path + "' holds no values");
    return p;
  }
  throw ParseError("unknown perturbation kind '" + kind + "'");
}

/// Canonical spec string (used for instance history).
inline std::string perturbation_spec(const Perturbation& p) {
  struct V {
    std::string operator()(const BatteryPerturbation& b) const {
      return "battery robot=" + std::to_string(b.robot_id) + " B=" + dtos(b.battery_kj);
    }
    std::string operator()(const PayloadPerturbation& b) const {
      return "payload robot=" + std::to_string(b.robot_id) + " Q=" + dtos(b.payload_cap);
    }
    std::string operator()(const SpatialPerturbation& s) const {
      std::string out = "spatial xi=" + dtos(s.xi) + " seed=" + std::to_string(s.seed);
      if (s.include_depot) out += " depot=1";
      return out;
    }
    std::string operator()(const EnergyOverride& e) const {
      return "energy type=" + std::to_string(e.type_id) + " values=" + std::to_string(e.de.size());
    }
  };
  return std::visit(V{}, p);
}

namespace detail {

/// Gives `robot` a private copy of its type when the type is shared, so the
/// change cannot leak onto other robots. Returns the robot's type index.
inline int unshare_type(Instance& inst, std::size_t robot_idx) {
  const int type_id = inst.fleet.robots[robot_idx].type_id;
  int shared = 0;
  for (const auto& r : inst.fleet.robots)
    if (r.type_id == type_id) ++shared;
  const int tidx = inst.fleet.type_index(type_id);
  if (shared <= 1) return tidx;

  int fresh_id = 0;
  for (const auto& t : inst.fleet.types) fresh_id = std::max(fresh_id, t.id);
  ++fresh_id;
  RobotType copy = inst.fleet.types[static_cast<std::size_t>(tidx)];
  copy.id = fresh_id;
  inst.fleet.types.push_back(copy);
  inst.energy.push_back(inst.energy[static_cast<std::size_t>(tidx)]);
  inst.fleet.robots[robot_idx].type_id = fresh_id;
  return static_cast<int>(inst.fleet.types.size() - 1);
}

inline void rescale_or_rebuild(Instance& inst, int tidx, double old_battery) {
  EnergyMatrix& em = inst.energy[static_cast<std::size_t>(tidx)];
  const double battery = inst.fleet.types[static_cast<std::size_t>(tidx)].battery_kj;
  if (em.euclidean) {
    em.de = energy_matrix(inst.locations, battery);
  } else {
    const double f = old_battery / battery;
    for (double& v : em.de) v *= f;
  }
}

}  // namespace detail

/// Applies one perturbation, returning a new instance. Fleet size never
/// changes; parameter edits clone a shared robot type before touching it.
/// The result records the originating nominal hash and appends to history.
inline Instance apply_perturbation(const Instance& input, const Perturbation& pert) {
  Instance inst = input;
  if (!inst.parent_hash) inst.parent_hash = instance_hash(input);
  inst.history.push_back(perturbation_spec(pert));

  struct V {
    Instance& inst;

    void operator()(const BatteryPerturbation& p) const {
      if (p.battery_kj <= 0.0) throw ValidationError("battery perturbation: B must be positive");
      const std::size_t ridx = static_cast<std::size_t>(inst.fleet.robot_index(p.robot_id));
      const int tidx = detail::unshare_type(inst, ridx);
      const double old_b = inst.fleet.types[static_cast<std::size_t>(tidx)].battery_kj;
      inst.fleet.types[static_cast<std::size_t>(tidx)].battery_kj = p.battery_kj;
      detail::rescale_or_rebuild(inst, tidx, old_b);
    }

    void operator()(const PayloadPerturbation& p) const {
      if (p.payload_cap <= 0.0) throw ValidationError("payload perturbation: Q must be positive");
      const std::size_t ridx = static_cast<std::size_t>(inst.fleet.robot_index(p.robot_id));
      const int tidx = detail::unshare_type(inst, ridx);
      inst.fleet.types[static_cast<std::size_t>(tidx)].payload_cap = p.payload_cap;
    }

    void operator()(const SpatialPerturbation& p) const {
      if (!(p.xi >= 0.0) || p.xi >= 1.0)
        throw ValidationError("spatial perturbation: xi must lie in [0,1)");
      double xmin = inst.locations[0].x, xmax = xmin;
      double ymin = inst.locations[0].y, ymax = ymin;
      for (int v = 0; v <= 2 * inst.n; ++v) {
        const Point& q = inst.locations[static_cast<std::size_t>(v)];
        xmin = std::min(xmin, q.x);
        xmax = std::max(xmax, q.x);
        ymin = std::min(ymin, q.y);
        ymax = std::max(ymax, q.y);
      }
      const double rx = p.xi * (xmax - xmin);
      const double ry = p.xi * (ymax - ymin);
      Rng rng(p.seed);
      for (int v = p.include_depot ? 0 : 1; v <= 2 * inst.n; ++v) {
        Point& q = inst.locations[static_cast<std::size_t>(v)];
        q.x += rng.uniform(-rx, rx);
        q.y += rng.uniform(-ry, ry);
      }
      inst.locations[static_cast<std::size_t>(2 * inst.n + 1)] = inst.locations[0];
      // geometry changed: every matrix reverts to the euclidean rule
      for (std::size_t t = 0; t < inst.energy.size(); ++t) {
        inst.energy[t].euclidean = true;
        inst.energy[t].de = energy_matrix(inst.locations, inst.fleet.types[t].battery_kj);
      }
    }

    void operator()(const EnergyOverride& p) const {
      const int tidx = inst.fleet.type_index(p.type_id);
      const std::size_t m = static_cast<std::size_t>(inst.node_count());
      if (p.de.size() != m * m)
        throw ValidationError("energy override: expected " + std::to_string(m * m) + " values, got " +
                              std::to_string(p.de.size()));
      for (std::size_t i = 0; i < m; ++i) {
        if (p.de[i * m + i] != 0.0) throw ValidationError("energy override: diagonal must be zero");
        for (std::size_t j = 0; j < m; ++j) {
          if (!(p.de[i * m + j] >= 0.0) || !std::isfinite(p.de[i * m + j]))
            throw ValidationError("energy override: entries must be finite and non-negative");
          if (p.de[i * m + j] != p.de[j * m + i])
            throw ValidationError("energy override: matrix must be symmetric");
        }
      }
      inst.energy[static_cast<std::size_t>(tidx)] = {false, p.de};
    }
  };
  std::visit(V{inst}, pert);
  inst.validate();
  return inst;
}

inline Instance apply_perturbations(const Instance& input, std::span<const Perturbation> perts) {
  Instance inst = input;
  for (const auto& p : perts) inst = apply_perturbation(inst, p);
  return inst;
}

}  // namespace mht
