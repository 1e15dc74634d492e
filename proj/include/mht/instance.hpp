#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mht/util.hpp"

namespace mht {

struct Point {
  int id = 0;  // id in the source point cloud (TSPLIB numbering)
  double x = 0.0;
  double y = 0.0;
};

struct PointCloud {
  std::string name;
  std::vector<Point> points;
};

/// Reads the NODE_COORD_SECTION of a TSPLIB-style file. Headers such as
/// NAME/TYPE/EDGE_WEIGHT_TYPE are tolerated and ignored; DIMENSION, when
/// present, must match the coordinate count.
inline PointCloud load_tsplib(std::istream& in, const std::string& origin = "<stream>") {
  PointCloud cloud;
  std::optional<std::size_t> dimension;
  bool in_coords = false;
  bool section_seen = false;
  std::string line;
  std::size_t lineno = 0;

  auto fail = [&](const std::string& what) {
    throw ParseError(origin + ":" + std::to_string(lineno) + ": " + what);
  };

  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv = trim(line);
    if (sv.empty()) continue;
    if (sv == "EOF" || sv == "-1") break;

    if (in_coords) {
      auto tok = split_ws(sv);
      // a non-numeric first token means a new section starts; stop reading coords
      if (!tok.empty() && (tok[0].front() < '0' || tok[0].front() > '9') && tok[0].front() != '-') {
        in_coords = false;
      } else {
        if (tok.size() != 3) fail("expected 'id x y'");
        Point p;
        p.id = static_cast<int>(parse_int(tok[0]));
        p.x = parse_double(tok[1]);
        p.y = parse_double(tok[2]);
        cloud.points.push_back(p);
        continue;
      }
    }

    auto colon = sv.find(':');
    std::string_view key = trim(colon == std::string_view::npos ? sv : sv.substr(0, colon));
    std::string_view val = colon == std::string_view::npos ? std::string_view{} : trim(sv.substr(colon + 1));
    if (key == "NAME") {
      cloud.name = std::string(val);
    } else if (key == "DIMENSION") {
      dimension = static_cast<std::size_t>(parse_int(val));
    } else if (key == "NODE_COORD_SECTION") {
      in_coords = true;
      section_seen = true;
    }
    // everything else: ignored header
  }

  if (!section_seen) throw ParseError(origin + ": no NODE_COORD_SECTION");
  if (cloud.points.empty()) throw ParseError(origin + ": empty NODE_COORD_SECTION");
  if (dimension && *dimension != cloud.points.size())
    throw ParseError(origin + ": DIMENSION says " + std::to_string(*dimension) + " but " +
                     std::to_string(cloud.points.size()) + " coordinates present");

  std::vector<int> ids;
  ids.reserve(cloud.points.size());
  for (const auto& p : cloud.points) ids.push_back(p.id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw ValidationError(origin + ": duplicate point id in NODE_COORD_SECTION");
  return cloud;
}

inline PointCloud load_tsplib_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return load_tsplib(in, path);
}

// ---------------------------------------------------------------------------
// fleet

struct RobotType {
  int id = 0;
  double battery_kj = 0.0;   // B^t
  double payload_cap = 0.0;  // Q^t
};

struct Robot {
  int id = 0;
  int type_id = 0;
};

struct Fleet {
  std::vector<RobotType> types;
  std::vector<Robot> robots;

  std::size_t size() const { return robots.size(); }

  int type_index(int type_id) const {
    for (std::size_t i = 0; i < types.size(); ++i)
      if (types[i].id == type_id) return static_cast<int>(i);
    throw ValidationError("unknown robot type id " + std::to_string(type_id));
  }

  int robot_index(int robot_id) const {
    for (std::size_t i = 0; i < robots.size(); ++i)
      if (robots[i].id == robot_id) return static_cast<int>(i);
    throw ValidationError("unknown robot id " + std::to_string(robot_id));
  }

  const RobotType& type_of(int robot_idx) const {
    return types[static_cast<std::size_t>(type_index(robots[static_cast<std::size_t>(robot_idx)].type_id))];
  }

  void validate() const {
    if (robots.empty()) throw ValidationError("fleet has no robots");
    if (types.empty()) throw ValidationError("fleet has no robot types");
    for (std::size_t i = 0; i < types.size(); ++i) {
      if (types[i].battery_kj <= 0.0)
        throw ValidationError("robot type " + std::to_string(types[i].id) + ": battery must be positive");
      if (types[i].payload_cap <= 0.0)
        throw ValidationError("robot type " + std::to_string(types[i].id) + ": payload capacity must be positive");
      for (std::size_t j = i + 1; j < types.size(); ++j)
        if (types[i].id == types[j].id)
          throw ValidationError("duplicate robot type id " + std::to_string(types[i].id));
    }
    for (std::size_t i = 0; i < robots.size(); ++i) {
      type_index(robots[i].type_id);  // throws on dangling reference
      for (std::size_t j = i + 1; j < robots.size(); ++j)
        if (robots[i].id == robots[j].id)
          throw ValidationError("duplicate robot id " + std::to_string(robots[i].id));
    }
  }
};

// ---------------------------------------------------------------------------
// instance

struct Task {
  int id = 0;        // 1..n; pickup node == id, delivery node == id + n
  int pickup = 0;
  int delivery = 0;
  double mass = 1.0;
};

/// Per-type energy fractions, (2n+2)x(2n+2) row-major. `euclidean` matrices
/// are derived from the locations and the type battery and are rebuilt after
/// geometric changes; `explicit` ones were supplied directly and are only
/// ever rescaled.
struct EnergyMatrix {
  bool euclidean = true;
  std::vector<double> de;
};

/// Computes delta-e for one robot type: euclidean distance over battery,
/// zero diagonal, exactly symmetric.
inline std::vector<double> energy_matrix(std::span<const Point> locations, double battery_kj) {
  if (battery_kj <= 0.0) throw ValidationError("energy_matrix: battery must be positive");
  const std::size_t m = locations.size();
  std::vector<double> de(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      double dx = locations[i].x - locations[j].x;
      double dy = locations[i].y - locations[j].y;
      double v = std::sqrt(dx * dx + dy * dy) / battery_kj;
      de[i * m + j] = v;
      de[j * m + i] = v;
    }
  }
  return de;
}

struct Instance {
  std::string name;
  int n = 0;                     // task count
  std::vector<Point> locations;  // model node -> source point; size 2n+2, [0] and [2n+1] co-located depot
  std::vector<Task> tasks;
  Fleet fleet;
  std::vector<EnergyMatrix> energy;  // parallel to fleet.types
  std::uint64_t source_hash = 0;     // fingerprint of the source point cloud
  std::optional<std::uint64_t> parent_hash;  // original nominal instance, set by perturbations
  std::vector<std::string> history;          // perturbation specs applied, in order

  int node_count() const { return 2 * n + 2; }
  int depot() const { return 0; }
  int end_depot() const { return 2 * n + 1; }

  double de(int type_idx, int i, int j) const {
    return energy[static_cast<std::size_t>(type_idx)]
        .de[static_cast<std::size_t>(i) * static_cast<std::size_t>(node_count()) + static_cast<std::size_t>(j)];
  }

  double distance(int i, int j) const {
    double dx = locations[static_cast<std::size_t>(i)].x - locations[static_cast<std::size_t>(j)].x;
    double dy = locations[static_cast<std::size_t>(i)].y - locations[static_cast<std::size_t>(j)].y;
    return std::sqrt(dx * dx + dy * dy);
  }

  /// +mass at a pickup node, -mass at the paired delivery, 0 at the depots.
  double signed_mass(int node) const {
    if (node <= 0 || node >= end_depot()) return 0.0;
    if (node <= n) return tasks[static_cast<std::size_t>(node - 1)].mass;
    return -tasks[static_cast<std::size_t>(node - n - 1)].mass;
  }

  void validate() const {
    fleet.validate();
    if (n < 1) throw ValidationError("instance has no tasks");
    if (static_cast<int>(locations.size()) != node_count())
      throw ValidationError("location table size mismatch");
    if (static_cast<int>(tasks.size()) != n) throw ValidationError("task table size mismatch");
    for (int i = 0; i < n; ++i) {
      const Task& t = tasks[static_cast<std::size_t>(i)];
      if (t.id != i + 1 || t.pickup != i + 1 || t.delivery != i + 1 + n)
        throw ValidationError("task " + std::to_string(t.id) + ": node numbering broken");
      if (t.mass <= 0.0) throw ValidationError("task " + std::to_string(t.id) + ": mass must be positive");
    }
    if (energy.size() != fleet.types.size())
      throw ValidationError("energy matrix count does not match robot type count");
    const std::size_t m = static_cast<std::size_t>(node_count());
    for (std::size_t t = 0; t < energy.size(); ++t) {
      if (energy[t].de.size() != m * m)
        throw ValidationError("energy matrix for type " + std::to_string(fleet.types[t].id) + " has wrong shape");
      for (std::size_t i = 0; i < m; ++i) {
        if (energy[t].de[i * m + i] != 0.0)
          throw ValidationError("energy matrix diagonal must be zero");
        for (std::size_t j = 0; j < m; ++j) {
          double v = energy[t].de[i * m + j];
          if (!(v >= 0.0) || !std::isfinite(v))
            throw ValidationError("energy matrix entries must be finite and non-negative");
          if (v != energy[t].de[j * m + i])
            throw ValidationError("energy matrix must be symmetric");
        }
      }
    }
  }
};

inline std::uint64_t cloud_hash(const PointCloud& cloud) {
  Digest d;
  d.str("mht-cloud");
  d.u64(cloud.points.size());
  for (const auto& p : cloud.points) {
    d.i64(p.id);
    d.f64(p.x);
    d.f64(p.y);
  }
  return d.h;
}

/// Fingerprint of everything the solver sees: geometry, tasks, fleet,
/// energy tables. Name and provenance metadata are deliberately excluded.
inline std::uint64_t instance_hash(const Instance& inst) {
  Digest d;
  d.str("mht-instance");
  d.i64(inst.n);
  for (const auto& p : inst.locations) {
    d.i64(p.id);
    d.f64(p.x);
    d.f64(p.y);
  }
  for (const auto& t : inst.tasks) {
    d.i64(t.id);
    d.i64(t.pickup);
    d.i64(t.delivery);
    d.f64(t.mass);
  }
  for (const auto& ty : inst.fleet.types) {
    d.i64(ty.id);
    d.f64(ty.battery_kj);
    d.f64(ty.payload_cap);
  }
  for (const auto& r : inst.fleet.robots) {
    d.i64(r.id);
    d.i64(r.type_id);
  }
  for (const auto& e : inst.energy) {
    d.u64(e.euclidean ? 1 : 0);
    for (double v : e.de) d.f64(v);
  }
  return d.h;
}

/// Turns an odd point cloud into a pickup-and-delivery instance:
/// points are ordered by distance to the cloud centroid (ties by lower
/// source id), the closest becomes the depot, and the remaining 2n points
/// are paired outside-in — the i-th closest picks up for the i-th farthest.
inline Instance derive_instance(const PointCloud& cloud, const Fleet& fleet,
                                std::span<const double> masses = {}) {
  fleet.validate();
  const std::size_t N = cloud.points.size();
  if (N < 3) throw ValidationError("derive_instance: need at least 3 points");
  if (N % 2 == 0) throw ValidationError("derive_instance: point count must be odd");

  double cx = 0.0, cy = 0.0;
  for (const auto& p : cloud.points) {
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(N);
  cy /= static_cast<double>(N);

  std::vector<std::size_t> order(N);
  for (std::size_t i = 0; i < N; ++i) order[i] = i;
  auto d2 = [&](std::size_t i) {
    double dx = cloud.points[i].x - cx;
    double dy = cloud.points[i].y - cy;
    return dx * dx + dy * dy;
  };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    double da = d2(a), db = d2(b);
    if (da != db) return da < db;
    return cloud.points[a].id < cloud.points[b].id;
  });

  const int n = static_cast<int>((N - 1) / 2);
  if (!masses.empty() && masses.size() != static_cast<std::size_t>(n))
    throw ValidationError("derive_instance: mass list must have one entry per task");

  Instance inst;
  inst.name = cloud.name.empty() ? "derived" : cloud.name;
  inst.n = n;
  inst.fleet = fleet;
  inst.source_hash = cloud_hash(cloud);
  inst.locations.resize(static_cast<std::size_t>(2 * n + 2));
  inst.locations[0] = cloud.points[order[0]];
  for (int i = 1; i <= n; ++i) {
    inst.locations[static_cast<std::size_t>(i)] = cloud.points[order[static_cast<std::size_t>(i)]];
    inst.locations[static_cast<std::size_t>(n + i)] = cloud.points[order[N - static_cast<std::size_t>(i)]];
  }
  inst.locations[static_cast<std::size_t>(2 * n + 1)] = inst.locations[0];

  inst.tasks.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Task& t = inst.tasks[static_cast<std::size_t>(i)];
    t.id = i + 1;
    t.pickup = i + 1;
    t.delivery = n + i + 1;
    t.mass = masses.empty() ? 1.0 : masses[static_cast<std::size_t>(i)];
  }

  inst.energy.reserve(fleet.types.size());
  for (const auto& ty : fleet.types)
    inst.energy.push_back({true, energy_matrix(inst.locations, ty.battery_kj)});

  inst.validate();
  return inst;
}

}  // namespace mht
