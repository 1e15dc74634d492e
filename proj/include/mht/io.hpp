#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mht/instance.hpp"
#include "mht/mcts.hpp"
#include "mht/oracle.hpp"
#include "mht/util.hpp"

namespace mht {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// instance file (versioned JSON; fixed key order so round trips are
// byte-stable)

inline ordered_json instance_to_json(const Instance& inst) {
  ordered_json j;
  j["format"] = "mht-instance";
  j["version"] = 1;
  j["name"] = inst.name;
  j["source_hash"] = hex64(inst.source_hash);
  if (inst.parent_hash) j["parent_hash"] = hex64(*inst.parent_hash);
  j["history"] = inst.history;
  j["tasks_n"] = inst.n;
  ordered_json locs = ordered_json::array();
  for (const Point& p : inst.locations) locs.push_back({p.id, p.x, p.y});
  j["locations"] = std::move(locs);
  ordered_json tasks = ordered_json::array();
  for (const Task& t : inst.tasks) {
    ordered_json tj;
    tj["id"] = t.id;
    tj["pickup"] = t.pickup;
    tj["delivery"] = t.delivery;
    tj["mass"] = t.mass;
    tasks.push_back(std::move(tj));
  }
  j["tasks"] = std::move(tasks);
  ordered_json types = ordered_json::array();
  for (const RobotType& ty : inst.fleet.types) {
    ordered_json tj;
    tj["id"] = ty.id;
    tj["battery_kj"] = ty.battery_kj;
    tj["payload_cap"] = ty.payload_cap;
    types.push_back(std::move(tj));
  }
  ordered_json robots = ordered_json::array();
  for (const Robot& r : inst.fleet.robots) {
    ordered_json rj;
    rj["id"] = r.id;
    rj["type"] = r.type_id;
    robots.push_back(std::move(rj));
  }
  j["fleet"] = {{"types", std::move(types)}, {"robots", std::move(robots)}};
  ordered_json energy = ordered_json::array();
  for (std::size_t t = 0; t < inst.energy.size(); ++t) {
    ordered_json ej;
    ej["type"] = inst.fleet.types[t].id;
    if (inst.energy[t].euclidean) {
      ej["mode"] = "euclidean";  // rebuilt from locations and battery on load
    } else {
      ej["mode"] = "explicit";
      ej["de"] = inst.energy[t].de;
    }
    energy.push_back(std::move(ej));
  }
  j["energy"] = std::move(energy);
  return j;
}

inline Instance instance_from_json(const ordered_json& j) {
  try {
    if (j.at("format").get<std::string>() != "mht-instance")
      throw ParseError("not an mht-instance file");
    if (j.at("version").get<int>() != 1)
      throw ParseError("unsupported instance format version " + j.at("version").dump());
    Instance inst;
    inst.name = j.at("name").get<std::string>();
    inst.source_hash = parse_hex64(j.at("source_hash").get<std::string>());
    if (j.contains("parent_hash"))
      inst.parent_hash = parse_hex64(j.at("parent_hash").get<std::string>());
    if (j.contains("history"))
      inst.history = j.at("history").get<std::vector<std::string>>();
    inst.n = j.at("tasks_n").get<int>();
    for (const auto& lj : j.at("locations")) {
      if (!lj.is_array() || lj.size() != 3) throw ParseError("location rows must be [id, x, y]");
      inst.locations.push_back({lj[0].get<int>(), lj[1].get<double>(), lj[2].get<double>()});
    }
    for (const auto& tj : j.at("tasks")) {
      Task t;
      t.id = tj.at("id").get<int>();
      t.pickup = tj.at("pickup").get<int>();
      t.delivery = tj.at("delivery").get<int>();
      t.mass = tj.at("mass").get<double>();
      inst.tasks.push_back(t);
    }
    for (const auto& tj : j.at("fleet").at("types")) {
      RobotType ty;
      ty.id = tj.at("id").get<int>();
      ty.battery_kj = tj.at("battery_kj").get<double>();
      ty.payload_cap = tj.at("payload_cap").get<double>();
      inst.fleet.types.push_back(ty);
    }
    for (const auto& rj : j.at("fleet").at("robots"))
      inst.fleet.robots.push_back({rj.at("id").get<int>(), rj.at("type").get<int>()});
    for (const auto& ej : j.at("energy")) {
      const int type_id = ej.at("type").get<int>();
      const int tidx = inst.fleet.type_index(type_id);
      if (tidx != static_cast<int>(inst.energy.size()))
        throw ParseError("energy tables must appear in fleet type order");
      EnergyMatrix em;
      const std::string mode = ej.at("mode").get<std::string>();
      if (mode == "euclidean") {
        em.euclidean = true;
        em.de = energy_matrix(inst.locations,
                              inst.fleet.types[static_cast<std::size_t>(tidx)].battery_kj);
      } else if (mode == "explicit") {
        em.euclidean = false;
        em.de = ej.at("de").get<std::vector<double>>();
      } else {
        throw ParseError("unknown energy mode '" + mode + "'");
      }
      inst.energy.push_back(std::move(em));
    }
    inst.validate();
    return inst;
  } catch (const ordered_json::exception& e) {
    throw ParseError(std::string("malformed instance file: ") + e.what());
  }
}

inline std::string instance_to_string(const Instance& inst) {
  return instance_to_json(inst).dump(2) + "\n";
}

inline void save_instance(const std::string& path, const Instance& inst) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << instance_to_string(inst);
  if (!out) throw ParseError("write failed for '" + path + "'");
}

inline Instance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  ordered_json j;
  try {
    in >> j;
  } catch (const ordered_json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return instance_from_json(j);
}

// ---------------------------------------------------------------------------
// tree snapshot: line-oriented text, one node per line, doubles in shortest
// round-trip form so every N, J (and hence J/N ranking) survives exactly

struct TreeSnapshot {
  SearchTree tree;
  std::optional<Incumbent> incumbent;
};

namespace detail {

/// Line cursor that reports byte offsets in parse errors.
struct LineReader {
  std::string_view text;
  std::size_t pos = 0;
  std::size_t line_start = 0;
  int lineno = 0;

  bool next(std::string_view& out) {
    if (pos >= text.size()) return false;
    line_start = pos;
    std::size_t e = text.find('\n', pos);
    if (e == std::string_view::npos) e = text.size();
    out = text.substr(pos, e - pos);
    pos = e + (e < text.size() ? 1 : 0);
    ++lineno;
    return true;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("tree snapshot, line " + std::to_string(lineno) + " (byte offset " +
                     std::to_string(line_start) + "): " + what);
  }

  std::string_view expect(const std::string& head) {
    std::string_view line;
    if (!next(line))
      throw ParseError("tree snapshot: unexpected end of file (byte offset " +
                       std::to_string(text.size()) + "), expected '" + head + "'");
    if (line.substr(0, head.size()) != head || (line.size() > head.size() && line[head.size()] != ' '))
      fail("expected '" + head + "'");
    return trim(line.substr(std::min(line.size(), head.size())));
  }
};

inline void write_route(std::ostream& out, const Route& r) {
  out << "route stops " << r.stops.size();
  for (int s : r.stops) out << ' ' << s;
  out << " charges " << r.charge_events.size();
  for (int c : r.charge_events) out << ' ' << c;
  out << " legs " << r.leg_energy_kj.size();
  for (double e : r.leg_energy_kj) out << ' ' << dtos(e);
  out << " total " << dtos(r.total_energy_kj) << '\n';
}

inline Route parse_route(LineReader& rd, std::string_view rest) {
  auto toks = split_ws(rest);
  std::size_t i = 0;
  auto need = [&](const char* what) -> std::string_view {
    if (i >= toks.size()) rd.fail(std::string("route record truncated, expected ") + what);
    return toks[i++];
  };
  Route r;
  if (need("'stops'") != "stops") rd.fail("expected 'stops'");
  const std::size_t ns = parse_uint(need("stop count"));
  for (std::size_t k = 0; k < ns; ++k) r.stops.push_back(static_cast<int>(parse_int(need("stop"))));
  if (need("'charges'") != "charges") rd.fail("expected 'charges'");
  const std::size_t nc = parse_uint(need("charge count"));
  for (std::size_t k = 0; k < nc; ++k)
    r.charge_events.push_back(static_cast<int>(parse_int(need("charge index"))));
  if (need("'legs'") != "legs") rd.fail("expected 'legs'");
  const std::size_t nl = parse_uint(need("leg count"));
  for (std::size_t k = 0; k < nl; ++k) r.leg_energy_kj.push_back(parse_double(need("leg energy")));
  if (need("'total'") != "total") rd.fail("expected 'total'");
  r.total_energy_kj = parse_double(need("total energy"));
  if (i != toks.size()) rd.fail("trailing tokens in route record");
  return r;
}

}  // namespace detail

inline void save_tree(std::ostream& out, const SearchTree& tree,
                      const std::optional<Incumbent>& incumbent = std::nullopt) {
  out << "mht-tree v1\n";
  out << "instance " << hex64(tree.instance_hash) << '\n';
  out << "seed " << tree.seed << '\n';
  out << "fleet_size " << tree.fleet_size << '\n';
  out << "task_order " << tree.task_order.size();
  for (int t : tree.task_order) out << ' ' << t;
  out << '\n';
  out << "j_max " << (tree.j_max ? dtos(*tree.j_max) : "none") << '\n';
  if (incumbent) {
    out << "incumbent " << dtos(incumbent->cost_kj) << ' ' << incumbent->at_evaluations << ' '
        << dtos(incumbent->at_wall_seconds);
    for (int r : incumbent->assignment) out << ' ' << r;
    out << '\n';
    for (const Route& r : incumbent->routes) detail::write_route(out, r);
  } else {
    out << "incumbent none\n";
  }
  out << "nodes " << tree.nodes.size() << '\n';
  for (const TreeNode& nd : tree.nodes)
    out << nd.parent << ' ' << nd.label << ' ' << nd.depth << ' ' << nd.visits << ' '
        << dtos(nd.cost_sum) << '\n';
  out << "end\n";
}

inline void save_tree(const std::string& path, const SearchTree& tree,
                      const std::optional<Incumbent>& incumbent = std::nullopt) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  save_tree(out, tree, incumbent);
  if (!out) throw ParseError("write failed for '" + path + "'");
}

inline TreeSnapshot load_tree(std::string_view text) {
  detail::LineReader rd{text};
  std::string_view line;
  if (!rd.next(line)) throw ParseError("tree snapshot: empty file");
  if (trim(line) != "mht-tree v1")
    rd.fail("unsupported snapshot header '" + std::string(trim(line)) + "' (expected 'mht-tree v1')");

  TreeSnapshot snap;
  snap.tree.instance_hash = parse_hex64(rd.expect("instance"));
  snap.tree.seed = parse_uint(rd.expect("seed"));
  snap.tree.fleet_size = static_cast<int>(parse_int(rd.expect("fleet_size")));
  if (snap.tree.fleet_size < 1) rd.fail("fleet_size must be positive");
  {
    auto toks = split_ws(rd.expect("task_order"));
    if (toks.empty()) rd.fail("task_order needs a count");
    const std::size_t n = parse_uint(toks[0]);
    if (toks.size() != n + 1) rd.fail("task_order count does not match entries");
    for (std::size_t i = 1; i < toks.size(); ++i)
      snap.tree.task_order.push_back(static_cast<int>(parse_int(toks[i])));
  }
  {
    std::string_view v = rd.expect("j_max");
    if (v != "none") snap.tree.j_max = parse_double(v);
  }
  {
    std::string_view v = rd.expect("incumbent");
    if (v != "none") {
      auto toks = split_ws(v);
      if (toks.size() < 3) rd.fail("incumbent record needs cost, evaluations, wall seconds");
      Incumbent inc;
      inc.cost_kj = parse_double(toks[0]);
      inc.at_evaluations = parse_uint(toks[1]);
      inc.at_wall_seconds = parse_double(toks[2]);
      for (std::size_t i = 3; i < toks.size(); ++i)
        inc.assignment.push_back(static_cast<int>(parse_int(toks[i])));
      if (inc.assignment.size() != snap.tree.task_order.size())
        rd.fail("incumbent assignment length does not match task_order");
      for (int i = 0; i < snap.tree.fleet_size; ++i)
        inc.routes.push_back(detail::parse_route(rd, rd.expect("route")));
      snap.incumbent = std::move(inc);
    }
  }
  const std::size_t node_count = parse_uint(rd.expect("nodes"));
  if (node_count == 0) throw ParseError("tree snapshot: node table is empty");
  snap.tree.nodes.reserve(node_count);
  for (std::size_t id = 0; id < node_count; ++id) {
    if (!rd.next(line))
      throw ParseError("tree snapshot: truncated node table (byte offset " +
                       std::to_string(text.size()) + "): have " + std::to_string(id) + " of " +
                       std::to_string(node_count) + " nodes");
    auto toks = split_ws(line);
    if (toks.size() != 5) rd.fail("node rows are 'parent label depth visits cost_sum'");
    TreeNode nd;
    nd.parent = static_cast<int>(parse_int(toks[0]));
    nd.label = static_cast<int>(parse_int(toks[1]));
    nd.depth = static_cast<int>(parse_int(toks[2]));
    nd.visits = parse_uint(toks[3]);
    nd.cost_sum = parse_double(toks[4]);
    if (id == 0) {
      if (nd.parent != -1 || nd.depth != 0) rd.fail("node 0 must be the root (parent -1, depth 0)");
    } else {
      if (nd.parent < 0 || nd.parent >= static_cast<int>(id))
        rd.fail("node parents must precede their children");
      if (nd.label < 0 || nd.label >= snap.tree.fleet_size)
        rd.fail("branch label out of fleet range");
      if (nd.depth != snap.tree.nodes[static_cast<std::size_t>(nd.parent)].depth + 1)
        rd.fail("child depth must be parent depth + 1");
      if (nd.depth > static_cast<int>(snap.tree.task_order.size())) rd.fail("depth exceeds task count");
    }
    snap.tree.nodes.push_back(nd);
  }
  rd.expect("end");
  // rebuild children (each expanded node must hold one child per robot)
  for (std::size_t id = 1; id < snap.tree.nodes.size(); ++id) {
    const TreeNode& nd = snap.tree.nodes[id];
    auto& siblings = snap.tree.nodes[static_cast<std::size_t>(nd.parent)].children;
    if (siblings.empty()) siblings.assign(static_cast<std::size_t>(snap.tree.fleet_size), -1);
    if (siblings[static_cast<std::size_t>(nd.label)] != -1)
      throw ParseError("tree snapshot: node " + std::to_string(nd.parent) +
                       " has two children with branch label " + std::to_string(nd.label));
    siblings[static_cast<std::size_t>(nd.label)] = static_cast<int>(id);
  }
  for (std::size_t id = 0; id < snap.tree.nodes.size(); ++id)
    for (int c : snap.tree.nodes[id].children)
      if (c == -1)
        throw ParseError("tree snapshot: node " + std::to_string(id) +
                         " is partially expanded (missing branch labels)");
  return snap;
}

inline TreeSnapshot load_tree_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  return load_tree(text);
}

/// Guard for warm restarts: the snapshot must have been built on this
/// instance, or on this perturbed instance's original nominal ancestor.
inline void check_tree_instance(const SearchTree& tree, const Instance& inst) {
  const std::uint64_t h = instance_hash(inst);
  if (tree.instance_hash == h) return;
  if (inst.parent_hash && tree.instance_hash == *inst.parent_hash) return;
  throw ValidationError("tree snapshot hash " + hex64(tree.instance_hash) +
                        " matches neither the instance (" + hex64(h) + ") nor its nominal parent" +
                        (inst.parent_hash ? " (" + hex64(*inst.parent_hash) + ")" : " (none recorded)"));
}

// ---------------------------------------------------------------------------
// trace CSV: phase, evaluations, wall_seconds, incumbent_kJ, assignment
// (assignment = robot ids joined by '|'; wall column is the only
// non-deterministic one)

inline void write_trace(std::ostream& out, const ConvergenceTrace& trace, const Fleet& fleet) {
  out << "phase,evaluations,wall_seconds,incumbent_kJ,assignment\n";
  for (const TraceRow& row : trace) {
    out << row.phase << ',' << row.evaluations << ',' << dtos(row.wall_seconds) << ','
        << dtos(row.incumbent_kj) << ',';
    for (std::size_t i = 0; i < row.assignment.size(); ++i) {
      if (i) out << '|';
      out << fleet.robots[static_cast<std::size_t>(row.assignment[i])].id;
    }
    out << '\n';
  }
}

inline void write_trace(const std::string& path, const ConvergenceTrace& trace, const Fleet& fleet) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  write_trace(out, trace, fleet);
  if (!out) throw ParseError("write failed for '" + path + "'");
}

inline ConvergenceTrace read_trace(std::istream& in, const Fleet& fleet) {
  ConvergenceTrace trace;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("trace: empty file");
  if (trim(line) != "phase,evaluations,wall_seconds,incumbent_kJ,assignment")
    throw ParseError("trace: unexpected header '" + line + "'");
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cols = split_on(trim(line), ',');
    if (cols.size() != 5)
      throw ParseError("trace line " + std::to_string(lineno) + ": expected 5 columns");
    TraceRow row;
    row.phase = std::string(cols[0]);
    row.evaluations = parse_uint(cols[1]);
    row.wall_seconds = parse_double(cols[2]);
    row.incumbent_kj = parse_double(cols[3]);
    if (!cols[4].empty())
      for (std::string_view tok : split_on(cols[4], '|'))
        row.assignment.push_back(fleet.robot_index(static_cast<int>(parse_int(tok))));
    trace.push_back(std::move(row));
  }
  return trace;
}

inline ConvergenceTrace read_trace_file(const std::string& path, const Fleet& fleet) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return read_trace(in, fleet);
}

/// Best incumbent cost available at an evaluation-count checkpoint, +inf if
/// none yet. Rows must be in emission order (monotone within a trace).
inline double incumbent_at(const ConvergenceTrace& trace, std::uint64_t evaluations) {
  double best = kInfCost;
  for (const TraceRow& row : trace)
    if (row.evaluations <= evaluations) best = std::min(best, row.incumbent_kj);
  return best;
}

// ---------------------------------------------------------------------------
// oracle table CSV: one task-set bitstring column per robot (bit i = task
// i+1, ascending task id left to right)

inline void write_oracle_csv(std::ostream& out, const OracleResult& res, const Instance& inst) {
  out << "index";
  for (const Robot& r : inst.fleet.robots) out << ",robot" << r.id << "_tasks";
  out << ",cost_kJ,feasible\n";
  for (std::size_t i = 0; i < res.table.size(); ++i) {
    const auto& row = res.table[i];
    out << i;
    for (std::size_t r = 0; r < inst.fleet.size(); ++r) {
      out << ',';
      for (std::size_t t = 0; t < row.assignment.size(); ++t)
        out << (row.assignment[t] == static_cast<int>(r) ? '1' : '0');
    }
    out << ',' << (row.feasible ? dtos(row.cost_kj) : "inf") << ',' << (row.feasible ? 1 : 0)
        << '\n';
  }
}

}  // namespace mht
