#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "mht/rng.hpp"
#include "mht/routing.hpp"
#include "oracle_ref.hpp"

using namespace mht;

namespace {

// 1 task: depot (0,0), pickup (3,4), delivery (3,0); B chosen per test
Instance one_task(double battery, double capacity = 10.0, double mass = 1.0) {
  Fleet fleet;
  fleet.types.push_back({1, battery, capacity});
  fleet.robots.push_back({1, 1});
  return fixtures::build_instance({{1, 0.0, 0.0}, {2, 3.0, 4.0}, {3, 3.0, 0.0}}, {mass}, fleet);
}

Instance random_instance(Rng& rng, int tasks, int robots) {
  std::vector<Point> stops;
  stops.push_back({1, rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0)});
  for (int i = 0; i < 2 * tasks; ++i)
    stops.push_back({i + 2, rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0)});
  std::vector<double> masses;
  for (int i = 0; i < tasks; ++i) masses.push_back(rng.uniform(0.5, 3.0));
  Fleet fleet;
  for (int r = 0; r < robots; ++r) {
    fleet.types.push_back({r + 1, rng.uniform(60.0, 120.0) * 3.0, rng.uniform(2.0, 10.0)});
    fleet.robots.push_back({r + 1, r + 1});
  }
  return fixtures::build_instance(stops, masses, fleet);
}

}  // namespace

TEST_CASE("leg transition: direct case") {
  // z=0.9, de=0.4, B=20 -> z'=0.5, 8 kJ, no recharge
  std::vector<double> de = {0.0, 0.1, 0.4, 0.1, 0.0, 0.4, 0.4, 0.4, 0.0};
  LegResult leg = leg_transition(0.9, 1, 2, de, 3, 20.0);
  REQUIRE(leg.feasible);
  REQUIRE_FALSE(leg.recharged);
  REQUIRE(leg.soc_after == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(leg.energy_kj == Catch::Approx(8.0).margin(1e-12));
}

TEST_CASE("leg transition: recharge case") {
  // z=0.3, de_ij=0.4, de_i0=0.1, de_0j=0.35, B=20 -> z'=0.65, 9 kJ, recharged
  std::vector<double> de = {0.0, 0.1, 0.35, 0.1, 0.0, 0.4, 0.35, 0.4, 0.0};
  LegResult leg = leg_transition(0.3, 1, 2, de, 3, 20.0);
  REQUIRE(leg.feasible);
  REQUIRE(leg.recharged);
  REQUIRE(leg.soc_after == Catch::Approx(0.65).margin(1e-15));
  REQUIRE(leg.energy_kj == Catch::Approx(9.0).margin(1e-12));
}

TEST_CASE("leg transition: cannot reach charger") {
  // z=0.05, de_i0=0.2 -> infeasible
  std::vector<double> de = {0.0, 0.2, 0.5, 0.2, 0.0, 0.9, 0.5, 0.9, 0.0};
  LegResult leg = leg_transition(0.05, 1, 2, de, 3, 20.0);
  REQUIRE_FALSE(leg.feasible);
}

TEST_CASE("leg transition: exact depletion boundary recharges") {
  // z - de == 0 is the recharge case, not the direct case
  std::vector<double> de = {0.0, 0.2, 0.3, 0.2, 0.0, 0.5, 0.3, 0.5, 0.0};
  LegResult leg = leg_transition(0.5, 1, 2, de, 3, 10.0);
  REQUIRE(leg.feasible);
  REQUIRE(leg.recharged);
  REQUIRE(leg.soc_after == Catch::Approx(1.0 - 0.3).margin(1e-15));
  REQUIRE(leg.energy_kj == Catch::Approx(10.0 * (0.2 + 0.3)).margin(1e-12));
}

TEST_CASE("leg transition: outbound leg longer than a full charge") {
  std::vector<double> de = {0.0, 0.2, 1.2, 0.2, 0.0, 1.3, 1.2, 1.3, 0.0};
  LegResult leg = leg_transition(0.9, 1, 2, de, 3, 20.0);  // de_0j = 1.2 > 1
  REQUIRE_FALSE(leg.feasible);
}

TEST_CASE("feasible successors: fresh state lists only pickups") {
  Rng rng(11);
  Instance inst = random_instance(rng, 2, 1);
  RoutingProblem prob = make_routing_problem(inst, std::vector<int>{1, 2}, 0);
  std::vector<int> next = feasible_successors(prob, RobotState{});
  REQUIRE(next == std::vector<int>{1, 2});
}

TEST_CASE("feasible successors: carried commodity opens its delivery") {
  Rng rng(12);
  Instance inst = random_instance(rng, 2, 1);
  // give the robot generous battery so only precedence/payload matter
  inst.fleet.types[0].battery_kj = 1e6;
  inst.fleet.types[0].payload_cap = 10.0;
  inst.energy[0] = {true, energy_matrix(inst.locations, 1e6)};
  RoutingProblem prob = make_routing_problem(inst, std::vector<int>{1, 2}, 0);
  RobotState state;
  state.position = 1;  // at pickup of task 1
  state.picked = 1u << 0;
  state.payload = inst.tasks[0].mass;
  std::vector<int> next = feasible_successors(prob, state);
  REQUIRE(next == std::vector<int>{2, 1 + inst.n});  // pickup 2, delivery of task 1
}

TEST_CASE("feasible successors: payload at capacity blocks pickups") {
  Fleet fleet;
  fleet.types.push_back({1, 1e6, 2.0});
  fleet.robots.push_back({1, 1});
  Instance inst = fixtures::build_instance(
      {{1, 0.0, 0.0}, {2, 1.0, 0.0}, {3, 2.0, 0.0}, {4, 1.0, 1.0}, {5, 2.0, 1.0}}, {2.0, 2.0},
      fleet);
  RoutingProblem prob = make_routing_problem(inst, std::vector<int>{1, 2}, 0);
  RobotState state;
  state.position = 1;
  state.picked = 1u << 0;
  state.payload = 2.0;  // at capacity
  std::vector<int> next = feasible_successors(prob, state);
  REQUIRE(next == std::vector<int>{1 + inst.n});  // only task 1's delivery
}

TEST_CASE("route: single task is the forced order with exact leg costs") {
  Instance inst = one_task(200.0);
  RouteResult res = route_bnb(inst, std::vector<int>{1}, 0);
  REQUIRE(res.feasible);
  REQUIRE(res.proven_optimal);
  REQUIRE(res.route.stops == std::vector<int>{0, 1, 2, 3});
  const double b = 200.0;
  const double expect = b * (inst.de(0, 0, 1) + inst.de(0, 1, 2) + inst.de(0, 2, 3));
  REQUIRE(res.cost_kj == Catch::Approx(expect).margin(1e-12));
  REQUIRE(route_cost(res.route, inst, 0) == res.cost_kj);  // exact replay
}

TEST_CASE("route: empty assignment stays at the depot for free") {
  Instance inst = one_task(200.0);
  RouteResult res = route_bnb(inst, std::vector<int>{}, 0);
  REQUIRE(res.feasible);
  REQUIRE(res.cost_kj == 0.0);
  REQUIRE(res.route.stops == std::vector<int>{0, inst.end_depot()});
  REQUIRE(res.route.leg_energy_kj.empty());
  REQUIRE(route_cost(res.route, inst, 0) == 0.0);
}

TEST_CASE("route: task mass above capacity is infeasible with a diagnostic") {
  Instance inst = one_task(200.0, /*capacity=*/10.0, /*mass=*/11.0);
  RouteResult res = route_bnb(inst, std::vector<int>{1}, 0);
  REQUIRE_FALSE(res.feasible);
  REQUIRE_FALSE(res.diagnostic.empty());
}

TEST_CASE("route: matches exhaustive stop-order oracle on random instances") {
  Rng rng(20250816);
  for (int trial = 0; trial < 30; ++trial) {
    Instance inst = random_instance(rng, 1 + static_cast<int>(rng.uniform_index(4)), 1);
    std::vector<int> tasks;
    for (int t = 1; t <= inst.n; ++t) tasks.push_back(t);
    const double expect = ref::best_route_cost(inst, 0, tasks);
    RouteResult res = route_bnb(inst, tasks, 0);
    if (expect == ref::kInf) {
      REQUIRE_FALSE(res.feasible);
    } else {
      REQUIRE(res.feasible);
      REQUIRE(res.cost_kj == Catch::Approx(expect).margin(1e-9));
    }
  }
}

TEST_CASE("route: pruning and the stranded guard never change the answer") {
  Rng rng(77);
  for (int trial = 0; trial < 12; ++trial) {
    Instance inst = random_instance(rng, 3, 1);
    std::vector<int> tasks = {1, 2, 3};
    RoutingOptions plain;
    plain.prune = false;
    plain.stranded_guard = false;
    RouteResult slow = route_bnb(inst, tasks, 0, {}, plain);
    RouteResult fast = route_bnb(inst, tasks, 0);
    REQUIRE(slow.feasible == fast.feasible);
    if (fast.feasible) REQUIRE(fast.cost_kj == Catch::Approx(slow.cost_kj).margin(1e-12));
    REQUIRE(fast.expansions <= slow.expansions);
  }
}

TEST_CASE("route: anytime incumbents are non-increasing") {
  Rng rng(99);
  Instance inst = random_instance(rng, 4, 1);
  std::vector<double> log;
  RoutingOptions opts;
  opts.incumbent_log = &log;
  RouteResult res = route_bnb(inst, std::vector<int>{1, 2, 3, 4}, 0, {}, opts);
  if (res.feasible) {
    REQUIRE_FALSE(log.empty());
    for (std::size_t i = 1; i < log.size(); ++i) REQUIRE(log[i] < log[i - 1]);
    REQUIRE(log.back() == res.cost_kj);
  }
}

TEST_CASE("route: expansion budget yields best-found and flags exhaustion") {
  Rng rng(5);
  Instance inst = random_instance(rng, 4, 1);
  RouteResult full = route_bnb(inst, std::vector<int>{1, 2, 3, 4}, 0);
  REQUIRE(full.feasible);          // seed chosen so the draw is informative
  REQUIRE(full.expansions > 25);
  RoutingBudget tiny;
  tiny.max_expansions = 25;
  RouteResult capped = route_bnb(inst, std::vector<int>{1, 2, 3, 4}, 0, tiny);
  REQUIRE(capped.budget_exhausted);
  REQUIRE_FALSE(capped.proven_optimal);
  if (capped.feasible) {
    REQUIRE(capped.cost_kj >= full.cost_kj - 1e-12);
    REQUIRE(route_cost(capped.route, inst, 0) == capped.cost_kj);
  }
  REQUIRE(full.proven_optimal);
}

TEST_CASE("route: forced recharge mid-route is replayed and audited") {
  // every node within B/2 of the depot (never stranded), but every
  // pickup-to-delivery leg depletes the battery past zero, forcing recharges
  Fleet fleet;
  fleet.types.push_back({1, 100.0, 10.0});
  fleet.robots.push_back({1, 1});
  Instance inst = fixtures::build_instance(
      {{1, 0.0, 0.0}, {2, 0.0, 45.0}, {3, 0.0, -45.0}, {4, 45.0, 0.0}, {5, -45.0, 0.0}},
      {1.0, 1.0}, fleet);
  RouteResult res = route_bnb(inst, std::vector<int>{1, 2}, 0);
  REQUIRE(res.feasible);
  REQUIRE_FALSE(res.route.charge_events.empty());
  REQUIRE(validate_route(res.route, inst, 0, std::vector<int>{1, 2}) ==
          Catch::Approx(res.cost_kj).margin(1e-12));
  // replay cost equals the reference oracle for the same task set
  REQUIRE(res.cost_kj == Catch::Approx(ref::best_route_cost(inst, 0, {1, 2})).margin(1e-9));
}

TEST_CASE("validate_route rejects tampered routes") {
  Instance inst = one_task(200.0);
  RouteResult res = route_bnb(inst, std::vector<int>{1}, 0);
  REQUIRE(res.feasible);

  SECTION("wrong stop order") {
    Route bad = res.route;
    std::swap(bad.stops[1], bad.stops[2]);  // delivery before pickup
    REQUIRE_THROWS_AS(validate_route(bad, inst, 0, std::vector<int>{1}), ValidationError);
  }
  SECTION("tampered total") {
    Route bad = res.route;
    bad.total_energy_kj += 1.0;
    REQUIRE_THROWS_AS(validate_route(bad, inst, 0, std::vector<int>{1}), ValidationError);
  }
  SECTION("tampered leg energy") {
    Route bad = res.route;
    bad.leg_energy_kj[0] += 0.5;
    REQUIRE_THROWS_AS(validate_route(bad, inst, 0, std::vector<int>{1}), ValidationError);
  }
  SECTION("missing task") {
    REQUIRE_THROWS_AS(validate_route(res.route, inst, 0, std::vector<int>{}), ValidationError);
  }
}

TEST_CASE("route debug string shows charge markers") {
  Instance inst = one_task(200.0);
  RouteResult res = route_bnb(inst, std::vector<int>{1}, 0);
  const std::string s = route_debug_string(res.route);
  REQUIRE(s.find("0 ->") == 0);
  REQUIRE(s.find("kJ") != std::string::npos);
}

TEST_CASE("routing problem rejects oversized task sets") {
  Rng rng(3);
  Instance inst = random_instance(rng, 2, 1);
  std::vector<int> too_many(33, 1);
  REQUIRE_THROWS_AS(make_routing_problem(inst, too_many, 0), ValidationError);
}
