// mht — energy-aware multi-robot task assignment toolkit.
//
// Subcommands: derive, solve, perturb, warm, oracle, baseline, experiment.
// Exit codes: 0 success, 1 no feasible solution, 2 usage or config error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mht/experiment.hpp"
#include "mht/instance.hpp"
#include "mht/io.hpp"
#include "mht/mcts.hpp"
#include "mht/oracle.hpp"
#include "mht/perturb.hpp"
#include "mht/routing.hpp"
#include "mht/util.hpp"
#include "mht/warm.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInfeasible = 1;
constexpr int kUsage = 2;

struct GlobalOpts {
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> budget_iters;
  std::optional<std::uint64_t> budget_evals;
  std::optional<double> budget_seconds;
  std::optional<double> routing_cap_ms;
  double gamma = std::sqrt(0.5);
  int rollouts = 20;
  double k = 0.05;

  mht::SolverConfig solver() const {
    mht::SolverConfig cfg;
    cfg.seed = seed;
    cfg.gamma = gamma;
    cfg.rollouts = rollouts;
    if (budget_iters) cfg.budget.iterations = *budget_iters;
    if (budget_evals) cfg.budget.evaluations = *budget_evals;
    if (budget_seconds) cfg.budget.wall_seconds = *budget_seconds;
    if (routing_cap_ms) cfg.routing.wall_seconds = *routing_cap_ms / 1000.0;
    return cfg;
  }
};

void add_global_flags(CLI::App& app, GlobalOpts& g) {
  app.add_option("--seed", g.seed, "RNG seed");
  app.add_option("--budget-iters", [&g](const CLI::results_t& r) {
        g.budget_iters = std::stoull(r[0]);
        return true;
      }, "MCTS iteration budget")->expected(1);
  app.add_option("--budget-evals", [&g](const CLI::results_t& r) {
        g.budget_evals = std::stoull(r[0]);
        return true;
      }, "MCTS evaluation budget")->expected(1);
  app.add_option("--budget-seconds", [&g](const CLI::results_t& r) {
        g.budget_seconds = std::stod(r[0]);
        return true;
      }, "MCTS wall-clock budget (s)")->expected(1);
  app.add_option("--routing-cap-ms", [&g](const CLI::results_t& r) {
        g.routing_cap_ms = std::stod(r[0]);
        return true;
      }, "per-robot routing wall cap (ms)")->expected(1);
  app.add_option("--gamma", g.gamma, "LCB exploration weight");
  app.add_option("--rollouts", g.rollouts, "rollouts per evaluation (r)");
  app.add_option("--k", g.k, "warm-restart leaf re-evaluation fraction");
}

void print_incumbent(const std::optional<mht::Incumbent>& inc) {
  if (!inc) {
    std::cout << "incumbent: none\n";
    return;
  }
  std::cout << "incumbent: " << mht::dtos(inc->cost_kj) << " kJ at evaluation "
            << inc->at_evaluations << " (" << mht::dtos(inc->at_wall_seconds) << " s)\n";
  std::cout << "assignment (robot index per task):";
  for (int r : inc->assignment) std::cout << ' ' << r;
  std::cout << '\n';
  for (std::size_t r = 0; r < inc->routes.size(); ++r)
    std::cout << "robot[" << r << "] " << mht::route_debug_string(inc->routes[r]) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"energy-aware multi-robot pickup-and-delivery solver"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOpts g;
  add_global_flags(app, g);

  // --- derive ---------------------------------------------------------------
  auto* derive = app.add_subcommand("derive", "build an instance from a TSPLIB point file");
  std::string derive_tsp, derive_out = "instance.json", derive_name;
  int derive_points = 0, derive_robots = 2;
  double derive_battery = 150.0, derive_capacity = 10.0, derive_mass = 1.0;
  derive->add_option("tsp", derive_tsp, "TSPLIB node-coordinate file")->required();
  derive->add_option("--out", derive_out, "output instance path");
  derive->add_option("--points", derive_points, "use only the first N points (0 = all)");
  derive->add_option("--robots", derive_robots, "fleet size (one shared type)");
  derive->add_option("--battery", derive_battery, "battery capacity per robot (kJ)");
  derive->add_option("--capacity", derive_capacity, "payload capacity per robot");
  derive->add_option("--mass", derive_mass, "mass per task commodity");
  derive->add_option("--name", derive_name, "instance name override");

  // --- solve ----------------------------------------------------------------
  auto* solve = app.add_subcommand("solve", "nominal MCTS solve; emits tree + trace");
  std::string solve_instance, solve_tree = "nominal.tree", solve_trace = "nominal_trace.csv";
  solve->add_option("instance", solve_instance, "instance JSON")->required();
  solve->add_option("--tree", solve_tree, "output tree snapshot path");
  solve->add_option("--trace", solve_trace, "output convergence trace CSV");

  // --- perturb ----------------------------------------------------------------
  auto* perturb = app.add_subcommand("perturb", "apply perturbation specs to an instance");
  std::string perturb_instance, perturb_out = "perturbed.json";
  std::vector<std::string> perturb_specs;
  perturb->add_option("instance", perturb_instance, "instance JSON")->required();
  perturb->add_option("--spec", perturb_specs, "perturbation spec (repeatable)")->required();
  perturb->add_option("--out", perturb_out, "output instance path");

  // --- warm -------------------------------------------------------------------
  auto* warm = app.add_subcommand("warm", "warm-restart from a nominal tree on a perturbed instance");
  std::string warm_tree, warm_instance, warm_out_tree = "warm.tree", warm_trace = "warm_trace.csv";
  bool warm_replay = false;
  warm->add_option("tree", warm_tree, "nominal tree snapshot")->required();
  warm->add_option("instance", warm_instance, "perturbed instance JSON")->required();
  warm->add_option("--tree-out", warm_out_tree, "output tree snapshot path");
  warm->add_option("--trace", warm_trace, "output convergence trace CSV");
  warm->add_flag("--replay", warm_replay, "replay-stable leaf completions");

  // --- oracle -----------------------------------------------------------------
  auto* oracle = app.add_subcommand("oracle", "exhaustive assignment enumeration");
  std::string oracle_instance, oracle_out;
  std::uint64_t oracle_cap = 1ull << 20;
  oracle->add_option("instance", oracle_instance, "instance JSON")->required();
  oracle->add_option("--cap", oracle_cap, "max assignments to enumerate");
  oracle->add_option("--out", oracle_out, "write full evaluation table CSV");

  // --- baseline -----------------------------------------------------------------
  auto* baseline = app.add_subcommand("baseline", "decentralized rerouting of affected robots");
  std::string base_tree, base_nominal, base_instance, base_spec, base_trace;
  baseline->add_option("tree", base_tree, "nominal tree snapshot (carries the incumbent)")->required();
  baseline->add_option("nominal", base_nominal, "nominal instance JSON")->required();
  baseline->add_option("instance", base_instance, "perturbed instance JSON")->required();
  baseline->add_option("--spec", base_spec, "perturbation spec that produced the instance")->required();
  baseline->add_option("--trace", base_trace, "output trace CSV");

  // --- experiment -----------------------------------------------------------------
  auto* experiment = app.add_subcommand("experiment", "run a full experiment spec");
  std::string exp_spec;
  experiment->add_option("spec", exp_spec, "experiment spec JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*derive) {
      mht::PointCloud cloud = mht::load_tsplib_file(derive_tsp);
      if (derive_points > 0) {
        if (static_cast<std::size_t>(derive_points) > cloud.points.size())
          throw mht::ValidationError("--points exceeds file point count");
        cloud.points.resize(static_cast<std::size_t>(derive_points));
      }
      if (derive_robots < 1) throw mht::ValidationError("--robots must be >= 1");
      mht::Fleet fleet;
      fleet.types.push_back({1, derive_battery, derive_capacity});
      for (int r = 0; r < derive_robots; ++r) fleet.robots.push_back({r + 1, 1});
      const int n = (static_cast<int>(cloud.points.size()) - 1) / 2;
      std::vector<double> masses(static_cast<std::size_t>(n), derive_mass);
      mht::Instance inst = mht::derive_instance(cloud, fleet, masses);
      if (!derive_name.empty()) inst.name = derive_name;
      mht::save_instance(derive_out, inst);
      std::cout << "instance '" << inst.name << "': " << inst.n << " tasks, "
                << inst.fleet.size() << " robots, depot at source point "
                << inst.locations[0].id << " -> " << derive_out << '\n';
      return kOk;
    }

    if (*solve) {
      const mht::Instance inst = mht::load_instance(solve_instance);
      mht::SolverConfig cfg = g.solver();
      if (cfg.budget.unbounded())
        throw mht::ValidationError(
            "solve needs a budget: --budget-iters, --budget-evals, or --budget-seconds");
      const bool zero_budget = (cfg.budget.iterations && *cfg.budget.iterations == 0) ||
                               (cfg.budget.evaluations && *cfg.budget.evaluations == 0);
      mht::SearchResult res = mht::search(inst, cfg);
      mht::save_tree(solve_tree, res.tree, res.incumbent);
      mht::write_trace(solve_trace, res.trace, inst.fleet);
      std::cout << "searched " << res.iterations << " iterations / " << res.evaluations
                << " evaluations in " << mht::dtos(res.wall_seconds) << " s\n";
      print_incumbent(res.incumbent);
      if (!res.incumbent) {
        if (zero_budget) {
          std::cerr << "warning: zero budget, no evaluations performed\n";
          return kOk;
        }
        std::cerr << "no feasible assignment found within budget\n";
        return kInfeasible;
      }
      return kOk;
    }

    if (*perturb) {
      mht::Instance inst = mht::load_instance(perturb_instance);
      for (const std::string& spec : perturb_specs)
        inst = mht::apply_perturbation(inst, mht::parse_perturbation(spec));
      mht::save_instance(perturb_out, inst);
      std::cout << "wrote " << perturb_out << " (history:";
      for (const auto& h : inst.history) std::cout << " [" << h << "]";
      std::cout << ")\n";
      return kOk;
    }

    if (*warm) {
      const mht::TreeSnapshot snap = mht::load_tree_file(warm_tree);
      const mht::Instance inst = mht::load_instance(warm_instance);
      mht::check_tree_instance(snap.tree, inst);
      mht::WarmConfig wcfg;
      wcfg.k = g.k;
      wcfg.rollouts = g.rollouts;
      wcfg.seed = g.seed;
      wcfg.replay_completions = warm_replay;
      mht::SolverConfig rc = g.solver();
      wcfg.resume_budget = rc.budget;
      rc.budget = {};
      mht::WarmResult res = mht::warm_solve(snap.tree, inst, wcfg, rc);
      mht::save_tree(warm_out_tree, res.tree, res.incumbent);
      mht::write_trace(warm_trace, res.trace, inst.fleet);
      std::cout << "re-evaluated " << res.reevaluated.size() << " leaves ("
                << res.reeval_evaluations << " evaluations), resumed for "
                << res.resume_evaluations << " evaluations in " << mht::dtos(res.wall_seconds)
                << " s\n";
      print_incumbent(res.incumbent);
      return res.incumbent ? kOk : kInfeasible;
    }

    if (*oracle) {
      const mht::Instance inst = mht::load_instance(oracle_instance);
      const mht::OracleResult res = mht::exhaustive_solve(inst, oracle_cap);
      if (!oracle_out.empty()) {
        std::ofstream out(oracle_out);
        if (!out) throw mht::ParseError("cannot write '" + oracle_out + "'");
        mht::write_oracle_csv(out, res, inst);
      }
      std::cout << "enumerated " << res.table.size() << " assignments\n";
      if (!res.any_feasible) {
        std::cout << "no feasible assignment\n";
        return kInfeasible;
      }
      std::cout << "optimum: " << mht::dtos(res.optimal_cost) << " kJ, " << res.optimal.size()
                << " optimal assignment(s)\n";
      for (const auto& a : res.optimal) {
        std::cout << "  assignment:";
        for (int r : a) std::cout << ' ' << r;
        std::cout << '\n';
      }
      return kOk;
    }

    if (*baseline) {
      const mht::TreeSnapshot snap = mht::load_tree_file(base_tree);
      if (!snap.incumbent)
        throw mht::ValidationError("tree snapshot carries no incumbent to adapt");
      const mht::Instance nominal = mht::load_instance(base_nominal);
      mht::check_tree_instance(snap.tree, nominal);
      const mht::Instance perturbed = mht::load_instance(base_instance);
      const auto affected =
          mht::affected_robots(mht::parse_perturbation(base_spec), *snap.incumbent, nominal);
      std::cout << "affected robots (index):";
      for (int r : affected) std::cout << ' ' << r;
      std::cout << '\n';
      mht::AdaptResult res = mht::decentralized_adapt(*snap.incumbent, perturbed, affected);
      if (!base_trace.empty()) {
        mht::ConvergenceTrace trace;
        if (res.feasible)
          trace.push_back({"decentralized", 0, 0.0, res.incumbent->cost_kj,
                           res.incumbent->assignment});
        mht::write_trace(base_trace, trace, perturbed.fleet);
      }
      if (!res.feasible) {
        std::cout << "decentralized adaptation infeasible: " << res.diagnostic << '\n';
        return kInfeasible;
      }
      std::cout << "rerouted " << res.rerouted.size() << " robot(s) with " << res.routing_calls
                << " routing call(s)\n";
      print_incumbent(res.incumbent);
      return kOk;
    }

    if (*experiment) {
      const mht::ExperimentSpec spec = mht::load_experiment_spec(exp_spec);
      const mht::ExperimentResult res = mht::run_experiment(spec);
      int failures = 0;
      for (const auto& c : res.cells)
        if (!c.ok) {
          ++failures;
          std::cerr << "cell failed: " << c.perturbation << '/' << c.strategy << " rep "
                    << c.repetition << ": " << c.message << '\n';
        }
      std::cout << res.cells.size() << " cells (" << failures << " failed) -> "
                << res.output_dir << '\n'
                << "manifest: " << res.manifest_path << '\n';
      return failures == 0 ? kOk : kInfeasible;
    }
  } catch (const mht::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const mht::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
