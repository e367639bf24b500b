// magnav command-line front end: plan, simulate, sweep, report, validate.

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "magnav/results.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kFailure = 1, kInvalid = 2 };

struct Globals {
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  bool json = false;
};

// Raised for any failure that should end the command with a message.
struct CliError {
  int code;
  std::string kind;
  std::string message;
  ordered_json details = ordered_json::array();
};

fs::path default_out_dir() {
  if (const char* env = std::getenv("MAGNAV_OUT_DIR"); env && *env) return env;
  return "out";
}

void info(const Globals& g, const std::string& msg) {
  if (!g.quiet && !g.json) std::cout << msg << "\n";
}

magnav::Scenario load_or_throw(const fs::path& path) {
  try {
    return magnav::io::load_scenario(path);
  } catch (const magnav::io::ScenarioError& e) {
    CliError err{kInvalid, e.kind() == magnav::io::ScenarioError::Kind::kParse
                               ? "parse_error"
                               : e.kind() == magnav::io::ScenarioError::Kind::kIo
                                     ? "io_error"
                                     : "invalid_scenario",
                 "scenario " + path.string() + " rejected"};
    for (const auto& d : e.diagnostics()) {
      ordered_json j{{"field", d.field}, {"message", d.message}};
      if (d.line >= 0) {
        j["line"] = d.line;
        j["column"] = d.column;
      }
      err.details.push_back(j);
    }
    throw err;
  }
}

ordered_json plan_summary(const magnav::io::Bundle& b) {
  const auto& r = b.plan.report;
  ordered_json j;
  j["scenario"] = b.scenario.name;
  j["status"] = magnav::ilqr::to_string(r.status);
  j["outer_iterations"] = r.outer.size();
  j["inner_iterations"] = r.total_inner_iterations;
  if (!r.outer.empty()) {
    j["cost"] = r.outer.back().cost;
    j["max_violation"] = r.outer.back().max_violation;
  }
  if (!b.plan.trajectory.states.empty()) {
    const auto& xn = b.plan.trajectory.states.back();
    j["final_position_m"] = {xn[0], xn[1], xn[2]};
  }
  return j;
}

magnav::io::Bundle do_plan(const magnav::Scenario& sc, std::uint64_t seed,
                           const fs::path& out, const Globals& g) {
  info(g, "planning '" + sc.name + "' (N=" + std::to_string(sc.horizon) + ")");
  magnav::io::Bundle b;
  b.scenario = sc;
  b.master_seed = seed;
  b.plan = magnav::plan(sc);
  magnav::io::write_bundle(out, b);
  if (b.plan.report.status != magnav::ilqr::SolverStatus::kConverged) {
    CliError err{kFailure, "solver_" + magnav::ilqr::to_string(b.plan.report.status),
                 "planning did not converge: " + b.plan.report.message};
    err.details.push_back(plan_summary(b));
    throw err;
  }
  return b;
}

std::string stats_table(const magnav::sim::StudySummary& s, const magnav::Scenario& sc) {
  std::ostringstream os;
  os << "mode " << magnav::sim::to_string(s.mode) << ", runs " << s.runs
     << ", failed " << s.failed_runs.size() << ", mean terminal error "
     << std::setprecision(4) << s.mean_terminal_error * 100.0 << " cm\n";
  const magnav::Vec3 vals[] = {sc.initial_position,      sc.goal_position,
                               s.terminal_position.mean, s.terminal_position.std,
                               s.terminal_velocity.mean, s.terminal_velocity.std};
  os << std::left << std::setw(38) << "Parameter" << std::right << std::setw(10) << "X"
     << std::setw(10) << "Y" << std::setw(10) << "Z" << "\n";
  for (std::size_t r = 0; r < magnav::io::stats_rows().size(); ++r) {
    os << std::left << std::setw(38) << magnav::io::stats_rows()[r] << std::right
       << std::fixed << std::setprecision(3);
    for (int i = 0; i < 3; ++i) os << std::setw(10) << vals[r][i] * 100.0;
    os << "\n" << std::defaultfloat;
  }
  return os.str();
}

ordered_json study_json(const magnav::sim::StudySummary& s) {
  auto v3 = [](const magnav::Vec3& v) { return ordered_json{v[0], v[1], v[2]}; };
  ordered_json j;
  j["mode"] = magnav::sim::to_string(s.mode);
  j["position_variance"] = s.position_variance;
  j["runs"] = s.runs;
  j["failed_runs"] = s.failed_runs;
  j["failures"] = s.failures;
  j["mean_terminal_error_m"] = s.mean_terminal_error;
  j["mean_goal_error_m"] = s.mean_goal_error;
  j["terminal_position_mean_m"] = v3(s.terminal_position.mean);
  j["terminal_position_std_m"] = v3(s.terminal_position.std);
  j["terminal_velocity_mean_mps"] = v3(s.terminal_velocity.mean);
  j["terminal_velocity_std_mps"] = v3(s.terminal_velocity.std);
  return j;
}

ordered_json run_studies(const magnav::io::Bundle& b, const magnav::sim::Study& study,
                         const fs::path& out, const Globals& g, bool& any_failed) {
  const auto cells =
      magnav::sim::monte_carlo(study, b.plan.trajectory, b.plan.gains, b.scenario);
  ordered_json arr = ordered_json::array();
  for (const auto& s : cells) {
    magnav::io::write_study(out, s, b.scenario);
    any_failed = any_failed || !s.failed_runs.empty();
    info(g, stats_table(s, b.scenario));
    arr.push_back(study_json(s));
  }
  return arr;
}

magnav::io::Bundle bundle_or_plan(const fs::path& input, const std::optional<fs::path>& out,
                                  const Globals& g) {
  if (magnav::io::is_bundle(input)) {
    auto b = magnav::io::load_bundle(input);
    if (g.seed) b.master_seed = *g.seed;
    return b;
  }
  const auto sc = load_or_throw(input);
  return do_plan(sc, g.seed.value_or(sc.noise.seed), out.value_or(default_out_dir()), g);
}

void print_error(const Globals& g, const CliError& e) {
  if (g.json) {
    ordered_json j{{"ok", false},
                   {"error", {{"kind", e.kind}, {"message", e.message}, {"details", e.details}}}};
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::cerr << "error: " << e.message << "\n";
  for (const auto& d : e.details) {
    if (d.contains("field")) {
      std::cerr << "  ";
      if (d.contains("line")) {
        std::cerr << "line " << d["line"].get<int>() << ", column " << d["column"].get<int>()
                  << ": ";
      }
      std::cerr << d["field"].get<std::string>() << ": " << d["message"].get<std::string>()
                << "\n";
    } else {
      std::cerr << "  " << d.dump() << "\n";
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory planning and closed-loop simulation for magnetic capsule navigation"};
  app.set_version_flag("--version", std::string(MAGNAV_VERSION));
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Master seed (overrides the scenario)");
  app.add_flag("--quiet,-q", g.quiet, "Suppress progress output");
  app.add_flag("--json", g.json, "Machine-readable JSON on stdout");

  std::string scenario_path, input_path, report_dir;
  std::optional<fs::path> out_dir;
  std::vector<std::string> modes{"open", "closed"};
  int seeds = 1, runs = 100;
  std::optional<double> noise_var;

  auto* plan_cmd = app.add_subcommand("plan", "Plan a trajectory and write a result bundle");
  plan_cmd->add_option("scenario", scenario_path, "Scenario file")->required();
  plan_cmd->add_option("-o,--out", out_dir, "Output directory (default $MAGNAV_OUT_DIR or ./out)");

  auto* sim_cmd = app.add_subcommand("simulate", "Run the plan against the noisy plant");
  sim_cmd->add_option("input", input_path, "Result bundle directory or scenario file")->required();
  sim_cmd->add_option("--mode", modes, "open, closed, or both")
      ->check(CLI::IsMember({"open", "closed"}))
      ->expected(1, 2);
  sim_cmd->add_option("--seeds", seeds, "Number of seeded runs")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--noise-var", noise_var, "Position noise variance (scenario units)")
      ->check(CLI::NonNegativeNumber);
  sim_cmd->add_option("-o,--out", out_dir, "Output directory (default: the bundle)");

  auto* sweep_cmd = app.add_subcommand("sweep", "Plan, then run open- and closed-loop Monte Carlo");
  sweep_cmd->add_option("scenario", scenario_path, "Scenario file")->required();
  sweep_cmd->add_option("--runs", runs, "Runs per loop mode")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--noise-var", noise_var, "Position noise variance (scenario units)")
      ->check(CLI::NonNegativeNumber);
  sweep_cmd->add_option("-o,--out", out_dir, "Output directory");

  auto* report_cmd = app.add_subcommand("report", "Summarize a result bundle");
  report_cmd->add_option("dir", report_dir, "Result bundle directory")->required();

  auto* validate_cmd = app.add_subcommand("validate", "Check a scenario file");
  validate_cmd->add_option("scenario", scenario_path, "Scenario file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return kInvalid;
  }
  if (*seed_opt) g.seed = seed_value;

  try {
    ordered_json result{{"ok", true}};
    bool any_failed = false;

    if (*validate_cmd) {
      const auto sc = load_or_throw(scenario_path);
      result["scenario"] = sc.name;
      result["initial_joints"] = std::vector<double>(sc.initial_joints->data(),
                                                     sc.initial_joints->data() + magnav::kNumJoints);
      info(g, scenario_path + ": ok (" + sc.name + ")");
    } else if (*plan_cmd) {
      const auto sc = load_or_throw(scenario_path);
      const fs::path out = out_dir.value_or(default_out_dir());
      const auto b = do_plan(sc, g.seed.value_or(sc.noise.seed), out, g);
      result["bundle"] = out.string();
      result["plan"] = plan_summary(b);
      info(g, "converged; bundle written to " + out.string());
    } else if (*sim_cmd) {
      const fs::path in = input_path;
      const fs::path out =
          out_dir.value_or(magnav::io::is_bundle(in) ? in : default_out_dir());
      auto b = bundle_or_plan(in, out, g);
      if (out != in && magnav::io::is_bundle(in)) magnav::io::write_bundle(out, b);
      magnav::sim::Study study;
      study.runs = seeds;
      study.master_seed = b.master_seed;
      study.position_variances = {noise_var.value_or(b.scenario.noise.position_variance)};
      study.modes.clear();
      for (const auto& m : modes) study.modes.push_back(magnav::sim::parse_mode(m));
      study.keep_logs = true;
      result["bundle"] = out.string();
      result["master_seed"] = b.master_seed;
      result["studies"] = run_studies(b, study, out, g, any_failed);
    } else if (*sweep_cmd) {
      const auto sc = load_or_throw(scenario_path);
      const fs::path out = out_dir.value_or(default_out_dir());
      const auto b = do_plan(sc, g.seed.value_or(sc.noise.seed), out, g);
      magnav::sim::Study study;
      study.runs = runs;
      study.master_seed = b.master_seed;
      study.position_variances = {noise_var.value_or(sc.noise.position_variance)};
      result["bundle"] = out.string();
      result["plan"] = plan_summary(b);
      result["studies"] = run_studies(b, study, out, g, any_failed);
    } else if (*report_cmd) {
      const fs::path dir = report_dir;
      const auto b = magnav::io::load_bundle(dir);
      result["plan"] = plan_summary(b);
      result["master_seed"] = b.master_seed;
      ordered_json tables = ordered_json::object();
      std::ostringstream text;
      text << "bundle " << dir.string() << "\n"
           << "scenario " << b.scenario.name << ", seed " << b.master_seed << ", status "
           << magnav::ilqr::to_string(b.plan.report.status) << ", "
           << b.plan.report.outer.size() << " outer iterations\n";
      const auto rep = nlohmann::json::parse(magnav::io::read_file(dir / "report.json"));
      if (!rep["outer"].empty()) {
        text << "final cost " << rep["outer"].back()["cost"].get<double>()
             << ", max violation " << rep["outer"].back()["max_violation"].get<double>()
             << "\n";
      }
      for (const char* mode : {"open", "closed"}) {
        const auto p = dir / (std::string("stats_") + mode + ".csv");
        if (!fs::exists(p)) continue;
        const auto csv = magnav::io::read_file(p);
        tables[mode] = csv;
        text << "\n" << csv;
      }
      result["stats"] = tables;
      info(g, text.str());
    }

    if (any_failed) {
      CliError err{kFailure, "run_failures", "one or more simulation runs failed"};
      if (result.contains("studies")) err.details = result["studies"];
      throw err;
    }
    if (g.json) std::cout << result.dump(2) << "\n";
    return kOk;
  } catch (const CliError& e) {
    print_error(g, e);
    return e.code;
  } catch (const magnav::io::ScenarioError& e) {
    print_error(g, {kInvalid, "invalid_scenario", e.what()});
    return kInvalid;
  } catch (const magnav::io::BundleError& e) {
    print_error(g, {kInvalid, "invalid_bundle", e.what()});
    return kInvalid;
  } catch (const magnav::ContractError& e) {
    print_error(g, {kInvalid, "contract_error", e.what()});
    return kInvalid;
  } catch (const std::exception& e) {
    print_error(g, {kFailure, "runtime_error", e.what()});
    return kFailure;
  }
}
