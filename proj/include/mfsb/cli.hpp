/*
 Copyright 2026 The mfsb Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#ifndef MFSB_CLI_HPP
#define MFSB_CLI_HPP

// Command-line front end: solve, simulate, gap, separation-study, report.
// Exit codes: 0 success, 1 infeasible, 2 usage or input error, 3 numerical failure.

#include "mfsb/log.hpp"
#include "mfsb/scenario_io.hpp"
#include "mfsb/sim.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace mfsb::cli {

enum ExitCode : int { kSuccess = 0, kInfeasible = 1, kUsage = 2, kNumerical = 3 };

/// Thrown for invalid flag combinations detected after parsing.
class UsageError : public Error {
public:
    using Error::Error;
};

struct SolveArgs {
    std::string scenario, out;
    int knots = 101;
    double tol = 1e-6;
    int max_iters = 20;
    int threads = default_threads();
};

struct SimulateArgs {
    std::string scenario, solution;
    int agents = 10000;
    std::uint64_t seed = 1;
    int stride = 100;
    int threads = default_threads();
};

struct GapArgs {
    std::string solution;
    int samples = 200000;
    std::uint64_t seed = 1;
};

struct SeparationArgs {
    std::string scenario, csv;
    std::vector<double> scales{1, 2, 4, 8};
    int samples = 200000;
    std::uint64_t seed = 1;
    int knots = 101;
    double tol = 1e-6;
    int threads = default_threads();
};

struct ReportArgs {
    std::vector<std::string> dirs;
};

namespace detail {

class Stopwatch {
public:
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline std::string fixed(double v, int digits)
{
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

inline SolveOptions solve_options(double tol, int max_iters, int threads)
{
    SolveOptions opt;
    opt.tol.primal = opt.tol.dual = opt.tol.gap = tol;
    opt.max_iterations = max_iters;
    opt.threads = threads;
    return opt;
}

/// The simulated scenario must be the one the bundle was solved for, up to the knot count.
inline Scenario matching_scenario(const std::string& path, const LoadedSolution& loaded)
{
    const Scenario scn = with_knots(parse_scenario(path), loaded.scenario.grid.size());
    if (scenario_to_json(scn) != scenario_to_json(loaded.scenario))
        throw UsageError("scenario " + path + " differs from the one stored in the solution bundle");
    return scn;
}

}  // namespace detail

inline int solve(const SolveArgs& a, std::ostream& out)
{
    const detail::Stopwatch clock;
    const Scenario scn = with_knots(parse_scenario(a.scenario), a.knots);
    log::info("solving ", a.scenario, " with ", scn.rho0.size(), "x", scn.rho1.size(), " components, ",
              scn.num_routes(), " route(s), ", a.knots, " knots");
    const MfsbResult res = solve_scenario(scn, detail::solve_options(a.tol, a.max_iters, a.threads));
    write_results({scn, res}, a.out);
    out << "status: " << res.status << "\n";
    out << "cost upper bound J_OT: " << csv::num(res.solution.bound()) << "\n";
    out << "iterations: " << res.iterations.size() << "\n";
    if (!scn.constrained())
        out << "decomposition residuals: mean " << res.residual_mean << ", feedforward " << res.residual_feedforward << "\n";
    out << "wrote " << a.out << " in " << detail::fixed(clock.seconds(), 2) << " s\n";
    if (res.status == "aborted") log::error("alternation aborted; the bundle holds the last successful iterate");
    return kSuccess;
}

inline int simulate(const SimulateArgs& a, std::ostream& out)
{
    const detail::Stopwatch clock;
    const LoadedSolution loaded = load_solution(a.solution);
    const Scenario scn = detail::matching_scenario(a.scenario, loaded);
    const SwarmRun run = simulate_swarm(scn, loaded.solution, a.agents, a.seed, a.threads);
    const SwarmMetrics m = estimate_metrics(run, scn);
    const BoundCheck check = estimate_bound_check(m, loaded.solution);

    const std::filesystem::path dir(a.solution);
    {
        std::ostringstream os;
        write_trajectories_csv(os, run, a.stride);
        write_text(dir / "trajectories.csv", os.str());
    }
    {
        std::ostringstream os;
        csv::write_row(os, {"knot", "time", "empirical", "predicted"});
        for (int k = 0; k < run.grid.size(); ++k)
            csv::write_row(os, {std::to_string(k), csv::num(run.grid[k]), csv::num(m.violation[k]),
                                csv::num(scn.constrained() ? predicted_violation(scn, loaded.solution, k) : 0.0)});
        write_text(dir / "violation.csv", os.str());
    }
    Json sim{{"agents", a.agents},
             {"seed", a.seed},
             {"trajectory_stride", a.stride},
             {"total_cost", m.cost},
             {"total_cost_stderr", m.cost_stderr},
             {"bound_holds", check.holds},
             {"max_violation", m.max_violation},
             {"max_violation_time", run.grid[m.max_violation_knot]},
             {"terminal_frequency", m.terminal_frequency},
             {"terminal_mean_error", m.terminal_mean_error}};
    update_summary(dir, Json{{"simulation", sim}});

    out << "total cost J_hat: " << csv::num(m.cost) << " +- " << csv::num(m.cost_stderr) << "\n";
    out << "cost upper bound J_OT: " << csv::num(check.bound) << "\n";
    out << "J_hat <= J_OT + 3 se: " << (check.holds ? "holds" : "violated") << "\n";
    if (scn.constrained())
        out << "max_t P(x_t in obstacle): " << csv::num(m.max_violation) << " at t = " << run.grid[m.max_violation_knot]
            << "\n";
    out << "simulated " << a.agents << " agents in " << detail::fixed(clock.seconds(), 2) << " s\n";
    return kSuccess;
}

inline int gap(const GapArgs& a, std::ostream& out)
{
    const detail::Stopwatch clock;
    const LoadedSolution loaded = load_solution(a.solution);
    const GapEstimate g = bound_and_gap(loaded.solution, a.samples, a.seed);
    update_summary(a.solution, Json{{"gap", {{"samples", a.samples},
                                             {"seed", a.seed},
                                             {"estimate", g.gap},
                                             {"standard_error", g.standard_error}}}});
    out << "cost upper bound J_OT: " << csv::num(g.bound) << "\n";
    out << "gap estimate: " << csv::num(g.gap) << " +- " << csv::num(g.standard_error) << "\n";
    out << "gap / J_OT: " << csv::num(g.bound > 0.0 ? g.gap / g.bound : 0.0) << "\n";
    out << "estimated in " << detail::fixed(clock.seconds(), 2) << " s\n";
    return kSuccess;
}

struct SeparationRow {
    double scale, bound, gap, standard_error;
};

/// Scales every boundary component mean by each factor and estimates gap / J_OT.
inline std::vector<SeparationRow> separation_study(const Scenario& base, const std::vector<double>& scales,
                                                   const SolveOptions& opt, int samples, std::uint64_t seed)
{
    if (base.constrained()) throw ConfigurationError("separation study needs a scenario without obstacles");
    std::vector<SeparationRow> rows;
    for (double c : scales) {
        if (!(c > 0.0)) throw InputError("separation scales must be positive");
        Scenario scn = base;
        const auto scaled = [c](const GaussianMixture& g) {
            std::vector<Gaussian> comps;
            for (const auto& x : g.components()) comps.emplace_back(c * x.mean(), x.cov());
            return GaussianMixture(g.weights(), comps);
        };
        scn.rho0 = scaled(base.rho0);
        scn.rho1 = scaled(base.rho1);
        const MfsbResult res = solve_scenario(scn, opt);
        const GapEstimate g = bound_and_gap(res.solution, samples, seed);
        rows.push_back({c, g.bound, g.gap, g.standard_error});
    }
    return rows;
}

inline void write_separation_csv(std::ostream& os, const std::vector<SeparationRow>& rows)
{
    csv::write_row(os, {"scale", "J_OT", "gap", "gap_stderr", "gap_ratio"});
    for (const auto& r : rows)
        csv::write_row(os, {csv::num(r.scale), csv::num(r.bound), csv::num(r.gap), csv::num(r.standard_error),
                            csv::num(r.gap / r.bound)});
}

inline int separation(const SeparationArgs& a, std::ostream& out)
{
    const detail::Stopwatch clock;
    const Scenario base = with_knots(parse_scenario(a.scenario), a.knots);
    const auto rows =
        separation_study(base, a.scales, detail::solve_options(a.tol, 20, a.threads), a.samples, a.seed);
    out << std::left << std::setw(8) << "scale" << std::setw(16) << "J_OT" << std::setw(16) << "gap" << std::setw(14)
        << "stderr" << "gap/J_OT\n";
    for (const auto& r : rows)
        out << std::left << std::setw(8) << r.scale << std::setw(16) << r.bound << std::setw(16) << r.gap
            << std::setw(14) << r.standard_error << r.gap / r.bound << "\n";
    if (!a.csv.empty()) {
        std::ostringstream os;
        write_separation_csv(os, rows);
        write_text(a.csv, os.str());
    }
    out << "finished in " << detail::fixed(clock.seconds(), 2) << " s\n";
    return kSuccess;
}

/// Plain-text table with one column per bundle.
inline std::string render_report(const std::vector<std::string>& dirs)
{
    const auto cell = [](const Json& s, const char* section, const char* key, const char* se_key) -> std::string {
        if (!s.contains(section)) return "n/a";
        const Json& x = s[section];
        std::string v = detail::fixed(x[key].get<double>(), 2);
        if (se_key != nullptr) v += " +- " + detail::fixed(x[se_key].get<double>(), 2);
        return v;
    };
    const auto percent = [](double p) { return detail::fixed(100.0 * p, 3) + "%"; };
    std::vector<std::string> head{""};
    std::vector<std::vector<std::string>> rows{{"Total Cost J"},
                                               {"Cost Upper Bound"},
                                               {"Gap Estimate"},
                                               {"max_t P(x_t not in X)"},
                                               {"Predicted Violation"},
                                               {"Iterations"},
                                               {"Status"}};
    for (const auto& d : dirs) {
        const Json s = read_summary(d);
        head.push_back(std::filesystem::path(d).filename().string());
        rows[0].push_back(cell(s, "simulation", "total_cost", "total_cost_stderr"));
        rows[1].push_back(detail::fixed(s.at("cost_upper_bound").get<double>(), 2));
        rows[2].push_back(cell(s, "gap", "estimate", "standard_error"));
        rows[3].push_back(s.contains("simulation") ? percent(s["simulation"]["max_violation"].get<double>()) : "n/a");
        rows[4].push_back(percent(s.at("predicted_max_violation").get<double>()));
        rows[5].push_back(std::to_string(s.at("iterations").size()));
        rows[6].push_back(s.at("status").get<std::string>());
    }
    std::vector<std::size_t> width(head.size(), 0);
    const auto widen = [&](const std::vector<std::string>& r) {
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    };
    widen(head);
    for (const auto& r : rows) widen(r);
    std::ostringstream os;
    const auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t c = 0; c < r.size(); ++c)
            os << (c == 0 ? "" : "  ") << (c == 0 ? std::left : std::right) << std::setw(static_cast<int>(width[c]))
               << r[c];
        os << "\n";
    };
    line(head);
    for (const auto& r : rows) line(r);
    return os.str();
}

inline int report(const ReportArgs& a, std::ostream& out)
{
    out << render_report(a.dirs);
    return kSuccess;
}

/// Parses argv, dispatches, and maps failures to exit codes.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Mean-field Schroedinger bridge solver for Gaussian-mixture boundary distributions"};
    app.name("mfsb");
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);
    app.footer("Exit codes: 0 success, 1 infeasible, 2 usage or input error, 3 numerical failure.\n"
               "Logging: MFSB_LOG=error|info|debug.");

    SolveArgs sa;
    auto* solve_cmd = app.add_subcommand("solve", "Solve a scenario and write a result bundle");
    solve_cmd->add_option("--scenario", sa.scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    solve_cmd->add_option("--out", sa.out, "Output bundle directory")->required();
    solve_cmd->add_option("--knots", sa.knots, "Number of time knots")->capture_default_str()->check(CLI::Range(2, 100000));
    solve_cmd->add_option("--tol", sa.tol, "Conic primal/dual/gap tolerance")
        ->capture_default_str()
        ->check(CLI::Range(1e-14, 1e-1));
    solve_cmd->add_option("--max-iters", sa.max_iters, "Alternation iteration cap")
        ->capture_default_str()
        ->check(CLI::Range(1, 1000));
    solve_cmd->add_option("--threads", sa.threads, "Worker threads")->capture_default_str()->check(CLI::Range(1, 4096));
    solve_cmd->footer("Bundle: scenario.json, plan.csv, policies/, flow/, meanfield.csv, iterations.csv, summary.json,\n"
                      "manifest.json. See docs/formats.md.");

    SimulateArgs ma;
    auto* sim_cmd = app.add_subcommand("simulate", "Simulate an agent swarm under a solved policy");
    sim_cmd->add_option("--scenario", ma.scenario, "Scenario JSON file used for the solve")
        ->required()
        ->check(CLI::ExistingFile);
    sim_cmd->add_option("--solution", ma.solution, "Result bundle directory")->required()->check(CLI::ExistingDirectory);
    sim_cmd->add_option("--agents", ma.agents, "Number of agents")->capture_default_str()->check(CLI::Range(2, 100000000));
    sim_cmd->add_option("--seed", ma.seed, "Random seed")->capture_default_str();
    sim_cmd->add_option("--trajectory-stride", ma.stride, "Write every k-th agent to trajectories.csv")
        ->capture_default_str()
        ->check(CLI::Range(1, 100000000));
    sim_cmd->add_option("--threads", ma.threads, "Worker threads")->capture_default_str()->check(CLI::Range(1, 4096));
    sim_cmd->footer("Adds trajectories.csv and violation.csv to the bundle and a \"simulation\" record to summary.json.");

    GapArgs ga;
    auto* gap_cmd = app.add_subcommand("gap", "Estimate the tightness gap of the cost upper bound");
    gap_cmd->add_option("--solution", ga.solution, "Result bundle directory")->required()->check(CLI::ExistingDirectory);
    gap_cmd->add_option("--samples", ga.samples, "Monte-Carlo samples")
        ->capture_default_str()
        ->check(CLI::Range(1, 1000000000));
    gap_cmd->add_option("--seed", ga.seed, "Random seed")->capture_default_str();
    gap_cmd->footer("Adds a \"gap\" record to summary.json.");

    SeparationArgs pa;
    auto* sep_cmd = app.add_subcommand("separation-study", "Gap versus component separation");
    sep_cmd->add_option("--scenario", pa.scenario, "Scenario JSON file without obstacles")
        ->required()
        ->check(CLI::ExistingFile);
    sep_cmd->add_option("--scales", pa.scales, "Comma-separated mean scale factors")
        ->delimiter(',')
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sep_cmd->add_option("--samples", pa.samples, "Monte-Carlo samples per scale")
        ->capture_default_str()
        ->check(CLI::Range(1, 1000000000));
    sep_cmd->add_option("--seed", pa.seed, "Random seed")->capture_default_str();
    sep_cmd->add_option("--knots", pa.knots, "Number of time knots")->capture_default_str()->check(CLI::Range(2, 100000));
    sep_cmd->add_option("--tol", pa.tol, "Conic primal/dual/gap tolerance")
        ->capture_default_str()
        ->check(CLI::Range(1e-14, 1e-1));
    sep_cmd->add_option("--threads", pa.threads, "Worker threads")->capture_default_str()->check(CLI::Range(1, 4096));
    sep_cmd->add_option("--csv", pa.csv, "Also write the table as CSV (scale, J_OT, gap, gap_stderr, gap_ratio)");

    ReportArgs ra;
    auto* report_cmd = app.add_subcommand("report", "Summary table over one or more result bundles");
    report_cmd->add_option("--out", ra.dirs, "Result bundle directories")->required()->check(CLI::ExistingDirectory);
    report_cmd->footer("Rows: Total Cost J (simulated, +- standard error), Cost Upper Bound, Gap Estimate,\n"
                       "max_t P(x_t not in X), Predicted Violation, Iterations, Status.");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kSuccess : kUsage;
    }

    try {
        if (*solve_cmd) return solve(sa, out);
        if (*sim_cmd) return simulate(ma, out);
        if (*gap_cmd) return gap(ga, out);
        if (*sep_cmd) return separation(pa, out);
        return report(ra, out);
    } catch (const SolveError& e) {
        err << "error: " << e.what() << "\n";
        return e.infeasible() ? kInfeasible : kNumerical;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const SchemaError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const ConfigurationError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const ConditioningError& e) {
        err << "error: " << e.what() << " (knot " << e.knot() << ")\n";
        return kNumerical;
    } catch (const DivergenceError& e) {
        err << "error: " << e.what() << " (knot " << e.knot() << ", agent " << e.agent() << ")\n";
        return kNumerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kNumerical;
    }
}

}  // namespace mfsb::cli

#endif  // MFSB_CLI_HPP
