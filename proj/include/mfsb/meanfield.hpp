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
#ifndef MFSB_MEANFIELD_HPP
#define MFSB_MEANFIELD_HPP

// Mean-field Schroedinger bridge between Gaussian mixtures.
//
// Unconstrained: the mean problem on (A + Abar, B) is solved in closed form,
// the conditional problems are posed on zero-mean shifted boundaries under
// (A, B) and reassembled around the mean trajectory.
//
// Constrained: for a fixed plan the conditional problems are coupled through
// xbar_k = sum lambda mu_k, which is affine in the block means, giving one
// conic program. The plan and the policies are then updated in alternation.

#include "mfsb/chance.hpp"
#include "mfsb/conic.hpp"
#include "mfsb/dynamics.hpp"
#include "mfsb/errors.hpp"
#include "mfsb/gaussmix.hpp"
#include "mfsb/log.hpp"
#include "mfsb/mixture.hpp"
#include "mfsb/ocs.hpp"
#include "mfsb/parallel.hpp"
#include "mfsb/transport.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace mfsb {

/// Convex polytope obstacle; each face a'x <= beta is the free side of one wall.
struct Obstacle {
    std::vector<HalfSpace> faces;

    /// Inside means every face is violated.
    bool contains(const Vec& x) const
    {
        for (const auto& f : faces)
            if (f.a.dot(x) <= f.beta) return false;
        return !faces.empty();
    }
};

/// Homotopy class: the face enforced for each obstacle.
struct Route {
    std::string name;
    std::vector<int> face_choice;
};

struct ChanceConfig {
    double total_budget = 0.0;
    std::optional<double> per_face_budget;
    KnotWindow window;
};

struct Scenario {
    LTVSystem sys;
    TimeGrid grid;
    GaussianMixture rho0;
    GaussianMixture rho1;
    std::vector<Obstacle> obstacles;
    std::vector<Route> routes;  // at least one; "direct" when there are no obstacles
    ChanceConfig chance;

    bool constrained() const { return !obstacles.empty(); }
    int num_routes() const { return static_cast<int>(routes.size()); }

    /// Enforced half-spaces of a route, one per obstacle, with the scenario window.
    std::vector<HalfSpace> route_faces(int r) const
    {
        std::vector<HalfSpace> out;
        const Route& route = routes.at(static_cast<std::size_t>(r));
        for (std::size_t o = 0; o < obstacles.size(); ++o) {
            HalfSpace h = obstacles[o].faces.at(static_cast<std::size_t>(route.face_choice.at(o)));
            h.window = chance.window;
            out.push_back(h);
        }
        return out;
    }

    /// Violation budgets per (component, face) for this scenario.
    Allocation allocation() const
    {
        ChanceSpec spec;
        const int faces = static_cast<int>(obstacles.size());
        spec.total_budget = chance.total_budget;
        if (chance.per_face_budget) spec.per_face_budget.assign(static_cast<std::size_t>(faces), *chance.per_face_budget);
        return allocate_budget(spec, rho0.size() * rho1.size(), faces);
    }

    void validate() const
    {
        check_compatible(sys, grid);
        if (rho0.dim() != sys.n() || rho1.dim() != sys.n())
            throw ConfigurationError("boundary mixtures do not match the state dimension");
        if (routes.empty()) throw ConfigurationError("scenario needs at least one route");
        for (const auto& o : obstacles) {
            if (o.faces.empty()) throw ConfigurationError("obstacle without faces");
            for (const auto& f : o.faces)
                if (f.a.size() != sys.n()) throw ConfigurationError("obstacle face does not match the state dimension");
        }
        for (const auto& r : routes) {
            if (r.face_choice.size() != obstacles.size())
                throw ConfigurationError("route " + r.name + " must pick one face per obstacle");
            for (std::size_t o = 0; o < obstacles.size(); ++o)
                if (r.face_choice[o] < 0 || r.face_choice[o] >= static_cast<int>(obstacles[o].faces.size()))
                    throw ConfigurationError("route " + r.name + " picks a face that does not exist");
        }
    }
};

/// A = Abar = B = D = I_2.
inline LTVSystem problem1_system(int knots = 101)
{
    const Mat I = Mat::Identity(2, 2);
    return LTVSystem::constant(I, I, I, I, knots);
}

/// A = [[0, I], [I, 0]], Abar = [[0, 0], [-I, 0]], B = [0; I], D = I_4, reproduced as printed.
inline LTVSystem problem2_system(int knots = 51)
{
    const Mat I = Mat::Identity(2, 2);
    Mat A = Mat::Zero(4, 4), Abar = Mat::Zero(4, 4), B = Mat::Zero(4, 2);
    A.topRightCorner(2, 2) = I;
    A.bottomLeftCorner(2, 2) = I;
    Abar.bottomLeftCorner(2, 2) = -I;
    B.bottomRows(2) = I;
    return LTVSystem::constant(A, Abar, B, Mat::Identity(4, 4), knots);
}

struct SolveOptions {
    conic::Tolerances tol = default_ocs_tolerances();
    int threads = default_threads();
    int max_iterations = 20;
    double rel_tol = 1e-4;
    bool relinearize = false;
};

struct MfsbResult {
    MixtureSolution solution;
    std::vector<double> iterations;  // J_OT after each plan/policy round
    std::string status;              // "optimal", "converged", "iteration_cap", "aborted"
    double mean_cost = 0.0;          // unconstrained path: cost of ubar
    double residual_mean = 0.0;         // unconstrained path: max_k |sum lambda mu~|
    double residual_feedforward = 0.0;  // unconstrained path: max_k |sum lambda v~|
    std::vector<std::vector<LinearizedConstraint>> rows;  // constrained path: linearized rows per block
};

/// max_k |sum lambda mu_k| and max_k |sum lambda v_k| for zero-mean conditional policies.
inline std::pair<double, double> decomposition_residuals(const std::vector<ConditionalPolicy>& tilde,
                                                        const Tensor3<double>& lambda)
{
    const int T = tilde.front().knots();
    double rm = 0.0, rv = 0.0;
    for (int k = 0; k < T; ++k) {
        Vec sm = Vec::Zero(tilde.front().mu[k].size());
        Vec sv = Vec::Zero(tilde.front().v[k].size());
        for (int i = 0; i < lambda.rows(); ++i)
            for (int j = 0; j < lambda.cols(); ++j) {
                const double l = lambda(i, j, 0);
                const auto& p = tilde[static_cast<std::size_t>(i * lambda.cols() + j)];
                sm += l * p.mu[k];
                sv += l * p.v[k];
            }
        rm = std::max(rm, sm.norm());
        // the final knot carries no control
        if (k + 1 < T) rv = std::max(rv, sv.norm());
    }
    return {rm, rv};
}

/// Conditional problems of the decomposition on zero-mean boundaries.
struct ShiftedGrid {
    MeanSteering mean;
    std::vector<ConditionalPolicy> tilde;  // row-major (i, j)
    CostTensor costs;                      // J~_ij
};

inline ShiftedGrid solve_shifted_grid(const Scenario& scn, const SolveOptions& opt)
{
    scn.validate();
    const Vec xhat0 = scn.rho0.mean(), xhat1 = scn.rho1.mean();
    ShiftedGrid out;
    out.mean = mean_feedforward_discrete(scn.sys, scn.grid, xhat0, xhat1, true);
    require_controllable(TransitionBundle(scn.sys, scn.grid, false), "(A, B)");
    const int N0 = scn.rho0.size(), N1 = scn.rho1.size();
    out.tilde.resize(static_cast<std::size_t>(N0 * N1));
    out.costs = CostTensor(N0, N1, 1);
    parallel_for(N0 * N1, opt.threads, [&](int p) {
        const int i = p / N1, j = p % N1;
        const Gaussian& a = scn.rho0.component(i);
        const Gaussian& b = scn.rho1.component(j);
        const OcsProblem prob{scn.sys, scn.grid, Gaussian(a.mean() - xhat0, a.cov()), Gaussian(b.mean() - xhat1, b.cov()),
                              {}, {}};
        try {
            ConditionalPolicy pol = solve_ocs(prob, opt.tol);
            // Without chance rows the mean part decouples; use its exact minimizer.
            const MeanSteering ms = mean_feedforward_discrete(scn.sys, scn.grid, prob.initial.mean(),
                                                              prob.terminal.mean(), false);
            for (int k = 0; k + 1 < pol.knots(); ++k) pol.cost -= scn.grid.dt() * pol.v[k].squaredNorm();
            pol.cost += ms.cost;
            for (int k = 0; k < pol.knots(); ++k) {
                pol.mu[k] = ms.mu[k];
                if (k + 1 < pol.knots()) pol.v[k] = ms.v[k];
            }
            out.tilde[p] = std::move(pol);
        } catch (const SolveError& e) {
            throw SolveError("conditional problem (" + std::to_string(i) + ", " + std::to_string(j) + "): " + e.what(),
                             e.status(), e.infeasible());
        }
    });
    for (int p = 0; p < N0 * N1; ++p) out.costs(p / N1, p % N1, 0) = out.tilde[p].cost;
    return out;
}

/// Shifts a zero-mean conditional policy onto the mean-field trajectory.
inline ConditionalPolicy reassemble(const ConditionalPolicy& tilde, const MeanSteering& mean, double dt)
{
    ConditionalPolicy p = tilde;
    double cross = 0.0;
    for (int k = 0; k < p.knots(); ++k) {
        p.mu[k] += mean.mu[k];
        if (k + 1 < p.knots()) {
            cross += dt * mean.v[k].dot(tilde.v[k]);
            p.v[k] += mean.v[k];
        }
    }
    p.cost = tilde.cost + mean.cost + 2.0 * cross;
    return p;
}

/// Decomposition path for scenarios without obstacles.
inline MfsbResult solve_unconstrained(const Scenario& scn, const SolveOptions& opt = {})
{
    if (scn.constrained()) throw ConfigurationError("solve_unconstrained called on a scenario with obstacles");
    const ShiftedGrid sg = solve_shifted_grid(scn, opt);
    const int N0 = scn.rho0.size(), N1 = scn.rho1.size();
    TransportPlan plan = solve_plan(sg.costs, scn.rho0.weights(), scn.rho1.weights());

    MfsbResult res;
    std::tie(res.residual_mean, res.residual_feedforward) = decomposition_residuals(sg.tilde, plan.lambda);
    log::info("decomposition residuals: mean ", res.residual_mean, ", feedforward ", res.residual_feedforward);
    res.mean_cost = sg.mean.cost;

    MixtureSolution& sol = res.solution;
    sol.grid = scn.grid;
    sol.costs = CostTensor(N0, N1, 1);
    sol.policies.resize(static_cast<std::size_t>(N0 * N1));
    for (int p = 0; p < N0 * N1; ++p) {
        sol.policies[p] = reassemble(sg.tilde[p], sg.mean, scn.grid.dt());
        sol.costs(p / N1, p % N1, 0) = sol.policies[p]->cost;
    }
    plan.objective = plan_objective(plan.lambda, sol.costs);
    sol.plan = plan;
    sol.xbar = sg.mean.mu;
    sol.ubar = sg.mean.v;
    res.iterations = {plan.objective};
    res.status = "optimal";
    return res;
}

/// Reference covariances for linearization, per (i, j, route) block and knot.
using ReferenceCovariances = std::vector<std::vector<Mat>>;

/// Linearized chance rows of block (i, j, r), one row per knot and face.
inline std::vector<LinearizedConstraint> block_constraints(const Scenario& scn, const Allocation& alloc, int i, int j,
                                                           int r, const std::vector<Mat>& sigma_ref)
{
    std::vector<LinearizedConstraint> rows;
    const auto faces = scn.route_faces(r);
    const int comp = i * scn.rho1.size() + j;
    for (std::size_t f = 0; f < faces.size(); ++f)
        for (int k = 1; k + 1 < scn.grid.size(); ++k) {
            if (!faces[f].window.contains(scn.grid, k)) continue;
            LinearizedConstraint lc = linearize(faces[f], alloc.delta(comp, static_cast<int>(f)), sigma_ref[k]);
            lc.window = KnotWindow{scn.grid[k], scn.grid[k]};
            rows.push_back(std::move(lc));
        }
    return rows;
}

/// Solves blocks one at a time against a fixed mean-field trajectory. Blocks
/// whose program is infeasible are priced at 1e3 times the largest finite cost
/// (including `floor`) and come back without a policy, as do blocks whose
/// covariance degenerates.
inline std::vector<double> solve_single_blocks(const Scenario& scn,
                                               const std::vector<std::vector<LinearizedConstraint>>& rows,
                                               const std::vector<Vec>& xbar, const std::vector<int>& blocks,
                                               std::vector<std::optional<ConditionalPolicy>>& policies,
                                               double floor, const SolveOptions& opt)
{
    const int N1 = scn.rho1.size(), R = scn.num_routes();
    std::vector<double> cost(blocks.size(), 0.0);
    parallel_for(static_cast<int>(blocks.size()), opt.threads, [&](int q) {
        const int p = blocks[q];
        const int i = p / (N1 * R), j = (p / R) % N1;
        OcsProblem prob{scn.sys, scn.grid, scn.rho0.component(i), scn.rho1.component(j), rows[p], {}};
        if (scn.sys.has_meanfield()) prob.meanfield = xbar;
        try {
            const OcsProgram built = build_ocs_sdp(prob);
            const auto sol = conic::solve(built.program, opt.tol);
            require_usable(sol, opt.tol, "conditional block");
            cost[q] = built.cost.evaluate(sol.x);
            try {
                policies[p] = policy_from_solution(sol, built.vars, built.cost);
            } catch (const ConditioningError& e) {
                // priced, but its gains are not recoverable; it may not become active
                log::debug("block ", p, ": ", e.what());
                policies[p].reset();
            }
        } catch (const SolveError& e) {
            if (!e.infeasible()) throw;
            policies[p].reset();
            cost[q] = std::numeric_limits<double>::infinity();
        }
    });
    double finite_max = floor;
    for (double c : cost)
        if (std::isfinite(c)) finite_max = std::max(finite_max, c);
    for (double& c : cost)
        if (!std::isfinite(c)) c = 1e3 * std::max(1.0, finite_max);
    return cost;
}

/// Linearized rows for every (i, j, route) block, indexed like a plan.
inline std::vector<std::vector<LinearizedConstraint>> all_block_constraints(const Scenario& scn,
                                                                           const ReferenceCovariances& refs)
{
    const int N0 = scn.rho0.size(), N1 = scn.rho1.size(), R = scn.num_routes();
    const Allocation alloc = scn.allocation();
    std::vector<std::vector<LinearizedConstraint>> rows;
    for (int i = 0; i < N0; ++i)
        for (int j = 0; j < N1; ++j)
            for (int r = 0; r < R; ++r)
                rows.push_back(block_constraints(scn, alloc, i, j, r, refs[static_cast<std::size_t>((i * N1 + j) * R + r)]));
    return rows;
}

struct CoupledResult {
    std::vector<std::optional<ConditionalPolicy>> policies;  // indexed like the plan
    std::vector<std::vector<LinearizedConstraint>> rows;     // linearized rows per block
    CostTensor costs;
    std::vector<Vec> xbar;
    double objective = 0.0;  // sum lambda J over active blocks
};

/// Policies at a fixed plan. Active blocks (lambda > 0) are solved jointly with
/// xbar_k = sum lambda mu_k; every other block is then solved alone against the
/// realized xbar so that its cost is available to the next plan update.
/// Blocks whose single problem is infeasible get an infinite-like cost.
inline CoupledResult solve_constrained_fixed_plan(const Scenario& scn, const TransportPlan& plan,
                                                  const ReferenceCovariances& refs, const SolveOptions& opt = {})
{
    scn.validate();
    const int N0 = scn.rho0.size(), N1 = scn.rho1.size(), R = scn.num_routes();
    if (plan.rows() != N0 || plan.cols() != N1 || plan.routes() != R)
        throw ConfigurationError("transport plan does not match the scenario");
    const int n = scn.sys.n(), m = scn.sys.m(), T = scn.grid.size();
    const auto idx = [&](int i, int j, int r) { return static_cast<std::size_t>((i * N1 + j) * R + r); };

    CoupledResult out;
    out.policies.resize(static_cast<std::size_t>(N0 * N1 * R));
    out.rows = all_block_constraints(scn, refs);
    out.costs = CostTensor(N0, N1, R, 0.0);

    struct Active {
        int i, j, r;
        double lambda;
        OcsVariables vars;
        conic::LinExpr cost;
    };
    std::vector<Active> active;
    conic::ConicProgram prog;
    for (int i = 0; i < N0; ++i)
        for (int j = 0; j < N1; ++j)
            for (int r = 0; r < R; ++r) {
                const double l = plan.lambda(i, j, r);
                if (!(l > 0.0)) continue;
                const std::string prefix =
                    "b" + std::to_string(i) + "_" + std::to_string(j) + "_" + std::to_string(r) + "/";
                active.push_back({i, j, r, l, add_ocs_variables(prog, prefix, n, m, T), {}});
            }
    if (active.empty()) throw ConfigurationError("transport plan has no active entries");

    MeanfieldExprs xbar(static_cast<std::size_t>(T), std::vector<conic::LinExpr>(static_cast<std::size_t>(n)));
    for (const auto& b : active)
        for (int k = 0; k < T; ++k)
            for (int c = 0; c < n; ++c) xbar[k][c] += b.lambda * prog.entry(b.vars.mu[k], c);

    conic::LinExpr objective;
    for (auto& b : active) {
        b.cost = add_ocs_constraints(prog, b.vars, scn.sys, scn.grid, scn.rho0.component(b.i), scn.rho1.component(b.j),
                                     out.rows[idx(b.i, b.j, b.r)], scn.sys.has_meanfield() ? &xbar : nullptr);
        objective += b.lambda * b.cost;
    }
    prog.minimize(objective);
    log::info("coupled program: ", active.size(), " blocks, ", prog.num_variables(), " variables, ",
              prog.num_equalities(), " equalities");
    const auto sol = conic::solve(prog, opt.tol);
    require_usable(sol, opt.tol, "coupled constrained program");

    out.xbar.assign(static_cast<std::size_t>(T), Vec::Zero(n));
    for (const auto& b : active) {
        ConditionalPolicy p = policy_from_solution(sol, b.vars, b.cost);
        for (int k = 0; k < T; ++k) out.xbar[k] += b.lambda * p.mu[k];
        out.costs(b.i, b.j, b.r) = p.cost;
        out.objective += b.lambda * p.cost;
        out.policies[idx(b.i, b.j, b.r)] = std::move(p);
    }

    std::vector<int> idle;
    for (int p = 0; p < N0 * N1 * R; ++p)
        if (!out.policies[p]) idle.push_back(p);
    double floor = 0.0;
    for (double c : out.costs.data()) floor = std::max(floor, c);
    const auto idle_cost = solve_single_blocks(scn, out.rows, out.xbar, idle, out.policies, floor, opt);
    for (std::size_t q = 0; q < idle.size(); ++q) {
        const int p = idle[q];
        out.costs(p / (N1 * R), (p / R) % N1, p % R) = idle_cost[q];
    }
    return out;
}

/// Per-block reference covariances from unconstrained conditional solves.
inline ReferenceCovariances unconstrained_references(const MixtureSolution& uncon, int routes)
{
    ReferenceCovariances refs;
    for (std::size_t p = 0; p < uncon.policies.size(); ++p)
        for (int r = 0; r < routes; ++r) refs.push_back(uncon.policies[p]->Sigma);
    return refs;
}

inline bool same_support(const Tensor3<double>& a, const Tensor3<double>& b)
{
    for (std::size_t p = 0; p < a.size(); ++p)
        if (std::abs(a.data()[p] - b.data()[p]) > 1e-12) return false;
    return true;
}

/// Alternates between the transport plan and the coupled policies.
inline MfsbResult alternate_optimize(const Scenario& scn, const SolveOptions& opt = {})
{
    scn.validate();
    const int N0 = scn.rho0.size(), N1 = scn.rho1.size(), R = scn.num_routes();

    // Initialization from the problem without obstacles.
    Scenario free = scn;
    free.obstacles.clear();
    free.routes = {Route{"direct", {}}};
    const MfsbResult base = solve_unconstrained(free, opt);
    ReferenceCovariances refs = unconstrained_references(base.solution, R);
    // Route costs from single-block solves against the unconstrained mean field.
    std::vector<int> all(static_cast<std::size_t>(N0 * N1 * R));
    std::iota(all.begin(), all.end(), 0);
    std::vector<std::optional<ConditionalPolicy>> scratch(all.size());
    const auto c0 = solve_single_blocks(scn, all_block_constraints(scn, refs), base.solution.xbar, all, scratch, 0.0, opt);
    bool any = false;
    for (const auto& p : scratch) any = any || p.has_value();
    if (!any) throw SolveError("every conditional block is infeasible under the chance constraints", "infeasible", true);
    CostTensor J(N0, N1, R);
    for (int p = 0; p < N0 * N1 * R; ++p) J(p / (N1 * R), (p / R) % N1, p % R) = c0[p];
    TransportPlan plan = solve_plan(J, scn.rho0.weights(), scn.rho1.weights());

    MfsbResult res;
    std::optional<CoupledResult> last;
    TransportPlan last_plan = plan;
    bool converged = false, finishing = false;
    for (int it = 0; it < opt.max_iterations; ++it) {
        CoupledResult cr;
        try {
            cr = solve_constrained_fixed_plan(scn, plan, refs, opt);
            if (opt.relinearize && it == 0) {
                for (std::size_t p = 0; p < refs.size(); ++p)
                    if (cr.policies[p]) refs[p] = cr.policies[p]->Sigma;
                cr = solve_constrained_fixed_plan(scn, plan, refs, opt);
            }
        } catch (const SolveError& e) {
            log::error("alternation aborted at iteration ", it + 1, ": ", e.what());
            if (!last) throw SolveError(std::string("alternation iteration 1: ") + e.what(), e.status(), e.infeasible());
            res.status = "aborted";
            break;
        }
        res.iterations.push_back(cr.objective);
        log::info("alternation iteration ", it + 1, ": J_OT = ", cr.objective);
        last = std::move(cr);
        last_plan = plan;

        if (finishing) break;

        TransportPlan next = solve_plan(last->costs, scn.rho0.weights(), scn.rho1.weights());
        const std::size_t K = res.iterations.size();
        const bool small_change =
            K >= 2 && std::abs(res.iterations[K - 1] - res.iterations[K - 2]) <
                          opt.rel_tol * std::max(std::abs(res.iterations[K - 2]), 1e-300);
        const bool same = same_support(next.lambda, plan.lambda);
        plan = next;
        if (same) {
            converged = true;
            break;
        }
        if (small_change) {
            // one more policy solve so the result belongs to the final plan
            converged = true;
            finishing = true;
        }
    }
    if (res.status.empty()) res.status = converged ? "converged" : "iteration_cap";
    if (res.status != "aborted" && !same_support(plan.lambda, last_plan.lambda)) {
        try {
            CoupledResult cr = solve_constrained_fixed_plan(scn, plan, refs, opt);
            res.iterations.push_back(cr.objective);
            last = std::move(cr);
            last_plan = plan;
        } catch (const SolveError& e) {
            log::error("final policy solve failed: ", e.what());
            res.status = "aborted";
        }
    }

    MixtureSolution& sol = res.solution;
    sol.grid = scn.grid;
    sol.plan = last_plan;
    sol.costs = last->costs;
    sol.plan.objective = plan_objective(sol.plan.lambda, sol.costs);
    sol.policies = last->policies;
    sol.xbar = last->xbar;
    res.rows = last->rows;
    return res;
}

/// Dispatches to the decomposition path or the alternation.
inline MfsbResult solve_scenario(const Scenario& scn, const SolveOptions& opt = {})
{
    return scn.constrained() ? alternate_optimize(scn, opt) : solve_unconstrained(scn, opt);
}

}  // namespace mfsb

#endif  // MFSB_MEANFIELD_HPP
