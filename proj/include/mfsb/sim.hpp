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
#ifndef MFSB_SIM_HPP
#define MFSB_SIM_HPP

// Euler-Maruyama simulation of the interacting swarm
//   x_{k+1} = x_k + dt (A_k x_k + Abar_k xbar_k + B_k u_k(x_k)) + sqrt(dt) D_k z_k,
// with xbar_k the empirical mean of all agents and u the mixture policy held
// constant over each interval.

#include "mfsb/csv.hpp"
#include "mfsb/errors.hpp"
#include "mfsb/meanfield.hpp"
#include "mfsb/mixture.hpp"
#include "mfsb/parallel.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <vector>

namespace mfsb {

struct SwarmRun {
    int agents = 0;
    std::uint64_t seed = 0;
    TimeGrid grid{2};
    std::vector<Mat> states;    // per knot, n x N
    std::vector<Mat> controls;  // per knot, m x N; zero at the final knot
    std::vector<Vec> empirical_mean;
    std::vector<int> initial_component;
};

/// Independent stream for one agent, unaffected by how agents are split across threads.
inline std::mt19937_64 agent_rng(std::uint64_t seed, int agent)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(agent)};
    return std::mt19937_64(seq);
}

inline SwarmRun simulate_swarm(const Scenario& scn, const MixtureSolution& sol, int agents, std::uint64_t seed,
                               int threads = default_threads())
{
    if (agents < 2) throw InputError("simulation needs at least 2 agents");
    check_compatible(scn.sys, scn.grid);
    if (sol.grid.size() != scn.grid.size()) throw ConfigurationError("solution and scenario use different grids");
    const int n = scn.sys.n(), m = scn.sys.m(), q = scn.sys.q(), T = scn.grid.size();
    const double dt = scn.grid.dt(), sdt = std::sqrt(dt);
    const MixturePolicy policy(sol);

    SwarmRun run;
    run.agents = agents;
    run.seed = seed;
    run.grid = scn.grid;
    run.states.assign(static_cast<std::size_t>(T), Mat::Zero(n, agents));
    run.controls.assign(static_cast<std::size_t>(T), Mat::Zero(m, agents));
    run.empirical_mean.assign(static_cast<std::size_t>(T), Vec::Zero(n));
    run.initial_component.assign(static_cast<std::size_t>(agents), 0);

    std::vector<Mat> roots;
    for (const auto& c : scn.rho0.components()) roots.push_back(sqrt_factor(c.cov()));
    std::vector<std::mt19937_64> rngs;
    rngs.reserve(static_cast<std::size_t>(agents));
    for (int a = 0; a < agents; ++a) rngs.push_back(agent_rng(seed, a));

    const int chunk = 256;
    const int chunks = (agents + chunk - 1) / chunk;
    const auto for_agents = [&](auto&& body) {
        parallel_for(chunks, threads, [&](int c) {
            for (int a = c * chunk; a < std::min(agents, (c + 1) * chunk); ++a) body(a);
        });
    };

    for_agents([&](int a) {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::normal_distribution<double> normal(0.0, 1.0);
        auto& rng = rngs[a];
        const int i = draw_index(scn.rho0.weights(), unif(rng));
        Vec z(n);
        for (int d = 0; d < n; ++d) z(d) = normal(rng);
        run.states[0].col(a) = scn.rho0.component(i).mean() + roots[i] * z;
        run.initial_component[a] = i;
    });

    for (int k = 0; k < T; ++k) {
        run.empirical_mean[k] = run.states[k].rowwise().mean();
        if (k + 1 == T) break;
        const Mat& A = scn.sys.A(k);
        const Mat& B = scn.sys.B(k);
        const Mat& D = scn.sys.D(k);
        const Vec drift = scn.sys.Abar(k) * run.empirical_mean[k];
        for_agents([&](int a) {
            std::normal_distribution<double> normal(0.0, 1.0);
            const Vec x = run.states[k].col(a);
            Vec u;
            try {
                u = policy.control(k, x);
            } catch (const DomainError& e) {
                throw DivergenceError(std::string("mixture policy undefined at the agent state: ") + e.what(), k, a);
            }
            Vec w(q);
            for (int d = 0; d < q; ++d) w(d) = normal(rngs[a]);
            const Vec next = x + dt * (A * x + drift + B * u) + sdt * (D * w);
            if (!next.allFinite() || !u.allFinite())
                throw DivergenceError("agent state is not finite", k + 1, a);
            run.controls[k].col(a) = u;
            run.states[k + 1].col(a) = next;
        });
    }
    return run;
}

struct SwarmMetrics {
    double cost = 0.0;
    double cost_stderr = 0.0;
    double max_violation = 0.0;
    int max_violation_knot = 0;
    std::vector<double> violation;            // fraction of agents inside an obstacle, per knot
    std::vector<double> terminal_mean_error;  // per target component
    std::vector<double> terminal_frequency;   // per target component
};

/// True when x lies inside any obstacle.
inline bool in_collision(const Scenario& scn, const Vec& x)
{
    for (const auto& o : scn.obstacles)
        if (o.contains(x)) return true;
    return false;
}

inline SwarmMetrics estimate_metrics(const SwarmRun& run, const Scenario& scn)
{
    const int N = run.agents, T = run.grid.size();
    const double dt = run.grid.dt();
    SwarmMetrics out;

    double mean = 0.0, m2 = 0.0;
    for (int a = 0; a < N; ++a) {
        double c = 0.0;
        for (int k = 0; k + 1 < T; ++k) c += dt * run.controls[k].col(a).squaredNorm();
        const double d = c - mean;
        mean += d / (a + 1);
        m2 += d * (c - mean);
    }
    out.cost = mean;
    out.cost_stderr = std::sqrt(m2 / (N - 1) / N);

    out.violation.assign(static_cast<std::size_t>(T), 0.0);
    if (!scn.obstacles.empty())
        for (int k = 0; k < T; ++k) {
            int hits = 0;
            for (int a = 0; a < N; ++a) hits += in_collision(scn, run.states[k].col(a)) ? 1 : 0;
            out.violation[k] = static_cast<double>(hits) / N;
            if (out.violation[k] > out.max_violation) {
                out.max_violation = out.violation[k];
                out.max_violation_knot = k;
            }
        }

    const int J = scn.rho1.size();
    std::vector<Mat> prec;
    for (const auto& c : scn.rho1.components()) prec.push_back(inverse_floored(c.cov(), 1e-12));
    std::vector<Vec> sum(static_cast<std::size_t>(J), Vec::Zero(scn.sys.n()));
    std::vector<int> count(static_cast<std::size_t>(J), 0);
    for (int a = 0; a < N; ++a) {
        const Vec x = run.states[T - 1].col(a);
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int j = 0; j < J; ++j) {
            const Vec r = x - scn.rho1.component(j).mean();
            const double d = r.dot(prec[j] * r);
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        sum[best] += x;
        ++count[best];
    }
    for (int j = 0; j < J; ++j) {
        out.terminal_frequency.push_back(static_cast<double>(count[j]) / N);
        out.terminal_mean_error.push_back(
            count[j] > 0 ? (sum[j] / count[j] - scn.rho1.component(j).mean()).norm()
                         : std::numeric_limits<double>::infinity());
    }
    return out;
}

struct BoundCheck {
    double cost = 0.0;
    double bound = 0.0;
    double standard_error = 0.0;
    bool holds = false;
};

/// The realized cost against J_OT, allowing three standard errors.
inline BoundCheck estimate_bound_check(const SwarmMetrics& metrics, const MixtureSolution& sol)
{
    BoundCheck out{metrics.cost, sol.bound(), metrics.cost_stderr, false};
    out.holds = metrics.cost <= out.bound + 3.0 * metrics.cost_stderr;
    return out;
}

/// Union bound on P(inside an obstacle) at knot k: each active component adds
/// lambda times its Gaussian tail beyond the faces its route enforces. Zero
/// outside the chance window, where no face is enforced.
inline double predicted_violation(const Scenario& scn, const MixtureSolution& sol, int k)
{
    if (!scn.constrained() || !scn.chance.window.contains(scn.grid, k)) return 0.0;
    const boost::math::normal_distribution<double> normal;
    double p = 0.0;
    for (const auto& c : active_components(sol)) {
        const auto faces = scn.route_faces(c.r);
        const Vec& mu = c.policy->mu[k];
        const Mat& S = c.policy->Sigma[k];
        double tail = 0.0;
        for (const auto& f : faces) {
            const double sd = std::sqrt(std::max(f.a.dot(S * f.a), 0.0));
            const double margin = f.beta - f.a.dot(mu);
            tail += sd > 0.0 ? boost::math::cdf(boost::math::complement(normal, margin / sd)) : (margin < 0 ? 1.0 : 0.0);
        }
        p += c.weight * std::min(tail, 1.0);
    }
    return std::min(p, 1.0);
}

/// knot, time, agent, x_*, u_*; every `stride`-th agent.
inline void write_trajectories_csv(std::ostream& os, const SwarmRun& run, int stride = 1)
{
    if (stride < 1) throw InputError("trajectory stride must be positive");
    const int n = static_cast<int>(run.states.front().rows());
    const int m = static_cast<int>(run.controls.front().rows());
    std::vector<std::string> head{"knot", "time", "agent"};
    for (int d = 0; d < n; ++d) head.push_back("x_" + std::to_string(d));
    for (int d = 0; d < m; ++d) head.push_back("u_" + std::to_string(d));
    csv::write_row(os, head);
    for (int k = 0; k < run.grid.size(); ++k)
        for (int a = 0; a < run.agents; a += stride) {
            std::vector<std::string> row{std::to_string(k), csv::num(run.grid[k]), std::to_string(a)};
            csv::append(row, run.states[k].col(a));
            csv::append(row, run.controls[k].col(a));
            csv::write_row(os, row);
        }
}

}  // namespace mfsb

#endif  // MFSB_SIM_HPP
