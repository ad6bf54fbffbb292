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
#include "mfsb/meanfield.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace mfsb;

namespace {

GaussianMixture mixture(std::vector<double> w, std::vector<Vec> means, double var)
{
    std::vector<Gaussian> g;
    for (auto& m : means) g.emplace_back(m, var * Mat::Identity(m.size(), m.size()));
    return {std::move(w), std::move(g)};
}

Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

Scenario free_scenario(const LTVSystem& sys)
{
    Scenario s{sys, TimeGrid(sys.knots()),
               mixture({0.5, 0.3, 0.2}, {v2(-2, 1), v2(-2, -1), v2(-1, 0)}, 0.1),
               mixture({0.6, 0.4}, {v2(2, 1), v2(2, -1)}, 0.15), {}, {Route{"direct", {}}}, {}};
    return s;
}

// Unit box around the origin, free sides x <= -0.5, x >= 0.5, y <= -0.5, y >= 0.5.
Obstacle box()
{
    Obstacle o;
    o.faces = {HalfSpace(v2(1, 0), -0.5), HalfSpace(v2(-1, 0), -0.5), HalfSpace(v2(0, 1), -0.5),
               HalfSpace(v2(0, -1), -0.5)};
    return o;
}

Scenario box_scenario(int T)
{
    const auto sys = LTVSystem::constant(Mat::Zero(2, 2), -0.5 * Mat::Identity(2, 2), Mat::Identity(2, 2),
                                         0.3 * Mat::Identity(2, 2), T);
    Scenario s{sys, TimeGrid(T), mixture({0.5, 0.5}, {v2(-2, 0.6), v2(-2, -0.6)}, 0.02),
               mixture({1.0}, {v2(2, 0)}, 0.02), {box()}, {Route{"below", {2}}, Route{"above", {3}}}, {}};
    s.chance.total_budget = 0.1;
    s.chance.window = KnotWindow{0.4, 0.6};
    return s;
}

}  // namespace

TEST(Decomposition, ComponentsCombineToMeanfield)
{
    const auto scn = free_scenario(problem1_system(41));
    const auto res = solve_unconstrained(scn);
    EXPECT_LT(res.residual_mean, 1e-6);
    EXPECT_LT(res.residual_feedforward, 1e-6);
    const auto& sol = res.solution;
    for (int k = 0; k < 41; ++k) {
        Vec m = Vec::Zero(2);
        for (const auto& c : active_components(sol)) m += c.weight * c.policy->mu[k];
        EXPECT_LT((m - sol.xbar[k]).norm(), 1e-6) << "knot " << k;
    }
    EXPECT_LT((sol.xbar.front() - scn.rho0.mean()).norm(), 1e-9);
    EXPECT_LT((sol.xbar.back() - scn.rho1.mean()).norm(), 1e-9);
}

TEST(Decomposition, BoundSplitsIntoMeanAndFluctuation)
{
    const auto scn = free_scenario(problem1_system(41));
    const auto res = solve_unconstrained(scn);
    const auto sg = solve_shifted_grid(scn, {});
    double fluct = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j) fluct += res.solution.plan.lambda(i, j, 0) * sg.costs(i, j, 0);
    EXPECT_NEAR(res.solution.bound(), res.mean_cost + fluct, 1e-6 * std::max(1.0, res.solution.bound()));
}

TEST(Decomposition, MarginalsOfThePlan)
{
    const auto res = solve_unconstrained(free_scenario(problem1_system(21)));
    const auto& l = res.solution.plan.lambda;
    const std::vector<double> a0{0.5, 0.3, 0.2}, a1{0.6, 0.4};
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(l(i, 0, 0) + l(i, 1, 0), a0[i], 1e-12);
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(l(0, j, 0) + l(1, j, 0) + l(2, j, 0), a1[j], 1e-12);
}

TEST(Decomposition, WithoutMeanfieldMatchesIndependentSolves)
{
    const auto sys = LTVSystem::constant(Mat::Zero(2, 2), Mat::Zero(2, 2), Mat::Identity(2, 2),
                                         0.5 * Mat::Identity(2, 2), 21);
    const auto scn = free_scenario(sys);
    const auto res = solve_unconstrained(scn);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j) {
            const auto direct =
                solve_ocs(OcsProblem{sys, scn.grid, scn.rho0.component(i), scn.rho1.component(j), {}, {}});
            EXPECT_NEAR(res.solution.costs(i, j, 0), direct.cost, 1e-6 * std::max(1.0, direct.cost));
        }
}

TEST(Decomposition, RejectsObstacles)
{
    EXPECT_THROW(solve_unconstrained(box_scenario(11)), ConfigurationError);
}

TEST(DecompositionResiduals, DetectsUnbalancedPlan)
{
    const auto scn = free_scenario(problem1_system(21));
    const auto sg = solve_shifted_grid(scn, {});
    Tensor3<double> bad(3, 2, 1, 0.0);
    bad(0, 0, 0) = 1.0;
    EXPECT_GT(decomposition_residuals(sg.tilde, bad).first, 1e-2);
}

TEST(Alternation, AvoidsObstacleAndConverges)
{
    const auto scn = box_scenario(21);
    const auto res = alternate_optimize(scn);
    ASSERT_EQ(res.status, "converged");
    const auto& sol = res.solution;
    for (std::size_t k = 0; k + 1 < res.iterations.size(); ++k) EXPECT_LE(res.iterations[k + 1], res.iterations[k] + 1e-6);
    // each start component keeps to its own side
    EXPECT_NEAR(sol.plan.lambda(0, 0, 1), 0.5, 1e-9);
    EXPECT_NEAR(sol.plan.lambda(1, 0, 0), 0.5, 1e-9);
    const auto alloc = scn.allocation();
    for (const auto& c : active_components(sol)) {
        const HalfSpace face = scn.route_faces(c.r)[0];
        const double delta = alloc.delta(c.i, 0);
        for (int k = 0; k < scn.grid.size(); ++k) {
            if (!face.window.contains(scn.grid, k)) continue;
            // the linearization is conservative, so the exact constraint holds
            EXPECT_LE(exact_constraint_value(Gaussian(c.policy->mu[k], c.policy->Sigma[k]), face, delta), 1e-6);
        }
    }
}

TEST(Alternation, CoupledMeanfieldIsConsistent)
{
    const auto scn = box_scenario(21);
    const auto res = alternate_optimize(scn);
    for (int k = 0; k < scn.grid.size(); ++k) {
        Vec m = Vec::Zero(2);
        for (const auto& c : active_components(res.solution)) m += c.weight * c.policy->mu[k];
        EXPECT_LT((m - res.solution.xbar[k]).norm(), 1e-6);
    }
}

TEST(Alternation, InfeasibleScenarioThrows)
{
    // y is driven only through x, so one step after t = 0 it cannot leave the band |y| < 0.5
    Mat A = Mat::Zero(2, 2), B = Mat::Zero(2, 1);
    A(1, 0) = 1.0;
    B(0, 0) = 1.0;
    auto scn = box_scenario(21);
    scn.sys = LTVSystem::constant(A, Mat::Zero(2, 2), B, 0.3 * Mat::Identity(2, 2), 21);
    scn.chance.window = KnotWindow{0.0, 1.0};
    scn.rho0 = mixture({1.0}, {v2(0, 0)}, 0.02);
    EXPECT_THROW(alternate_optimize(scn), SolveError);
}

TEST(DecompositionResiduals, HoldsForRandomFeasiblePlans)
{
    const auto scn = free_scenario(problem1_system(21));
    const auto sg = solve_shifted_grid(scn, {});
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::vector<double> a0{0.5, 0.3, 0.2}, a1{0.6, 0.4};
    for (int trial = 0; trial < 20; ++trial) {
        // mix the independent coupling with the LP vertex; both have the right marginals
        const double s = u(rng);
        const auto vertex = solve_plan(sg.costs, a0, a1);
        Tensor3<double> lambda(3, 2, 1);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 2; ++j) lambda(i, j, 0) = s * a0[i] * a1[j] + (1 - s) * vertex.lambda(i, j, 0);
        const auto [rm, rv] = decomposition_residuals(sg.tilde, lambda);
        EXPECT_LT(rm, 1e-6);
        EXPECT_LT(rv, 1e-6);
    }
}

TEST(Decomposition, FlowMeanEqualsMeanfield)
{
    const auto res = solve_unconstrained(free_scenario(problem1_system(21)));
    for (int k = 0; k < 21; ++k) {
        const auto rho = flow_density(res.solution, k);
        EXPECT_LT((rho.mean() - res.solution.xbar[k]).norm(), 1e-6);
    }
}

TEST(Decomposition, SingleGaussiansReduceToOneSolve)
{
    const auto sys = LTVSystem::constant(Mat::Zero(2, 2), Mat::Zero(2, 2), Mat::Identity(2, 2),
                                         Mat::Identity(2, 2), 21);
    Scenario scn{sys, TimeGrid(21), mixture({1.0}, {v2(-1, 0)}, 0.1), mixture({1.0}, {v2(1, 1)}, 0.2), {},
                 {Route{"direct", {}}}, {}};
    const auto res = solve_unconstrained(scn);
    const auto direct = solve_ocs(OcsProblem{sys, scn.grid, scn.rho0.component(0), scn.rho1.component(0), {}, {}});
    EXPECT_NEAR(res.solution.bound(), direct.cost, 1e-6 * direct.cost);
}

TEST(Alternation, WithoutObstaclesMatchesDecomposition)
{
    const auto scn = free_scenario(problem1_system(21));
    const auto dec = solve_unconstrained(scn);
    const auto alt = alternate_optimize(scn);
    EXPECT_EQ(alt.status, "converged");
    EXPECT_NEAR(alt.solution.bound(), dec.solution.bound(), 5e-3 * dec.solution.bound());
    for (int k = 0; k < 21; ++k) EXPECT_LT((alt.solution.xbar[k] - dec.solution.xbar[k]).norm(), 1e-5);
}

TEST(FixedPlan, SingletonPlanEqualsSingleSolve)
{
    const auto sys = LTVSystem::constant(Mat::Zero(2, 2), Mat::Zero(2, 2), Mat::Identity(2, 2),
                                         Mat::Identity(2, 2), 21);
    Scenario scn{sys, TimeGrid(21), mixture({1.0}, {v2(-1, 0)}, 0.1), mixture({1.0}, {v2(1, 1)}, 0.2), {},
                 {Route{"direct", {}}}, {}};
    const auto plan = solve_plan(CostTensor(1, 1, 1, 1.0), {1.0}, {1.0});
    const ReferenceCovariances refs(1, std::vector<Mat>(21, Mat::Identity(2, 2)));
    const auto cr = solve_constrained_fixed_plan(scn, plan, refs);
    const auto direct = solve_ocs(OcsProblem{sys, scn.grid, scn.rho0.component(0), scn.rho1.component(0), {}, {}});
    EXPECT_NEAR(cr.objective, direct.cost, 1e-6 * direct.cost);
}

TEST(FixedPlan, LinearizedRowsHoldPerBlock)
{
    const auto scn = box_scenario(21);
    const auto res = alternate_optimize(scn);
    ReferenceCovariances refs;
    Scenario free = scn;
    free.obstacles.clear();
    free.routes = {Route{"direct", {}}};
    refs = unconstrained_references(solve_unconstrained(free).solution, 2);
    const auto cr = solve_constrained_fixed_plan(scn, res.solution.plan, refs);
    for (std::size_t p = 0; p < cr.policies.size(); ++p) {
        if (!cr.policies[p]) continue;
        for (const auto& row : cr.rows[p])
            for (int k = 0; k < scn.grid.size(); ++k)
                if (row.window.contains(scn.grid, k)) {
                    EXPECT_LE(row.value(cr.policies[p]->Sigma[k], cr.policies[p]->mu[k]), 1e-6);
                }
    }
}

TEST(PublishedSystems, Dimensions)
{
    const auto p1 = problem1_system();
    EXPECT_EQ(p1.n(), 2);
    EXPECT_EQ(p1.m(), 2);
    EXPECT_EQ(p1.D(0).cols(), 2);
    EXPECT_EQ(p1.knots(), 101);
    const auto p2 = problem2_system();
    EXPECT_EQ(p2.n(), 4);
    EXPECT_EQ(p2.m(), 2);
    EXPECT_EQ(p2.D(0).cols(), 4);
    EXPECT_TRUE(p2.Abar(0).bottomLeftCorner(2, 2).isApprox(-Mat::Identity(2, 2)));
    EXPECT_TRUE(p2.A(0).topRightCorner(2, 2).isApprox(Mat::Identity(2, 2)));
    EXPECT_TRUE(p2.A(0).bottomLeftCorner(2, 2).isApprox(Mat::Identity(2, 2)));
}
