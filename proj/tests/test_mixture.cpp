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
#include "mfsb/mixture.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace mfsb;

namespace {

Gaussian g1(double m, double v) { return Gaussian(Vec::Constant(1, m), Mat::Constant(1, 1, v)); }

ConditionalPolicy solve_1d(double m0, double m1, int T)
{
    const auto sys = LTVSystem::constant(Mat::Zero(1, 1), Mat::Zero(1, 1), Mat::Identity(1, 1), Mat::Identity(1, 1), T);
    return solve_ocs(OcsProblem{sys, TimeGrid(T), g1(m0, 0.2), g1(m1, 0.3), {}, {}});
}

MixtureSolution two_component(double w0, int T = 21)
{
    MixtureSolution sol;
    sol.grid = TimeGrid(T);
    CostTensor J(2, 1, 1);
    sol.policies = {solve_1d(-1.0, 0.0, T), solve_1d(1.0, 0.0, T)};
    J(0, 0, 0) = sol.policies[0]->cost;
    J(1, 0, 0) = sol.policies[1]->cost;
    sol.costs = J;
    sol.plan = solve_plan(J, {w0, 1.0 - w0}, {1.0});
    return sol;
}

}  // namespace

TEST(MixturePolicy, WeightsArePartitionOfUnity)
{
    const auto sol = two_component(0.3);
    const MixturePolicy mp(sol);
    for (int k : {0, 5, 19})
        for (double x : {-3.0, -0.1, 0.0, 2.5}) {
            const Vec w = mp.weights(k, Vec::Constant(1, x));
            EXPECT_NEAR(w.sum(), 1.0, 1e-14);
            EXPECT_GE(w.minCoeff(), 0.0);
        }
}

TEST(MixturePolicy, WeightsFollowPosterior)
{
    const auto sol = two_component(0.3);
    const MixturePolicy mp(sol);
    const Vec x = Vec::Constant(1, 0.4);
    const double a = 0.3 * std::exp(log_pdf(Gaussian(sol.policies[0]->mu[0], sol.policies[0]->Sigma[0]), x));
    const double b = 0.7 * std::exp(log_pdf(Gaussian(sol.policies[1]->mu[0], sol.policies[1]->Sigma[0]), x));
    EXPECT_NEAR(mp.weights(0, x)(0), a / (a + b), 1e-12);
}

TEST(MixturePolicy, FarFromOneComponentReducesToTheOther)
{
    const auto sol = two_component(0.5);
    const Vec x = Vec::Constant(1, -6.0);
    EXPECT_NEAR((policy_eval(sol, 0, x) - sol.policies[0]->control(0, x)).norm(), 0.0, 1e-8);
}

TEST(MixturePolicy, SingleComponentHasNoGap)
{
    MixtureSolution sol;
    sol.grid = TimeGrid(21);
    sol.policies = {solve_1d(0.0, 1.0, 21)};
    CostTensor J(1, 1, 1, sol.policies[0]->cost);
    sol.costs = J;
    sol.plan = solve_plan(J, {1.0}, {1.0});
    const auto est = bound_and_gap(sol, 100, 1);
    EXPECT_DOUBLE_EQ(est.gap, 0.0);
    EXPECT_NEAR(est.bound, sol.policies[0]->cost, 1e-12);
}

TEST(MixturePolicy, GapIsNonnegativeAndDeterministic)
{
    const auto sol = two_component(0.4);
    const auto a = bound_and_gap(sol, 2000, 7);
    const auto b = bound_and_gap(sol, 2000, 7);
    EXPECT_GT(a.gap, 0.0);
    EXPECT_DOUBLE_EQ(a.gap, b.gap);
    EXPECT_GT(a.standard_error, 0.0);
    EXPECT_NEAR(a.bound, 0.4 * sol.policies[0]->cost + 0.6 * sol.policies[1]->cost, 1e-9);
}

TEST(MixturePolicy, FlowDensityMatchesEndpoints)
{
    const auto sol = two_component(0.25);
    const auto rho0 = flow_density(sol, 0);
    ASSERT_EQ(rho0.size(), 2);
    EXPECT_NEAR(rho0.weight(0), 0.25, 1e-12);
    EXPECT_NEAR(rho0.component(0).mean()(0), -1.0, 1e-6);
    EXPECT_NEAR(rho0.component(1).cov()(0, 0), 0.2, 1e-6);
    const auto rho1 = flow_density(sol, 20);
    EXPECT_NEAR(rho1.component(1).cov()(0, 0), 0.3, 1e-6);
}

TEST(MixturePolicy, FlowCsvHasOneRowPerActiveComponent)
{
    const auto sol = two_component(0.25);
    std::ostringstream os;
    write_flow_csv(os, sol, 3);
    std::istringstream is(os.str());
    std::vector<std::string> header;
    const auto rows = csv::read_numeric(is, "flow", &header);
    EXPECT_EQ(rows.size(), 2u);
    EXPECT_EQ(header.front(), "i");
    EXPECT_EQ(header.back(), "Sigma_0_0");
}

TEST(MixturePolicy, MissingActivePolicyIsRejected)
{
    auto sol = two_component(0.5);
    sol.policies[1].reset();
    EXPECT_THROW(MixturePolicy{sol}, ConfigurationError);
}
