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
#include "mfsb/transport.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

using namespace mfsb;

namespace {

CostTensor matrix_costs(const std::vector<std::vector<double>>& c)
{
    CostTensor J(static_cast<int>(c.size()), static_cast<int>(c[0].size()), 1);
    for (int i = 0; i < J.rows(); ++i)
        for (int j = 0; j < J.cols(); ++j) J(i, j, 0) = c[i][j];
    return J;
}

// Brute force over scaled permutation matrices (uniform weights).
double birkhoff_minimum(const CostTensor& J)
{
    const int n = J.rows();
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
        double c = 0.0;
        for (int i = 0; i < n; ++i) c += J(i, perm[i], 0) / n;
        best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

}  // namespace

TEST(Transport, Singleton)
{
    const auto plan = solve_plan(matrix_costs({{4.5}}), {1.0}, {1.0});
    EXPECT_DOUBLE_EQ(plan.lambda(0, 0, 0), 1.0);
    EXPECT_DOUBLE_EQ(plan.objective, 4.5);
}

TEST(Transport, TwoByTwo)
{
    const auto plan = solve_plan(matrix_costs({{1, 2}, {3, 1}}), {0.5, 0.5}, {0.5, 0.5});
    EXPECT_NEAR(plan.lambda(0, 0, 0), 0.5, 1e-15);
    EXPECT_NEAR(plan.lambda(1, 1, 0), 0.5, 1e-15);
    EXPECT_NEAR(plan.lambda(0, 1, 0), 0.0, 1e-15);
    EXPECT_NEAR(plan.objective, 1.0, 1e-15);
    const auto [rows, cols] = marginals(plan);
    EXPECT_NEAR(rows[0], 0.5, 1e-15);
    EXPECT_NEAR(cols[1], 0.5, 1e-15);
}

TEST(Transport, CheapestRouteCarriesMass)
{
    CostTensor J(1, 1, 2);
    J(0, 0, 0) = 5.0;
    J(0, 0, 1) = 3.0;
    const auto plan = solve_plan(J, {1.0}, {1.0});
    EXPECT_NEAR(plan.lambda(0, 0, 1), 1.0, 1e-15);
    EXPECT_NEAR(plan.lambda(0, 0, 0), 0.0, 1e-15);
    EXPECT_NEAR(plan.objective, 3.0, 1e-15);
    const auto [rows, cols] = marginals(plan);
    EXPECT_NEAR(rows[0], 1.0, 1e-15);
    EXPECT_NEAR(cols[0], 1.0, 1e-15);
}

TEST(Transport, InputValidation)
{
    const auto J = matrix_costs({{1, 2}, {3, 4}});
    EXPECT_THROW(solve_plan(J, {-0.5, 1.5}, {0.5, 0.5}), InputError);
    EXPECT_THROW(solve_plan(J, {0.3, 0.3}, {0.5, 0.5}), InputError);
    EXPECT_THROW(solve_plan(J, {1.0}, {0.5, 0.5}), InputError);
    const auto ok = solve_plan(J, {0.5, 0.5000001}, {0.5, 0.5});
    const auto [rows, cols] = marginals(ok);
    EXPECT_NEAR(rows[0] + rows[1], 1.0, 1e-15);
}

TEST(Transport, MatchesBirkhoffBruteForce)
{
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int n = 2; n <= 4; ++n)
        for (int trial = 0; trial < 25; ++trial) {
            CostTensor J(n, n, 1);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) J(i, j, 0) = u(rng);
            const std::vector<double> w(static_cast<std::size_t>(n), 1.0 / n);
            const auto plan = solve_plan(J, w, w);
            EXPECT_NEAR(plan.objective, birkhoff_minimum(J), 1e-12);
        }
}

TEST(Transport, BeatsIndependentCouplingAndIsSparse)
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const int n0 = 2 + trial % 4, n1 = 2 + (trial / 4) % 4, R = 1 + trial % 2;
        CostTensor J(n0, n1, R);
        std::vector<double> a0(n0), a1(n1);
        for (auto& x : a0) x = 0.1 + u(rng);
        for (auto& x : a1) x = 0.1 + u(rng);
        const double s0 = std::accumulate(a0.begin(), a0.end(), 0.0), s1 = std::accumulate(a1.begin(), a1.end(), 0.0);
        for (auto& x : a0) x /= s0;
        for (auto& x : a1) x /= s1;
        for (int i = 0; i < n0; ++i)
            for (int j = 0; j < n1; ++j)
                for (int r = 0; r < R; ++r) J(i, j, r) = 10.0 * u(rng);
        const auto plan = solve_plan(J, a0, a1);
        double indep = 0.0;
        int nonzeros = 0;
        for (int i = 0; i < n0; ++i)
            for (int j = 0; j < n1; ++j) {
                double best = 1e300;
                for (int r = 0; r < R; ++r) {
                    best = std::min(best, J(i, j, r));
                    nonzeros += plan.lambda(i, j, r) > 1e-14;
                    EXPECT_GE(plan.lambda(i, j, r), 0.0);
                }
                indep += a0[i] * a1[j] * best;
            }
        EXPECT_LE(plan.objective, indep + 1e-12);
        EXPECT_LE(nonzeros, n0 + n1 - 1);
        const auto [rows, cols] = marginals(plan);
        for (int i = 0; i < n0; ++i) EXPECT_NEAR(rows[i], a0[i], 1e-8);
        for (int j = 0; j < n1; ++j) EXPECT_NEAR(cols[j], a1[j], 1e-8);
        EXPECT_NEAR(plan.objective, plan_objective(plan.lambda, J), 1e-12);
    }
}

TEST(Transport, DegenerateTiesAreDeterministic)
{
    // all costs equal: every vertex is optimal; the pivoting rule keeps the start
    const auto J = matrix_costs({{1, 1, 1}, {1, 1, 1}, {1, 1, 1}});
    const std::vector<double> w{1.0 / 3, 1.0 / 3, 1.0 / 3};
    const auto a = solve_plan(J, w, w);
    const auto b = solve_plan(J, w, w);
    EXPECT_EQ(a.lambda.data(), b.lambda.data());
    EXPECT_NEAR(a.objective, 1.0, 1e-15);
}

TEST(Transport, CsvRoundTrip)
{
    CostTensor J(2, 2, 2);
    for (int p = 0; p < 8; ++p) J(p / 4, (p / 2) % 2, p % 2) = 1.0 + p;
    const auto plan = solve_plan(J, {0.3, 0.7}, {0.6, 0.4});
    std::stringstream ss;
    write_plan_csv(ss, plan, J);
    const auto [back, Jb] = read_plan_csv(ss, "memory");
    EXPECT_EQ(back.lambda.data(), plan.lambda.data());
    EXPECT_EQ(Jb.data(), J.data());
    EXPECT_DOUBLE_EQ(back.objective, plan.objective);
}
