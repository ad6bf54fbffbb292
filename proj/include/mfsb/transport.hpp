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
#ifndef MFSB_TRANSPORT_HPP
#define MFSB_TRANSPORT_HPP

// Component-level transport LP
//   min sum lambda_ijr J_ijr  s.t.  sum_{j,r} lambda_ijr = alpha0_i,
//                                   sum_{i,r} lambda_ijr = alpha1_j,  lambda >= 0,
// solved by the primal transportation simplex on the bipartite graph with one
// arc per (i, j, route).

#include "mfsb/csv.hpp"
#include "mfsb/errors.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

namespace mfsb {

/// Dense (i, j, route) array; route is the fastest index.
template <typename T>
class Tensor3 {
public:
    Tensor3() = default;
    Tensor3(int n0, int n1, int routes, T init = T{})
        : n0_(n0), n1_(n1), r_(routes), data_(static_cast<std::size_t>(n0 * n1 * routes), init)
    {
        if (n0 < 1 || n1 < 1 || routes < 1) throw InputError("tensor dimensions must be positive");
    }

    int rows() const { return n0_; }
    int cols() const { return n1_; }
    int routes() const { return r_; }
    std::size_t size() const { return data_.size(); }

    T& operator()(int i, int j, int r) { return data_[index(i, j, r)]; }
    const T& operator()(int i, int j, int r) const { return data_[index(i, j, r)]; }
    const std::vector<T>& data() const { return data_; }

    std::size_t index(int i, int j, int r) const
    {
        if (i < 0 || i >= n0_ || j < 0 || j >= n1_ || r < 0 || r >= r_) throw InputError("tensor index out of range");
        return (static_cast<std::size_t>(i) * n1_ + j) * r_ + r;
    }

private:
    int n0_ = 0, n1_ = 0, r_ = 0;
    std::vector<T> data_;
};

using CostTensor = Tensor3<double>;

struct TransportPlan {
    Tensor3<double> lambda;
    std::vector<double> alpha0;
    std::vector<double> alpha1;
    double objective = 0.0;

    int rows() const { return lambda.rows(); }
    int cols() const { return lambda.cols(); }
    int routes() const { return lambda.routes(); }
};

/// Checks positivity and renormalizes weights that sum to 1 within 1e-6.
inline std::vector<double> normalized_weights(std::vector<double> w, const char* what)
{
    if (w.empty()) throw InputError(std::string(what) + " is empty");
    double total = 0.0;
    for (double x : w) {
        if (!(x > 0.0) || !std::isfinite(x)) throw InputError(std::string(what) + " has a non-positive entry");
        total += x;
    }
    if (std::abs(total - 1.0) > 1e-6) throw InputError(std::string(what) + " does not sum to 1");
    for (double& x : w) x /= total;
    return w;
}

/// Row and column sums (routes summed out).
inline std::pair<std::vector<double>, std::vector<double>> marginals(const TransportPlan& plan)
{
    std::vector<double> rows(static_cast<std::size_t>(plan.rows()), 0.0), cols(static_cast<std::size_t>(plan.cols()), 0.0);
    for (int i = 0; i < plan.rows(); ++i)
        for (int j = 0; j < plan.cols(); ++j)
            for (int r = 0; r < plan.routes(); ++r) {
                rows[i] += plan.lambda(i, j, r);
                cols[j] += plan.lambda(i, j, r);
            }
    return {rows, cols};
}

inline double plan_objective(const Tensor3<double>& lambda, const CostTensor& J)
{
    double acc = 0.0;
    for (std::size_t p = 0; p < lambda.size(); ++p) acc += lambda.data()[p] * J.data()[p];
    return acc;
}

/// Optimal vertex of the transport polytope. Pivoting uses Bland's rule
/// (lowest (i, j, route) entering arc, lowest leaving arc on ties), so the
/// result is deterministic and the method cannot cycle.
inline TransportPlan solve_plan(const CostTensor& J, std::vector<double> alpha0, std::vector<double> alpha1)
{
    alpha0 = normalized_weights(std::move(alpha0), "initial weights");
    alpha1 = normalized_weights(std::move(alpha1), "terminal weights");
    const int N0 = J.rows(), N1 = J.cols(), R = J.routes();
    if (static_cast<int>(alpha0.size()) != N0 || static_cast<int>(alpha1.size()) != N1)
        throw InputError("cost tensor shape does not match the weight vectors");
    for (double c : J.data())
        if (!std::isfinite(c)) throw InputError("transport costs must be finite");

    struct Arc {
        int i, j, r;
        double flow;
    };
    // Northwest-corner start on route 0; exactly N0 + N1 - 1 basic arcs.
    std::vector<Arc> basis;
    {
        std::vector<double> s = alpha0, d = alpha1;
        int i = 0, j = 0;
        while (true) {
            const double x = std::min(s[i], d[j]);
            basis.push_back({i, j, 0, x});
            s[i] -= x;
            d[j] -= x;
            if (i == N0 - 1 && j == N1 - 1) break;
            if (j == N1 - 1 || (i < N0 - 1 && s[i] <= d[j])) ++i;
            else ++j;
        }
    }

    double scale = 1.0;
    for (double c : J.data()) scale = std::max(scale, std::abs(c));
    const double tol = 1e-12 * scale;
    const int nodes = N0 + N1;  // rows 0..N0-1, columns N0..N0+N1-1

    const int max_pivots = 100 * (N0 + N1) * std::max(1, N0 * N1 * R);
    for (int pivot = 0; pivot <= max_pivots; ++pivot) {
        // adjacency of the spanning tree
        std::vector<std::vector<std::pair<int, int>>> adj(static_cast<std::size_t>(nodes));
        for (int b = 0; b < static_cast<int>(basis.size()); ++b) {
            adj[basis[b].i].push_back({N0 + basis[b].j, b});
            adj[N0 + basis[b].j].push_back({basis[b].i, b});
        }
        // potentials: u_i + v_j = c_ijr on basic arcs, u_0 = 0
        std::vector<double> pot(static_cast<std::size_t>(nodes), 0.0);
        std::vector<int> parent(static_cast<std::size_t>(nodes), -1), parent_arc(static_cast<std::size_t>(nodes), -1);
        std::vector<int> order{0};
        std::vector<bool> seen(static_cast<std::size_t>(nodes), false);
        seen[0] = true;
        for (std::size_t q = 0; q < order.size(); ++q) {
            const int a = order[q];
            for (auto [b, arc] : adj[a]) {
                if (seen[b]) continue;
                seen[b] = true;
                parent[b] = a;
                parent_arc[b] = arc;
                const Arc& e = basis[arc];
                const double c = J(e.i, e.j, e.r);
                pot[b] = c - pot[a];
                order.push_back(b);
            }
        }
        if (static_cast<int>(order.size()) != nodes) throw Error("transport basis is not a spanning tree");

        // entering arc: first with negative reduced cost
        int ei = -1, ej = -1, er = -1;
        for (int i = 0; i < N0 && ei < 0; ++i)
            for (int j = 0; j < N1 && ei < 0; ++j)
                for (int r = 0; r < R; ++r) {
                    if (J(i, j, r) - pot[i] - pot[N0 + j] < -tol) {
                        const bool basic = std::any_of(basis.begin(), basis.end(), [&](const Arc& e) {
                            return e.i == i && e.j == j && e.r == r;
                        });
                        if (basic) continue;
                        ei = i;
                        ej = j;
                        er = r;
                        break;
                    }
                }
        if (ei < 0) break;
        if (pivot == max_pivots) throw Error("transport simplex exceeded its pivot limit");

        // cycle: entering arc (row ei -> column ej) closed by the tree path column ej -> row ei
        std::vector<int> depth(static_cast<std::size_t>(nodes), 0);
        for (int node : order)
            if (parent[node] >= 0) depth[node] = depth[parent[node]] + 1;
        std::vector<int> up_a, up_b;  // arcs on each side up to the common ancestor
        int a = N0 + ej, b = ei;
        while (a != b) {
            if (depth[a] >= depth[b]) {
                up_a.push_back(parent_arc[a]);
                a = parent[a];
            } else {
                up_b.push_back(parent_arc[b]);
                b = parent[b];
            }
        }
        // Path ej -> ... -> ei alternates starting with a "minus" arc at column ej.
        std::vector<int> path = up_a;
        path.insert(path.end(), up_b.rbegin(), up_b.rend());
        double theta = std::numeric_limits<double>::infinity();
        int leave = -1;
        const auto key = [](const Arc& e) { return std::tie(e.i, e.j, e.r); };
        for (std::size_t p = 0; p < path.size(); p += 2) {
            const Arc& e = basis[path[p]];
            if (leave < 0 || e.flow < theta - 1e-15) {
                theta = e.flow;
                leave = path[p];
            } else if (e.flow <= theta + 1e-15 && key(e) < key(basis[leave])) {
                theta = std::min(theta, e.flow);
                leave = path[p];
            }
        }
        for (std::size_t p = 0; p < path.size(); ++p) basis[path[p]].flow += (p % 2 == 0 ? -theta : theta);
        basis[leave] = {ei, ej, er, theta};
    }

    TransportPlan plan{Tensor3<double>(N0, N1, R, 0.0), alpha0, alpha1, 0.0};
    for (const Arc& e : basis) plan.lambda(e.i, e.j, e.r) += std::max(0.0, e.flow);
    plan.objective = plan_objective(plan.lambda, J);
    return plan;
}

/// Rows (i, j, route, lambda, J) for every arc.
inline void write_plan_csv(std::ostream& os, const TransportPlan& plan, const CostTensor& J)
{
    csv::write_row(os, {"i", "j", "route", "lambda", "J"});
    for (int i = 0; i < plan.rows(); ++i)
        for (int j = 0; j < plan.cols(); ++j)
            for (int r = 0; r < plan.routes(); ++r)
                csv::write_row(os, {std::to_string(i), std::to_string(j), std::to_string(r),
                                    csv::num(plan.lambda(i, j, r)), csv::num(J(i, j, r))});
}

inline std::pair<TransportPlan, CostTensor> read_plan_csv(std::istream& is, const std::string& where)
{
    const auto rows = csv::read_numeric(is, where);
    int n0 = 0, n1 = 0, nr = 0;
    for (const auto& r : rows) {
        if (r.size() != 5) throw IoError("plan rows need 5 columns in " + where);
        n0 = std::max(n0, static_cast<int>(r[0]) + 1);
        n1 = std::max(n1, static_cast<int>(r[1]) + 1);
        nr = std::max(nr, static_cast<int>(r[2]) + 1);
    }
    if (rows.empty()) throw IoError("plan file has no rows: " + where);
    TransportPlan plan{Tensor3<double>(n0, n1, nr, 0.0), {}, {}, 0.0};
    CostTensor J(n0, n1, nr, 0.0);
    for (const auto& r : rows) {
        plan.lambda(static_cast<int>(r[0]), static_cast<int>(r[1]), static_cast<int>(r[2])) = r[3];
        J(static_cast<int>(r[0]), static_cast<int>(r[1]), static_cast<int>(r[2])) = r[4];
    }
    auto [a0, a1] = marginals(plan);
    plan.alpha0 = a0;
    plan.alpha1 = a1;
    plan.objective = plan_objective(plan.lambda, J);
    return {plan, J};
}

}  // namespace mfsb

#endif  // MFSB_TRANSPORT_HPP
