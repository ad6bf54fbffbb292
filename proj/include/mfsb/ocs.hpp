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
#ifndef MFSB_OCS_HPP
#define MFSB_OCS_HPP

// Gaussian-to-Gaussian covariance steering. The SDP uses the change of
// variables U = K Sigma and the relaxation Y >= U Sigma^-1 U', discretized
// with forward Euler on the moment equations.

#include "mfsb/chance.hpp"
#include "mfsb/conic.hpp"
#include "mfsb/csv.hpp"
#include "mfsb/dynamics.hpp"
#include "mfsb/errors.hpp"
#include "mfsb/gaussmix.hpp"
#include "mfsb/linalg.hpp"
#include "mfsb/log.hpp"

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace mfsb {

/// Mean trajectory, feedforward and control energy of a mean-steering problem.
struct MeanSteering {
    std::vector<Vec> mu;
    std::vector<Vec> v;
    double cost = 0.0;
};

/// Minimum-energy steering of the mean from mu0 to mu1 in continuous time:
///   mu_t = Phi(t,0) mu0 + M(t,0) Phi(1,t)' M10^-1 xi,   v_t = B_t' Phi(1,t)' M10^-1 xi,
/// with xi = mu1 - Phi10 mu0. The cost is xi' M10^-1 xi.
inline MeanSteering mean_feedforward_closed_form(const LTVSystem& sys, const TimeGrid& grid, const Vec& mu0,
                                                 const Vec& mu1, bool use_meanfield_matrix)
{
    if (mu0.size() != sys.n() || mu1.size() != sys.n())
        throw ConfigurationError("boundary means do not match the state dimension");
    const TransitionBundle tb(sys, grid, use_meanfield_matrix);
    require_controllable(tb, use_meanfield_matrix ? "(A + Abar, B)" : "(A, B)");
    const int T = grid.size();
    const Mat& Phi10 = tb.phi_from_start(T - 1);
    const Mat& M10 = tb.grammian_from_start(T - 1);
    const Eigen::LLT<Mat> llt(M10);
    const Vec xi = mu1 - Phi10 * mu0;
    const Vec eta = llt.solve(xi);

    MeanSteering out;
    out.mu.resize(static_cast<std::size_t>(T));
    out.v.resize(static_cast<std::size_t>(T));
    for (int k = 0; k < T; ++k) {
        const Mat Phi1t = Phi10 * tb.phi_from_start(k).inverse();
        out.mu[k] = tb.phi_from_start(k) * mu0 + tb.grammian_from_start(k) * Phi1t.transpose() * eta;
        out.v[k] = sys.B(k).transpose() * Phi1t.transpose() * eta;
    }
    out.mu[T - 1] = mu1;
    out.cost = xi.dot(eta);
    return out;
}

/// Minimum-energy steering of the forward-Euler mean recursion
///   mu_{k+1} = mu_k + dt (A_k mu_k + B_k v_k),  cost sum_k dt |v_k|^2.
/// This is the exact optimum of the discretized problem, so trajectories built
/// from it are consistent with the Euler SDP and the Euler-Maruyama simulator.
inline MeanSteering mean_feedforward_discrete(const LTVSystem& sys, const TimeGrid& grid, const Vec& mu0,
                                              const Vec& mu1, bool use_meanfield_matrix)
{
    if (mu0.size() != sys.n() || mu1.size() != sys.n())
        throw ConfigurationError("boundary means do not match the state dimension");
    check_compatible(sys, grid);
    const int T = grid.size();
    const int n = sys.n();
    const double dt = grid.dt();
    const Mat I = Mat::Identity(n, n);

    // Psi[k] = F_{T-2} ... F_k maps the state after step k-1 to the final knot.
    std::vector<Mat> Psi(static_cast<std::size_t>(T), I);
    for (int k = T - 2; k >= 0; --k) Psi[k] = Psi[k + 1] * (I + dt * sys.drift(k, use_meanfield_matrix));
    Mat W = Mat::Zero(n, n);
    for (int k = 0; k + 1 < T; ++k) {
        const Mat PB = Psi[k + 1] * sys.B(k);
        W += dt * PB * PB.transpose();
    }
    W = symmetrize(W);
    const double lmin = min_eigenvalue(W);
    if (!(lmin > 1e-10))
        throw ControllabilityError(std::string(use_meanfield_matrix ? "(A + Abar, B)" : "(A, B)") +
                                   " is not controllable on the grid (min eigenvalue " + std::to_string(lmin) + ")");
    const Vec xi = mu1 - Psi[0] * mu0;
    const Vec eta = W.llt().solve(xi);

    MeanSteering out;
    out.mu.assign(static_cast<std::size_t>(T), mu0);
    out.v.assign(static_cast<std::size_t>(T), Vec::Zero(sys.m()));
    for (int k = 0; k + 1 < T; ++k) {
        out.v[k] = sys.B(k).transpose() * Psi[k + 1].transpose() * eta;
        out.mu[k + 1] = out.mu[k] + dt * (sys.drift(k, use_meanfield_matrix) * out.mu[k] + sys.B(k) * out.v[k]);
    }
    out.cost = xi.dot(eta);
    return out;
}

/// Squared Bures-Wasserstein distance between two Gaussians.
inline double w2_oracle(const Gaussian& g0, const Gaussian& g1)
{
    if (g0.dim() != g1.dim()) throw ConfigurationError("w2_oracle dimension mismatch");
    const Mat r0 = sqrtm_psd(g0.cov());
    const Mat cross = sqrtm_psd(r0 * g1.cov() * r0);
    return (g0.mean() - g1.mean()).squaredNorm() + (g0.cov() + g1.cov() - 2.0 * cross).trace();
}

struct OcsProblem {
    LTVSystem sys;
    TimeGrid grid;
    Gaussian initial;
    Gaussian terminal;
    std::vector<LinearizedConstraint> constraints;
    std::optional<std::vector<Vec>> meanfield;  // fixed xbar_k entering through Abar
};

/// Feedback policy u_k(x) = K_k (x - mu_k) + v_k with its moment trajectories.
struct ConditionalPolicy {
    std::vector<Mat> K;
    std::vector<Vec> v;
    std::vector<Vec> mu;
    std::vector<Mat> Sigma;
    double cost = 0.0;

    int knots() const { return static_cast<int>(mu.size()); }
    Vec control(int k, const Vec& x) const { return K[k] * (x - mu[k]) + v[k]; }
};

/// Variable blocks of one covariance-steering problem inside a conic program.
/// Sigma and mu live on every knot; U, Y, v, t on every interval.
struct OcsVariables {
    int n = 0, m = 0, T = 0;
    std::vector<conic::BlockId> Sigma, mu, U, Y, v, t;
};

inline OcsVariables add_ocs_variables(conic::ConicProgram& p, const std::string& prefix, int n, int m, int T)
{
    OcsVariables var{n, m, T, {}, {}, {}, {}, {}, {}};
    for (int k = 0; k < T; ++k) {
        const std::string s = std::to_string(k);
        var.Sigma.push_back(p.add_symmetric(prefix + "Sigma_" + s, n));
        var.mu.push_back(p.add_vector(prefix + "mu_" + s, n));
        if (k + 1 < T) {
            var.U.push_back(p.add_vector(prefix + "U_" + s, m * n));
            var.Y.push_back(p.add_symmetric(prefix + "Y_" + s, m));
            var.v.push_back(p.add_vector(prefix + "v_" + s, m));
            var.t.push_back(p.add_scalar(prefix + "t_" + s));
        }
    }
    return var;
}

/// U_k(r, c), stored row-major.
inline conic::LinExpr u_entry(const conic::ConicProgram& p, const OcsVariables& var, int k, int r, int c)
{
    return p.entry(var.U[k], r * var.n + c);
}

/// Affine expressions for xbar_k, one per state coordinate.
using MeanfieldExprs = std::vector<std::vector<conic::LinExpr>>;

/// Adds dynamics, Schur relaxations, boundary conditions and linearized chance
/// rows for one block. Returns the block's cost sum_k dt (tr Y_k + t_k).
inline conic::LinExpr add_ocs_constraints(conic::ConicProgram& p, const OcsVariables& var, const LTVSystem& sys,
                                          const TimeGrid& grid, const Gaussian& initial, const Gaussian& terminal,
                                          const std::vector<LinearizedConstraint>& constraints,
                                          const MeanfieldExprs* xbar)
{
    using conic::LinExpr;
    using conic::SymExpr;
    const int n = var.n, m = var.m, T = var.T;
    if (sys.n() != n || sys.m() != m || sys.knots() != T || grid.size() != T)
        throw ConfigurationError("covariance steering block does not match the system");
    if (initial.dim() != n || terminal.dim() != n)
        throw ConfigurationError("boundary Gaussians do not match the state dimension");
    if (xbar && static_cast<int>(xbar->size()) != T) throw ConfigurationError("mean-field trajectory length mismatch");
    const auto steps = discretize_moments(sys, grid);

    LinExpr cost;
    for (int k = 0; k + 1 < T; ++k) {
        const MomentStep& st = steps[k];
        const double dt = st.dt;
        // covariance recursion, lower triangle
        for (int j = 0; j < n; ++j)
            for (int i = j; i < n; ++i) {
                LinExpr e = p.entry(var.Sigma[k + 1], i, j) - p.entry(var.Sigma[k], i, j) - dt * st.DDt(i, j);
                for (int l = 0; l < n; ++l) {
                    if (st.A(i, l) != 0.0) e -= dt * st.A(i, l) * p.entry(var.Sigma[k], l, j);
                    if (st.A(j, l) != 0.0) e -= dt * st.A(j, l) * p.entry(var.Sigma[k], l, i);
                }
                for (int r = 0; r < m; ++r) {
                    if (st.B(i, r) != 0.0) e -= dt * st.B(i, r) * u_entry(p, var, k, r, j);
                    if (st.B(j, r) != 0.0) e -= dt * st.B(j, r) * u_entry(p, var, k, r, i);
                }
                p.add_equality(std::move(e));
            }
        // mean recursion
        for (int i = 0; i < n; ++i) {
            LinExpr e = p.entry(var.mu[k + 1], i) - p.entry(var.mu[k], i);
            for (int l = 0; l < n; ++l)
                if (st.A(i, l) != 0.0) e -= dt * st.A(i, l) * p.entry(var.mu[k], l);
            for (int r = 0; r < m; ++r)
                if (st.B(i, r) != 0.0) e -= dt * st.B(i, r) * p.entry(var.v[k], r);
            if (xbar)
                for (int l = 0; l < n; ++l)
                    if (st.Abar(i, l) != 0.0) e -= dt * st.Abar(i, l) * (*xbar)[k][l];
            p.add_equality(std::move(e));
        }
        // [[Sigma, U'], [U, Y]] >= 0
        SymExpr schur(n + m);
        for (int j = 0; j < n; ++j)
            for (int i = j; i < n; ++i) schur(i, j) = p.entry(var.Sigma[k], i, j);
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < n; ++c) schur(n + r, c) = u_entry(p, var, k, r, c);
        for (int j = 0; j < m; ++j)
            for (int i = j; i < m; ++i) schur(n + i, n + j) = p.entry(var.Y[k], i, j);
        p.add_psd(std::move(schur));
        // [[I, v], [v', t]] >= 0  <=>  t >= |v|^2
        SymExpr epi(m + 1);
        for (int i = 0; i < m; ++i) {
            epi(i, i) = 1.0;
            epi(m, i) = p.entry(var.v[k], i);
        }
        epi(m, m) = p.scalar(var.t[k]);
        p.add_psd(std::move(epi));

        cost += dt * (p.trace(var.Y[k]) + p.scalar(var.t[k]));
    }

    const auto pin = [&](int k, const Gaussian& g) {
        for (int j = 0; j < n; ++j)
            for (int i = j; i < n; ++i) p.add_equality(p.entry(var.Sigma[k], i, j) - g.cov()(i, j));
        for (int i = 0; i < n; ++i) p.add_equality(p.entry(var.mu[k], i) - g.mean()(i));
    };
    pin(0, initial);
    pin(T - 1, terminal);

    for (const auto& c : constraints) {
        if (c.a.size() != n || c.ell.size() != n) throw ConfigurationError("chance constraint dimension mismatch");
        for (int k = 1; k + 1 < T; ++k) {
            if (!c.window.contains(grid, k)) continue;
            LinExpr e(-c.b);
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i)
                    if (c.ell(i) * c.ell(j) != 0.0) e -= c.ell(i) * c.ell(j) * p.entry(var.Sigma[k], i, j);
            for (int i = 0; i < n; ++i)
                if (c.a(i) != 0.0) e -= c.a(i) * p.entry(var.mu[k], i);
            p.add_nonnegative(std::move(e));
        }
    }
    return cost;
}

struct OcsProgram {
    conic::ConicProgram program;
    OcsVariables vars;
    conic::LinExpr cost;
};

inline OcsProgram build_ocs_sdp(const OcsProblem& prob)
{
    check_compatible(prob.sys, prob.grid);
    OcsProgram out;
    out.vars = add_ocs_variables(out.program, "", prob.sys.n(), prob.sys.m(), prob.grid.size());
    MeanfieldExprs xbar;
    if (prob.meanfield) {
        if (static_cast<int>(prob.meanfield->size()) != prob.grid.size())
            throw ConfigurationError("mean-field trajectory length mismatch");
        for (const Vec& x : *prob.meanfield) {
            if (x.size() != prob.sys.n()) throw ConfigurationError("mean-field trajectory dimension mismatch");
            std::vector<conic::LinExpr> row;
            for (int i = 0; i < x.size(); ++i) row.emplace_back(x(i));
            xbar.push_back(std::move(row));
        }
    }
    out.cost = add_ocs_constraints(out.program, out.vars, prob.sys, prob.grid, prob.initial, prob.terminal,
                                   prob.constraints, prob.meanfield ? &xbar : nullptr);
    out.program.minimize(out.cost);
    return out;
}

/// Reads one block's moments and gains from a solution. K_k = U_k Sigma_k^-1
/// with eigenvalues of Sigma_k floored at 1e-9; the final knot has K = 0, v = 0.
inline ConditionalPolicy policy_from_solution(const conic::ConicSolution& sol, const OcsVariables& var,
                                              const conic::LinExpr& cost)
{
    ConditionalPolicy pol;
    const int T = var.T;
    for (int k = 0; k < T; ++k) {
        const Mat S = std::get<Mat>(conic::extract_block(sol, var.Sigma[k]));
        pol.Sigma.push_back(S);
        pol.mu.push_back(std::get<Vec>(conic::extract_block(sol, var.mu[k])));
        if (k + 1 < T) {
            const Vec u = std::get<Vec>(conic::extract_block(sol, var.U[k]));
            const Mat U = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                u.data(), var.m, var.n);
            const double lmin = min_eigenvalue(S);
            if (!(lmin > 1e-12 * std::max(1.0, S.norm())))
                throw ConditioningError("covariance is numerically singular during gain recovery (knot " +
                                            std::to_string(k) + ")",
                                        k);
            pol.K.push_back(U * inverse_floored(S, 1e-9));
            pol.v.push_back(std::get<Vec>(conic::extract_block(sol, var.v[k])));
        } else {
            pol.K.push_back(Mat::Zero(var.m, var.n));
            pol.v.push_back(Vec::Zero(var.m));
        }
    }
    pol.cost = cost.evaluate(sol.x);
    return pol;
}

/// Raises SolveError unless the solution is optimal or close enough to be used.
inline void require_usable(const conic::ConicSolution& sol, const conic::Tolerances& tol, const std::string& what)
{
    using conic::Status;
    if (sol.status == Status::optimal) return;
    if (sol.status == Status::max_iterations) {
        const auto& r = sol.residuals;
        if (r.primal <= 10 * tol.primal && r.dual <= 10 * tol.dual && r.gap <= 10 * tol.gap) {
            log::info(what, ": accepting iterate at the iteration cap (pres ", r.primal, ", dres ", r.dual, ", gap ",
                      r.gap, ")");
            return;
        }
        throw SolveError(what + ": solver stopped at the iteration cap without converging", "max_iterations", false);
    }
    throw SolveError(what + ": conic program is " + conic::to_string(sol.status), conic::to_string(sol.status),
                     sol.status == Status::infeasible);
}

inline conic::Tolerances default_ocs_tolerances() { return {1e-8, 1e-8, 1e-8, 200}; }

inline ConditionalPolicy solve_ocs(const OcsProblem& prob, const conic::Tolerances& tol = default_ocs_tolerances())
{
    const OcsProgram built = build_ocs_sdp(prob);
    const auto sol = conic::solve(built.program, tol);
    require_usable(sol, tol, "covariance steering");
    return policy_from_solution(sol, built.vars, built.cost);
}

/// One row per knot: t, K (row-major), v, mu, Sigma (lower triangle, row by row).
inline void write_policy_csv(std::ostream& os, const ConditionalPolicy& pol, const TimeGrid& grid)
{
    const int n = static_cast<int>(pol.mu.front().size());
    const int m = static_cast<int>(pol.v.front().size());
    std::vector<std::string> head{"t"};
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c) head.push_back("K_" + std::to_string(r) + "_" + std::to_string(c));
    for (int r = 0; r < m; ++r) head.push_back("v_" + std::to_string(r));
    for (int i = 0; i < n; ++i) head.push_back("mu_" + std::to_string(i));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) head.push_back("Sigma_" + std::to_string(i) + "_" + std::to_string(j));
    csv::write_row(os, head);
    for (int k = 0; k < pol.knots(); ++k) {
        std::vector<std::string> row{csv::num(grid[k])};
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < n; ++c) row.push_back(csv::num(pol.K[k](r, c)));
        csv::append(row, pol.v[k]);
        csv::append(row, pol.mu[k]);
        csv::append(row, lower_triangle(pol.Sigma[k]));
        csv::write_row(os, row);
    }
}

inline ConditionalPolicy read_policy_csv(std::istream& is, int n, int m, const std::string& where)
{
    const auto rows = csv::read_numeric(is, where);
    const std::size_t width = 1 + static_cast<std::size_t>(m * n + m + n + svec_size(n));
    ConditionalPolicy pol;
    for (const auto& r : rows) {
        if (r.size() != width) throw IoError("policy row has " + std::to_string(r.size()) + " columns in " + where);
        std::size_t c = 1;
        Mat K(m, n);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) K(i, j) = r[c++];
        Vec v(m), mu(n), tri(svec_size(n));
        for (int i = 0; i < m; ++i) v(i) = r[c++];
        for (int i = 0; i < n; ++i) mu(i) = r[c++];
        for (int i = 0; i < tri.size(); ++i) tri(i) = r[c++];
        pol.K.push_back(K);
        pol.v.push_back(v);
        pol.mu.push_back(mu);
        pol.Sigma.push_back(from_lower_triangle(tri, n));
    }
    if (pol.mu.empty()) throw IoError("policy file has no rows: " + where);
    return pol;
}

}  // namespace mfsb

#endif  // MFSB_OCS_HPP
