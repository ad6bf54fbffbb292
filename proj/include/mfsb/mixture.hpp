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
#ifndef MFSB_MIXTURE_HPP
#define MFSB_MIXTURE_HPP

// Mixture feedback policy
//   u_t(x) = sum_c w_c(t, x) u_{t|c}(x),   w_c = lambda_c rho_{t|c}(x) / sum lambda rho,
// over the active components c = (i, j, route) of a transport plan.

#include "mfsb/csv.hpp"
#include "mfsb/dynamics.hpp"
#include "mfsb/errors.hpp"
#include "mfsb/gaussmix.hpp"
#include "mfsb/ocs.hpp"
#include "mfsb/transport.hpp"

#include <cmath>
#include <optional>
#include <numeric>
#include <ostream>
#include <random>
#include <vector>

namespace mfsb {

struct MixtureSolution {
    TimeGrid grid{2};
    TransportPlan plan;
    CostTensor costs;
    std::vector<std::optional<ConditionalPolicy>> policies;  // indexed like plan.lambda
    std::vector<Vec> xbar;                                    // mean-field trajectory
    std::vector<Vec> ubar;                                    // mean control (decomposition path only)

    double bound() const { return plan.objective; }
    const std::optional<ConditionalPolicy>& policy(int i, int j, int r) const
    {
        return policies[plan.lambda.index(i, j, r)];
    }
};

struct ActiveComponent {
    int i, j, r;
    double weight;
    const ConditionalPolicy* policy;
};

/// Components with lambda > 0, in (i, j, route) order.
inline std::vector<ActiveComponent> active_components(const MixtureSolution& sol)
{
    std::vector<ActiveComponent> out;
    for (int i = 0; i < sol.plan.rows(); ++i)
        for (int j = 0; j < sol.plan.cols(); ++j)
            for (int r = 0; r < sol.plan.routes(); ++r) {
                const double w = sol.plan.lambda(i, j, r);
                if (!(w > 0.0)) continue;
                const auto& pol = sol.policy(i, j, r);
                if (!pol) throw ConfigurationError("active plan entry has no conditional policy");
                out.push_back({i, j, r, w, &*pol});
            }
    if (out.empty()) throw ConfigurationError("transport plan has no active entries");
    return out;
}

/// Evaluates the mixture policy with per-knot factorizations cached.
class MixturePolicy {
public:
    explicit MixturePolicy(const MixtureSolution& sol) : comps_(active_components(sol))
    {
        const int T = comps_.front().policy->knots();
        factors_.resize(static_cast<std::size_t>(T));
        for (int k = 0; k < T; ++k)
            for (const auto& c : comps_) {
                const Mat& S = c.policy->Sigma[k];
                Eigen::LLT<Mat> llt(symmetrize(S));
                if (llt.info() != Eigen::Success)
                    throw DomainError("conditional covariance is not positive definite at knot " + std::to_string(k));
                Factor f;
                f.Linv = llt.matrixL().solve(Mat::Identity(S.rows(), S.cols()));
                f.log_norm = std::log(c.weight) - 0.5 * S.rows() * kLog2Pi -
                             llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
                factors_[k].push_back(std::move(f));
            }
    }

    int size() const { return static_cast<int>(comps_.size()); }
    const std::vector<ActiveComponent>& components() const { return comps_; }

    /// Normalized weights w_c(t_k, x), computed in log domain.
    Vec weights(int k, const Vec& x) const
    {
        const int C = size();
        Vec lw(C);
        for (int c = 0; c < C; ++c) {
            const Factor& f = factors_[k][c];
            lw(c) = f.log_norm - 0.5 * (f.Linv * (x - comps_[c].policy->mu[k])).squaredNorm();
        }
        const double mx = lw.maxCoeff();
        if (!std::isfinite(mx)) throw DomainError("mixture weights vanish at the evaluation point");
        Vec w = (lw.array() - mx).exp();
        return w / w.sum();
    }

    Vec control(int k, const Vec& x) const
    {
        const Vec w = weights(k, x);
        Vec u = Vec::Zero(comps_.front().policy->v[k].size());
        for (int c = 0; c < size(); ++c)
            if (w(c) > 0.0) u += w(c) * comps_[c].policy->control(k, x);
        return u;
    }

private:
    struct Factor {
        Mat Linv;
        double log_norm;
    };
    std::vector<ActiveComponent> comps_;
    std::vector<std::vector<Factor>> factors_;
};

inline Vec policy_eval(const MixtureSolution& sol, int k, const Vec& x)
{
    if (k < 0 || k >= sol.grid.size()) throw ConfigurationError("knot out of range");
    return MixturePolicy(sol).control(k, x);
}

/// rho_t = sum_c lambda_c N(mu_{t|c}, Sigma_{t|c}) over active components.
inline GaussianMixture flow_density(const MixtureSolution& sol, int k)
{
    const auto comps = active_components(sol);
    double total = 0.0;
    for (const auto& c : comps) total += c.weight;
    std::vector<double> w;
    std::vector<Gaussian> g;
    for (const auto& c : comps) {
        w.push_back(c.weight / total);
        g.emplace_back(c.policy->mu[k], c.policy->Sigma[k]);
    }
    return {w, g};
}

struct GapEstimate {
    double bound = 0.0;
    double gap = 0.0;
    double standard_error = 0.0;
};

/// J_OT and a Monte-Carlo estimate of
///   int_0^1 int sum_c lambda_c rho_{t|c} |u_{t|c} - u_t|^2 dx dt,
/// with t stratified over the knots of the left Riemann sum.
inline GapEstimate bound_and_gap(const MixtureSolution& sol, int samples, std::uint64_t seed)
{
    if (samples < 1) throw InputError("gap estimate needs at least one sample");
    const MixturePolicy mp(sol);
    GapEstimate out;
    out.bound = sol.bound();
    if (mp.size() == 1) return out;

    const auto& comps = mp.components();
    std::vector<double> w;
    for (const auto& c : comps) w.push_back(c.weight);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& x : w) x /= total;
    const int T = sol.grid.size();
    const int n = static_cast<int>(comps.front().policy->mu.front().size());
    std::vector<std::vector<Mat>> roots(comps.size());
    for (std::size_t c = 0; c < comps.size(); ++c)
        for (int k = 0; k + 1 < T; ++k) roots[c].push_back(sqrt_factor(comps[c].policy->Sigma[k]));

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> knot(0, T - 2);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    double mean = 0.0, m2 = 0.0;
    Vec z(n);
    const double horizon = (T - 1) * sol.grid.dt();
    for (int s = 0; s < samples; ++s) {
        const int k = knot(rng);
        const int c = draw_index(w, unif(rng));
        for (int d = 0; d < n; ++d) z(d) = normal(rng);
        const Vec x = comps[c].policy->mu[k] + roots[c][k] * z;
        const double f = horizon * (comps[c].policy->control(k, x) - mp.control(k, x)).squaredNorm();
        const double delta = f - mean;
        mean += delta / (s + 1);
        m2 += delta * (f - mean);
    }
    out.gap = mean;
    out.standard_error = samples > 1 ? std::sqrt(m2 / (samples - 1) / samples) : 0.0;
    return out;
}

/// One snapshot of the flow: i, j, route, weight, mean, covariance lower triangle.
inline void write_flow_csv(std::ostream& os, const MixtureSolution& sol, int k)
{
    const auto comps = active_components(sol);
    const int n = static_cast<int>(comps.front().policy->mu[k].size());
    std::vector<std::string> head{"i", "j", "route", "weight"};
    for (int a = 0; a < n; ++a) head.push_back("mu_" + std::to_string(a));
    for (int a = 0; a < n; ++a)
        for (int b = 0; b <= a; ++b) head.push_back("Sigma_" + std::to_string(a) + "_" + std::to_string(b));
    csv::write_row(os, head);
    for (const auto& c : comps) {
        std::vector<std::string> row{std::to_string(c.i), std::to_string(c.j), std::to_string(c.r), csv::num(c.weight)};
        csv::append(row, c.policy->mu[k]);
        csv::append(row, lower_triangle(c.policy->Sigma[k]));
        csv::write_row(os, row);
    }
}

}  // namespace mfsb

#endif  // MFSB_MIXTURE_HPP
