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
#ifndef MFSB_DYNAMICS_HPP
#define MFSB_DYNAMICS_HPP

#include "mfsb/errors.hpp"
#include "mfsb/linalg.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace mfsb {

/// Uniform grid of knots on [0, 1].
class TimeGrid {
public:
    explicit TimeGrid(int count) : knots_(static_cast<std::size_t>(count > 0 ? count : 0))
    {
        if (count < 2) throw ConfigurationError("time grid needs at least 2 knots, got " + std::to_string(count));
        dt_ = 1.0 / (count - 1);
        for (int k = 0; k < count; ++k) knots_[k] = k * dt_;
        knots_.back() = 1.0;
    }

    /// Validates an explicit knot list: strictly increasing, 0 to 1, uniform within 1e-12.
    explicit TimeGrid(std::vector<double> knots) : knots_(std::move(knots))
    {
        const int count = static_cast<int>(knots_.size());
        if (count < 2) throw ConfigurationError("time grid needs at least 2 knots");
        dt_ = 1.0 / (count - 1);
        if (std::abs(knots_.front()) > 1e-12 || std::abs(knots_.back() - 1.0) > 1e-12)
            throw ConfigurationError("time grid must start at 0 and end at 1");
        for (int k = 0; k + 1 < count; ++k) {
            if (!(knots_[k + 1] > knots_[k])) throw ConfigurationError("time grid must be strictly increasing");
            if (std::abs(knots_[k + 1] - knots_[k] - dt_) > 1e-12)
                throw ConfigurationError("time grid must be uniform (knot " + std::to_string(k) + ")");
        }
    }

    int size() const { return static_cast<int>(knots_.size()); }
    double dt() const { return dt_; }
    double operator[](int k) const { return knots_[static_cast<std::size_t>(k)]; }
    const std::vector<double>& knots() const { return knots_; }

private:
    std::vector<double> knots_;
    double dt_ = 1.0;
};

/// Linear time-varying McKean-Vlasov dynamics
///   dx = (A_t x + Abar_t xbar_t + B_t u) dt + D_t dw,
/// with every matrix stored per knot and held constant on [t_k, t_{k+1}).
class LTVSystem {
public:
    LTVSystem(std::vector<Mat> A, std::vector<Mat> Abar, std::vector<Mat> B, std::vector<Mat> D)
        : A_(std::move(A)), Abar_(std::move(Abar)), B_(std::move(B)), D_(std::move(D))
    {
        const std::size_t T = A_.size();
        if (T < 2) throw ConfigurationError("system needs matrices for at least 2 knots");
        if (Abar_.size() != T || B_.size() != T || D_.size() != T)
            throw ConfigurationError("system matrix lists must all have one entry per knot");
        n_ = static_cast<int>(A_[0].rows());
        m_ = static_cast<int>(B_[0].cols());
        q_ = static_cast<int>(D_[0].cols());
        for (std::size_t k = 0; k < T; ++k) {
            const auto bad = [&](const char* name) {
                return ConfigurationError(std::string("dimension mismatch in ") + name + " at knot " +
                                          std::to_string(k));
            };
            if (A_[k].rows() != n_ || A_[k].cols() != n_) throw bad("A");
            if (Abar_[k].rows() != n_ || Abar_[k].cols() != n_) throw bad("Abar");
            if (B_[k].rows() != n_ || B_[k].cols() != m_) throw bad("B");
            if (D_[k].rows() != n_ || D_[k].cols() != q_) throw bad("D");
        }
        if (n_ < 1 || m_ < 1) throw ConfigurationError("state and control dimensions must be positive");
    }

    /// Time-invariant system replicated over `knots` knots.
    static LTVSystem constant(const Mat& A, const Mat& Abar, const Mat& B, const Mat& D, int knots)
    {
        if (knots < 2) throw ConfigurationError("system needs at least 2 knots");
        const auto rep = [knots](const Mat& M) { return std::vector<Mat>(static_cast<std::size_t>(knots), M); };
        return LTVSystem(rep(A), rep(Abar), rep(B), rep(D));
    }

    int n() const { return n_; }
    int m() const { return m_; }
    int q() const { return q_; }
    int knots() const { return static_cast<int>(A_.size()); }

    const Mat& A(int k) const { return A_[static_cast<std::size_t>(k)]; }
    const Mat& Abar(int k) const { return Abar_[static_cast<std::size_t>(k)]; }
    const Mat& B(int k) const { return B_[static_cast<std::size_t>(k)]; }
    const Mat& D(int k) const { return D_[static_cast<std::size_t>(k)]; }

    /// A_k, or A_k + Abar_k when the mean-field matrix is requested.
    Mat drift(int k, bool use_meanfield_matrix) const
    {
        return use_meanfield_matrix ? Mat(A(k) + Abar(k)) : A(k);
    }

    bool has_meanfield() const
    {
        for (const auto& M : Abar_)
            if (M.cwiseAbs().maxCoeff() > 0.0) return true;
        return false;
    }

    /// Same system restricted to a different knot count; only valid for time-invariant systems.
    LTVSystem resampled(int knots) const
    {
        for (std::size_t k = 1; k < A_.size(); ++k)
            if (A_[k] != A_[0] || Abar_[k] != Abar_[0] || B_[k] != B_[0] || D_[k] != D_[0])
                throw ConfigurationError("only time-invariant systems can be resampled to a new grid");
        return constant(A_[0], Abar_[0], B_[0], D_[0], knots);
    }

private:
    std::vector<Mat> A_, Abar_, B_, D_;
    int n_ = 0, m_ = 0, q_ = 0;
};

inline void check_compatible(const LTVSystem& sys, const TimeGrid& grid)
{
    if (sys.knots() != grid.size())
        throw ConfigurationError("system has " + std::to_string(sys.knots()) + " knots but grid has " +
                                 std::to_string(grid.size()));
}

/// State-transition matrices and controllability Grammians of (A, B) or (A + Abar, B),
/// precomputed interval by interval.
///
/// Each interval [t_k, t_{k+1}] is integrated with `substeps` classical RK4 steps on
///   dPhi/dt = A Phi,            Phi(t_k, t_k) = I
///   dM/dt   = A M + M A' + B B', M(t_k, t_k) = 0
/// and longer spans are composed with
///   Phi(t, s) = Phi(t, r) Phi(r, s)
///   M(t, s)   = M(t, r) + Phi(t, r) M(r, s) Phi(t, r)'.
class TransitionBundle {
public:
    TransitionBundle(const LTVSystem& sys, const TimeGrid& grid, bool use_meanfield_matrix, int substeps = 4)
        : n_(sys.n()), T_(grid.size())
    {
        check_compatible(sys, grid);
        const double h = grid.dt() / substeps;
        const Mat I = Mat::Identity(n_, n_);
        step_phi_.reserve(static_cast<std::size_t>(T_ - 1));
        step_gram_.reserve(static_cast<std::size_t>(T_ - 1));
        for (int k = 0; k + 1 < T_; ++k) {
            const Mat A = sys.drift(k, use_meanfield_matrix);
            const Mat BB = sys.B(k) * sys.B(k).transpose();
            const auto fM = [&](const Mat& M) -> Mat { return A * M + M * A.transpose() + BB; };
            Mat P = I;
            Mat M = Mat::Zero(n_, n_);
            for (int s = 0; s < substeps; ++s) {
                const Mat k1 = A * P;
                const Mat k2 = A * (P + 0.5 * h * k1);
                const Mat k3 = A * (P + 0.5 * h * k2);
                const Mat k4 = A * (P + h * k3);
                P += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

                const Mat m1 = fM(M);
                const Mat m2 = fM(M + 0.5 * h * m1);
                const Mat m3 = fM(M + 0.5 * h * m2);
                const Mat m4 = fM(M + h * m3);
                M += h / 6.0 * (m1 + 2.0 * m2 + 2.0 * m3 + m4);
            }
            step_phi_.push_back(P);
            step_gram_.push_back(symmetrize(M));
        }
        // Prefix products from knot 0 make Phi(t, 0) and M(t, 0) O(1) lookups.
        phi_from0_.assign(static_cast<std::size_t>(T_), I);
        gram_from0_.assign(static_cast<std::size_t>(T_), Mat::Zero(n_, n_));
        for (int k = 0; k + 1 < T_; ++k) {
            phi_from0_[k + 1] = step_phi_[k] * phi_from0_[k];
            gram_from0_[k + 1] =
                symmetrize(step_gram_[k] + step_phi_[k] * gram_from0_[k] * step_phi_[k].transpose());
        }
    }

    int n() const { return n_; }
    int knots() const { return T_; }

    /// Phi(t_t, t_s); for t < s this is the inverse transition.
    Mat phi(int t, int s) const
    {
        check_knot(t);
        check_knot(s);
        if (t == s) return Mat::Identity(n_, n_);
        if (t < s) return phi(s, t).inverse();
        Mat P = Mat::Identity(n_, n_);
        for (int k = s; k < t; ++k) P = step_phi_[k] * P;
        return P;
    }

    /// M(t_t, t_s) for t >= s.
    Mat grammian(int t, int s) const
    {
        check_knot(t);
        check_knot(s);
        if (t < s) throw OrderingError("grammian requires t >= s");
        Mat M = Mat::Zero(n_, n_);
        for (int k = s; k < t; ++k) M = step_gram_[k] + step_phi_[k] * M * step_phi_[k].transpose();
        return symmetrize(M);
    }

    const Mat& phi_from_start(int t) const { return phi_from0_[static_cast<std::size_t>(t)]; }
    const Mat& grammian_from_start(int t) const { return gram_from0_[static_cast<std::size_t>(t)]; }

private:
    void check_knot(int k) const
    {
        if (k < 0 || k >= T_) throw ConfigurationError("knot index " + std::to_string(k) + " out of range");
    }

    int n_;
    int T_;
    std::vector<Mat> step_phi_, step_gram_;
    std::vector<Mat> phi_from0_, gram_from0_;
};

inline Mat state_transition(const LTVSystem& sys, const TimeGrid& grid, bool use_meanfield_matrix, int t, int s)
{
    return TransitionBundle(sys, grid, use_meanfield_matrix).phi(t, s);
}

inline Mat grammian(const LTVSystem& sys, const TimeGrid& grid, bool use_meanfield_matrix, int t, int s)
{
    if (t < s) throw OrderingError("grammian requires t >= s");
    return TransitionBundle(sys, grid, use_meanfield_matrix).grammian(t, s);
}

/// Throws ControllabilityError unless M(1, 0) is positive definite (min eigenvalue > 1e-10).
inline void require_controllable(const TransitionBundle& bundle, const std::string& what)
{
    const double lmin = min_eigenvalue(bundle.grammian_from_start(bundle.knots() - 1));
    if (!(lmin > 1e-10))
        throw ControllabilityError(what + " is not controllable on [0,1] (min eigenvalue of M(1,0) = " +
                                   std::to_string(lmin) + ")");
}

/// Forward-Euler coefficients of one knot interval of the moment recursions
///   Sigma+ = Sigma + dt (A Sigma + Sigma A' + B U + U' B' + D D')
///   mu+    = mu + dt (A mu + Abar xbar + B v).
struct MomentStep {
    double dt;
    Mat A, Abar, B, DDt;

    Mat next_covariance(const Mat& Sigma, const Mat& U) const
    {
        const Mat BU = B * U;
        return Sigma + dt * (A * Sigma + Sigma * A.transpose() + BU + BU.transpose() + DDt);
    }

    Vec next_mean(const Vec& mu, const Vec& xbar, const Vec& v) const
    {
        return mu + dt * (A * mu + Abar * xbar + B * v);
    }
};

inline std::vector<MomentStep> discretize_moments(const LTVSystem& sys, const TimeGrid& grid)
{
    check_compatible(sys, grid);
    std::vector<MomentStep> steps;
    steps.reserve(static_cast<std::size_t>(grid.size() - 1));
    for (int k = 0; k + 1 < grid.size(); ++k)
        steps.push_back({grid.dt(), sys.A(k), sys.Abar(k), sys.B(k), sys.D(k) * sys.D(k).transpose()});
    return steps;
}

}  // namespace mfsb

#endif  // MFSB_DYNAMICS_HPP
