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
#ifndef MFSB_CHANCE_HPP
#define MFSB_CHANCE_HPP

// Probabilistic half-space constraints P(a'x <= beta) >= 1 - delta on Gaussian
// states, their exact deterministic form and a conservative linearization that
// is affine in (Sigma, mu).

#include "mfsb/dynamics.hpp"
#include "mfsb/errors.hpp"
#include "mfsb/gaussmix.hpp"
#include "mfsb/linalg.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace mfsb {

/// Closed time interval [begin, end] restricted to interior knots.
struct KnotWindow {
    double begin = 0.0;
    double end = 1.0;

    bool contains(const TimeGrid& grid, int k) const
    {
        if (k <= 0 || k >= grid.size() - 1) return false;
        const double t = grid[k];
        return t >= begin - 1e-12 && t <= end + 1e-12;
    }
};

/// Free half-space a'x <= beta.
struct HalfSpace {
    Vec a;
    double beta = 0.0;
    KnotWindow window;

    HalfSpace() = default;
    HalfSpace(Vec a_, double beta_, KnotWindow w = {}) : a(std::move(a_)), beta(beta_), window(w)
    {
        if (!(a.norm() > 0.0)) throw ConfigurationError("half-space normal must be nonzero");
        if (window.end < window.begin) throw ConfigurationError("knot window ends before it begins");
    }
};

struct ChanceSpec {
    std::vector<HalfSpace> halfspaces;
    double total_budget = 0.0;
    std::vector<double> per_face_budget;  // optional fixed budget per face
};

/// Time-constant violation budgets delta(component, face).
class Allocation {
public:
    Allocation() = default;
    Allocation(int components, std::vector<double> per_face) : components_(components), per_face_(std::move(per_face)) {}

    int components() const { return components_; }
    int faces() const { return static_cast<int>(per_face_.size()); }
    double delta(int component, int face) const
    {
        if (component < 0 || component >= components_ || face < 0 || face >= faces())
            throw ConfigurationError("allocation index out of range");
        return per_face_[static_cast<std::size_t>(face)];
    }

private:
    int components_ = 0;
    std::vector<double> per_face_;
};

inline void check_budget(double delta, const char* what)
{
    if (!(delta > 0.0 && delta < 0.5)) throw ConfigurationError(std::string(what) + " must lie in (0, 1/2)");
}

/// Equal split of the total budget over all (component, face) pairs, unless
/// per-face budgets are given.
inline Allocation allocate_budget(const ChanceSpec& spec, int n_components, int n_faces)
{
    if (n_components < 1) throw ConfigurationError("allocation needs at least one component");
    if (!spec.per_face_budget.empty()) {
        if (static_cast<int>(spec.per_face_budget.size()) != n_faces)
            throw ConfigurationError("per-face budget list has " + std::to_string(spec.per_face_budget.size()) +
                                     " entries for " + std::to_string(n_faces) + " faces");
        for (double d : spec.per_face_budget) check_budget(d, "per-face budget");
        return {n_components, spec.per_face_budget};
    }
    if (n_faces == 0) {
        if (spec.total_budget != 0.0) throw ConfigurationError("nonzero chance budget but no constraint faces");
        return {n_components, {}};
    }
    check_budget(spec.total_budget, "total chance budget");
    const double each = spec.total_budget / (static_cast<double>(n_components) * n_faces);
    return {n_components, std::vector<double>(static_cast<std::size_t>(n_faces), each)};
}

/// Phi^-1(1 - delta).
inline double violation_quantile(double delta)
{
    if (!(delta > 0.0 && delta < 1.0)) throw DomainError("violation probability must lie in (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), 1.0 - delta);
}

/// z sqrt(a' Sigma a) + a' mu - beta; nonpositive iff P(a'x <= beta) >= 1 - delta.
inline double exact_constraint_value(const Gaussian& g, const HalfSpace& h, double delta)
{
    if (!(delta > 0.0 && delta <= 0.5)) throw DomainError("chance budget must lie in (0, 1/2]");
    const double var = std::max(0.0, h.a.dot(g.cov() * h.a));
    return violation_quantile(delta) * std::sqrt(var) + h.a.dot(g.mean()) - h.beta;
}

/// ell' Sigma ell + a' mu + b <= 0.
struct LinearizedConstraint {
    Vec ell;
    Vec a;
    double b = 0.0;
    KnotWindow window;

    double value(const Mat& Sigma, const Vec& mu) const { return ell.dot(Sigma * ell) + a.dot(mu) + b; }
};

/// Tangent of sqrt at x_r = a' Sigma_r a, which over-approximates the exact form.
inline LinearizedConstraint linearize(const HalfSpace& h, double delta, const Mat& sigma_ref)
{
    if (!(delta > 0.0 && delta < 0.5)) throw DomainError("chance budget must lie in (0, 1/2) to linearize");
    const double z = violation_quantile(delta);
    const double xr = h.a.dot(sigma_ref * h.a);
    if (!(xr > 1e-14)) throw DomainError("reference covariance is degenerate along the constraint normal");
    const double sx = std::sqrt(xr);
    return {std::sqrt(z / (2.0 * sx)) * h.a, h.a, -h.beta + 0.5 * z * sx, h.window};
}

}  // namespace mfsb

#endif  // MFSB_CHANCE_HPP
