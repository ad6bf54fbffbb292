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
#ifndef MFSB_GAUSSMIX_HPP
#define MFSB_GAUSSMIX_HPP

#include "mfsb/errors.hpp"
#include "mfsb/linalg.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mfsb {

inline constexpr double kPsdTolerance = 1e-10;
inline const double kLog2Pi = std::log(2.0 * std::numbers::pi);

/// Multivariate normal N(mean, cov). The covariance is symmetrized on construction.
class Gaussian {
public:
    Gaussian() = default;

    Gaussian(Vec mean, const Mat& cov) : mean_(std::move(mean)), cov_(symmetrize(cov))
    {
        if (cov_.rows() != mean_.size() || cov_.cols() != mean_.size())
            throw ConfigurationError("Gaussian mean/covariance dimension mismatch");
        if (mean_.size() == 0) throw ConfigurationError("Gaussian must have positive dimension");
        const double scale = std::max(1.0, cov_.cwiseAbs().maxCoeff());
        if (min_eigenvalue(cov_) < -kPsdTolerance * scale)
            throw DomainError("Gaussian covariance is not positive semidefinite");
    }

    int dim() const { return static_cast<int>(mean_.size()); }
    const Vec& mean() const { return mean_; }
    const Mat& cov() const { return cov_; }

private:
    Vec mean_;
    Mat cov_;
};

/// A Gaussian with its Cholesky factor cached for repeated density evaluation.
class GaussianDensity {
public:
    explicit GaussianDensity(const Gaussian& g, const std::string& label = "Gaussian")
        : mean_(g.mean()), llt_(g.cov())
    {
        if (llt_.info() != Eigen::Success || llt_.matrixL().toDenseMatrix().diagonal().minCoeff() <= 0.0)
            throw DomainError(label + " has a singular covariance; density is undefined");
        const auto L = llt_.matrixL().toDenseMatrix();
        log_norm_ = -0.5 * g.dim() * kLog2Pi - L.diagonal().array().log().sum();
    }

    double log_pdf(const Eigen::Ref<const Vec>& x) const
    {
        const Vec r = llt_.matrixL().solve(Vec(x - mean_));
        return log_norm_ - 0.5 * r.squaredNorm();
    }

    /// -1/2 log((2 pi)^n det Sigma)
    double log_normalizer() const { return log_norm_; }

private:
    Vec mean_;
    Eigen::LLT<Mat> llt_;
    double log_norm_ = 0.0;
};

inline double log_pdf(const Gaussian& g, const Eigen::Ref<const Vec>& x)
{
    if (x.size() != g.dim()) throw ConfigurationError("point dimension does not match the Gaussian");
    return GaussianDensity(g).log_pdf(x);
}

/// Numerically stable log(sum(exp(v))).
inline double log_sum_exp(std::span<const double> v)
{
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : v) mx = std::max(mx, x);
    if (!std::isfinite(mx)) return mx;
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - mx);
    return mx + std::log(acc);
}

/// Finite mixture sum_i w_i N(mu_i, Sigma_i).
class GaussianMixture {
public:
    GaussianMixture() = default;

    GaussianMixture(std::vector<double> weights, std::vector<Gaussian> components)
        : weights_(std::move(weights)), components_(std::move(components))
    {
        if (components_.empty()) throw ConfigurationError("mixture needs at least one component");
        if (weights_.size() != components_.size())
            throw ConfigurationError("mixture has " + std::to_string(weights_.size()) + " weights but " +
                                     std::to_string(components_.size()) + " components");
        double total = 0.0;
        for (std::size_t i = 0; i < weights_.size(); ++i) {
            if (!(weights_[i] > 0.0)) throw InputError("mixture weight " + std::to_string(i) + " is not positive");
            total += weights_[i];
            if (components_[i].dim() != components_[0].dim())
                throw ConfigurationError("mixture components have different dimensions");
        }
        if (std::abs(total - 1.0) > 1e-10)
            throw InputError("mixture weights sum to " + std::to_string(total) + ", expected 1");
    }

    int size() const { return static_cast<int>(components_.size()); }
    int dim() const { return components_.front().dim(); }
    double weight(int i) const { return weights_[static_cast<std::size_t>(i)]; }
    const std::vector<double>& weights() const { return weights_; }
    const Gaussian& component(int i) const { return components_[static_cast<std::size_t>(i)]; }
    const std::vector<Gaussian>& components() const { return components_; }

    Vec mean() const
    {
        Vec m = Vec::Zero(dim());
        for (int i = 0; i < size(); ++i) m += weight(i) * component(i).mean();
        return m;
    }

    double log_pdf(const Eigen::Ref<const Vec>& x) const
    {
        std::vector<double> terms(components_.size());
        for (int i = 0; i < size(); ++i)
            terms[i] = std::log(weight(i)) +
                       GaussianDensity(component(i), "mixture component " + std::to_string(i)).log_pdf(x);
        return log_sum_exp(terms);
    }

private:
    std::vector<double> weights_;
    std::vector<Gaussian> components_;
};

/// A factor L with L L' = Sigma; works for singular PSD covariances.
inline Mat sqrt_factor(const Mat& cov)
{
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(cov));
    return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

/// Draws a categorical index with the given (normalized) weights from one uniform variate.
inline int draw_index(std::span<const double> weights, double u)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
}

/// `count` iid draws from `mix`, deterministic for a fixed seed.
inline std::vector<Vec> sample(const GaussianMixture& mix, int count, std::uint64_t seed,
                               std::vector<int>* labels = nullptr)
{
    if (count < 1) throw InputError("sample count must be at least 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Mat> factors;
    factors.reserve(static_cast<std::size_t>(mix.size()));
    for (const auto& c : mix.components()) factors.push_back(sqrt_factor(c.cov()));

    std::vector<Vec> out;
    out.reserve(static_cast<std::size_t>(count));
    if (labels) labels->assign(static_cast<std::size_t>(count), 0);
    Vec z(mix.dim());
    for (int s = 0; s < count; ++s) {
        const int i = draw_index(mix.weights(), unif(rng));
        for (int d = 0; d < z.size(); ++d) z(d) = normal(rng);
        out.push_back(mix.component(i).mean() + factors[static_cast<std::size_t>(i)] * z);
        if (labels) (*labels)[static_cast<std::size_t>(s)] = i;
    }
    return out;
}

/// c * N(mean, cov), with c kept in log form as well.
struct ScaledGaussian {
    double scale;
    double log_scale;
    Gaussian gaussian;
};

inline Mat spd_inverse(const Mat& m, const char* what)
{
    Eigen::LLT<Mat> llt(symmetrize(m));
    if (llt.info() != Eigen::Success) throw DomainError(std::string(what) + " is not positive definite");
    return symmetrize(llt.solve(Mat::Identity(m.rows(), m.cols())));
}

inline double log_det_spd(const Mat& m, const char* what)
{
    Eigen::LLT<Mat> llt(symmetrize(m));
    if (llt.info() != Eigen::Success) throw DomainError(std::string(what) + " is not positive definite");
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

/// N(x; m1, S1) N(x; m2, S2) = c_p N(x; m_p, S_p).
inline ScaledGaussian gaussian_product(const Gaussian& g1, const Gaussian& g2)
{
    if (g1.dim() != g2.dim()) throw ConfigurationError("product of Gaussians with different dimensions");
    const Mat P1 = spd_inverse(g1.cov(), "first covariance");
    const Mat P2 = spd_inverse(g2.cov(), "second covariance");
    const Mat Sp = spd_inverse(P1 + P2, "sum of precisions");
    const Vec mp = Sp * (P1 * g1.mean() + P2 * g2.mean());
    const double log_c = log_pdf(Gaussian(g2.mean(), g1.cov() + g2.cov()), g1.mean());
    return {std::exp(log_c), log_c, Gaussian(mp, Sp)};
}

/// N(x; m1, S1) / N(x; m2, S2) = c_q N(x; m_q, S_q); requires S2 - S1 positive definite.
inline ScaledGaussian gaussian_quotient(const Gaussian& g1, const Gaussian& g2)
{
    if (g1.dim() != g2.dim()) throw ConfigurationError("quotient of Gaussians with different dimensions");
    const Mat diff = symmetrize(g2.cov() - g1.cov());
    Eigen::LLT<Mat> llt(diff);
    if (llt.info() != Eigen::Success || min_eigenvalue(diff) <= 0.0)
        throw DomainError("quotient is not normalizable: Sigma2 - Sigma1 is not positive definite");
    const Mat P1 = spd_inverse(g1.cov(), "numerator covariance");
    const Mat P2 = spd_inverse(g2.cov(), "denominator covariance");
    const Mat Sq = spd_inverse(P1 - P2, "difference of precisions");
    const Vec mq = Sq * (P1 * g1.mean() - P2 * g2.mean());
    const double log_c = log_det_spd(g2.cov(), "denominator covariance") - log_det_spd(diff, "Sigma2 - Sigma1") -
                         log_pdf(Gaussian(g2.mean(), diff), g1.mean());
    return {std::exp(log_c), log_c, Gaussian(mq, Sq)};
}

}  // namespace mfsb

#endif  // MFSB_GAUSSMIX_HPP
