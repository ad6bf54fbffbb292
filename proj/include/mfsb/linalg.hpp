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
#ifndef MFSB_LINALG_HPP
#define MFSB_LINALG_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mfsb {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kSqrt2 = std::numbers::sqrt2;

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

inline double min_eigenvalue(const Mat& m)
{
    if (m.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

inline bool is_symmetric(const Mat& m, double tol)
{
    return m.rows() == m.cols() && (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

/// Principal square root of a symmetric PSD matrix; negative eigenvalues are clipped.
inline Mat sqrtm_psd(const Mat& m)
{
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m));
    Vec d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

/// Inverse of a symmetric matrix with eigenvalues floored at `floor`.
inline Mat inverse_floored(const Mat& m, double floor)
{
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m));
    Vec d = es.eigenvalues().cwiseMax(floor).cwiseInverse();
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

// Scaled lower-triangular vectorization. Entries are ordered column by column
// over the lower triangle; off-diagonals carry a factor sqrt(2) so that
// svec(X).dot(svec(Y)) == trace(X * Y).

inline int svec_size(int k) { return k * (k + 1) / 2; }

inline int svec_index(int i, int j, int k)
{
    if (i < j) std::swap(i, j);
    // column j starts after columns 0..j-1, which hold k, k-1, ..., k-j+1 entries
    return j * k - j * (j - 1) / 2 + (i - j);
}

inline Vec svec(const Mat& x)
{
    const int k = static_cast<int>(x.rows());
    Vec out(svec_size(k));
    int p = 0;
    for (int j = 0; j < k; ++j)
        for (int i = j; i < k; ++i)
            out(p++) = (i == j) ? x(i, j) : kSqrt2 * 0.5 * (x(i, j) + x(j, i));
    return out;
}

inline Mat smat(const Eigen::Ref<const Vec>& v, int k)
{
    Mat out(k, k);
    int p = 0;
    for (int j = 0; j < k; ++j)
        for (int i = j; i < k; ++i) {
            const double val = (i == j) ? v(p) : v(p) / kSqrt2;
            out(i, j) = val;
            out(j, i) = val;
            ++p;
        }
    return out;
}

/// Plain (unscaled) lower triangle, row by row: (0,0), (1,0), (1,1), (2,0), ...
/// Used by the file formats.
inline Vec lower_triangle(const Mat& x)
{
    const int k = static_cast<int>(x.rows());
    Vec out(svec_size(k));
    int p = 0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j <= i; ++j) out(p++) = x(i, j);
    return out;
}

inline Mat from_lower_triangle(const Eigen::Ref<const Vec>& v, int k)
{
    Mat out(k, k);
    int p = 0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j <= i; ++j) {
            out(i, j) = v(p);
            out(j, i) = v(p);
            ++p;
        }
    return out;
}

/// Inverse of `svec_size`: the matrix order whose lower triangle has `len` entries, or -1.
inline int order_from_triangle_size(int len)
{
    const int k = static_cast<int>(std::lround((std::sqrt(8.0 * len + 1.0) - 1.0) / 2.0));
    return svec_size(k) == len ? k : -1;
}

}  // namespace mfsb

#endif  // MFSB_LINALG_HPP
