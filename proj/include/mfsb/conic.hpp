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
#ifndef MFSB_CONIC_HPP
#define MFSB_CONIC_HPP

// Standard-form conic programs (linear objective, affine equalities,
// nonnegative and PSD cone memberships) and a primal-dual interior-point
// solver for them.
//
// Symmetric-matrix variables are stored as scaled lower triangles (see
// `svec`), so every PSD membership becomes `svec(E(x)) in S+` and the
// Frobenius inner product is the plain dot product.

#include "mfsb/errors.hpp"
#include "mfsb/linalg.hpp"
#include "mfsb/log.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

namespace mfsb::conic {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

struct Term {
    int var;
    double coef;
};

/// Sparse affine scalar expression sum_i coef_i * x_var(i) + constant.
class LinExpr {
public:
    LinExpr() = default;
    LinExpr(double constant) : constant_(constant) {}  // NOLINT(google-explicit-constructor)

    static LinExpr variable(int var, double coef = 1.0)
    {
        LinExpr e;
        e.terms_.push_back({var, coef});
        return e;
    }

    const std::vector<Term>& terms() const { return terms_; }
    double constant() const { return constant_; }

    LinExpr& operator+=(const LinExpr& o)
    {
        terms_.insert(terms_.end(), o.terms_.begin(), o.terms_.end());
        constant_ += o.constant_;
        return *this;
    }
    LinExpr& operator-=(const LinExpr& o)
    {
        terms_.reserve(terms_.size() + o.terms_.size());
        for (const auto& t : o.terms_) terms_.push_back({t.var, -t.coef});
        constant_ -= o.constant_;
        return *this;
    }
    LinExpr& operator*=(double a)
    {
        for (auto& t : terms_) t.coef *= a;
        constant_ *= a;
        return *this;
    }

    friend LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
    friend LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
    friend LinExpr operator-(LinExpr a) { return a *= -1.0; }
    friend LinExpr operator*(double s, LinExpr a) { return a *= s; }
    friend LinExpr operator*(LinExpr a, double s) { return a *= s; }

    /// Merges duplicate variables and drops exact zeros.
    void compress()
    {
        std::sort(terms_.begin(), terms_.end(), [](const Term& a, const Term& b) { return a.var < b.var; });
        std::vector<Term> out;
        out.reserve(terms_.size());
        for (const auto& t : terms_) {
            if (!out.empty() && out.back().var == t.var)
                out.back().coef += t.coef;
            else
                out.push_back(t);
        }
        std::erase_if(out, [](const Term& t) { return t.coef == 0.0; });
        terms_ = std::move(out);
    }

    double evaluate(const Vec& x) const
    {
        double v = constant_;
        for (const auto& t : terms_) v += t.coef * x(t.var);
        return v;
    }

private:
    std::vector<Term> terms_;
    double constant_ = 0.0;
};

/// Symmetric k x k matrix of affine expressions (lower triangle stored).
class SymExpr {
public:
    explicit SymExpr(int dim) : dim_(dim), entries_(static_cast<std::size_t>(svec_size(dim))) {}

    int dim() const { return dim_; }
    LinExpr& operator()(int i, int j) { return entries_[static_cast<std::size_t>(svec_index(i, j, dim_))]; }
    const LinExpr& operator()(int i, int j) const
    {
        return entries_[static_cast<std::size_t>(svec_index(i, j, dim_))];
    }

private:
    int dim_;
    std::vector<LinExpr> entries_;
};

enum class BlockKind { scalar, vector, symmetric };

struct BlockInfo {
    std::string name;
    BlockKind kind;
    int dim;     // vector length or matrix order (1 for scalars)
    int offset;  // first variable index
    int length;  // number of variables
};

using BlockId = int;

/// The value of one variable block in a solution.
using BlockValue = std::variant<double, Vec, Mat>;

/// Matrix form  min c'x  s.t.  A x = b,  G x + s = h,  s in K.
/// K is R+^n_nonneg followed by one PSD cone per entry of `psd_dims`.
struct StandardForm {
    int nx = 0;
    SpMat A, G;
    Vec b, h, c;
    double objective_offset = 0.0;
    int n_nonneg = 0;
    std::vector<int> psd_dims;
};

class ConicProgram {
public:
    BlockId add_scalar(const std::string& name) { return add_block(name, BlockKind::scalar, 1, 1); }
    BlockId add_vector(const std::string& name, int length)
    {
        if (length < 1) throw ConfigurationError("vector block " + name + " must have positive length");
        return add_block(name, BlockKind::vector, length, length);
    }
    BlockId add_symmetric(const std::string& name, int dim)
    {
        if (dim < 1) throw ConfigurationError("matrix block " + name + " must have positive order");
        return add_block(name, BlockKind::symmetric, dim, svec_size(dim));
    }

    const BlockInfo& block(BlockId id) const
    {
        if (id < 0 || id >= static_cast<int>(blocks_.size())) throw LookupError("unknown block id");
        return blocks_[static_cast<std::size_t>(id)];
    }
    const std::vector<BlockInfo>& blocks() const { return blocks_; }

    BlockId find(const std::string& name) const
    {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) throw LookupError("no block named \"" + name + "\"");
        return it->second;
    }

    LinExpr scalar(BlockId id) const
    {
        const auto& b = expect(id, BlockKind::scalar);
        return LinExpr::variable(b.offset);
    }

    LinExpr entry(BlockId id, int i) const
    {
        const auto& b = expect(id, BlockKind::vector);
        if (i < 0 || i >= b.dim) throw ConfigurationError("index out of range in block " + b.name);
        return LinExpr::variable(b.offset + i);
    }

    /// X_ij of a symmetric block (accounts for the sqrt(2) storage scaling).
    LinExpr entry(BlockId id, int i, int j) const
    {
        const auto& b = expect(id, BlockKind::symmetric);
        if (i < 0 || j < 0 || i >= b.dim || j >= b.dim)
            throw ConfigurationError("index out of range in block " + b.name);
        return LinExpr::variable(b.offset + svec_index(i, j, b.dim), i == j ? 1.0 : 1.0 / kSqrt2);
    }

    SymExpr matrix(BlockId id) const
    {
        const auto& b = expect(id, BlockKind::symmetric);
        SymExpr out(b.dim);
        for (int j = 0; j < b.dim; ++j)
            for (int i = j; i < b.dim; ++i) out(i, j) = entry(id, i, j);
        return out;
    }

    LinExpr trace(BlockId id) const
    {
        const auto& b = expect(id, BlockKind::symmetric);
        LinExpr out;
        for (int i = 0; i < b.dim; ++i) out += entry(id, i, i);
        return out;
    }

    void minimize(LinExpr objective)
    {
        check_expr(objective, "objective");
        objective_ = std::move(objective);
    }
    void add_to_objective(const LinExpr& e)
    {
        check_expr(e, "objective");
        objective_ += e;
    }
    const LinExpr& objective() const { return objective_; }

    /// e == 0. Returns the equality row index.
    int add_equality(LinExpr e)
    {
        check_expr(e, "equality");
        e.compress();
        equalities_.push_back(std::move(e));
        return static_cast<int>(equalities_.size()) - 1;
    }

    /// e >= 0. Returns the nonnegative row index.
    int add_nonnegative(LinExpr e)
    {
        check_expr(e, "nonnegativity");
        e.compress();
        nonnegatives_.push_back(std::move(e));
        return static_cast<int>(nonnegatives_.size()) - 1;
    }

    /// E is positive semidefinite. Returns the PSD constraint index.
    int add_psd(SymExpr E)
    {
        for (int j = 0; j < E.dim(); ++j)
            for (int i = j; i < E.dim(); ++i) {
                check_expr(E(i, j), "psd");
                E(i, j).compress();
            }
        psd_.push_back(std::move(E));
        return static_cast<int>(psd_.size()) - 1;
    }

    int num_variables() const { return nvars_; }
    int num_equalities() const { return static_cast<int>(equalities_.size()); }
    int num_nonnegatives() const { return static_cast<int>(nonnegatives_.size()); }
    int num_psd() const { return static_cast<int>(psd_.size()); }
    const std::vector<LinExpr>& equalities() const { return equalities_; }
    const std::vector<LinExpr>& nonnegatives() const { return nonnegatives_; }
    const std::vector<SymExpr>& psd_constraints() const { return psd_; }

    StandardForm standard_form() const
    {
        StandardForm f;
        f.nx = nvars_;
        f.n_nonneg = num_nonnegatives();
        int nz = f.n_nonneg;
        for (const auto& E : psd_) {
            f.psd_dims.push_back(E.dim());
            nz += svec_size(E.dim());
        }
        const int ny = num_equalities();

        std::vector<Triplet> ta, tg;
        f.b = Vec::Zero(ny);
        for (int r = 0; r < ny; ++r) {
            for (const auto& t : equalities_[r].terms()) ta.emplace_back(r, t.var, t.coef);
            f.b(r) = -equalities_[r].constant();
        }
        f.h = Vec::Zero(nz);
        int row = 0;
        for (const auto& e : nonnegatives_) {
            for (const auto& t : e.terms()) tg.emplace_back(row, t.var, -t.coef);
            f.h(row) = e.constant();
            ++row;
        }
        for (const auto& E : psd_) {
            for (int j = 0; j < E.dim(); ++j)
                for (int i = j; i < E.dim(); ++i) {
                    const double scale = (i == j) ? 1.0 : kSqrt2;
                    const LinExpr& e = E(i, j);
                    const int r = row + svec_index(i, j, E.dim());
                    for (const auto& t : e.terms()) tg.emplace_back(r, t.var, -scale * t.coef);
                    f.h(r) = scale * e.constant();
                }
            row += svec_size(E.dim());
        }
        f.A.resize(ny, nvars_);
        f.A.setFromTriplets(ta.begin(), ta.end());
        f.G.resize(nz, nvars_);
        f.G.setFromTriplets(tg.begin(), tg.end());

        LinExpr obj = objective_;
        obj.compress();
        f.c = Vec::Zero(nvars_);
        for (const auto& t : obj.terms()) f.c(t.var) += t.coef;
        f.objective_offset = obj.constant();
        return f;
    }

    /// Debug dump in sparse triplet text form. Rows are numbered globally:
    /// equalities first, then nonnegative rows, then the svec rows of each PSD
    /// constraint. Each data line is "row column coefficient"; the right-hand
    /// side uses column -1 and the objective uses row -1.
    void write_triplets(std::ostream& os) const
    {
        const StandardForm f = standard_form();
        os.precision(17);
        os << "# mfsb conic program\n";
        os << "# variables " << f.nx << "\n";
        os << "# equalities " << f.A.rows() << "\n";
        os << "# nonnegative " << f.n_nonneg << "\n";
        os << "# psd";
        for (int d : f.psd_dims) os << ' ' << d;
        os << "\n";
        for (const auto& b : blocks_)
            os << "# block " << b.name << ' ' << b.offset << ' ' << b.length << "\n";
        for (int j = 0; j < f.nx; ++j)
            if (f.c(j) != 0.0) os << -1 << ' ' << j << ' ' << f.c(j) << "\n";
        if (f.objective_offset != 0.0) os << -1 << ' ' << -1 << ' ' << f.objective_offset << "\n";
        const auto dump = [&os](const SpMat& M, const Vec& rhs, int row0) {
            const SpMat Mt = M.transpose();  // row-major walk
            for (int r = 0; r < M.rows(); ++r) {
                for (SpMat::InnerIterator it(Mt, r); it; ++it)
                    os << row0 + r << ' ' << it.row() << ' ' << it.value() << "\n";
                if (rhs(r) != 0.0) os << row0 + r << ' ' << -1 << ' ' << rhs(r) << "\n";
            }
        };
        dump(f.A, f.b, 0);
        dump(f.G, f.h, static_cast<int>(f.A.rows()));
    }

private:
    BlockId add_block(const std::string& name, BlockKind kind, int dim, int length)
    {
        if (by_name_.count(name)) throw ConfigurationError("duplicate block name \"" + name + "\"");
        blocks_.push_back({name, kind, dim, nvars_, length});
        nvars_ += length;
        const BlockId id = static_cast<BlockId>(blocks_.size()) - 1;
        by_name_.emplace(name, id);
        return id;
    }

    const BlockInfo& expect(BlockId id, BlockKind kind) const
    {
        const auto& b = block(id);
        if (b.kind != kind) throw ConfigurationError("block " + b.name + " used with the wrong shape");
        return b;
    }

    void check_expr(const LinExpr& e, const char* where) const
    {
        for (const auto& t : e.terms())
            if (t.var < 0 || t.var >= nvars_)
                throw ConfigurationError(std::string(where) + " references an undeclared variable");
    }

    std::vector<BlockInfo> blocks_;
    std::map<std::string, BlockId> by_name_;
    int nvars_ = 0;
    LinExpr objective_;
    std::vector<LinExpr> equalities_;
    std::vector<LinExpr> nonnegatives_;
    std::vector<SymExpr> psd_;
};

enum class Status { optimal, infeasible, unbounded, max_iterations };

inline const char* to_string(Status s)
{
    switch (s) {
        case Status::optimal: return "optimal";
        case Status::infeasible: return "infeasible";
        case Status::unbounded: return "unbounded";
        case Status::max_iterations: return "max_iterations";
    }
    return "unknown";
}

struct Tolerances {
    double primal = 1e-6;
    double dual = 1e-6;
    double gap = 1e-6;
    int max_iterations = 200;
};

struct Residuals {
    double primal = 0.0;
    double dual = 0.0;
    double gap = 0.0;  // relative duality gap
};

struct ConicSolution {
    Status status = Status::max_iterations;
    double objective_value = std::numeric_limits<double>::quiet_NaN();
    Residuals residuals;
    int iterations = 0;
    Vec x;  // primal variables
    Vec y;  // equality multipliers
    Vec z;  // cone multipliers
    Vec s;  // cone slacks
    std::vector<BlockInfo> blocks;

    bool usable() const { return status == Status::optimal || status == Status::max_iterations; }
};

/// Value of block `name`; matrix blocks are returned symmetric.
inline BlockValue extract_block(const ConicSolution& sol, const std::string& name)
{
    auto it = std::find_if(sol.blocks.begin(), sol.blocks.end(), [&](const BlockInfo& b) { return b.name == name; });
    if (it == sol.blocks.end()) throw LookupError("no block named \"" + name + "\" in solution");
    if (!sol.usable())
        throw SolveError("cannot extract \"" + name + "\" from a solution with status " + to_string(sol.status),
                         to_string(sol.status), sol.status == Status::infeasible);
    switch (it->kind) {
        case BlockKind::scalar: return sol.x(it->offset);
        case BlockKind::vector: return Vec(sol.x.segment(it->offset, it->length));
        case BlockKind::symmetric: return smat(sol.x.segment(it->offset, it->length), it->dim);
    }
    return 0.0;
}

/// Value of the block with id `id` (ids follow declaration order).
inline BlockValue extract_block(const ConicSolution& sol, BlockId id)
{
    if (id < 0 || id >= static_cast<int>(sol.blocks.size())) throw LookupError("unknown block id in solution");
    return extract_block(sol, sol.blocks[static_cast<std::size_t>(id)].name);
}

inline double extract_scalar(const ConicSolution& sol, const std::string& name)
{
    return std::get<double>(extract_block(sol, name));
}
inline Vec extract_vector(const ConicSolution& sol, const std::string& name)
{
    return std::get<Vec>(extract_block(sol, name));
}
inline Mat extract_matrix(const ConicSolution& sol, const std::string& name)
{
    return std::get<Mat>(extract_block(sol, name));
}

namespace detail {

// Nesterov-Todd scaling of the product cone at a strictly interior (s, z).
//   nonnegative part:  W = diag(d),        d = sqrt(s ./ z)
//   PSD part:          W(Z) = R' Z R,       with R' Z R = R^-1 S R^-T = diag(lambda)
// lambda = W z = W^-T s is the scaled point.
class Scaling {
public:
    Scaling(int n_nonneg, std::vector<int> psd_dims) : nl_(n_nonneg), dims_(std::move(psd_dims))
    {
        int off = nl_;
        for (int k : dims_) {
            offsets_.push_back(off);
            off += svec_size(k);
        }
        nz_ = off;
        degree_ = nl_;
        for (int k : dims_) degree_ += k;
    }

    int nz() const { return nz_; }
    int degree() const { return degree_; }
    int n_nonneg() const { return nl_; }
    const std::vector<int>& dims() const { return dims_; }
    const std::vector<int>& offsets() const { return offsets_; }

    /// Returns false if s or z is not strictly inside the cone.
    bool update(const Vec& s, const Vec& z)
    {
        d_.resize(nl_);
        lam_lp_.resize(nl_);
        for (int i = 0; i < nl_; ++i) {
            if (!(s(i) > 0.0) || !(z(i) > 0.0)) return false;
            d_(i) = std::sqrt(s(i) / z(i));
            lam_lp_(i) = std::sqrt(s(i) * z(i));
        }
        R_.resize(dims_.size());
        Rinv_.resize(dims_.size());
        lam_psd_.resize(dims_.size());
        for (std::size_t c = 0; c < dims_.size(); ++c) {
            const int k = dims_[c];
            const Mat S = smat(s.segment(offsets_[c], svec_size(k)), k);
            const Mat Z = smat(z.segment(offsets_[c], svec_size(k)), k);
            Eigen::LLT<Mat> ls(S), lz(Z);
            if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) return false;
            const Mat Ls = ls.matrixL();
            const Mat Lz = lz.matrixL();
            Eigen::JacobiSVD<Mat> svd(Lz.transpose() * Ls, Eigen::ComputeFullU | Eigen::ComputeFullV);
            const Vec lam = svd.singularValues();
            if (!(lam.minCoeff() > 0.0)) return false;
            const Vec isq = lam.cwiseSqrt().cwiseInverse();
            R_[c] = Ls * svd.matrixV() * isq.asDiagonal();
            Rinv_[c] = isq.asDiagonal() * svd.matrixU().transpose() * Lz.transpose();
            lam_psd_[c] = lam;
        }
        return true;
    }

    // All maps act on z-space vectors (svec layout).
    Vec W(const Vec& v) const { return apply(v, [](const Mat& R, const Mat&, const Mat& X) -> Mat { return R.transpose() * X * R; }, 1); }
    Vec WT(const Vec& v) const { return apply(v, [](const Mat& R, const Mat&, const Mat& X) -> Mat { return R * X * R.transpose(); }, 1); }
    Vec WinvT(const Vec& v) const
    {
        return apply(v, [](const Mat&, const Mat& Ri, const Mat& X) -> Mat { return Ri * X * Ri.transpose(); }, -1);
    }
    Vec WTW(const Vec& v) const
    {
        return apply(v, [](const Mat& R, const Mat&, const Mat& X) -> Mat {
            const Mat P = R * R.transpose();
            return P * X * P;
        }, 2);
    }

    /// Dense matrix of W'W restricted to PSD cone c, in svec coordinates.
    Mat WTW_block(std::size_t c) const
    {
        const int k = dims_[c];
        const int kk = svec_size(k);
        const Mat P = R_[c] * R_[c].transpose();
        Mat out(kk, kk);
        Vec e = Vec::Zero(kk);
        for (int p = 0; p < kk; ++p) {
            e.setZero();
            e(p) = 1.0;
            out.col(p) = svec(P * smat(e, k) * P);
        }
        return symmetrize(out);
    }
    double WTW_lp(int i) const { return d_(i) * d_(i); }

    /// lambda o lambda
    Vec lambda_sq() const
    {
        Vec out(nz_);
        for (int i = 0; i < nl_; ++i) out(i) = lam_lp_(i) * lam_lp_(i);
        for (std::size_t c = 0; c < dims_.size(); ++c)
            out.segment(offsets_[c], svec_size(dims_[c])) = svec(lam_psd_[c].array().square().matrix().asDiagonal().toDenseMatrix());
        return out;
    }

    /// Solves lambda o u = r.
    Vec lambda_inv_circ(const Vec& r) const
    {
        Vec out(nz_);
        for (int i = 0; i < nl_; ++i) out(i) = r(i) / lam_lp_(i);
        for (std::size_t c = 0; c < dims_.size(); ++c) {
            const int k = dims_[c];
            Mat X = smat(r.segment(offsets_[c], svec_size(k)), k);
            const Vec& l = lam_psd_[c];
            for (int j = 0; j < k; ++j)
                for (int i = 0; i < k; ++i) X(i, j) *= 2.0 / (l(i) + l(j));
            out.segment(offsets_[c], svec_size(k)) = svec(X);
        }
        return out;
    }

    /// Jordan product a o b = (ab + ba)/2 per cone.
    Vec circ(const Vec& a, const Vec& b) const
    {
        Vec out(nz_);
        for (int i = 0; i < nl_; ++i) out(i) = a(i) * b(i);
        for (std::size_t c = 0; c < dims_.size(); ++c) {
            const int k = dims_[c];
            const Mat A = smat(a.segment(offsets_[c], svec_size(k)), k);
            const Mat B = smat(b.segment(offsets_[c], svec_size(k)), k);
            out.segment(offsets_[c], svec_size(k)) = svec(0.5 * (A * B + B * A));
        }
        return out;
    }

    Vec identity() const
    {
        Vec out(nz_);
        out.head(nl_).setOnes();
        for (std::size_t c = 0; c < dims_.size(); ++c)
            out.segment(offsets_[c], svec_size(dims_[c])) = svec(Mat::Identity(dims_[c], dims_[c]));
        return out;
    }

    /// Largest alpha with lambda + alpha * v in the cone (v given in scaled coordinates).
    double max_step(const Vec& v) const
    {
        double alpha = std::numeric_limits<double>::infinity();
        for (int i = 0; i < nl_; ++i)
            if (v(i) < 0.0) alpha = std::min(alpha, -lam_lp_(i) / v(i));
        for (std::size_t c = 0; c < dims_.size(); ++c) {
            const int k = dims_[c];
            const Vec isq = lam_psd_[c].cwiseSqrt().cwiseInverse();
            const Mat M = isq.asDiagonal() * smat(v.segment(offsets_[c], svec_size(k)), k) * isq.asDiagonal();
            const double e = min_eigenvalue(M);
            if (e < 0.0) alpha = std::min(alpha, -1.0 / e);
        }
        return alpha;
    }

private:
    template <typename F>
    Vec apply(const Vec& v, F&& f, int lp_power) const
    {
        Vec out(nz_);
        for (int i = 0; i < nl_; ++i) {
            double scale = 1.0;
            if (lp_power == 1) scale = d_(i);
            else if (lp_power == -1) scale = 1.0 / d_(i);
            else if (lp_power == 2) scale = d_(i) * d_(i);
            out(i) = scale * v(i);
        }
        for (std::size_t c = 0; c < dims_.size(); ++c) {
            const int k = dims_[c];
            const Mat X = smat(v.segment(offsets_[c], svec_size(k)), k);
            out.segment(offsets_[c], svec_size(k)) = svec(f(R_[c], Rinv_[c], X));
        }
        return out;
    }

    int nl_;
    std::vector<int> dims_;
    std::vector<int> offsets_;
    int nz_ = 0;
    int degree_ = 0;
    Vec d_, lam_lp_;
    std::vector<Mat> R_, Rinv_;
    std::vector<Vec> lam_psd_;
};

/// Solves  [0 A' G'; A 0 0; G 0 -W'W] u = rhs  by factoring the regularized
/// quasi-definite matrix  [dI A' G'; A -dI 0; G 0 -W'W - dI]  and refining
/// against the unregularized operator.
class KktSolver {
public:
    KktSolver(const StandardForm& f) : f_(f), nx_(f.nx), ny_(static_cast<int>(f.A.rows())), nz_(static_cast<int>(f.G.rows())) {}

    /// W == nullptr means identity scaling (used for the starting point).
    bool factor(const Scaling* W, double reg)
    {
        W_ = W;
        std::vector<Triplet> tk;
        tk.reserve(static_cast<std::size_t>(2 * f_.A.nonZeros() + 2 * f_.G.nonZeros() + nx_ + ny_ + 4 * nz_));
        for (int j = 0; j < f_.A.outerSize(); ++j)
            for (SpMat::InnerIterator it(f_.A, j); it; ++it) {
                tk.emplace_back(nx_ + it.row(), it.col(), it.value());
                tk.emplace_back(it.col(), nx_ + it.row(), it.value());
            }
        const int oz = nx_ + ny_;
        for (int j = 0; j < f_.G.outerSize(); ++j)
            for (SpMat::InnerIterator it(f_.G, j); it; ++it) {
                tk.emplace_back(oz + it.row(), it.col(), it.value());
                tk.emplace_back(it.col(), oz + it.row(), it.value());
            }
        for (int i = 0; i < nx_; ++i) tk.emplace_back(i, i, reg);
        for (int i = 0; i < ny_; ++i) tk.emplace_back(nx_ + i, nx_ + i, -reg);
        if (W == nullptr) {
            for (int i = 0; i < nz_; ++i) tk.emplace_back(oz + i, oz + i, -1.0 - reg);
        } else {
            for (int i = 0; i < W->n_nonneg(); ++i) tk.emplace_back(oz + i, oz + i, -W->WTW_lp(i) - reg);
            for (std::size_t c = 0; c < W->dims().size(); ++c) {
                const Mat blk = W->WTW_block(c);
                const int off = oz + W->offsets()[c];
                for (int j = 0; j < blk.cols(); ++j)
                    for (int i = 0; i < blk.rows(); ++i)
                        tk.emplace_back(off + i, off + j, -blk(i, j) - (i == j ? reg : 0.0));
            }
        }
        SpMat K(oz + nz_, oz + nz_);
        K.setFromTriplets(tk.begin(), tk.end());
        if (!pattern_ready_) {
            ldlt_.analyzePattern(K);
            pattern_ready_ = true;
        }
        ldlt_.factorize(K);
        return ldlt_.info() == Eigen::Success;
    }

    void solve(const Vec& bx, const Vec& by, const Vec& bz, Vec& ux, Vec& uy, Vec& uz) const
    {
        Vec rhs(nx_ + ny_ + nz_);
        rhs << bx, by, bz;
        Vec u = ldlt_.solve(rhs);
        const double bnorm = std::max(rhs.lpNorm<Eigen::Infinity>(), 1.0);
        double prev = std::numeric_limits<double>::infinity();
        for (int it = 0; it < 10; ++it) {
            const Vec r = rhs - apply(u);
            const double err = r.lpNorm<Eigen::Infinity>();
            if (err <= 1e-14 * bnorm || err > 0.5 * prev) break;
            prev = err;
            u += ldlt_.solve(r);
        }
        ux = u.head(nx_);
        uy = u.segment(nx_, ny_);
        uz = u.tail(nz_);
    }

private:
    Vec apply(const Vec& u) const
    {
        const auto x = u.head(nx_);
        const auto y = u.segment(nx_, ny_);
        const Vec z = u.tail(nz_);
        Vec out(u.size());
        out.head(nx_) = f_.A.transpose() * y + f_.G.transpose() * z;
        out.segment(nx_, ny_) = f_.A * x;
        out.tail(nz_) = f_.G * x - (W_ ? W_->WTW(z) : z);
        return out;
    }

    const StandardForm& f_;
    int nx_, ny_, nz_;
    const Scaling* W_ = nullptr;
    bool pattern_ready_ = false;
    Eigen::SimplicialLDLT<SpMat> ldlt_;
};

}  // namespace detail

/// Homogeneous self-dual interior-point method with Nesterov-Todd scaling and
/// Mehrotra predictor-corrector steps. Deterministic for fixed input.
inline ConicSolution solve(const StandardForm& f, const Tolerances& tol = {})
{
    using detail::KktSolver;
    using detail::Scaling;

    const int nx = f.nx;
    const int ny = static_cast<int>(f.A.rows());
    Scaling W(f.n_nonneg, f.psd_dims);
    const int nz = W.nz();
    if (f.G.rows() != nz || f.h.size() != nz || f.b.size() != ny || f.c.size() != nx)
        throw ConfigurationError("inconsistent standard-form dimensions");

    ConicSolution out;

    // An equality with no variables and a nonzero right-hand side is infeasible outright.
    {
        Vec rowmax = Vec::Zero(ny);
        for (int j = 0; j < f.A.outerSize(); ++j)
            for (SpMat::InnerIterator it(f.A, j); it; ++it)
                rowmax(it.row()) = std::max(rowmax(it.row()), std::abs(it.value()));
        for (int r = 0; r < ny; ++r)
            if (rowmax(r) == 0.0 && std::abs(f.b(r)) > tol.primal) {
                out.status = Status::infeasible;
                out.x = Vec::Zero(nx);
                out.y = Vec::Zero(ny);
                out.y(r) = -1.0 / f.b(r);
                out.z = Vec::Zero(nz);
                out.s = Vec::Zero(nz);
                return out;
            }
    }

    const double reg = 1e-9;
    const Vec e = W.identity();
    const int degree = W.degree();

    const auto cone_shift = [&](Vec v) {
        // Smallest alpha with v + alpha e in the cone; shift to the interior if needed.
        double worst = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < f.n_nonneg; ++i) worst = std::max(worst, -v(i));
        for (std::size_t c = 0; c < W.dims().size(); ++c) {
            const int k = W.dims()[c];
            worst = std::max(worst, -min_eigenvalue(smat(v.segment(W.offsets()[c], svec_size(k)), k)));
        }
        if (nz == 0) return v;
        if (worst >= -1e-8) v += (1.0 + std::max(worst, 0.0)) * e;
        return v;
    };

    Vec x(nx), y(ny), z(nz), s(nz);
    double tau = 1.0, kappa = 1.0;
    {
        KktSolver kkt0(f);
        if (!kkt0.factor(nullptr, reg)) throw SolveError("initial KKT factorization failed", "numerical", false);
        Vec ux, uy, uz;
        kkt0.solve(Vec::Zero(nx), f.b, f.h, ux, uy, uz);
        x = ux;
        s = cone_shift(-uz);
        kkt0.solve(-f.c, Vec::Zero(ny), Vec::Zero(nz), ux, uy, uz);
        y = uy;
        z = cone_shift(uz);
    }

    const double nb = std::max({1.0, f.b.size() ? f.b.norm() : 0.0});
    const double nh = std::max({1.0, f.h.size() ? f.h.norm() : 0.0});
    const double nc = std::max(1.0, f.c.norm());

    double best_merit = std::numeric_limits<double>::infinity();
    ConicSolution best;
    int stalls = 0;

    const auto pack = [&](Status st, int iters, double pres, double dres, double rgap) {
        ConicSolution sol;
        sol.status = st;
        sol.iterations = iters;
        sol.x = x / tau;
        sol.y = y / tau;
        sol.z = z / tau;
        sol.s = s / tau;
        sol.objective_value = f.c.dot(sol.x) + f.objective_offset;
        sol.residuals = {pres, dres, rgap};
        return sol;
    };

    KktSolver kkt(f);
    for (int iter = 0; iter <= tol.max_iterations; ++iter) {
        const Vec rx = f.A.transpose() * y + f.G.transpose() * z + f.c * tau;
        const Vec ry = f.A * x - f.b * tau;
        const Vec rz = s + f.G * x - f.h * tau;
        const double cx = f.c.dot(x);
        const double by = f.b.size() ? f.b.dot(y) : 0.0;
        const double hz = f.h.size() ? f.h.dot(z) : 0.0;
        const double rt = kappa + cx + by + hz;

        const double pres = std::max(ry.size() ? ry.norm() / nb : 0.0, rz.size() ? rz.norm() / nh : 0.0) / tau;
        const double dres = rx.norm() / tau / nc;
        const double pcost = cx / tau;
        const double dcost = -(by + hz) / tau;
        const double gap = s.dot(z) / (tau * tau);
        const double rgap = std::max(gap, std::abs(pcost - dcost)) / std::max(1.0, std::abs(pcost));

        log::debug("ipm it ", iter, " pcost ", pcost, " dcost ", dcost, " pres ", pres, " dres ", dres, " gap ", rgap,
                   " tau ", tau, " kappa ", kappa);

        const double merit = std::max({pres / tol.primal, dres / tol.dual, rgap / tol.gap});
        if (merit < best_merit) {
            best_merit = merit;
            best = pack(Status::max_iterations, iter, pres, dres, rgap);
        }
        if (pres <= tol.primal && dres <= tol.dual && rgap <= tol.gap) {
            auto sol = pack(Status::optimal, iter, pres, dres, rgap);
            sol.blocks.clear();
            return sol;
        }
        // Infeasibility certificates.
        if (by + hz < 0.0) {
            const double cert = (f.A.transpose() * y + f.G.transpose() * z).norm() / -(by + hz);
            if (cert <= tol.dual * 1e-2 * nc || (cert <= tol.dual && kappa > 1e3 * tau)) {
                ConicSolution sol;
                sol.status = Status::infeasible;
                sol.iterations = iter;
                sol.y = y / -(by + hz);
                sol.z = z / -(by + hz);
                sol.x = Vec::Zero(nx);
                sol.s = Vec::Zero(nz);
                sol.residuals = {pres, dres, rgap};
                return sol;
            }
        }
        if (cx < 0.0) {
            const double cert = std::max(ry.size() ? (f.A * x).norm() : 0.0,
                                         nz ? (f.G * x + s).norm() : 0.0) / -cx;
            if (cert <= tol.primal * 1e-2 * std::max(nb, nh) || (cert <= tol.primal && kappa > 1e3 * tau)) {
                ConicSolution sol;
                sol.status = Status::unbounded;
                sol.iterations = iter;
                sol.x = x / -cx;
                sol.s = s / -cx;
                sol.y = Vec::Zero(ny);
                sol.z = Vec::Zero(nz);
                sol.objective_value = -std::numeric_limits<double>::infinity();
                sol.residuals = {pres, dres, rgap};
                return sol;
            }
        }
        if (iter == tol.max_iterations) break;

        if (!W.update(s, z)) break;
        bool ok = kkt.factor(&W, reg);
        if (!ok) ok = kkt.factor(&W, 1e-6);
        if (!ok) break;

        Vec x2, y2, z2;
        kkt.solve(-f.c, f.b, f.h, x2, y2, z2);
        const double denom2 = f.c.dot(x2) + (ny ? f.b.dot(y2) : 0.0) + (nz ? f.h.dot(z2) : 0.0) - kappa / tau;

        const double mu = (s.dot(z) + tau * kappa) / (degree + 1);

        struct Dir {
            Vec dx, dy, dz, ds;
            double dtau, dkappa;
        };
        const auto direction = [&](double d, const Vec& ds_rhs, double dk_rhs) {
            Dir D;
            const Vec w1 = W.lambda_inv_circ(ds_rhs);
            const Vec WTw1 = W.WT(w1);
            Vec x1, y1, z1;
            kkt.solve(-d * rx, -d * ry, -d * rz - WTw1, x1, y1, z1);
            const double num = -d * rt - dk_rhs / tau -
                               (f.c.dot(x1) + (ny ? f.b.dot(y1) : 0.0) + (nz ? f.h.dot(z1) : 0.0));
            D.dtau = num / denom2;
            D.dx = x1 + D.dtau * x2;
            D.dy = y1 + D.dtau * y2;
            D.dz = z1 + D.dtau * z2;
            D.ds = WTw1 - W.WTW(D.dz);
            D.dkappa = (dk_rhs - kappa * D.dtau) / tau;
            return D;
        };
        const auto step_len = [&](const Dir& D) {
            double a = std::min(W.max_step(W.WinvT(D.ds)), W.max_step(W.W(D.dz)));
            if (D.dtau < 0.0) a = std::min(a, -tau / D.dtau);
            if (D.dkappa < 0.0) a = std::min(a, -kappa / D.dkappa);
            return a;
        };

        const Vec lam2 = W.lambda_sq();
        const Dir aff = direction(1.0, -lam2, -tau * kappa);
        const double alpha_aff = std::min(1.0, step_len(aff));
        const double sigma = std::clamp(std::pow(1.0 - alpha_aff, 3), 0.0, 1.0);

        const Vec corr = W.circ(W.WinvT(aff.ds), W.W(aff.dz));
        const Dir cmb = direction(1.0 - sigma, -lam2 - corr + sigma * mu * e,
                                  -tau * kappa - aff.dtau * aff.dkappa + sigma * mu);
        const double alpha = std::min(1.0, 0.99 * step_len(cmb));
        if (!(alpha > 1e-12)) {
            if (++stalls > 3) break;
        }

        x += alpha * cmb.dx;
        y += alpha * cmb.dy;
        z += alpha * cmb.dz;
        s += alpha * cmb.ds;
        tau += alpha * cmb.dtau;
        kappa += alpha * cmb.dkappa;
        if (!(tau > 0.0) || !(kappa > 0.0) || !x.allFinite() || !z.allFinite()) break;
    }
    best.status = Status::max_iterations;
    return best;
}

/// Solves `prog` and attaches its block table to the solution.
inline ConicSolution solve(const ConicProgram& prog, const Tolerances& tol = {})
{
    ConicSolution sol = solve(prog.standard_form(), tol);
    sol.blocks = prog.blocks();
    if (sol.x.size() != prog.num_variables()) sol.x = Vec::Zero(prog.num_variables());
    return sol;
}

}  // namespace mfsb::conic

#endif  // MFSB_CONIC_HPP
