#pragma once
//
// Dense symmetric matrices and third-order tensors plus the multilinear
// algebra used by the moment-based estimators.
//
// Storage is row-major with the last index fastest:
//   T(i, j, k) lives at data[(i * n1 + j) * n2 + k].
// vectorize() returns exactly that order.
//

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace cape {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index  = Eigen::Index;

// ---------------------------------------------------------------------------
// Tensor3: general dense 3-way array
// ---------------------------------------------------------------------------

class Tensor3 {
public:
    Tensor3() = default;

    Tensor3(Index n0, Index n1, Index n2)
        : dims_{n0, n1, n2}
        , data_(static_cast<std::size_t>(n0 * n1 * n2), 0.0)
    {
        detail::require_dims(n0 >= 0 && n1 >= 0 && n2 >= 0, "Tensor3: negative extent");
    }

    static Tensor3 cube(Index n) { return Tensor3(n, n, n); }

    Index dim(int mode) const { return dims_[mode]; }
    bool is_cubic() const { return dims_[0] == dims_[1] && dims_[1] == dims_[2]; }
    std::size_t size() const { return data_.size(); }

    double& operator()(Index i, Index j, Index k) { return data_[offset(i, j, k)]; }
    double operator()(Index i, Index j, Index k) const { return data_[offset(i, j, k)]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    Tensor3& operator+=(const Tensor3& o)
    {
        check_same(o);
        for (std::size_t n = 0; n < data_.size(); ++n) data_[n] += o.data_[n];
        return *this;
    }
    Tensor3& operator-=(const Tensor3& o)
    {
        check_same(o);
        for (std::size_t n = 0; n < data_.size(); ++n) data_[n] -= o.data_[n];
        return *this;
    }
    Tensor3& operator*=(double s)
    {
        for (auto& x : data_) x *= s;
        return *this;
    }

    friend Tensor3 operator+(Tensor3 a, const Tensor3& b) { return a += b; }
    friend Tensor3 operator-(Tensor3 a, const Tensor3& b) { return a -= b; }
    friend Tensor3 operator*(Tensor3 a, double s) { return a *= s; }
    friend Tensor3 operator*(double s, Tensor3 a) { return a *= s; }

    bool same_shape(const Tensor3& o) const
    {
        return dims_[0] == o.dims_[0] && dims_[1] == o.dims_[1] && dims_[2] == o.dims_[2];
    }

private:
    std::size_t offset(Index i, Index j, Index k) const
    {
        return static_cast<std::size_t>((i * dims_[1] + j) * dims_[2] + k);
    }
    void check_same(const Tensor3& o) const
    {
        detail::require_dims(same_shape(o), "Tensor3: shape mismatch");
    }

    Index dims_[3] = {0, 0, 0};
    std::vector<double> data_;
};

inline double tensor_norm(const Tensor3& t)
{
    double s = 0.0;
    for (double x : t.data()) s += x * x;
    return std::sqrt(s);
}

inline Vector vectorize(const Tensor3& t)
{
    Vector v(static_cast<Index>(t.size()));
    auto d = t.data();
    std::copy(d.begin(), d.end(), v.data());
    return v;
}

// ---------------------------------------------------------------------------
// Symmetric index bookkeeping
// ---------------------------------------------------------------------------

/// binomial(n, r) for the small arguments used here.
inline std::uint64_t binomial(std::uint64_t n, std::uint64_t r)
{
    if (r > n) return 0;
    r = std::min(r, n - r);
    std::uint64_t out = 1;
    for (std::uint64_t i = 1; i <= r; ++i) out = out * (n - r + i) / i;
    return out;
}

/// Number of unique entries of a symmetric order-`order` tensor of side `dim`.
inline std::size_t d_sym(std::size_t dim, std::size_t order = 3)
{
    detail::require_dims(dim >= 1, "d_sym: dimension must be positive");
    return static_cast<std::size_t>(binomial(dim + order - 1, order));
}

/// Canonical index i <= j <= k of a symmetric third-order tensor.
struct SymIndex {
    Index i = 0, j = 0, k = 0;

    static SymIndex canonical(Index a, Index b, Index c)
    {
        if (a > b) std::swap(a, b);
        if (b > c) std::swap(b, c);
        if (a > b) std::swap(a, b);
        return {a, b, c};
    }

    /// Colexicographic rank: orders by k, then j, then i.
    std::size_t rank() const
    {
        return static_cast<std::size_t>(binomial(static_cast<std::uint64_t>(k) + 2, 3)
                                        + binomial(static_cast<std::uint64_t>(j) + 1, 2)
                                        + static_cast<std::uint64_t>(i));
    }

    friend bool operator==(const SymIndex&, const SymIndex&) = default;
};

/// Visits canonical triples in rank order.
template <typename F>
void for_each_sym_index(Index dim, F&& f)
{
    for (Index k = 0; k < dim; ++k)
        for (Index j = 0; j <= k; ++j)
            for (Index i = 0; i <= j; ++i) f(SymIndex{i, j, k});
}

namespace detail {

// Writes `value` to every permutation of (i, j, k).
inline void scatter_sym(Tensor3& t, const SymIndex& s, double value)
{
    const Index a = s.i, b = s.j, c = s.k;
    t(a, b, c) = value;
    t(a, c, b) = value;
    t(b, a, c) = value;
    t(b, c, a) = value;
    t(c, a, b) = value;
    t(c, b, a) = value;
}

} // namespace detail

// ---------------------------------------------------------------------------
// SymMatrix
// ---------------------------------------------------------------------------

/// Exactly symmetric dense matrix.
class SymMatrix {
public:
    SymMatrix() = default;

    static SymMatrix zero(Index dim) { return SymMatrix(Matrix::Zero(dim, dim)); }
    static SymMatrix identity(Index dim) { return SymMatrix(Matrix::Identity(dim, dim)); }

    /// Returns (A + A^T) / 2, which is symmetric bit-for-bit.
    static SymMatrix symmetrize(const Matrix& a)
    {
        detail::require_dims(a.rows() == a.cols() && a.rows() >= 1, "SymMatrix: input must be square");
        Matrix s(a.rows(), a.cols());
        for (Index i = 0; i < a.rows(); ++i) {
            s(i, i) = a(i, i);
            for (Index j = i + 1; j < a.cols(); ++j) {
                const double v = 0.5 * (a(i, j) + a(j, i));
                s(i, j) = v;
                s(j, i) = v;
            }
        }
        return SymMatrix(std::move(s));
    }

    /// Accepts an already symmetric matrix; throws if any pair differs.
    static SymMatrix from_symmetric(Matrix a)
    {
        detail::require_dims(a.rows() == a.cols() && a.rows() >= 1, "SymMatrix: input must be square");
        for (Index i = 0; i < a.rows(); ++i)
            for (Index j = i + 1; j < a.cols(); ++j)
                if (a(i, j) != a(j, i)) throw std::invalid_argument("SymMatrix: input is not symmetric");
        return SymMatrix(std::move(a));
    }

    Index dim() const { return m_.rows(); }
    const Matrix& matrix() const { return m_; }
    double operator()(Index i, Index j) const { return m_(i, j); }

    SymMatrix& operator+=(const SymMatrix& o)
    {
        detail::require_dims(dim() == o.dim(), "SymMatrix: dimension mismatch");
        m_ += o.m_;
        return *this;
    }
    SymMatrix& operator-=(const SymMatrix& o)
    {
        detail::require_dims(dim() == o.dim(), "SymMatrix: dimension mismatch");
        m_ -= o.m_;
        return *this;
    }
    SymMatrix& operator*=(double s)
    {
        m_ *= s;
        return *this;
    }
    friend SymMatrix operator+(SymMatrix a, const SymMatrix& b) { return a += b; }
    friend SymMatrix operator-(SymMatrix a, const SymMatrix& b) { return a -= b; }
    friend SymMatrix operator*(SymMatrix a, double s) { return a *= s; }
    friend SymMatrix operator*(double s, SymMatrix a) { return a *= s; }

private:
    explicit SymMatrix(Matrix m) : m_(std::move(m)) {}
    Matrix m_;
};

// ---------------------------------------------------------------------------
// SymTensor3
// ---------------------------------------------------------------------------

/// Cubic third-order tensor invariant under all index permutations.
class SymTensor3 {
public:
    SymTensor3() = default;

    static SymTensor3 zero(Index dim)
    {
        detail::require_dims(dim >= 1, "SymTensor3: dimension must be positive");
        return SymTensor3(Tensor3::cube(dim));
    }

    /// Expands the D_sym unique entries (colex order) into the full cube.
    static SymTensor3 from_unique(Index dim, std::span<const double> unique)
    {
        detail::require_dims(dim >= 1, "SymTensor3: dimension must be positive");
        detail::require_dims(unique.size() == d_sym(static_cast<std::size_t>(dim)),
                             "SymTensor3: unique-entry vector has length " + std::to_string(unique.size())
                                 + ", expected " + std::to_string(d_sym(static_cast<std::size_t>(dim))));
        Tensor3 t = Tensor3::cube(dim);
        std::size_t r = 0;
        for_each_sym_index(dim, [&](const SymIndex& s) { detail::scatter_sym(t, s, unique[r++]); });
        return SymTensor3(std::move(t));
    }

    static SymTensor3 from_unique(Index dim, const Vector& unique)
    {
        return from_unique(dim, std::span<const double>(unique.data(), static_cast<std::size_t>(unique.size())));
    }

    /// Averages each entry over its permutation orbit.
    static SymTensor3 symmetrize(const Tensor3& t)
    {
        detail::require_dims(t.is_cubic() && t.dim(0) >= 1, "SymTensor3: input must be a non-empty cube");
        const Index n = t.dim(0);
        Tensor3 out = Tensor3::cube(n);
        for_each_sym_index(n, [&](const SymIndex& s) {
            const Index a = s.i, b = s.j, c = s.k;
            const double sum = t(a, b, c) + t(a, c, b) + t(b, a, c) + t(b, c, a) + t(c, a, b) + t(c, b, a);
            detail::scatter_sym(out, s, sum / 6.0);
        });
        return SymTensor3(std::move(out));
    }

    Index dim() const { return t_.dim(0); }
    const Tensor3& tensor() const { return t_; }
    double operator()(Index i, Index j, Index k) const { return t_(i, j, k); }

    /// Inverse of from_unique.
    Vector unique() const
    {
        Vector b(static_cast<Index>(d_sym(static_cast<std::size_t>(dim()))));
        Index r = 0;
        for_each_sym_index(dim(), [&](const SymIndex& s) { b(r++) = t_(s.i, s.j, s.k); });
        return b;
    }

    SymTensor3& operator+=(const SymTensor3& o)
    {
        t_ += o.t_;
        return *this;
    }
    SymTensor3& operator-=(const SymTensor3& o)
    {
        t_ -= o.t_;
        return *this;
    }
    SymTensor3& operator*=(double s)
    {
        t_ *= s;
        return *this;
    }
    friend SymTensor3 operator+(SymTensor3 a, const SymTensor3& b) { return a += b; }
    friend SymTensor3 operator-(SymTensor3 a, const SymTensor3& b) { return a -= b; }
    friend SymTensor3 operator*(SymTensor3 a, double s) { return a *= s; }
    friend SymTensor3 operator*(double s, SymTensor3 a) { return a *= s; }

private:
    explicit SymTensor3(Tensor3 t) : t_(std::move(t)) {}
    Tensor3 t_;
};

inline SymTensor3 sym_tensor_from_unique(Index dim, const Vector& b) { return SymTensor3::from_unique(dim, b); }
inline Vector unique_from_sym(const SymTensor3& t) { return t.unique(); }

inline double tensor_norm(const SymTensor3& t) { return tensor_norm(t.tensor()); }
inline Vector vectorize(const SymTensor3& t) { return vectorize(t.tensor()); }

// ---------------------------------------------------------------------------
// Multilinear operations
// ---------------------------------------------------------------------------

inline Tensor3 outer3(const Vector& u, const Vector& v, const Vector& w)
{
    detail::require_dims(u.size() == v.size() && v.size() == w.size(), "outer3: vectors differ in length");
    Tensor3 t(u.size(), v.size(), w.size());
    for (Index i = 0; i < u.size(); ++i)
        for (Index j = 0; j < v.size(); ++j) {
            const double uv = u(i) * v(j);
            for (Index k = 0; k < w.size(); ++k) t(i, j, k) = uv * w(k);
        }
    return t;
}

/// Symmetric rank-one tensor weight * v (x) v (x) v.
inline SymTensor3 sym_outer3(const Vector& v, double weight = 1.0)
{
    const Index n = v.size();
    Vector b(static_cast<Index>(d_sym(static_cast<std::size_t>(n))));
    Index r = 0;
    for_each_sym_index(n, [&](const SymIndex& s) { b(r++) = weight * v(s.i) * v(s.j) * v(s.k); });
    return SymTensor3::from_unique(n, b);
}

/// Z = T(V1, V2, V3): Z[a][b][c] = sum_ijk T[i][j][k] V1[i][a] V2[j][b] V3[k][c].
/// Contracted one mode at a time (last mode first).
inline Tensor3 multilinear3(const Tensor3& t, const Matrix& v1, const Matrix& v2, const Matrix& v3)
{
    const Index n0 = t.dim(0), n1 = t.dim(1), n2 = t.dim(2);
    detail::require_dims(v1.rows() == n0 && v2.rows() == n1 && v3.rows() == n2,
                         "multilinear3: factor rows must match tensor extents");
    const Index k0 = v1.cols(), k1 = v2.cols(), k2 = v3.cols();

    Tensor3 s3(n0, n1, k2);
    for (Index i = 0; i < n0; ++i)
        for (Index j = 0; j < n1; ++j)
            for (Index k = 0; k < n2; ++k) {
                const double x = t(i, j, k);
                if (x == 0.0) continue;
                for (Index c = 0; c < k2; ++c) s3(i, j, c) += x * v3(k, c);
            }

    Tensor3 s2(n0, k1, k2);
    for (Index i = 0; i < n0; ++i)
        for (Index j = 0; j < n1; ++j)
            for (Index b = 0; b < k1; ++b) {
                const double y = v2(j, b);
                if (y == 0.0) continue;
                for (Index c = 0; c < k2; ++c) s2(i, b, c) += s3(i, j, c) * y;
            }

    Tensor3 out(k0, k1, k2);
    for (Index i = 0; i < n0; ++i)
        for (Index a = 0; a < k0; ++a) {
            const double y = v1(i, a);
            if (y == 0.0) continue;
            for (Index b = 0; b < k1; ++b)
                for (Index c = 0; c < k2; ++c) out(a, b, c) += s2(i, b, c) * y;
        }
    return out;
}

inline Tensor3 multilinear3(const SymTensor3& t, const Matrix& v1, const Matrix& v2, const Matrix& v3)
{
    return multilinear3(t.tensor(), v1, v2, v3);
}

/// T(W, W, W) for a symmetric T, re-symmetrized to remove rounding asymmetry.
inline SymTensor3 project(const SymTensor3& t, const Matrix& w)
{
    return SymTensor3::symmetrize(multilinear3(t.tensor(), w, w, w));
}

/// T(I, u, u)
inline Vector apply_Iuu(const Tensor3& t, const Vector& u)
{
    detail::require_dims(t.dim(1) == u.size() && t.dim(2) == u.size(), "apply_Iuu: vector length mismatch");
    Vector out = Vector::Zero(t.dim(0));
    for (Index i = 0; i < t.dim(0); ++i) {
        double acc = 0.0;
        for (Index j = 0; j < t.dim(1); ++j) {
            double inner = 0.0;
            for (Index k = 0; k < t.dim(2); ++k) inner += t(i, j, k) * u(k);
            acc += inner * u(j);
        }
        out(i) = acc;
    }
    return out;
}

inline Vector apply_Iuu(const SymTensor3& t, const Vector& u) { return apply_Iuu(t.tensor(), u); }

/// T(u, u, u)
inline double apply_uuu(const SymTensor3& t, const Vector& u) { return u.dot(apply_Iuu(t, u)); }

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition
// ---------------------------------------------------------------------------

struct EigenPairs {
    Vector values;  // descending
    Matrix vectors; // D x K, orthonormal columns
};

namespace detail {

// Largest-magnitude entry positive; ties go to the lowest index.
inline void canonicalize_signs(Matrix& v)
{
    for (Index c = 0; c < v.cols(); ++c) {
        Index best = 0;
        for (Index r = 1; r < v.rows(); ++r)
            if (std::abs(v(r, c)) > std::abs(v(best, c))) best = r;
        if (v(best, c) < 0.0) v.col(c) *= -1.0;
    }
}

} // namespace detail

/// Top-K eigenpairs of a symmetric matrix, sorted by algebraic value.
inline EigenPairs top_k_eigs(const SymMatrix& a, Index k)
{
    detail::require_dims(k >= 1 && k <= a.dim(), "top_k_eigs: need 1 <= K <= D");
    Eigen::SelfAdjointEigenSolver<Matrix> solver(a.matrix());
    if (solver.info() != Eigen::Success) throw ConvergenceError("top_k_eigs: eigensolver did not converge");

    const Index d = a.dim();
    EigenPairs out;
    out.values.resize(k);
    out.vectors.resize(d, k);
    // Eigen returns ascending order.
    for (Index c = 0; c < k; ++c) {
        out.values(c) = solver.eigenvalues()(d - 1 - c);
        out.vectors.col(c) = solver.eigenvectors().col(d - 1 - c);
    }
    detail::canonicalize_signs(out.vectors);
    return out;
}

} // namespace cape
