#include <catch_amalgamated.hpp>

#include <cmath>

#include "cape/rng.hpp"
#include "cape/tensor.hpp"
#include "oracles.hpp"

using namespace cape;
using Catch::Approx;

namespace {

Matrix random_matrix(Index r, Index c, RngStream& rng)
{
    Matrix m(r, c);
    for (Index j = 0; j < c; ++j)
        for (Index i = 0; i < r; ++i) m(i, j) = rng.normal();
    return m;
}

Tensor3 random_tensor(Index n, RngStream& rng)
{
    Tensor3 t = Tensor3::cube(n);
    for (double& x : t.data()) x = rng.normal();
    return t;
}

Vector e(Index n, Index i)
{
    Vector v = Vector::Zero(n);
    v(i) = 1.0;
    return v;
}

} // namespace

TEST_CASE("outer3 basics")
{
    const Tensor3 t = outer3(e(2, 0), e(2, 0), e(2, 0));
    CHECK(t(0, 0, 0) == 1.0);
    CHECK(tensor_norm(t) == 1.0);
    CHECK(tensor_norm(outer3(Vector::Zero(2), Vector::Zero(2), Vector::Zero(2))) == 0.0);
    const Tensor3 ones = outer3(Vector::Ones(2), Vector::Ones(2), Vector::Ones(2));
    for (double x : ones.data()) CHECK(x == 1.0);
    CHECK(tensor_norm(ones) == Approx(std::sqrt(8.0)).epsilon(1e-15));
    CHECK_THROWS_AS(outer3(Vector::Ones(2), Vector::Ones(3), Vector::Ones(2)), DimensionError);

    const Vector u{{1.0, 2.0, -1.0}}, v{{0.5, 0.0, 3.0}}, w{{2.0, -1.0, 1.0}};
    const Tensor3 g = outer3(u, v, w);
    CHECK(g(2, 0, 1) == u(2) * v(0) * w(1));
}

TEST_CASE("vectorize order is row-major with last index fastest")
{
    Tensor3 t(2, 3, 4);
    double c = 0.0;
    for (Index i = 0; i < 2; ++i)
        for (Index j = 0; j < 3; ++j)
            for (Index k = 0; k < 4; ++k) t(i, j, k) = c++;
    const Vector v = vectorize(t);
    for (Index n = 0; n < v.size(); ++n) CHECK(v(n) == static_cast<double>(n));
    CHECK(tensor_norm(t) == Approx(v.norm()));
}

TEST_CASE("unit rank-one tensor has norm one")
{
    RngStream rng(3, "norm");
    Vector x = Vector::Zero(5);
    for (Index i = 0; i < 5; ++i) x(i) = rng.normal();
    x.normalize();
    CHECK(tensor_norm(outer3(x, x, x)) == Approx(1.0).epsilon(1e-14));
}

TEST_CASE("multilinear3 against brute force")
{
    RngStream rng(11, "ml");
    SECTION("identity factors leave T unchanged")
    {
        const Tensor3 t = random_tensor(4, rng);
        const Matrix I = Matrix::Identity(4, 4);
        CHECK(oracle::max_abs_diff(multilinear3(t, I, I, I), t) == 0.0);
    }
    SECTION("random instances")
    {
        for (Index d : {2, 3, 5}) {
            const Tensor3 t = random_tensor(d, rng);
            const Matrix a = random_matrix(d, 2, rng), b = random_matrix(d, 3, rng), c = random_matrix(d, 2, rng);
            CHECK(oracle::max_abs_diff(multilinear3(t, a, b, c), oracle::multilinear(t, a, b, c)) < 1e-12);
        }
    }
    SECTION("rank-one case")
    {
        const Vector v = Vector::Random(4);
        const Matrix w = random_matrix(4, 2, rng);
        const Tensor3 t = outer3(v, v, v) * 2.5;
        const Vector p = w.transpose() * v;
        CHECK(oracle::max_abs_diff(multilinear3(t, w, w, w), outer3(p, p, p) * 2.5) < 1e-12);
    }
    SECTION("composition associativity")
    {
        for (int rep = 0; rep < 10; ++rep) {
            const Tensor3 t = random_tensor(5, rng);
            const Matrix a = random_matrix(5, 4, rng), b = random_matrix(4, 3, rng);
            const Tensor3 lhs = multilinear3(t, a * b, a * b, a * b);
            const Tensor3 rhs = multilinear3(multilinear3(t, a, a, a), b, b, b);
            CHECK(oracle::max_abs_diff(lhs, rhs) <= 1e-10 * std::max(1.0, tensor_norm(lhs)));
        }
    }
    CHECK_THROWS_AS(multilinear3(Tensor3::cube(3), Matrix::Identity(2, 2), Matrix::Identity(3, 3), Matrix::Identity(3, 3)),
                    DimensionError);
}

TEST_CASE("apply_Iuu")
{
    const SymTensor3 t = sym_outer3(e(2, 0), 2.0);
    CHECK(apply_Iuu(t, e(2, 0)).isApprox(Vector{{2.0, 0.0}}));
    CHECK(apply_Iuu(t, e(2, 1)).norm() == 0.0);

    const SymTensor3 t2 = sym_outer3(e(2, 0), 2.0) + sym_outer3(e(2, 1), 1.0);
    const Vector u = Vector{{1.0, 1.0}} / std::sqrt(2.0);
    const Vector r = apply_Iuu(t2, u);
    CHECK(r(0) == Approx(1.0).epsilon(1e-15));
    CHECK(r(1) == Approx(0.5).epsilon(1e-15));

    RngStream rng(5, "iuu");
    const SymTensor3 s = SymTensor3::symmetrize(random_tensor(4, rng));
    const Vector x = Vector::Random(4);
    const Tensor3 ref = multilinear3(s, Matrix::Identity(4, 4), x, x);
    for (Index i = 0; i < 4; ++i) CHECK(std::abs(apply_Iuu(s, x)(i) - ref(i, 0, 0)) < 1e-12);
    CHECK_THROWS_AS(apply_Iuu(s, Vector::Ones(3)), DimensionError);
}

TEST_CASE("d_sym and canonical ranking")
{
    CHECK(d_sym(2) == 4);
    CHECK(d_sym(3) == 10);
    CHECK(d_sym(1) == 1);
    CHECK(d_sym(4, 2) == 10);
    for (Index d = 1; d <= 10; ++d) {
        std::size_t count = 0;
        for_each_sym_index(d, [&](const SymIndex& s) {
            CHECK(s.rank() == count);
            CHECK(s.rank() == oracle::rank_by_enumeration(s.i, s.j, s.k, d));
            ++count;
        });
        CHECK(count == d_sym(static_cast<std::size_t>(d)));
    }
    CHECK(SymIndex::canonical(2, 0, 1) == SymIndex{0, 1, 2});
}

TEST_CASE("symmetric tensor from unique entries")
{
    const SymTensor3 one = sym_tensor_from_unique(1, Vector{{5.0}});
    CHECK(one(0, 0, 0) == 5.0);

    const SymTensor3 t = sym_tensor_from_unique(2, Vector{{1.0, 2.0, 3.0, 4.0}});
    CHECK(t(0, 0, 0) == 1.0);
    CHECK(t(0, 0, 1) == 2.0);
    CHECK(t(0, 1, 0) == 2.0);
    CHECK(t(1, 0, 0) == 2.0);
    CHECK(t(0, 1, 1) == 3.0);
    CHECK(t(1, 0, 1) == 3.0);
    CHECK(t(1, 1, 0) == 3.0);
    CHECK(t(1, 1, 1) == 4.0);

    RngStream rng(9, "unique");
    for (Index d : {1, 3, 6}) {
        Vector b(static_cast<Index>(d_sym(static_cast<std::size_t>(d))));
        for (Index i = 0; i < b.size(); ++i) b(i) = rng.normal();
        const SymTensor3 s = sym_tensor_from_unique(d, b);
        CHECK(oracle::fully_symmetric(s.tensor()));
        CHECK(unique_from_sym(s) == b);
    }
    CHECK_THROWS_AS(sym_tensor_from_unique(2, Vector::Ones(3)), DimensionError);
}

TEST_CASE("symmetrize is exact and idempotent")
{
    RngStream rng(4, "sym");
    const Tensor3 raw = random_tensor(4, rng);
    const SymTensor3 s = SymTensor3::symmetrize(raw);
    CHECK(oracle::fully_symmetric(s.tensor()));
    CHECK(oracle::max_abs_diff(SymTensor3::symmetrize(s.tensor()).tensor(), s.tensor()) < 1e-15);
    CHECK(s(0, 1, 2) == Approx((raw(0, 1, 2) + raw(0, 2, 1) + raw(1, 0, 2) + raw(1, 2, 0) + raw(2, 0, 1) + raw(2, 1, 0)) / 6.0));

    const Matrix a = random_matrix(3, 3, rng);
    const SymMatrix m = SymMatrix::symmetrize(a);
    CHECK(m.matrix() == m.matrix().transpose());
    CHECK_THROWS(SymMatrix::from_symmetric(a));
}

TEST_CASE("top_k_eigs")
{
    SECTION("identity")
    {
        const EigenPairs p = top_k_eigs(SymMatrix::identity(3), 2);
        CHECK(p.values(0) == Approx(1.0));
        CHECK(p.values(1) == Approx(1.0));
        CHECK((p.vectors.transpose() * p.vectors - Matrix::Identity(2, 2)).norm() < 1e-12);
    }
    SECTION("diagonal, canonical signs")
    {
        Matrix a = Matrix::Zero(3, 3);
        a.diagonal() << 3.0, 2.0, 1.0;
        const EigenPairs p = top_k_eigs(SymMatrix::from_symmetric(a), 2);
        CHECK(p.values(0) == Approx(3.0));
        CHECK(p.values(1) == Approx(2.0));
        CHECK(p.vectors(0, 0) == Approx(1.0));
        CHECK(p.vectors(1, 1) == Approx(1.0));
    }
    SECTION("random residual and orthonormality")
    {
        RngStream rng(21, "eig");
        for (int rep = 0; rep < 20; ++rep) {
            const SymMatrix a = SymMatrix::symmetrize(random_matrix(5, 5, rng));
            const EigenPairs p = top_k_eigs(a, 5);
            CHECK((a.matrix() * p.vectors - p.vectors * p.values.asDiagonal()).norm() < 1e-10);
            CHECK((p.vectors.transpose() * p.vectors - Matrix::Identity(5, 5)).norm() < 1e-10);
            for (Index i = 1; i < 5; ++i) CHECK(p.values(i) <= p.values(i - 1));
            for (Index c = 0; c < 5; ++c) {
                Index arg;
                p.vectors.col(c).cwiseAbs().maxCoeff(&arg);
                CHECK(p.vectors(arg, c) > 0.0);
            }
        }
    }
    CHECK_THROWS_AS(top_k_eigs(SymMatrix::identity(3), 4), DimensionError);
    CHECK_THROWS_AS(top_k_eigs(SymMatrix::identity(3), 0), DimensionError);
}
