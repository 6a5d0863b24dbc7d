#pragma once
//
// Seeded synthetic data: Gaussian PCA data with a decaying spectrum,
// spherical Gaussian mixtures and single-topic documents.
//

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "dist_pca.hpp"
#include "otd.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace cape {

enum class Family { PCA, MOG, STM };

inline const char* to_string(Family f)
{
    switch (f) {
    case Family::PCA: return "pca";
    case Family::MOG: return "mog";
    case Family::STM: return "stm";
    }
    return "?";
}

inline Family parse_family(const std::string& s)
{
    if (s == "pca") return Family::PCA;
    if (s == "mog") return Family::MOG;
    if (s == "stm") return Family::STM;
    throw std::invalid_argument("unknown family '" + s + "' (expected pca, mog or stm)");
}

struct ExperimentDataSpec {
    Family family = Family::PCA;
    Index dim = 50;
    Index k = 10;
    std::size_t sites = 5;
    std::size_t n_s = 1000;
    double sigma_sq = 0.05;      // MOG
    int words = 3;               // STM
    double spectrum_ratio = 0.9; // PCA: top-K eigenvalues 1, r, r^2, ...
    double spectrum_tail = 0.01; // PCA: remaining eigenvalues

    void validate() const
    {
        if (dim < 1 || k < 1 || k > dim) throw std::invalid_argument("data spec: need 1 <= K <= D");
        if (sites < 1 || n_s < 1) throw std::invalid_argument("data spec: need S >= 1 and N_s >= 1");
        if (family == Family::STM && words < 3) throw std::invalid_argument("data spec: documents need >= 3 words");
        if (!(sigma_sq >= 0.0)) throw std::invalid_argument("data spec: sigma_sq must be nonnegative");
    }
};

// ---------------------------------------------------------------------------
// Small samplers
// ---------------------------------------------------------------------------

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix, signs fixed by diag(R)).
inline Matrix random_orthogonal(Index n, RngStream& rng)
{
    Matrix g(n, n);
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < n; ++i) g(i, j) = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(n, n);
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Index j = 0; j < n; ++j)
        if (r(j, j) < 0.0) q.col(j) *= -1.0;
    return q;
}

inline Index categorical(const Vector& w, RngStream& rng)
{
    const double u = rng.uniform() * w.sum();
    double acc = 0.0;
    for (Index i = 0; i < w.size(); ++i) {
        acc += w(i);
        if (u < acc) return i;
    }
    return w.size() - 1;
}

/// Flat Dirichlet draw (normalized unit exponentials).
inline Vector dirichlet_flat(Index n, RngStream& rng)
{
    Vector x(n);
    for (Index i = 0; i < n; ++i) x(i) = rng.exponential(1.0);
    return x / x.sum();
}

/// Mixing weights proportional to 1 + U(0,1): max/min ratio at most 2.
inline Vector random_weights(Index k, RngStream& rng)
{
    Vector w(k);
    for (Index i = 0; i < k; ++i) w(i) = 1.0 + rng.uniform();
    return w / w.sum();
}

// ---------------------------------------------------------------------------
// PCA data
// ---------------------------------------------------------------------------

struct PcaData {
    std::vector<SiteDataset> sites;
    Matrix basis;    // population eigenvectors (D x D)
    Vector spectrum; // population eigenvalues (descending)
};

inline Vector pca_spectrum(const ExperimentDataSpec& spec)
{
    Vector lam = Vector::Constant(spec.dim, spec.spectrum_tail);
    double v = 1.0;
    for (Index i = 0; i < spec.k; ++i, v *= spec.spectrum_ratio) lam(i) = v;
    return lam;
}

/// Zero-mean Gaussian samples, preprocessed as one pool, then split evenly.
inline PcaData gen_pca_data(const ExperimentDataSpec& spec, RngStream& rng)
{
    spec.validate();
    PcaData out;
    out.spectrum = pca_spectrum(spec);
    out.basis = random_orthogonal(spec.dim, rng);
    const Matrix mix = out.basis * out.spectrum.cwiseSqrt().asDiagonal();

    const auto n = static_cast<Index>(spec.sites * spec.n_s);
    Matrix z(spec.dim, n);
    for (Index c = 0; c < n; ++c)
        for (Index i = 0; i < spec.dim; ++i) z(i, c) = rng.normal();
    const Matrix x = preprocess(mix * z).data;

    const auto ns = static_cast<Index>(spec.n_s);
    for (std::size_t s = 0; s < spec.sites; ++s)
        out.sites.emplace_back(x.middleCols(static_cast<Index>(s) * ns, ns), static_cast<int>(s));
    return out;
}

// ---------------------------------------------------------------------------
// Latent models
// ---------------------------------------------------------------------------

inline constexpr double kMinComponentAngleDeg = 5.0;

/// MOG components: uniform directions, radius in [0.5, 1]; redrawn while any
/// two directions are within 5 degrees or the columns are nearly dependent.
inline LatentModel random_mog_model(Index dim, Index k, double sigma_sq, RngStream& rng)
{
    detail::require_dims(k >= 1 && k <= dim, "random_mog_model: need 1 <= K <= D");
    const double max_cos = std::cos(kMinComponentAngleDeg * std::numbers::pi / 180.0);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        Matrix a(dim, k);
        for (Index c = 0; c < k; ++c) {
            a.col(c) = detail::random_unit(dim, rng);
        }
        bool ok = true;
        for (Index i = 0; i < k && ok; ++i)
            for (Index j = i + 1; j < k && ok; ++j)
                if (std::abs(a.col(i).dot(a.col(j))) > max_cos) ok = false;
        if (ok) {
            Eigen::JacobiSVD<Matrix> svd(a);
            ok = svd.singularValues()(k - 1) > 1e-3;
        }
        if (!ok) continue;
        for (Index c = 0; c < k; ++c) a.col(c) *= 0.5 + 0.5 * rng.uniform();
        LatentModel m;
        m.kind = ModelKind::MOG;
        m.components = std::move(a);
        m.weights = random_weights(k, rng);
        m.sigma_sq = sigma_sq;
        m.validate();
        return m;
    }
    throw std::runtime_error("random_mog_model: could not draw well-separated components");
}

/// STM topics: Dirichlet(1) columns; redrawn if nearly dependent.
inline LatentModel random_stm_model(Index dim, Index k, int words, RngStream& rng)
{
    detail::require_dims(k >= 1 && k <= dim, "random_stm_model: need 1 <= K <= D");
    for (int attempt = 0; attempt < 1000; ++attempt) {
        Matrix a(dim, k);
        for (Index c = 0; c < k; ++c) a.col(c) = dirichlet_flat(dim, rng);
        Eigen::JacobiSVD<Matrix> svd(a);
        if (svd.singularValues()(k - 1) < 1e-3 * svd.singularValues()(0)) continue;
        LatentModel m;
        m.kind = ModelKind::STM;
        m.components = std::move(a);
        m.weights = random_weights(k, rng);
        m.words = words;
        m.validate();
        return m;
    }
    throw std::runtime_error("random_stm_model: could not draw independent topics");
}

struct MogSample {
    Matrix data;             // D x N
    std::vector<Index> labels; // component of each column
};

/// t = a_h + z with h ~ w and z ~ N(0, sigma^2 I).
inline MogSample gen_mog(const LatentModel& model, std::size_t n, RngStream& rng)
{
    if (model.kind != ModelKind::MOG) throw std::invalid_argument("gen_mog: model is not a Gaussian mixture");
    model.validate();
    const double sd = std::sqrt(model.sigma_sq);
    MogSample out;
    out.data.resize(model.dim(), static_cast<Index>(n));
    out.labels.reserve(n);
    for (Index c = 0; c < static_cast<Index>(n); ++c) {
        const Index h = categorical(model.weights, rng);
        out.labels.push_back(h);
        for (Index i = 0; i < model.dim(); ++i)
            out.data(i, c) = model.components(i, h) + (sd > 0.0 ? rng.normal(sd) : 0.0);
    }
    return out;
}

struct StmSample {
    std::vector<WordTriple> docs; // first three words of each document
    std::vector<Index> labels;
};

/// Topic h ~ w, then L words i.i.d. from column h; the first three are kept.
inline StmSample gen_stm(const LatentModel& model, std::size_t n_docs, RngStream& rng)
{
    if (model.kind != ModelKind::STM) throw std::invalid_argument("gen_stm: model is not a topic model");
    model.validate();
    StmSample out;
    out.docs.reserve(n_docs);
    out.labels.reserve(n_docs);
    std::vector<Vector> cols;
    for (Index c = 0; c < model.k(); ++c) cols.push_back(model.components.col(c));
    for (std::size_t n = 0; n < n_docs; ++n) {
        const Index h = categorical(model.weights, rng);
        WordTriple t{};
        for (int l = 0; l < model.words; ++l) {
            const Index w = categorical(cols[static_cast<std::size_t>(h)], rng);
            if (l < 3) t[static_cast<std::size_t>(l)] = w;
        }
        out.docs.push_back(t);
        out.labels.push_back(h);
    }
    return out;
}

/// Divides samples by their largest norm when it exceeds 1 (so every
/// record obeys the unit-norm bound the sensitivities assume). Returns the
/// scale factor; sigma_sq and the true components scale by 1/zeta^2, 1/zeta.
inline double bound_sample_norms(Matrix& samples)
{
    double zeta = 1.0;
    for (Index c = 0; c < samples.cols(); ++c) zeta = std::max(zeta, samples.col(c).norm());
    if (zeta > 1.0) samples /= zeta;
    return zeta;
}

} // namespace cape
