#pragma once
//
// Orthogonal tensor decomposition for latent-variable models (single topic
// model and spherical Gaussian mixture): moments, whitening, the tensor
// power method, parameter recovery, and the private variants (centralized
// Gaussian / vector noise and the distributed correlated-noise protocol).
//

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cape_protocol.hpp"
#include "dp_mech.hpp"
#include "errors.hpp"
#include "rng.hpp"
#include "tensor.hpp"
#include "transcript.hpp"

namespace cape {

struct LatentModel {
    ModelKind kind = ModelKind::MOG;
    Vector weights;        // K, positive, sums to 1
    Matrix components;     // D x K
    double sigma_sq = 0.0; // MOG noise variance
    int words = 3;         // STM words per document

    Index dim() const { return components.rows(); }
    Index k() const { return components.cols(); }

    void validate() const
    {
        detail::require_dims(weights.size() == components.cols() && components.cols() >= 1,
                             "LatentModel: need one weight per component");
        if (std::abs(weights.sum() - 1.0) > 1e-9) throw std::invalid_argument("LatentModel: weights must sum to 1");
        if ((weights.array() <= 0.0).any()) throw std::invalid_argument("LatentModel: weights must be positive");
        if (kind == ModelKind::STM) {
            if (words < 3) throw std::invalid_argument("LatentModel: documents need at least 3 words");
            for (Index c = 0; c < k(); ++c)
                if ((components.col(c).array() < 0.0).any() || std::abs(components.col(c).sum() - 1.0) > 1e-9)
                    throw std::invalid_argument("LatentModel: topic columns must be probability vectors");
        } else if (!(sigma_sq >= 0.0)) {
            throw std::invalid_argument("LatentModel: sigma_sq must be nonnegative");
        }
    }
};

struct MomentPair {
    SymMatrix m2;
    SymTensor3 m3;
    std::size_t n_samples = 0;
    ModelKind kind = ModelKind::MOG;
    double sigma_sq = 0.0;

    Index dim() const { return m2.dim(); }
};

// ---------------------------------------------------------------------------
// Moments
// ---------------------------------------------------------------------------

using WordTriple = std::array<Index, 3>;

/// Empirical E[t1 t2^T] and E[t1 (x) t2 (x) t3] from one-hot word vectors.
inline MomentPair stm_moments(const std::vector<WordTriple>& docs, Index dim)
{
    if (docs.empty()) throw std::invalid_argument("stm_moments: no documents");
    detail::require_dims(dim >= 1, "stm_moments: D must be positive");
    Matrix m2 = Matrix::Zero(dim, dim);
    Tensor3 m3 = Tensor3::cube(dim);
    for (const auto& d : docs) {
        for (Index w : d)
            if (w < 0 || w >= dim)
                throw std::out_of_range("stm_moments: word index " + std::to_string(w) + " outside [0, "
                                        + std::to_string(dim) + ")");
        m2(d[0], d[1]) += 1.0;
        m3(d[0], d[1], d[2]) += 1.0;
    }
    const double n = static_cast<double>(docs.size());
    MomentPair p;
    p.m2 = SymMatrix::symmetrize(m2 / n);
    p.m3 = SymTensor3::symmetrize(m3 * (1.0 / n));
    p.n_samples = docs.size();
    p.kind = ModelKind::STM;
    return p;
}

/// E[t t^T] - sigma^2 I and E[t^(x)3] minus the noise correction built from the sample mean.
inline MomentPair mog_moments(const Matrix& samples, double sigma_sq)
{
    if (samples.cols() == 0) throw std::invalid_argument("mog_moments: no samples");
    if (!(sigma_sq >= 0.0)) throw std::invalid_argument("mog_moments: sigma_sq must be nonnegative");
    const Index d = samples.rows();
    const double n = static_cast<double>(samples.cols());
    const Vector mu = samples.rowwise().mean();

    Matrix m2 = samples * samples.transpose() / n;
    m2 -= sigma_sq * Matrix::Identity(d, d);

    const auto nsym = static_cast<Index>(d_sym(static_cast<std::size_t>(d)));
    Vector b = Vector::Zero(nsym);
    for (Index c = 0; c < samples.cols(); ++c) {
        const auto t = samples.col(c);
        Index r = 0;
        for_each_sym_index(d, [&](const SymIndex& s) { b(r++) += t(s.i) * t(s.j) * t(s.k); });
    }
    b /= n;
    Index r = 0;
    for_each_sym_index(d, [&](const SymIndex& s) {
        double corr = 0.0;
        if (s.j == s.k) corr += mu(s.i);
        if (s.i == s.k) corr += mu(s.j);
        if (s.i == s.j) corr += mu(s.k);
        b(r++) -= sigma_sq * corr;
    });

    MomentPair p;
    p.m2 = SymMatrix::symmetrize(m2);
    p.m3 = SymTensor3::from_unique(d, b);
    p.n_samples = static_cast<std::size_t>(samples.cols());
    p.kind = ModelKind::MOG;
    p.sigma_sq = sigma_sq;
    return p;
}

/// Population moments sum_k w_k a_k a_k^T and sum_k w_k a_k^(x)3.
inline MomentPair exact_moments(const LatentModel& model)
{
    model.validate();
    const Index d = model.dim();
    Matrix m2 = Matrix::Zero(d, d);
    SymTensor3 m3 = SymTensor3::zero(d);
    for (Index c = 0; c < model.k(); ++c) {
        const Vector a = model.components.col(c);
        m2 += model.weights(c) * a * a.transpose();
        m3 += sym_outer3(a, model.weights(c));
    }
    MomentPair p;
    p.m2 = SymMatrix::symmetrize(m2);
    p.m3 = std::move(m3);
    p.n_samples = 0;
    p.kind = model.kind;
    p.sigma_sq = model.sigma_sq;
    return p;
}

/// Sample-size weighted combination, i.e. the moments of the pooled data.
inline MomentPair pool_moments(const std::vector<MomentPair>& parts)
{
    if (parts.empty()) throw std::invalid_argument("pool_moments: nothing to pool");
    std::size_t total = 0;
    for (const auto& p : parts) {
        detail::require_dims(p.dim() == parts[0].dim(), "pool_moments: dimension mismatch");
        total += p.n_samples;
    }
    if (total == 0) throw std::invalid_argument("pool_moments: parts carry no samples");
    const Index d = parts[0].dim();
    SymMatrix m2 = SymMatrix::zero(d);
    SymTensor3 m3 = SymTensor3::zero(d);
    for (const auto& p : parts) {
        const double w = static_cast<double>(p.n_samples) / static_cast<double>(total);
        m2 += p.m2 * w;
        m3 += p.m3 * w;
    }
    MomentPair out{m2, m3, total, parts[0].kind, parts[0].sigma_sq};
    return out;
}

// ---------------------------------------------------------------------------
// Whitening, decomposition, recovery
// ---------------------------------------------------------------------------

struct Whitening {
    Matrix w; // D x K, W^T M2 W = I
    Matrix u; // D x K top eigenvectors
    Vector d; // K top eigenvalues

    /// U D^{1/2}: maps whitened coordinates back to the data space.
    Matrix unwhiten() const { return u * d.cwiseSqrt().asDiagonal(); }
};

inline constexpr double kWhiteningFloor = 1e-12;

inline Whitening whiten(const SymMatrix& m2, Index k)
{
    detail::require_dims(k >= 1 && k <= m2.dim(), "whiten: need 1 <= K <= D");
    EigenPairs e = top_k_eigs(m2, k);
    const double top = e.values(0);
    if (!(top > 0.0)) throw RankDeficiencyError("whiten: second moment has no positive eigenvalue");
    for (Index c = 0; c < k; ++c)
        if (!(e.values(c) > kWhiteningFloor * top))
            throw RankDeficiencyError("whiten: eigenvalue " + std::to_string(c) + " = " + std::to_string(e.values(c))
                                      + " is below the floor; fewer than K usable directions");
    Whitening out;
    out.u = e.vectors;
    out.d = e.values;
    out.w = e.vectors * e.values.cwiseSqrt().cwiseInverse().asDiagonal();
    return out;
}

struct PowerOptions {
    int restarts = 20;
    int max_iter = 100;
    double tol = 1e-10;
};

struct PowerResult {
    Vector lambda; // descending
    Matrix v;      // K x K, column k pairs with lambda(k)
    bool converged = true;
    SymTensor3 residual;
};

namespace detail {

inline Vector random_unit(Index n, RngStream& rng)
{
    Vector u(n);
    do {
        for (Index i = 0; i < n; ++i) u(i) = rng.normal();
    } while (u.norm() == 0.0);
    return u.normalized();
}

} // namespace detail

/// Repeated power iteration u <- T(I,u,u)/|T(I,u,u)| with random restarts and deflation.
inline PowerResult tensor_power_decompose(const SymTensor3& t, Index k, RngStream& rng, const PowerOptions& opt = {})
{
    const Index n = t.dim();
    detail::require_dims(k >= 1 && k <= n, "tensor_power_decompose: need 1 <= K <= tensor dimension");
    if (opt.restarts < 1 || opt.max_iter < 1) throw std::invalid_argument("tensor_power_decompose: bad options");

    SymTensor3 work = t;
    std::vector<std::pair<double, Vector>> pairs;
    bool all_converged = true;

    for (Index comp = 0; comp < k; ++comp) {
        double best_lambda = -std::numeric_limits<double>::infinity();
        Vector best;
        bool best_converged = false;
        for (int r = 0; r < opt.restarts; ++r) {
            Vector u = detail::random_unit(n, rng);
            bool converged = false;
            for (int it = 0; it < opt.max_iter; ++it) {
                Vector next = apply_Iuu(work, u);
                const double norm = next.norm();
                if (norm == 0.0) break;
                next /= norm;
                const double step = (next - u).norm();
                u = std::move(next);
                if (step < opt.tol) {
                    converged = true;
                    break;
                }
            }
            double lambda = apply_uuu(work, u);
            if (lambda < 0.0) {
                u = -u;
                lambda = -lambda;
            }
            if (lambda > best_lambda) {
                best_lambda = lambda;
                best = u;
                best_converged = converged;
            }
        }
        all_converged = all_converged && best_converged;
        work -= sym_outer3(best, best_lambda);
        pairs.emplace_back(best_lambda, best);
    }

    std::stable_sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    PowerResult out;
    out.lambda.resize(k);
    out.v.resize(n, k);
    for (Index c = 0; c < k; ++c) {
        out.lambda(c) = pairs[static_cast<std::size_t>(c)].first;
        out.v.col(c) = pairs[static_cast<std::size_t>(c)].second;
    }
    out.converged = all_converged;
    out.residual = std::move(work);
    return out;
}

struct Recovery {
    Vector weights;    // 1 / lambda_k^2
    Matrix components; // D x K
};

inline Recovery recover_components(const Vector& lambda, const Matrix& v, const Whitening& wh)
{
    detail::require_dims(lambda.size() == v.cols() && v.rows() == wh.w.cols(), "recover_components: shape mismatch");
    if ((lambda.array() <= 0.0).any())
        throw std::domain_error("recover_components: eigenvalues must be positive");
    Recovery r;
    r.weights = lambda.array().square().inverse();
    r.components = wh.unwhiten() * v * lambda.asDiagonal();
    return r;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Mean over recovered columns of the distance to the nearest true column.
inline double q_comp(const Matrix& a_hat, const Matrix& a_true)
{
    detail::require_dims(a_hat.rows() == a_true.rows() && a_hat.cols() >= 1 && a_true.cols() >= 1,
                         "q_comp: shape mismatch");
    double sum = 0.0;
    for (Index i = 0; i < a_hat.cols(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (Index j = 0; j < a_true.cols(); ++j) best = std::min(best, (a_hat.col(i) - a_true.col(j)).norm());
        sum += best;
    }
    return sum / static_cast<double>(a_hat.cols());
}

struct Postprocessed {
    Matrix components;
    std::vector<bool> degenerate; // column had no positive mass
    bool any_degenerate() const { return std::find(degenerate.begin(), degenerate.end(), true) != degenerate.end(); }
};

/// Clamp negatives to zero and rescale each column to sum to one.
inline Postprocessed stm_postprocess(const Matrix& a_hat)
{
    Postprocessed out;
    out.components = a_hat.cwiseMax(0.0);
    for (Index c = 0; c < out.components.cols(); ++c) {
        const double s = out.components.col(c).sum();
        if (s > 0.0) {
            out.components.col(c) /= s;
            out.degenerate.push_back(false);
        } else {
            out.components.col(c).setZero();
            out.degenerate.push_back(true);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Private moment release
// ---------------------------------------------------------------------------

struct OtdPrivacy {
    PrivacySpec stage1; // second moment / whitening
    PrivacySpec stage2; // third moment

    /// Equal halves of epsilon and delta.
    static OtdPrivacy split(double epsilon, double delta)
    {
        return {PrivacySpec(epsilon / 2.0, delta / 2.0), PrivacySpec(epsilon / 2.0, delta / 2.0)};
    }
};

struct OtdOptions {
    bool noiseless = false;
    bool trusted_sites = false;
};

/// Whitened K x K x K tensor ready for decomposition, plus everything used to make it.
struct PrivateTensor {
    SymTensor3 tensor;
    Whitening whitening;
    SymMatrix m2; // the (noisy) second moment the whitening came from
    PrivacyLedger ledger;
    ProtocolTranscript transcript;
};

namespace detail {

inline double m3_sensitivity(const MomentPair& m, std::size_t n)
{
    return sensitivity_m3(m.kind, n, static_cast<std::size_t>(m.dim()), m.sigma_sq).value;
}

inline std::size_t checked_n(const MomentPair& m)
{
    if (m.n_samples == 0) throw std::invalid_argument("private OTD: moments must record their sample count");
    return m.n_samples;
}

} // namespace detail

/// Centralized release with symmetric Gaussian noise on both moments.
inline PrivateTensor agn(const MomentPair& m, const OtdPrivacy& priv, Index k, RngStream& rng,
                         const OtdOptions& opt = {})
{
    const std::size_t n = detail::checked_n(m);
    const double tau1 = opt.noiseless ? 0.0 : gaussian_std(sensitivity_m2(m.kind, n).value, priv.stage1);
    const double tau2 = opt.noiseless ? 0.0 : gaussian_std(detail::m3_sensitivity(m, n), priv.stage2);
    PrivateTensor out;
    out.m2 = m.m2 + sym_noise_matrix(m.dim(), tau1, rng);
    out.whitening = whiten(out.m2, k);
    const SymTensor3 m3 = m.m3 + sym_noise_tensor3(m.dim(), tau2, rng);
    out.tensor = project(m3, out.whitening.w);
    out.ledger.charge("second moment", priv.stage1.epsilon, priv.stage1.delta);
    out.ledger.charge("third moment", priv.stage2.epsilon, priv.stage2.delta);
    return out;
}

/// Centralized release with Gaussian noise on M2 (delta pooled into stage 1)
/// and exp(-beta |b|) vector noise on the unique entries of M3.
inline PrivateTensor avn(const MomentPair& m, const OtdPrivacy& priv, Index k, RngStream& rng,
                         const OtdOptions& opt = {})
{
    const std::size_t n = detail::checked_n(m);
    const PrivacySpec s1(priv.stage1.epsilon, priv.stage1.delta + priv.stage2.delta);
    const double tau1 = opt.noiseless ? 0.0 : gaussian_std(sensitivity_m2(m.kind, n).value, s1);
    PrivateTensor out;
    out.m2 = m.m2 + sym_noise_matrix(m.dim(), tau1, rng);
    out.whitening = whiten(out.m2, k);
    SymTensor3 m3 = m.m3;
    if (!opt.noiseless)
        m3 += avn_noise_tensor3(m.dim(), avn_beta(detail::m3_sensitivity(m, n), priv.stage2.epsilon), rng);
    out.tensor = project(m3, out.whitening.w);
    out.ledger.charge("second moment", s1.epsilon, s1.delta);
    out.ledger.charge("third moment", priv.stage2.epsilon, 0.0);
    return out;
}

namespace detail {

inline Vector flat(const SymMatrix& m) { return Eigen::Map<const Vector>(m.matrix().data(), m.matrix().size()); }

inline Vector flat(const Tensor3& t)
{
    auto d = t.data();
    return Eigen::Map<const Vector>(d.data(), static_cast<Index>(d.size()));
}

inline Tensor3 cube_from(const Vector& v, Index d)
{
    Tensor3 t = Tensor3::cube(d);
    std::copy(v.data(), v.data() + v.size(), t.data().begin());
    return t;
}

inline void check_site_moments(const std::vector<MomentPair>& sites, Index k)
{
    if (sites.empty()) throw std::invalid_argument("distributed OTD: no sites");
    for (const auto& s : sites) {
        require_dims(s.dim() == sites[0].dim(), "distributed OTD: sites differ in dimension");
        require_dims(s.kind == sites[0].kind, "distributed OTD: sites differ in model kind");
        checked_n(s);
    }
    require_dims(k >= 1 && k <= sites[0].dim(), "distributed OTD: need 1 <= K <= D");
}

} // namespace detail

/// Distributed release with correlated noise: round 1 aggregates M2 and
/// broadcasts W; round 2 sites upload their noisy M3 projected to K^3.
inline PrivateTensor cape_agn(const std::vector<MomentPair>& sites, const OtdPrivacy& priv, Index k,
                              const ProtocolSeed& seed, const OtdOptions& opt = {})
{
    detail::check_site_moments(sites, k);
    const std::size_t S = sites.size();
    const Index d = sites[0].dim();
    detail::check_trusted({opt.trusted_sites, false}, S);
    const std::vector<double> w(S, 1.0 / static_cast<double>(S));
    PrivateTensor out;

    // Round 1: second moment.
    std::vector<double> tau2, tau3;
    for (const auto& s : sites) {
        tau2.push_back(opt.noiseless ? 0.0 : gaussian_std(sensitivity_m2(s.kind, s.n_samples).value, priv.stage1));
        tau3.push_back(opt.noiseless ? 0.0 : gaussian_std(detail::m3_sensitivity(s, s.n_samples), priv.stage2));
    }
    {
        const NoisePlan plan = cape_plan_sites(tau2);
        std::vector<Vector> values;
        for (const auto& s : sites) values.push_back(detail::flat(s.m2));
        ShareBundle sh;
        RngStream ng = seed.noise_generator();
        sh.e = zero_sum_share_vectors(S, d * d, zero_sum_source_std(plan), ng);
        if (!opt.trusted_sites) sh.f = draw_f_shares(plan, d * d, seed);
        for (std::size_t s = 0; s < S; ++s) {
            RngStream rng = seed.site(s);
            sh.g.push_back(detail::flat(sym_noise_matrix(d, std::sqrt(plan.sites[s].tau_g_sq), rng)));
        }
        const Vector agg = run_share_round({seed.round, {d, d}, {d, d}}, values, sh, w, out.transcript);
        out.m2 = SymMatrix::symmetrize(Eigen::Map<const Matrix>(agg.data(), d, d));
        out.whitening = whiten(out.m2, k);
        out.ledger.charge("round 1: second moment", priv.stage1.epsilon, priv.stage1.delta);
    }

    // Round 2: third moment, projected at the sites.
    const ProtocolSeed seed2 = seed.next_round();
    for (std::size_t s = 0; s < S; ++s)
        out.transcript.record_matrix(seed2.round, Party::aggregator(), Party::site(s), msg::broadcast_w, out.whitening.w);
    {
        const NoisePlan plan = cape_plan_sites(tau3);
        const std::size_t n3 = static_cast<std::size_t>(d * d * d);
        std::vector<Vector> values;
        for (const auto& s : sites) values.push_back(detail::flat(s.m3.tensor()));
        ShareBundle sh;
        RngStream ng = seed2.noise_generator();
        sh.e = zero_sum_share_vectors(S, static_cast<Index>(n3), zero_sum_source_std(plan), ng);
        if (!opt.trusted_sites) sh.f = draw_f_shares(plan, static_cast<Index>(n3), seed2);
        for (std::size_t s = 0; s < S; ++s) {
            RngStream rng = seed2.site(s);
            sh.g.push_back(detail::flat(sym_noise_tensor3(d, std::sqrt(plan.sites[s].tau_g_sq), rng).tensor()));
        }
        const Matrix& W = out.whitening.w;
        const SiteMap project_w = [&](const Vector& v) {
            return detail::flat(multilinear3(detail::cube_from(v, d), W, W, W));
        };
        const Vector agg
            = run_share_round({seed2.round, {d, d, d}, {k, k, k}}, values, sh, w, out.transcript, project_w);
        out.tensor = SymTensor3::symmetrize(detail::cube_from(agg, k));
        out.ledger.charge("round 2: third moment", priv.stage2.epsilon, priv.stage2.delta);
    }
    return out;
}

/// Distributed release without correlation: every site adds full-variance noise.
inline PrivateTensor conv_agn(const std::vector<MomentPair>& sites, const OtdPrivacy& priv, Index k,
                              const ProtocolSeed& seed, const OtdOptions& opt = {})
{
    detail::check_site_moments(sites, k);
    const std::size_t S = sites.size();
    const Index d = sites[0].dim();
    PrivateTensor out;

    Matrix sum2 = Matrix::Zero(d, d);
    for (std::size_t s = 0; s < S; ++s) {
        const double tau
            = opt.noiseless ? 0.0 : gaussian_std(sensitivity_m2(sites[s].kind, sites[s].n_samples).value, priv.stage1);
        RngStream rng = seed.site(s);
        const Matrix up = (sites[s].m2 + sym_noise_matrix(d, tau, rng)).matrix();
        out.transcript.record_matrix(seed.round, Party::site(s), Party::aggregator(), msg::site_output, up);
        sum2 += up;
    }
    out.m2 = SymMatrix::symmetrize(sum2 / static_cast<double>(S));
    out.whitening = whiten(out.m2, k);
    out.ledger.charge("round 1: second moment", priv.stage1.epsilon, priv.stage1.delta);

    const ProtocolSeed seed2 = seed.next_round();
    const Matrix& W = out.whitening.w;
    Tensor3 sum3(k, k, k);
    for (std::size_t s = 0; s < S; ++s) {
        out.transcript.record_matrix(seed2.round, Party::aggregator(), Party::site(s), msg::broadcast_w, W);
        const double tau
            = opt.noiseless ? 0.0 : gaussian_std(detail::m3_sensitivity(sites[s], sites[s].n_samples), priv.stage2);
        RngStream rng = seed2.site(s);
        const Tensor3 up = multilinear3(sites[s].m3 + sym_noise_tensor3(d, tau, rng), W, W, W);
        out.transcript.record_tensor(seed2.round, Party::site(s), Party::aggregator(), msg::site_output, up);
        sum3 += up;
    }
    out.tensor = SymTensor3::symmetrize(sum3 * (1.0 / static_cast<double>(S)));
    out.ledger.charge("round 2: third moment", priv.stage2.epsilon, priv.stage2.delta);
    return out;
}

/// Non-private whitening and projection.
inline PrivateTensor nonprivate_tensor(const MomentPair& m, Index k)
{
    PrivateTensor out;
    out.m2 = m.m2;
    out.whitening = whiten(m.m2, k);
    out.tensor = project(m.m3, out.whitening.w);
    return out;
}

// ---------------------------------------------------------------------------
// End to end
// ---------------------------------------------------------------------------

struct OtdResult {
    Vector lambda;
    Matrix whitened_vectors; // K x K
    Vector weights;
    Matrix components; // D x K
    bool converged = true;
    double q_comp = std::numeric_limits<double>::quiet_NaN();
};

inline OtdResult decompose_and_recover(const PrivateTensor& t, Index k, RngStream& rng, const PowerOptions& opt = {})
{
    PowerResult p = tensor_power_decompose(t.tensor, k, rng, opt);
    Recovery r = recover_components(p.lambda, p.v, t.whitening);
    OtdResult out;
    out.lambda = std::move(p.lambda);
    out.whitened_vectors = std::move(p.v);
    out.weights = std::move(r.weights);
    out.components = std::move(r.components);
    out.converged = p.converged;
    return out;
}

} // namespace cape
