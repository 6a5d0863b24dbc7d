#pragma once
//
// Differentially private PCA over S sites: the correlated-noise protocol,
// the conventional and single-site baselines, and subspace quality metrics.
//

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
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

struct SiteDataset {
    Matrix data; // D x N_s, columns are samples
    int site_id = 0;

    SiteDataset() = default;
    SiteDataset(Matrix x, int id = 0) : data(std::move(x)), site_id(id)
    {
        for (Index c = 0; c < data.cols(); ++c)
            if (data.col(c).norm() > 1.0 + 1e-9)
                throw std::invalid_argument("SiteDataset: sample " + std::to_string(c) + " of site "
                                            + std::to_string(id) + " has norm above 1");
    }

    Index dim() const { return data.rows(); }
    Index samples() const { return data.cols(); }
};

struct PcaResult {
    Matrix subspace; // D x K, orthonormal columns
    std::string method;
    double noise_std = 0.0; // per-site (or pooled) Gaussian std used
    double captured_energy = std::numeric_limits<double>::quiet_NaN();
};

struct PcaRun {
    PcaResult result;
    SymMatrix aggregate; // matrix the eigenvectors were taken from
    ProtocolTranscript transcript;
    std::optional<NoisePlan> plan;
};

struct PcaOptions {
    bool noiseless = false;
    bool trusted_sites = false;
};

// ---------------------------------------------------------------------------
// Moments and preprocessing
// ---------------------------------------------------------------------------

inline SymMatrix second_moment(const Matrix& x)
{
    if (x.cols() == 0 || x.rows() == 0) throw std::invalid_argument("second_moment: empty dataset");
    return SymMatrix::symmetrize(x * x.transpose() / static_cast<double>(x.cols()));
}

inline SymMatrix second_moment(const SiteDataset& s) { return second_moment(s.data); }

/// Centers the columns and divides by the largest column norm.
inline Matrix preprocess_matrix(const Matrix& raw)
{
    if (raw.cols() == 0) return raw;
    Matrix x = raw.colwise() - raw.rowwise().mean();
    const double m = x.colwise().norm().maxCoeff();
    if (m > 0.0) x /= m;
    return x;
}

inline SiteDataset preprocess(const Matrix& raw, int site_id = 0)
{
    Matrix x = preprocess_matrix(raw);
    // Division can leave a norm one ulp above 1.
    for (Index c = 0; c < x.cols(); ++c) {
        const double n = x.col(c).norm();
        if (n > 1.0) x.col(c) /= n;
    }
    return SiteDataset(std::move(x), site_id);
}

inline Matrix pool(const std::vector<SiteDataset>& sites)
{
    if (sites.empty()) throw std::invalid_argument("pool: no sites");
    Index total = 0;
    for (const auto& s : sites) {
        detail::require_dims(s.dim() == sites[0].dim(), "pool: sites differ in dimension");
        total += s.samples();
    }
    Matrix out(sites[0].dim(), total);
    Index c = 0;
    for (const auto& s : sites) {
        out.middleCols(c, s.samples()) = s.data;
        c += s.samples();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// tr(V^T A V). Warns but still computes when V is not orthonormal.
inline double captured_energy(const Matrix& v, const SymMatrix& a)
{
    detail::require_dims(v.rows() == a.dim(), "captured_energy: V rows must equal D");
    const Matrix gram = v.transpose() * v;
    if ((gram - Matrix::Identity(v.cols(), v.cols())).norm() > 1e-8)
        std::clog << "warning: captured_energy called with non-orthonormal V\n";
    return (v.transpose() * a.matrix() * v).trace();
}

/// Largest principal angle between two column spaces, in [0, pi/2].
inline double principal_angle(const Matrix& v1, const Matrix& v2)
{
    detail::require_dims(v1.rows() == v2.rows() && v1.cols() == v2.cols(), "principal_angle: shape mismatch");
    Eigen::JacobiSVD<Matrix> cos_svd(v1.transpose() * v2);
    const double c = cos_svd.singularValues().minCoeff();
    const Matrix resid = v2 - v1 * (v1.transpose() * v2);
    Eigen::JacobiSVD<Matrix> sin_svd(resid);
    const double s = sin_svd.singularValues().maxCoeff();
    return std::atan2(s, c);
}

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

namespace detail {

inline void check_sites(const std::vector<SiteDataset>& sites, Index k)
{
    if (sites.empty()) throw std::invalid_argument("PCA: empty site list");
    const Index d = sites[0].dim();
    for (const auto& s : sites) {
        require_dims(s.dim() == d, "PCA: sites differ in dimension");
        if (s.samples() == 0) throw std::invalid_argument("PCA: site " + std::to_string(s.site_id) + " has no samples");
    }
    require_dims(k >= 1 && k <= d, "PCA: need 1 <= K <= D, got K=" + std::to_string(k) + ", D=" + std::to_string(d));
}

inline Vector flatten(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }
inline Matrix unflatten(const Vector& v, Index d) { return Eigen::Map<const Matrix>(v.data(), d, d); }

inline PcaResult finish_pca(const SymMatrix& a, Index k, std::string method, double tau)
{
    PcaResult r;
    r.subspace = top_k_eigs(a, k).vectors;
    r.method = std::move(method);
    r.noise_std = tau;
    return r;
}

} // namespace detail

inline double site_pca_std(const SiteDataset& s, const PrivacySpec& spec)
{
    return gaussian_std(sensitivity_m2(ModelKind::MOG, static_cast<std::size_t>(s.samples())).value, spec);
}

/// Correlated-noise PCA: sites upload A_s + E_s + F_s + G_s.
inline PcaRun cape_pca(const std::vector<SiteDataset>& sites, const PrivacySpec& spec, Index k,
                       const ProtocolSeed& seed, const PcaOptions& opt = {})
{
    detail::check_sites(sites, k);
    const std::size_t S = sites.size();
    const Index d = sites[0].dim();
    detail::check_trusted({opt.trusted_sites, false}, S);

    std::vector<double> tau;
    for (const auto& s : sites) tau.push_back(opt.noiseless ? 0.0 : site_pca_std(s, spec));
    const NoisePlan plan = cape_plan_sites(tau);

    std::vector<Vector> values;
    for (const auto& s : sites) values.push_back(detail::flatten(second_moment(s).matrix()));

    ShareBundle sh;
    RngStream ng = seed.noise_generator();
    sh.e = zero_sum_share_vectors(S, d * d, zero_sum_source_std(plan), ng);
    if (!opt.trusted_sites) sh.f = draw_f_shares(plan, d * d, seed);
    for (std::size_t s = 0; s < S; ++s) {
        RngStream rng = seed.site(s);
        sh.g.push_back(detail::flatten(sym_noise_matrix(d, std::sqrt(plan.sites[s].tau_g_sq), rng).matrix()));
    }

    PcaRun run;
    const std::vector<double> w(S, 1.0 / static_cast<double>(S));
    const Vector agg = run_share_round({seed.round, {d, d}, {d, d}}, values, sh, w, run.transcript);
    run.aggregate = SymMatrix::symmetrize(detail::unflatten(agg, d));
    run.result = detail::finish_pca(run.aggregate, k, "cape", *std::max_element(tau.begin(), tau.end()));
    run.plan = plan;
    return run;
}

/// Conventional distributed PCA: each site adds its own full-variance symmetric noise.
inline PcaRun conv_pca(const std::vector<SiteDataset>& sites, const PrivacySpec& spec, Index k,
                       const ProtocolSeed& seed, const PcaOptions& opt = {})
{
    detail::check_sites(sites, k);
    const std::size_t S = sites.size();
    const Index d = sites[0].dim();
    PcaRun run;
    Matrix sum = Matrix::Zero(d, d);
    double tau_max = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
        const double tau = opt.noiseless ? 0.0 : site_pca_std(sites[s], spec);
        tau_max = std::max(tau_max, tau);
        RngStream rng = seed.site(s);
        const Matrix upload = (second_moment(sites[s]) + sym_noise_matrix(d, tau, rng)).matrix();
        run.transcript.record_matrix(seed.round, Party::site(s), Party::aggregator(), msg::site_output, upload);
        sum += upload;
    }
    run.aggregate = SymMatrix::symmetrize(sum / static_cast<double>(S));
    run.result = detail::finish_pca(run.aggregate, k, "conv", tau_max);
    return run;
}

/// DP PCA on one site's data alone.
inline PcaResult local_pca(const SiteDataset& site, const PrivacySpec& spec, Index k, RngStream& rng,
                           const PcaOptions& opt = {})
{
    detail::check_sites({site}, k);
    const double tau = opt.noiseless ? 0.0 : site_pca_std(site, spec);
    const SymMatrix a = second_moment(site) + sym_noise_matrix(site.dim(), tau, rng);
    return detail::finish_pca(a, k, "local", tau);
}

/// DP PCA as if all samples sat in one place (sensitivity 1/N).
inline PcaResult pooled_dp_pca(const Matrix& all, const PrivacySpec& spec, Index k, RngStream& rng,
                               const PcaOptions& opt = {})
{
    detail::require_dims(k >= 1 && k <= all.rows(), "pooled_dp_pca: need 1 <= K <= D");
    const double tau
        = opt.noiseless ? 0.0 : gaussian_std(sensitivity_m2(ModelKind::MOG, static_cast<std::size_t>(all.cols())).value, spec);
    const SymMatrix a = second_moment(all) + sym_noise_matrix(all.rows(), tau, rng);
    return detail::finish_pca(a, k, "pooled", tau);
}

inline PcaResult nonprivate_pca(const Matrix& all, Index k)
{
    detail::require_dims(k >= 1 && k <= all.rows(), "nonprivate_pca: need 1 <= K <= D");
    return detail::finish_pca(second_moment(all), k, "nonprivate", 0.0);
}

} // namespace cape
