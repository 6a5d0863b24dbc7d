#pragma once
//
// Correlated-noise averaging between a noise generator, an aggregator and
// S sites. Site s releases  value_s + e_s + f_s + g_s  where the e-shares
// cancel across sites, the f-shares are known to (and removed by) the
// aggregator, and only the local g-shares survive in the average.
//

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"
#include "tensor.hpp"
#include "transcript.hpp"

namespace cape {

// ---------------------------------------------------------------------------
// Noise plans
// ---------------------------------------------------------------------------

struct SiteNoise {
    double tau_s_sq = 0.0; // variance a site needs for local DP
    double tau_e_sq = 0.0;
    double tau_f_sq = 0.0;
    double tau_g_sq = 0.0;
};

struct NoisePlan {
    std::vector<SiteNoise> sites;

    std::size_t size() const { return sites.size(); }

    /// Both collusion constraints: e + g >= tau_s^2 and f + g >= tau_s^2.
    bool satisfies_privacy(double tol = 1e-12) const
    {
        for (const auto& s : sites) {
            if (s.tau_e_sq + s.tau_g_sq < s.tau_s_sq - tol) return false;
            if (s.tau_f_sq + s.tau_g_sq < s.tau_s_sq - tol) return false;
        }
        return true;
    }

    /// Same plan with every variance set to zero.
    NoisePlan zeroed() const
    {
        NoisePlan p = *this;
        for (auto& s : p.sites) s = SiteNoise{};
        return p;
    }
};

inline NoisePlan cape_plan(double tau_s, std::size_t n_sites)
{
    if (n_sites == 0) throw std::invalid_argument("cape_plan: need at least one site");
    if (!(tau_s >= 0.0)) throw std::invalid_argument("cape_plan: tau_s must be nonnegative");
    const double S = static_cast<double>(n_sites);
    const double t2 = tau_s * tau_s;
    SiteNoise sn{t2, (1.0 - 1.0 / S) * t2, (1.0 - 1.0 / S) * t2, t2 / S};
    return NoisePlan{std::vector<SiteNoise>(n_sites, sn)};
}

/// Uniform aggregation with per-site tau_s (unequal sample sizes).
/// The e-shares come from one zero-sum draw, so they all carry the
/// variance needed by the most demanding site.
inline NoisePlan cape_plan_sites(const std::vector<double>& tau_s)
{
    if (tau_s.empty()) throw std::invalid_argument("cape_plan_sites: need at least one site");
    const double S = static_cast<double>(tau_s.size());
    double max_sq = 0.0;
    for (double t : tau_s) {
        if (!(t >= 0.0)) throw std::invalid_argument("cape_plan_sites: tau_s must be nonnegative");
        max_sq = std::max(max_sq, t * t);
    }
    NoisePlan plan;
    for (double t : tau_s) {
        const double t2 = t * t;
        plan.sites.push_back({t2, (1.0 - 1.0 / S) * max_sq, (1.0 - 1.0 / S) * t2, t2 / S});
    }
    return plan;
}

inline void validate_weights(const std::vector<double>& mu)
{
    if (mu.empty()) throw std::invalid_argument("site weights: empty");
    double sum = 0.0;
    for (double m : mu) {
        if (!(m > 0.0)) throw std::invalid_argument("site weights: every weight must be positive");
        sum += m;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("site weights: must sum to 1");
}

/// Per-site variances for the weighted average sum_s mu_s (a_s + g_s) whose
/// noise term has variance tau_c^2, with both collusion constraints tight.
inline NoisePlan unequal_plan(const std::vector<double>& mu, const std::vector<double>& tau, double tau_c)
{
    validate_weights(mu);
    detail::require_dims(mu.size() == tau.size(), "unequal_plan: weights and tau differ in length");
    if (!(tau_c > 0.0)) throw std::invalid_argument("unequal_plan: tau_c must be positive");
    for (double t : tau)
        if (!(t > 0.0)) throw std::invalid_argument("unequal_plan: tau_s must be positive");

    const std::size_t S = mu.size();
    if (S == 1) {
        // No partner to correlate with: the local share carries everything.
        if (tau_c < tau[0]) throw InfeasiblePlanError("unequal_plan: a single site cannot go below its own tau_s");
        return NoisePlan{{SiteNoise{tau[0] * tau[0], 0.0, 0.0, tau_c * tau_c}}};
    }

    double partial = 0.0;
    for (std::size_t s = 0; s + 1 < S; ++s) partial += mu[s] * mu[s] * tau[s] * tau[s];
    const double r = tau_c * tau_c - partial;

    const double muS2 = mu[S - 1] * mu[S - 1];
    const double tauS2 = tau[S - 1] * tau[S - 1];
    NoisePlan plan;
    plan.sites.resize(S);

    const double shared = (muS2 * tauS2 / 2.0 - r / 2.0) / static_cast<double>(S - 1);
    for (std::size_t s = 0; s + 1 < S; ++s) {
        const double t2 = tau[s] * tau[s];
        const double ef = shared / (mu[s] * mu[s]);
        plan.sites[s] = {t2, ef, ef, t2 - ef};
    }
    const double efS = tauS2 / 2.0 - r / (2.0 * muS2);
    plan.sites[S - 1] = {tauS2, efS, efS, tauS2 / 2.0 + r / (2.0 * muS2)};

    for (std::size_t s = 0; s < S; ++s) {
        const auto& x = plan.sites[s];
        if (x.tau_e_sq < 0.0 || x.tau_f_sq < 0.0 || x.tau_g_sq < 0.0)
            throw InfeasiblePlanError("unequal_plan: site " + std::to_string(s)
                                      + " would need a negative variance; adjust weights or tau_c");
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Share samplers
// ---------------------------------------------------------------------------

/// S vectors of length n summing to zero coordinate-wise: i.i.d. N(0, sigma^2)
/// minus their mean, so each coordinate has variance (1 - 1/S) sigma^2.
inline std::vector<Vector> zero_sum_share_vectors(std::size_t n_sites, Index n, double sigma, RngStream& rng)
{
    if (n_sites == 0) throw std::invalid_argument("zero_sum_shares: need at least one site");
    std::vector<Vector> e(n_sites, Vector::Zero(n));
    if (sigma == 0.0) return e;
    Vector mean = Vector::Zero(n);
    for (auto& v : e) {
        for (Index i = 0; i < n; ++i) v(i) = rng.normal(sigma);
        mean += v;
    }
    mean /= static_cast<double>(n_sites);
    for (auto& v : e) v -= mean;
    return e;
}

inline std::vector<double> zero_sum_shares(std::size_t n_sites, double tau_s, RngStream& rng)
{
    auto v = zero_sum_share_vectors(n_sites, 1, tau_s, rng);
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& x : v) out.push_back(x(0));
    return out;
}

/// Shares with sum_s mu_s e_s = 0 and Var(e_s) = tau_e_sq[s] for every s.
/// mu_s e_s is drawn independently for s < S and the last site absorbs
/// the negated sum; this is exact when the plan comes from unequal_plan.
inline std::vector<Vector> weighted_zero_sum_share_vectors(const std::vector<double>& mu,
                                                           const std::vector<double>& tau_e_sq, Index n,
                                                           RngStream& rng)
{
    validate_weights(mu);
    detail::require_dims(mu.size() == tau_e_sq.size(), "weighted_zero_sum_shares: length mismatch");
    const std::size_t S = mu.size();
    std::vector<Vector> e(S, Vector::Zero(n));
    Vector acc = Vector::Zero(n);
    for (std::size_t s = 0; s + 1 < S; ++s) {
        const double sd = mu[s] * std::sqrt(std::max(tau_e_sq[s], 0.0));
        for (Index i = 0; i < n; ++i) {
            const double y = sd == 0.0 ? 0.0 : rng.normal(sd);
            e[s](i) = y / mu[s];
            acc(i) += y;
        }
    }
    e[S - 1] = -acc / mu[S - 1];
    return e;
}

inline std::vector<double> weighted_zero_sum_shares(const std::vector<double>& mu, const std::vector<double>& tau_e_sq,
                                                    RngStream& rng)
{
    auto v = weighted_zero_sum_share_vectors(mu, tau_e_sq, 1, rng);
    std::vector<double> out;
    for (const auto& x : v) out.push_back(x(0));
    return out;
}

/// Zero-sum source standard deviation for a plan with uniform aggregation.
inline double zero_sum_source_std(const NoisePlan& plan)
{
    const double S = static_cast<double>(plan.size());
    if (plan.size() <= 1) return 0.0;
    double e = 0.0;
    for (const auto& s : plan.sites) e = std::max(e, s.tau_e_sq);
    return std::sqrt(e * S / (S - 1.0));
}

// ---------------------------------------------------------------------------
// Gain
// ---------------------------------------------------------------------------

/// Variance ratio of conventional over correlated-noise averaging.
inline double gain(const std::vector<std::size_t>& n)
{
    if (n.empty()) throw std::invalid_argument("gain: empty site-size vector");
    double total = 0.0;
    for (auto x : n) {
        if (x == 0) throw std::invalid_argument("gain: every site needs at least one sample");
        total += static_cast<double>(x);
    }
    const double S = static_cast<double>(n.size());
    double g = 0.0;
    for (auto x : n) {
        const double r = total / (S * static_cast<double>(x));
        g += r * r;
    }
    return g;
}

// ---------------------------------------------------------------------------
// Share round engine
// ---------------------------------------------------------------------------

struct ShareBundle {
    std::vector<Vector> e; // from the noise generator
    std::vector<Vector> f; // from the aggregator; empty when omitted
    std::vector<Vector> g; // local
};

/// Linear map a site applies to its noisy value before upload; the
/// aggregator applies the same map to the f-shares it removes.
using SiteMap = std::function<Vector(const Vector&)>;

struct RoundLayout {
    int round = 0;
    std::vector<Index> share_shape;  // recorded shape of e/f/g
    std::vector<Index> output_shape; // recorded shape of the upload
};

/// Runs one round and returns sum_s w_s (upload_s - map(f_s)).
inline Vector run_share_round(const RoundLayout& layout, const std::vector<Vector>& values, const ShareBundle& shares,
                              const std::vector<double>& weights, ProtocolTranscript& transcript,
                              const SiteMap& map = {})
{
    const std::size_t S = values.size();
    detail::require_dims(S >= 1, "share round: no sites");
    detail::require_dims(shares.e.size() == S && shares.g.size() == S && weights.size() == S,
                         "share round: share count does not match site count");
    detail::require_dims(shares.f.empty() || shares.f.size() == S, "share round: f-share count mismatch");
    const bool with_f = !shares.f.empty();
    const Index n = values[0].size();
    for (std::size_t s = 0; s < S; ++s) {
        detail::require_dims(values[s].size() == n && shares.e[s].size() == n && shares.g[s].size() == n
                                 && (!with_f || shares.f[s].size() == n),
                             "share round: payload length mismatch");
    }

    const int r = layout.round;
    auto rec = [&](Party from, Party to, const char* kind, const Vector& v, const std::vector<Index>& shape) {
        transcript.record(r, from, to, kind, shape, std::vector<double>(v.data(), v.data() + v.size()));
    };

    // Barrier 1: shares delivered.
    for (std::size_t s = 0; s < S; ++s)
        rec(Party::noise_generator(), Party::site(s), msg::e_share, shares.e[s], layout.share_shape);
    if (with_f)
        for (std::size_t s = 0; s < S; ++s)
            rec(Party::aggregator(), Party::site(s), msg::f_share, shares.f[s], layout.share_shape);

    // Sites compute and upload.
    std::vector<Vector> uploads(S);
    for (std::size_t s = 0; s < S; ++s) {
        rec(Party::site(s), Party::site(s), msg::g_share, shares.g[s], layout.share_shape);
        Vector noisy = values[s] + shares.e[s] + shares.g[s];
        if (with_f) noisy += shares.f[s];
        uploads[s] = map ? map(noisy) : noisy;
        rec(Party::site(s), Party::aggregator(), msg::site_output, uploads[s], layout.output_shape);
    }

    // Barrier 2: aggregation.
    Vector out = Vector::Zero(uploads[0].size());
    for (std::size_t s = 0; s < S; ++s) {
        Vector clean = uploads[s];
        if (with_f) clean -= map ? map(shares.f[s]) : shares.f[s];
        out += weights[s] * clean;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scalar averaging
// ---------------------------------------------------------------------------

struct CapeOptions {
    bool trusted_sites = false; // omit f-shares (needs S > 2 with at least two non-colluding sites)
    bool noiseless = false;     // all noise variances zero
};

struct AverageResult {
    double estimate = 0.0;
    ProtocolTranscript transcript;
};

namespace detail {

inline void check_trusted(const CapeOptions& opt, std::size_t S)
{
    if (opt.trusted_sites && S <= 2)
        throw std::invalid_argument("trusted-sites mode requires more than two sites");
}

inline std::vector<Vector> scalar_values(const std::vector<double>& x)
{
    std::vector<Vector> v;
    for (double a : x) v.push_back(Vector::Constant(1, a));
    return v;
}

} // namespace detail

/// Draws the f-shares (aggregator stream) with per-site variance tau_f_sq.
inline std::vector<Vector> draw_f_shares(const NoisePlan& plan, Index n, const ProtocolSeed& seed)
{
    std::vector<Vector> out;
    RngStream rng = seed.aggregator();
    for (const auto& s : plan.sites) {
        const double sd = std::sqrt(s.tau_f_sq);
        Vector v = Vector::Zero(n);
        if (sd > 0.0)
            for (Index i = 0; i < n; ++i) v(i) = rng.normal(sd);
        out.push_back(std::move(v));
    }
    return out;
}

/// Draws i.i.d. g-shares, each site on its own stream.
inline std::vector<Vector> draw_g_shares(const NoisePlan& plan, Index n, const ProtocolSeed& seed)
{
    std::vector<Vector> out;
    for (std::size_t s = 0; s < plan.size(); ++s) {
        RngStream rng = seed.site(s);
        const double sd = std::sqrt(plan.sites[s].tau_g_sq);
        Vector v = Vector::Zero(n);
        if (sd > 0.0)
            for (Index i = 0; i < n; ++i) v(i) = rng.normal(sd);
        out.push_back(std::move(v));
    }
    return out;
}

inline AverageResult cape_average(const std::vector<double>& values, const NoisePlan& plan_in,
                                  const ProtocolSeed& seed, const CapeOptions& opt = {})
{
    const std::size_t S = values.size();
    detail::require_dims(plan_in.size() == S, "cape_average: plan has " + std::to_string(plan_in.size())
                                                  + " sites but " + std::to_string(S) + " values were given");
    detail::check_trusted(opt, S);
    const NoisePlan plan = opt.noiseless ? plan_in.zeroed() : plan_in;

    ShareBundle sh;
    RngStream ng = seed.noise_generator();
    sh.e = zero_sum_share_vectors(S, 1, zero_sum_source_std(plan), ng);
    if (!opt.trusted_sites) sh.f = draw_f_shares(plan, 1, seed);
    sh.g = draw_g_shares(plan, 1, seed);

    AverageResult res;
    const std::vector<double> w(S, 1.0 / static_cast<double>(S));
    res.estimate = run_share_round({seed.round, {}, {}}, detail::scalar_values(values), sh, w, res.transcript)(0);
    return res;
}

/// sum_s mu_s a_s + sum_s mu_s g_s, using shares with sum_s mu_s e_s = 0.
inline AverageResult weighted_cape_average(const std::vector<double>& values, const std::vector<double>& mu,
                                           const NoisePlan& plan_in, const ProtocolSeed& seed,
                                           const CapeOptions& opt = {})
{
    const std::size_t S = values.size();
    validate_weights(mu);
    detail::require_dims(mu.size() == S && plan_in.size() == S, "weighted_cape_average: site count mismatch");
    detail::check_trusted(opt, S);
    const NoisePlan plan = opt.noiseless ? plan_in.zeroed() : plan_in;

    std::vector<double> tau_e_sq;
    for (const auto& s : plan.sites) tau_e_sq.push_back(s.tau_e_sq);

    ShareBundle sh;
    RngStream ng = seed.noise_generator();
    sh.e = weighted_zero_sum_share_vectors(mu, tau_e_sq, 1, ng);
    if (!opt.trusted_sites) sh.f = draw_f_shares(plan, 1, seed);
    sh.g = draw_g_shares(plan, 1, seed);

    AverageResult res;
    res.estimate = run_share_round({seed.round, {}, {}}, detail::scalar_values(values), sh, mu, res.transcript)(0);
    return res;
}

/// Each site adds its own N(0, tau_s^2); the aggregator averages.
inline AverageResult conventional_average(const std::vector<double>& values, const std::vector<double>& tau_s,
                                          const ProtocolSeed& seed)
{
    const std::size_t S = values.size();
    detail::require_dims(tau_s.size() == S, "conventional_average: tau_s length mismatch");
    AverageResult res;
    double sum = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
        RngStream rng = seed.site(s);
        const double x = values[s] + (tau_s[s] > 0.0 ? rng.normal(tau_s[s]) : 0.0);
        res.transcript.record_scalar(seed.round, Party::site(s), Party::aggregator(), msg::site_output, x);
        sum += x;
    }
    res.estimate = sum / static_cast<double>(S);
    return res;
}

} // namespace cape
