#pragma once
//
// Parameter sweeps over (method, epsilon, delta, N_s, S, K, trial) with
// deterministic seeding and tidy CSV output.
//

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "datagen.hpp"
#include "dist_pca.hpp"
#include "otd.hpp"
#include "rng.hpp"

namespace cape {

inline const std::vector<std::string>& known_methods()
{
    static const std::vector<std::string> m{"cape", "conv", "local", "pooled-dp", "non-private"};
    return m;
}

struct SweepConfig {
    Family family = Family::PCA;
    std::vector<std::string> methods{"cape", "conv", "local"};
    std::vector<double> eps_grid{0.1, 0.5, 1.0, 2.0, 5.0};
    std::vector<double> delta_grid{0.01};
    std::vector<std::size_t> ns_grid{1000};
    std::vector<std::size_t> sites_grid{5};
    std::vector<Index> k_grid{10};
    std::size_t trials = 10;
    std::uint64_t seed = 1;
    Index dim = 50;
    double sigma_sq = 0.05;
    int words = 3;
    bool noiseless = false;
    bool trusted_sites = false;
    bool timing = false;
    unsigned threads = 1;
    std::optional<Matrix> data; // D x N raw samples to use instead of generated PCA data

    void validate() const
    {
        if (methods.empty() || eps_grid.empty() || delta_grid.empty() || sites_grid.empty() || k_grid.empty())
            throw std::invalid_argument("sweep: every grid needs at least one value");
        if (!data && ns_grid.empty()) throw std::invalid_argument("sweep: N_s grid is empty");
        if (trials < 1) throw std::invalid_argument("sweep: trials must be at least 1");
        for (const auto& m : methods)
            if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
                throw std::invalid_argument("sweep: unknown method '" + m + "'");
        for (double e : eps_grid) PrivacySpec(e, 0.5);
        for (double d : delta_grid) PrivacySpec(1.0, d);
        for (auto s : sites_grid)
            if (s < 1) throw std::invalid_argument("sweep: S must be at least 1");
        for (auto n : ns_grid)
            if (n < 1) throw std::invalid_argument("sweep: N_s must be at least 1");
        const Index d = data ? data->rows() : dim;
        for (auto k : k_grid)
            if (k < 1 || k > d) throw std::invalid_argument("sweep: need 1 <= K <= D");
        if (data && family != Family::PCA) throw std::invalid_argument("sweep: CSV data is only supported for pca");
        if (trusted_sites)
            for (auto s : sites_grid)
                if (s <= 2) throw std::invalid_argument("sweep: trusted-sites mode needs more than two sites");
    }
};

struct ResultRow {
    std::string family;
    std::string method;
    double epsilon = 0.0;
    double delta = 0.0;
    std::size_t n_s = 0;
    std::size_t s = 0;
    Index k = 0;
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    std::string metric;
    double value = std::numeric_limits<double>::quiet_NaN(); // NaN marks a degenerate cell
    double wall_ms = 0.0;

    bool degenerate() const { return std::isnan(value); }

    auto key() const { return std::tie(family, method, epsilon, delta, n_s, s, k, trial); }
};

inline bool same_row(const ResultRow& a, const ResultRow& b)
{
    auto eq = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; };
    return a.key() == b.key() && a.seed == b.seed && a.metric == b.metric && eq(a.value, b.value)
        && eq(a.wall_ms, b.wall_ms);
}

// ---------------------------------------------------------------------------
// Seeds
// ---------------------------------------------------------------------------

inline std::string format_double(double x)
{
    if (std::isnan(x)) return "nan";
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

/// Seed for a labelled sub-experiment of the master seed.
inline std::uint64_t derive_seed(std::uint64_t master, const std::string& key)
{
    return splitmix64(splitmix64(master) ^ fnv1a64(key));
}

// ---------------------------------------------------------------------------
// One trial
// ---------------------------------------------------------------------------

struct Cell {
    std::size_t n_s;
    std::size_t s;
    Index k;
    std::size_t trial;
};

namespace detail {

inline std::string data_key(const SweepConfig& cfg, const Cell& c)
{
    return std::string("data|") + to_string(cfg.family) + "|d=" + std::to_string(cfg.data ? cfg.data->rows() : cfg.dim)
         + "|k=" + std::to_string(c.k) + "|s=" + std::to_string(c.s) + "|ns=" + std::to_string(c.n_s)
         + "|trial=" + std::to_string(c.trial);
}

inline std::string noise_key(const Cell& c, const std::string& method, double eps, double delta)
{
    return "noise|" + method + "|eps=" + format_double(eps) + "|delta=" + format_double(delta)
         + "|k=" + std::to_string(c.k) + "|s=" + std::to_string(c.s) + "|ns=" + std::to_string(c.n_s)
         + "|trial=" + std::to_string(c.trial);
}

inline std::vector<SiteDataset> split_csv_data(const Matrix& raw, std::size_t sites, std::size_t n_s, RngStream& rng)
{
    const Index need = static_cast<Index>(sites * n_s);
    if (need > raw.cols())
        throw std::invalid_argument("sweep: S*N_s = " + std::to_string(need) + " exceeds the "
                                    + std::to_string(raw.cols()) + " samples in the CSV");
    std::vector<Index> perm(static_cast<std::size_t>(raw.cols()));
    std::iota(perm.begin(), perm.end(), Index{0});
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.next_u64() % i]);
    Matrix x(raw.rows(), need);
    for (Index c = 0; c < need; ++c) x.col(c) = raw.col(perm[static_cast<std::size_t>(c)]);
    x = preprocess(x).data;
    std::vector<SiteDataset> out;
    const auto ns = static_cast<Index>(n_s);
    for (std::size_t s = 0; s < sites; ++s)
        out.emplace_back(x.middleCols(static_cast<Index>(s) * ns, ns), static_cast<int>(s));
    return out;
}

// Prepared inputs shared by every method and privacy level of a cell.
struct CellData {
    std::vector<SiteDataset> pca_sites;
    SymMatrix pca_reference;
    Matrix pooled;
    std::vector<MomentPair> moments;
    MomentPair pooled_moments;
    Matrix truth;      // true components in original units
    double zeta = 1.0; // MOG sample scaling
};

inline CellData prepare_cell(const SweepConfig& cfg, const Cell& c)
{
    CellData out;
    RngStream rng(derive_seed(cfg.seed, data_key(cfg, c)), "data");
    if (cfg.family == Family::PCA) {
        if (cfg.data) {
            out.pca_sites = split_csv_data(*cfg.data, c.s, c.n_s, rng);
        } else {
            ExperimentDataSpec spec{Family::PCA, cfg.dim, c.k, c.s, c.n_s};
            out.pca_sites = gen_pca_data(spec, rng).sites;
        }
        out.pooled = pool(out.pca_sites);
        out.pca_reference = second_moment(out.pooled);
        return out;
    }

    RngStream model_rng = rng.child("model");
    if (cfg.family == Family::MOG) {
        const LatentModel model = random_mog_model(cfg.dim, c.k, cfg.sigma_sq, model_rng);
        RngStream sample_rng = rng.child("samples");
        Matrix x = gen_mog(model, c.s * c.n_s, sample_rng).data;
        out.zeta = bound_sample_norms(x);
        const double sig = cfg.sigma_sq / (out.zeta * out.zeta);
        const auto ns = static_cast<Index>(c.n_s);
        for (std::size_t s = 0; s < c.s; ++s) out.moments.push_back(mog_moments(x.middleCols(static_cast<Index>(s) * ns, ns), sig));
        out.truth = model.components;
    } else {
        const LatentModel model = random_stm_model(cfg.dim, c.k, cfg.words, model_rng);
        RngStream sample_rng = rng.child("samples");
        const auto docs = gen_stm(model, c.s * c.n_s, sample_rng).docs;
        for (std::size_t s = 0; s < c.s; ++s) {
            std::vector<WordTriple> part(docs.begin() + static_cast<std::ptrdiff_t>(s * c.n_s),
                                         docs.begin() + static_cast<std::ptrdiff_t>((s + 1) * c.n_s));
            out.moments.push_back(stm_moments(part, cfg.dim));
        }
        out.truth = model.components;
    }
    out.pooled_moments = pool_moments(out.moments);
    return out;
}

inline double run_pca_method(const SweepConfig& cfg, const CellData& cd, const Cell& c, const std::string& method,
                             const PrivacySpec& spec, std::uint64_t noise_seed)
{
    const PcaOptions opt{cfg.noiseless, cfg.trusted_sites};
    const ProtocolSeed ps{noise_seed, 0};
    RngStream rng(noise_seed, "central");
    Matrix v;
    if (method == "cape") v = cape_pca(cd.pca_sites, spec, c.k, ps, opt).result.subspace;
    else if (method == "conv") v = conv_pca(cd.pca_sites, spec, c.k, ps, opt).result.subspace;
    else if (method == "local") v = local_pca(cd.pca_sites[0], spec, c.k, rng, opt).subspace;
    else if (method == "pooled-dp") v = pooled_dp_pca(cd.pooled, spec, c.k, rng, opt).subspace;
    else v = nonprivate_pca(cd.pooled, c.k).subspace;
    return captured_energy(v, cd.pca_reference);
}

inline double run_otd_method(const SweepConfig& cfg, const CellData& cd, const Cell& c, const std::string& method,
                             const PrivacySpec& spec, std::uint64_t noise_seed)
{
    const OtdPrivacy priv = OtdPrivacy::split(spec.epsilon, spec.delta);
    const OtdOptions opt{cfg.noiseless, cfg.trusted_sites};
    const ProtocolSeed ps{noise_seed, 0};
    RngStream rng(noise_seed, "central");
    PrivateTensor t;
    if (method == "cape") t = cape_agn(cd.moments, priv, c.k, ps, opt);
    else if (method == "conv") t = conv_agn(cd.moments, priv, c.k, ps, opt);
    else if (method == "local") t = agn(cd.moments[0], priv, c.k, rng, opt);
    else if (method == "pooled-dp") t = agn(cd.pooled_moments, priv, c.k, rng, opt);
    else t = nonprivate_tensor(cd.pooled_moments, c.k);

    RngStream power_rng(noise_seed, "power-method");
    OtdResult r = decompose_and_recover(t, c.k, power_rng);
    Matrix a = r.components;
    if (cfg.family == Family::STM) a = stm_postprocess(a).components;
    else a *= cd.zeta;
    return q_comp(a, cd.truth);
}

} // namespace detail

inline const char* metric_name(Family f) { return f == Family::PCA ? "q_ce" : "q_comp"; }

/// Runs every (cell, trial) and returns rows sorted by their key.
inline std::vector<ResultRow> run_sweep(const SweepConfig& cfg)
{
    cfg.validate();
    std::vector<Cell> cells;
    const std::vector<std::size_t> ns_grid
        = cfg.data && cfg.ns_grid.empty() ? std::vector<std::size_t>{} : cfg.ns_grid;
    for (auto s : cfg.sites_grid) {
        std::vector<std::size_t> ns_list = ns_grid;
        if (ns_list.empty()) ns_list.push_back(static_cast<std::size_t>(cfg.data->cols()) / s);
        for (auto ns : ns_list)
            for (auto k : cfg.k_grid)
                for (std::size_t t = 0; t < cfg.trials; ++t) cells.push_back({ns, s, k, t});
    }

    std::vector<std::vector<ResultRow>> per_cell(cells.size());
    auto work = [&](std::size_t idx) {
        const Cell& c = cells[idx];
        auto& rows = per_cell[idx];
        std::optional<detail::CellData> data;
        try {
            data = detail::prepare_cell(cfg, c);
        } catch (const std::invalid_argument&) {
            throw;
        } catch (const std::runtime_error&) {
            // Generator gave up; every row of the cell is degenerate.
        }
        for (const auto& method : cfg.methods)
            for (double eps : cfg.eps_grid)
                for (double delta : cfg.delta_grid) {
                    ResultRow row{to_string(cfg.family), method, eps, delta, c.n_s, c.s, c.k, c.trial, 0,
                                  metric_name(cfg.family)};
                    row.seed = derive_seed(cfg.seed, detail::noise_key(c, method, eps, delta));
                    const auto t0 = std::chrono::steady_clock::now();
                    if (data) {
                        try {
                            const PrivacySpec spec(eps, delta);
                            row.value = cfg.family == Family::PCA
                                          ? detail::run_pca_method(cfg, *data, c, method, spec, row.seed)
                                          : detail::run_otd_method(cfg, *data, c, method, spec, row.seed);
                        } catch (const RankDeficiencyError&) {
                        } catch (const ConvergenceError&) {
                        } catch (const std::domain_error&) {
                        }
                    }
                    if (cfg.timing)
                        row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
                    rows.push_back(std::move(row));
                }
    };

    const unsigned nthreads = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(cells.size())));
    if (nthreads == 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < nthreads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i; (i = next.fetch_add(1)) < cells.size();) {
                    try {
                        work(i);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        for (auto& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    }

    std::vector<ResultRow> rows;
    for (auto& v : per_cell) rows.insert(rows.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
    std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) { return a.key() < b.key(); });
    return rows;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline constexpr const char* kResultHeader = "family,method,epsilon,delta,n_s,s,k,trial,seed,metric,value,wall_ms";

inline void write_results(std::ostream& os, const std::vector<ResultRow>& rows)
{
    os << kResultHeader << '\n';
    for (const auto& r : rows)
        os << r.family << ',' << r.method << ',' << format_double(r.epsilon) << ',' << format_double(r.delta) << ','
           << r.n_s << ',' << r.s << ',' << r.k << ',' << r.trial << ',' << r.seed << ',' << r.metric << ','
           << format_double(r.value) << ',' << format_double(r.wall_ms) << '\n';
}

inline void emit_results(const std::vector<ResultRow>& rows, const std::string& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    write_results(os, rows);
    if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, ',')) out.push_back(cur);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::string trim(std::string s)
{
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& field, std::size_t line)
{
    const std::string f = trim(field);
    T v{};
    auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || p != f.data() + f.size() || f.empty())
        throw std::runtime_error("line " + std::to_string(line) + ": '" + field + "' is not a number");
    return v;
}

} // namespace detail

inline std::vector<ResultRow> parse_results(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line) || detail::trim(line) != kResultHeader)
        throw std::runtime_error("results file: missing or unexpected header");
    std::vector<ResultRow> rows;
    std::size_t ln = 1;
    while (std::getline(is, line)) {
        ++ln;
        if (detail::trim(line).empty()) continue;
        auto f = detail::split_fields(detail::trim(line));
        if (f.size() != 12) throw std::runtime_error("line " + std::to_string(ln) + ": expected 12 fields");
        ResultRow r;
        r.family = f[0];
        r.method = f[1];
        r.epsilon = detail::parse_number<double>(f[2], ln);
        r.delta = detail::parse_number<double>(f[3], ln);
        r.n_s = detail::parse_number<std::size_t>(f[4], ln);
        r.s = detail::parse_number<std::size_t>(f[5], ln);
        r.k = detail::parse_number<Index>(f[6], ln);
        r.trial = detail::parse_number<std::size_t>(f[7], ln);
        r.seed = detail::parse_number<std::uint64_t>(f[8], ln);
        r.metric = f[9];
        r.value = detail::parse_number<double>(f[10], ln);
        r.wall_ms = detail::parse_number<double>(f[11], ln);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::vector<ResultRow> parse_results_file(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    return parse_results(is);
}

/// Numeric CSV exactly as laid out in the file (rows x columns).
inline Matrix ingest_csv(std::istream& is, bool has_header)
{
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t ln = 0;
    if (has_header) {
        std::getline(is, line);
        ++ln;
    }
    while (std::getline(is, line)) {
        ++ln;
        if (detail::trim(line).empty()) continue;
        std::vector<double> r;
        for (const auto& f : detail::split_fields(detail::trim(line))) r.push_back(detail::parse_number<double>(f, ln));
        if (!rows.empty() && r.size() != rows[0].size())
            throw std::runtime_error("line " + std::to_string(ln) + ": expected " + std::to_string(rows[0].size())
                                     + " fields, found " + std::to_string(r.size()));
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw std::runtime_error("CSV contains no data rows");
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows[0].size()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return m;
}

inline Matrix ingest_csv(const std::string& path, bool has_header)
{
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    return ingest_csv(is, has_header);
}

// ---------------------------------------------------------------------------
// Summary
// ---------------------------------------------------------------------------

struct SummaryRow {
    std::string family, method;
    double epsilon = 0.0, delta = 0.0;
    std::size_t n_s = 0, s = 0;
    Index k = 0;
    std::string metric;
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t count = 0;
    std::size_t excluded = 0; // degenerate trials left out
};

/// Mean and sample standard deviation per cell, degenerate trials excluded.
inline std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows)
{
    using Key = std::tuple<std::string, std::string, double, double, std::size_t, std::size_t, Index, std::string>;
    std::map<Key, std::pair<std::vector<double>, std::size_t>> groups;
    for (const auto& r : rows) {
        auto& g = groups[Key{r.family, r.method, r.epsilon, r.delta, r.n_s, r.s, r.k, r.metric}];
        if (r.degenerate()) ++g.second;
        else g.first.push_back(r.value);
    }
    std::vector<SummaryRow> out;
    for (const auto& [key, g] : groups) {
        SummaryRow s;
        std::tie(s.family, s.method, s.epsilon, s.delta, s.n_s, s.s, s.k, s.metric) = key;
        const auto& v = g.first;
        s.count = v.size();
        s.excluded = g.second;
        if (!v.empty()) {
            s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
            double ss = 0.0;
            for (double x : v) ss += (x - s.mean) * (x - s.mean);
            s.stddev = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
        } else {
            s.mean = s.stddev = std::numeric_limits<double>::quiet_NaN();
        }
        out.push_back(std::move(s));
    }
    return out;
}

inline void write_summary(std::ostream& os, const std::vector<SummaryRow>& rows)
{
    os << "family,method,epsilon,delta,n_s,s,k,metric,mean,stddev,count,excluded\n";
    for (const auto& r : rows)
        os << r.family << ',' << r.method << ',' << format_double(r.epsilon) << ',' << format_double(r.delta) << ','
           << r.n_s << ',' << r.s << ',' << r.k << ',' << r.metric << ',' << format_double(r.mean) << ','
           << format_double(r.stddev) << ',' << r.count << ',' << r.excluded << '\n';
}

} // namespace cape
