// Experiment driver: runs privacy/utility sweeps and summarizes their CSV output.
//
//   cape_cli sweep --family pca --methods cape,conv,local --eps-grid 0.1,0.5,1 --out results.csv
//   cape_cli summarize results.csv --out summary.csv

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cape/experiment.hpp"

namespace {

enum Exit { kOk = 0, kConfigError = 1, kAllFailed = 2 };

struct SweepArgs {
    std::string family = "pca";
    std::vector<std::string> methods{"cape", "conv", "local"};
    std::vector<double> eps{0.1, 0.5, 1.0, 2.0, 5.0};
    std::vector<double> delta{0.01};
    std::vector<std::size_t> ns{1000};
    std::vector<std::size_t> sites{5};
    std::vector<long> k{10};
    std::size_t trials = 10;
    std::uint64_t seed = 1;
    std::string out;
    bool noiseless = false;
    bool trusted = false;
    std::string data_csv;
    bool csv_header = false;
    bool csv_samples_in_columns = false;
    long dim = 50;
    double sigma_sq = 0.05;
    int words = 3;
    unsigned threads = 1;
    bool timing = false;
};

int run_sweep_command(const SweepArgs& a, const CLI::App& sub)
{
    cape::SweepConfig cfg;
    try {
        cfg.family = cape::parse_family(a.family);
        cfg.methods = a.methods;
        cfg.eps_grid = a.eps;
        cfg.delta_grid = a.delta;
        cfg.ns_grid = a.ns;
        cfg.sites_grid = a.sites;
        cfg.k_grid.assign(a.k.begin(), a.k.end());
        cfg.trials = a.trials;
        cfg.seed = a.seed;
        cfg.dim = a.dim;
        cfg.sigma_sq = a.sigma_sq;
        cfg.words = a.words;
        cfg.noiseless = a.noiseless;
        cfg.trusted_sites = a.trusted;
        cfg.threads = a.threads;
        cfg.timing = a.timing;
        if (!a.data_csv.empty()) {
            cape::Matrix raw = cape::ingest_csv(a.data_csv, a.csv_header);
            std::clog << "read " << raw.rows() << " x " << raw.cols() << " values from " << a.data_csv << '\n';
            cfg.data = a.csv_samples_in_columns ? raw : cape::Matrix(raw.transpose());
            if (sub.count("--ns-grid") == 0) cfg.ns_grid.clear();
        }
        cfg.validate();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    }

    std::vector<cape::ResultRow> rows;
    try {
        rows = cape::run_sweep(cfg);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    }

    try {
        if (a.out.empty()) cape::write_results(std::cout, rows);
        else cape::emit_results(rows, a.out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    }

    std::size_t failed = 0;
    for (const auto& r : rows) failed += r.degenerate() ? 1 : 0;
    if (failed > 0) std::clog << failed << " of " << rows.size() << " rows degenerate\n";
    return failed == rows.size() ? kAllFailed : kOk;
}

int run_summarize_command(const std::string& in, const std::string& out)
{
    try {
        const auto summary = cape::summarize(cape::parse_results_file(in));
        if (out.empty()) {
            cape::write_summary(std::cout, summary);
        } else {
            std::ofstream os(out, std::ios::binary);
            if (!os) throw std::runtime_error("cannot open '" + out + "' for writing");
            cape::write_summary(os, summary);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    }
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Differentially private distributed PCA / tensor decomposition experiments"};
    app.require_subcommand(1);

    SweepArgs a;
    auto* sweep = app.add_subcommand("sweep", "run a parameter sweep and write one CSV row per trial");
    sweep->set_config("--config", "", "flat key=value file; command-line flags take precedence");
    sweep->add_option("--family", a.family, "pca, mog or stm")->capture_default_str();
    sweep->add_option("--methods", a.methods, "subset of cape,conv,local,pooled-dp,non-private")->delimiter(',');
    sweep->add_option("--eps-grid", a.eps, "epsilon values")->delimiter(',');
    sweep->add_option("--delta-grid", a.delta, "delta values")->delimiter(',');
    sweep->add_option("--ns-grid", a.ns, "samples per site")->delimiter(',');
    sweep->add_option("--sites", a.sites, "site counts")->delimiter(',');
    sweep->add_option("--k", a.k, "number of components")->delimiter(',');
    sweep->add_option("--trials", a.trials, "trials per cell")->capture_default_str();
    sweep->add_option("--seed", a.seed, "master seed")->capture_default_str();
    sweep->add_option("--out", a.out, "output CSV (stdout when omitted)");
    sweep->add_flag("--noiseless", a.noiseless, "add no privacy noise");
    sweep->add_flag("--trusted-sites", a.trusted, "skip aggregator f-shares (needs S > 2)");
    sweep->add_option("--data-csv", a.data_csv, "numeric CSV to use instead of generated PCA data");
    sweep->add_flag("--csv-header", a.csv_header, "first CSV line is a header");
    sweep->add_flag("--csv-samples-in-columns", a.csv_samples_in_columns, "CSV columns are samples (default: rows)");
    sweep->add_option("--dim", a.dim, "data dimension D for generated data")->capture_default_str();
    sweep->add_option("--sigma-sq", a.sigma_sq, "mixture noise variance")->capture_default_str();
    sweep->add_option("--words", a.words, "words per document (stm)")->capture_default_str();
    sweep->add_option("--threads", a.threads, "worker threads; output does not depend on it")->capture_default_str();
    sweep->add_flag("--timing", a.timing, "record wall time per trial (makes output non-reproducible)");

    std::string sum_in, sum_out;
    auto* summ = app.add_subcommand("summarize", "per-cell mean, standard deviation and count");
    summ->add_option("results", sum_in, "results CSV from sweep")->required();
    summ->add_option("--out", sum_out, "summary CSV (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    if (*sweep) return run_sweep_command(a, *sweep);
    return run_summarize_command(sum_in, sum_out);
}
