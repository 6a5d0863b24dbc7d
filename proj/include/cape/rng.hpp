#pragma once
//
// Reproducible labelled random streams.
//
// The std:: distributions are implementation-defined, so the variates are
// derived here from the raw mt19937_64 output. A stream is keyed by
// (seed, label); labels look like "site3/r0" or "noise-generator/r1".
//

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace cape {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

class RngStream {
public:
    RngStream(std::uint64_t seed, std::string label)
        : seed_(seed), label_(std::move(label)), engine_(splitmix64(seed ^ fnv1a64(label_)))
    {
    }

    std::uint64_t seed() const { return seed_; }
    const std::string& label() const { return label_; }

    /// Independent stream "<label>/<sub>" under the same seed.
    RngStream child(std::string_view sub) const { return RngStream(seed_, label_ + "/" + std::string(sub)); }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on the open interval (0, 1).
    double uniform()
    {
        for (;;) {
            const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
            if (u > 0.0) return u;
        }
    }

    /// Standard normal (Marsaglia polar method, second variate cached).
    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    double normal(double stddev) { return stddev * normal(); }

    double exponential(double rate) { return -std::log(uniform()) / rate; }

private:
    std::uint64_t seed_;
    std::string label_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Hands out per-role streams for one protocol round.
struct ProtocolSeed {
    std::uint64_t seed = 0;
    int round = 0;

    RngStream stream(std::string_view role) const
    {
        return RngStream(seed, std::string(role) + "/r" + std::to_string(round));
    }
    RngStream noise_generator() const { return stream("noise-generator"); }
    RngStream aggregator() const { return stream("aggregator"); }
    RngStream site(std::size_t s) const { return stream("site" + std::to_string(s)); }

    ProtocolSeed next_round() const { return {seed, round + 1}; }
};

} // namespace cape
