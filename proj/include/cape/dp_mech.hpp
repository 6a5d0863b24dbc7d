#pragma once
//
// Gaussian-mechanism calibration, moment sensitivities and noise samplers.
//

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace cape {

struct PrivacySpec {
    double epsilon = 1.0;
    double delta = 0.01;

    PrivacySpec() = default;
    PrivacySpec(double eps, double del) : epsilon(eps), delta(del) { validate(); }

    void validate() const
    {
        if (!(epsilon > 0.0) || !std::isfinite(epsilon))
            throw std::invalid_argument("PrivacySpec: epsilon must be positive, got " + std::to_string(epsilon));
        if (!(delta > 0.0 && delta < 1.0))
            throw std::invalid_argument("PrivacySpec: delta must lie in (0,1), got " + std::to_string(delta));
    }
};

enum class ModelKind { STM, MOG };
enum class MomentOrder { Second, Third };

inline const char* to_string(ModelKind m) { return m == ModelKind::STM ? "stm" : "mog"; }

struct Sensitivity {
    double value = 0.0;
    ModelKind model = ModelKind::STM;
    MomentOrder order = MomentOrder::Second;
};

/// (sensitivity / eps) * sqrt(2 ln(1.25 / delta))
inline double gaussian_std(double sensitivity, const PrivacySpec& spec)
{
    spec.validate();
    if (!(sensitivity >= 0.0)) throw std::invalid_argument("gaussian_std: sensitivity must be nonnegative");
    return sensitivity / spec.epsilon * std::sqrt(2.0 * std::log(1.25 / spec.delta));
}

inline Sensitivity sensitivity_m2(ModelKind model, std::size_t n)
{
    if (n == 0) throw std::invalid_argument("sensitivity_m2: N must be at least 1");
    const double nn = static_cast<double>(n);
    const double v = model == ModelKind::STM ? std::sqrt(2.0) / nn : 1.0 / nn;
    return {v, model, MomentOrder::Second};
}

/// STM: sqrt(2)/N. MOG: (2 + 6 D sigma^2)/N; D and sigma_sq are ignored for STM.
inline Sensitivity sensitivity_m3(ModelKind model, std::size_t n, std::size_t dim = 1, double sigma_sq = 0.0)
{
    if (n == 0) throw std::invalid_argument("sensitivity_m3: N must be at least 1");
    const double nn = static_cast<double>(n);
    if (model == ModelKind::STM) return {std::sqrt(2.0) / nn, model, MomentOrder::Third};
    if (dim == 0) throw std::invalid_argument("sensitivity_m3: D must be at least 1");
    if (!(sigma_sq >= 0.0)) throw std::invalid_argument("sensitivity_m3: sigma_sq must be nonnegative");
    return {(2.0 + 6.0 * static_cast<double>(dim) * sigma_sq) / nn, model, MomentOrder::Third};
}

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

/// Diagonal and upper triangle i.i.d. N(0, tau^2), mirrored.
inline SymMatrix sym_noise_matrix(Index dim, double tau, RngStream& rng)
{
    detail::require_dims(dim >= 1, "sym_noise_matrix: D must be positive");
    if (tau == 0.0) return SymMatrix::zero(dim);
    Matrix m(dim, dim);
    for (Index i = 0; i < dim; ++i)
        for (Index j = i; j < dim; ++j) {
            const double x = rng.normal(tau);
            m(i, j) = x;
            m(j, i) = x;
        }
    return SymMatrix::from_symmetric(std::move(m));
}

inline Matrix iid_noise_matrix(Index dim, double tau, RngStream& rng)
{
    detail::require_dims(dim >= 1, "iid_noise_matrix: D must be positive");
    Matrix m = Matrix::Zero(dim, dim);
    if (tau == 0.0) return m;
    for (Index i = 0; i < dim; ++i)
        for (Index j = 0; j < dim; ++j) m(i, j) = rng.normal(tau);
    return m;
}

inline Tensor3 iid_noise_tensor(Index dim, double tau, RngStream& rng)
{
    detail::require_dims(dim >= 1, "iid_noise_tensor: D must be positive");
    Tensor3 t = Tensor3::cube(dim);
    if (tau == 0.0) return t;
    for (double& x : t.data()) x = rng.normal(tau);
    return t;
}

inline Vector gaussian_vector(Index n, double tau, RngStream& rng)
{
    Vector v = Vector::Zero(n);
    if (tau == 0.0) return v;
    for (Index i = 0; i < n; ++i) v(i) = rng.normal(tau);
    return v;
}

/// One N(0, tau^2) draw per unique entry, so every position has variance tau^2.
inline SymTensor3 sym_noise_tensor3(Index dim, double tau, RngStream& rng)
{
    detail::require_dims(dim >= 1, "sym_noise_tensor3: D must be positive");
    const auto n = static_cast<Index>(d_sym(static_cast<std::size_t>(dim)));
    return SymTensor3::from_unique(dim, gaussian_vector(n, tau, rng));
}

/// Vector with density proportional to exp(-beta ||b||_2) in R^n:
/// Erlang(n, beta) radius times a uniform direction.
inline Vector avn_noise_vector(Index n, double beta, RngStream& rng)
{
    if (!(beta > 0.0)) throw std::invalid_argument("avn_noise_vector: beta must be positive");
    detail::require_dims(n >= 1, "avn_noise_vector: length must be positive");
    Vector dir(n);
    double norm = 0.0;
    do {
        for (Index i = 0; i < n; ++i) dir(i) = rng.normal();
        norm = dir.norm();
    } while (norm == 0.0);
    double radius = 0.0;
    for (Index i = 0; i < n; ++i) radius += rng.exponential(beta);
    return (radius / norm) * dir;
}

inline SymTensor3 avn_noise_tensor3(Index dim, double beta, RngStream& rng)
{
    detail::require_dims(dim >= 1, "avn_noise_tensor3: D must be positive");
    const auto n = static_cast<Index>(d_sym(static_cast<std::size_t>(dim)));
    return SymTensor3::from_unique(dim, avn_noise_vector(n, beta, rng));
}

/// Rate of the vector-noise mechanism: eps / Delta.
inline double avn_beta(double sensitivity, double epsilon)
{
    if (!(sensitivity > 0.0) || !(epsilon > 0.0))
        throw std::invalid_argument("avn_beta: sensitivity and epsilon must be positive");
    return epsilon / sensitivity;
}

// ---------------------------------------------------------------------------
// Privacy accounting
// ---------------------------------------------------------------------------

/// Per-release (epsilon, delta) charges, composed by basic composition.
class PrivacyLedger {
public:
    struct Entry {
        std::string what;
        double epsilon;
        double delta;
    };

    void charge(std::string what, double epsilon, double delta) { entries_.push_back({std::move(what), epsilon, delta}); }

    double total_epsilon() const
    {
        double e = 0.0;
        for (const auto& x : entries_) e += x.epsilon;
        return e;
    }
    double total_delta() const
    {
        double d = 0.0;
        for (const auto& x : entries_) d += x.delta;
        return d;
    }
    const std::vector<Entry>& entries() const { return entries_; }

private:
    std::vector<Entry> entries_;
};

} // namespace cape
