#pragma once

#include <stdexcept>
#include <string>

namespace cape {

/// Shapes of operands do not agree.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Eigensolver or fixed-point iteration gave up.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Fewer than K usable eigenvalues when whitening.
class RankDeficiencyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A noise plan with a negative variance was requested.
class InfeasiblePlanError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require_dims(bool ok, const std::string& what)
{
    if (!ok) throw DimensionError(what);
}

} // namespace detail
} // namespace cape
