#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace streamnmf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Rng = std::mt19937_64;

/// Floor applied to intensity denominators before division.
inline constexpr double kIntensityEps = 1e-12;
/// Floor applied to B entries after each M-step.
inline constexpr double kBasisFloor = 1e-8;
/// Probability parameters are clamped into [kProbClamp, 1 - kProbClamp].
inline constexpr double kProbClamp = 1e-6;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// An intensity B(m,.)x hit zero where a positive count demanded mass.
class degenerate_intensity_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Every particle weight collapsed to zero (observation impossible under
/// the whole particle set).
class particle_collapse_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A filter/weight update produced an all-zero unnormalised vector.
class numeric_underflow_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (files, manifests, streams).
class data_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Eigen's vectorised exp clamps large negative arguments to a denormal
// instead of underflowing to zero, so impossible states would keep a
// nonzero probability; route through scalar std::exp instead.
inline double scalar_exp(double v) { return std::exp(v); }
inline double scalar_log(double v) { return std::log(v); }

inline double log_sum_exp(const Vector& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m; // all -inf (or a stray +inf/NaN)
    return m + std::log((v.array() - m).unaryExpr(&scalar_exp).sum());
}

/// exp(v - logsumexp(v)), safe against -inf entries.
inline Vector normalized_exp(const Vector& v, double* log_norm = nullptr) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) throw numeric_underflow_error("all log-weights are -inf");
    Vector w = (v.array() - m).unaryExpr(&scalar_exp);
    const double s = w.sum();
    if (!(s > 0.0)) throw numeric_underflow_error("normalisation sum is zero");
    if (log_norm) *log_norm = m + std::log(s);
    return w / s;
}

inline bool is_count_vector(const Vector& y) {
    return (y.array() >= 0.0).all() && (y.array() == y.array().floor()).all() &&
           y.array().isFinite().all();
}

inline void require(bool cond, const char* what) {
    if (!cond) throw std::invalid_argument(what);
}

/// log(v!) via lgamma, memoized over small counts.
inline double log_factorial(double v) {
    static const auto table = [] {
        std::array<double, 256> t{};
        for (size_t i = 0; i < t.size(); ++i) t[i] = std::lgamma(static_cast<double>(i) + 1.0);
        return t;
    }();
    if (v >= 0.0 && v < 256.0 && std::floor(v) == v) return table[static_cast<size_t>(v)];
    return std::lgamma(v + 1.0);
}

} // namespace streamnmf
