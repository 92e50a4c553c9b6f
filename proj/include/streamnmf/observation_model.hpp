#pragma once

#include "streamnmf/common.hpp"

#include <utility>

namespace streamnmf {

// Observation model: y(m) = sum_k Z(m,k) with Z(m,k) ~ Poisson(B(m,k) x(k)).
// Marginally y(m) ~ Poisson(B(m,.) x), and Z(m,.) | (x, y) is multinomial
// with cell probabilities proportional to B(m,k) x(k).

/// log PO(v; lambda) = v log(lambda) - lambda - log v!, with the conventions
/// log PO(0; 0) = 0 and log PO(v>0; 0) = -inf.
inline double poisson_logpmf(double v, double lambda) {
    require(v >= 0.0 && std::floor(v) == v && std::isfinite(v),
            "poisson_logpmf: count must be a nonnegative integer");
    require(lambda >= 0.0 && std::isfinite(lambda),
            "poisson_logpmf: intensity must be nonnegative");
    if (lambda == 0.0) return v == 0.0 ? 0.0 : kNegInf;
    return v * std::log(lambda) - lambda - log_factorial(v);
}

/// log g_B(y | x) = sum_m log PO(y(m); B(m,.) x).
inline double observation_loglik(const Matrix& B, const Vector& x, const Vector& y) {
    require(B.cols() == x.size() && B.rows() == y.size(),
            "observation_loglik: dimension mismatch");
    double total = 0.0;
    for (Eigen::Index m = 0; m < B.rows(); ++m) {
        total += poisson_logpmf(y(m), B.row(m).dot(x));
    }
    return total;
}

/// Allocation cell probabilities for row m: rho_m(k) = B(m,k)x(k) / (B(m,.)x).
inline Vector allocation_probabilities(const Matrix& B, const Vector& x, Eigen::Index m) {
    require(B.cols() == x.size(), "allocation_probabilities: dimension mismatch");
    require(m >= 0 && m < B.rows(), "allocation_probabilities: row index out of range");
    Vector cells = B.row(m).transpose().cwiseProduct(x);
    const double denom = cells.sum();
    if (denom <= 0.0)
        throw degenerate_intensity_error("allocation_probabilities: B(m,.)x is zero");
    return cells / denom;
}

/// E[Z | x, y] as an MxK matrix: entry (m,k) = y(m) rho_m(k). Rows with
/// y(m) = 0 are zero. Throws when a positive count meets a zero intensity.
inline Matrix allocation_posterior_mean(const Matrix& B, const Vector& x, const Vector& y) {
    require(B.cols() == x.size() && B.rows() == y.size(),
            "allocation_posterior_mean: dimension mismatch");
    Matrix out = Matrix::Zero(B.rows(), B.cols());
    for (Eigen::Index m = 0; m < B.rows(); ++m) {
        if (y(m) == 0.0) continue;
        Vector cells = B.row(m).transpose().cwiseProduct(x);
        const double denom = cells.sum();
        if (denom <= 0.0)
            throw degenerate_intensity_error(
                "allocation_posterior_mean: zero intensity with positive count");
        out.row(m) = (y(m) / denom) * cells.transpose();
    }
    return out;
}

/// Same as allocation_posterior_mean but floors the denominator at
/// kIntensityEps instead of throwing; degeneracies are tallied into
/// *degenerate_hits when given. Used inside the smoothing recursions where a
/// degenerate state always carries zero posterior weight.
inline Matrix allocation_posterior_mean_guarded(const Matrix& B, const Vector& x,
                                                const Vector& y,
                                                long long* degenerate_hits = nullptr) {
    Matrix out = Matrix::Zero(B.rows(), B.cols());
    for (Eigen::Index m = 0; m < B.rows(); ++m) {
        if (y(m) == 0.0) continue;
        Vector cells = B.row(m).transpose().cwiseProduct(x);
        double denom = cells.sum();
        if (denom < kIntensityEps) {
            denom = kIntensityEps;
            if (degenerate_hits) ++*degenerate_hits;
        }
        out.row(m) = (y(m) / denom) * cells.transpose();
    }
    return out;
}

/// into += scale * E[Z | x, y], computed row by row without temporaries;
/// the denominator guard matches allocation_posterior_mean_guarded.
inline void add_allocation_scaled(const Matrix& B, const Vector& x, const Vector& y,
                                  double scale, Matrix& into,
                                  long long* degenerate_hits = nullptr) {
    for (Eigen::Index m = 0; m < B.rows(); ++m) {
        if (y(m) == 0.0) continue;
        double denom = B.row(m).dot(x);
        if (denom < kIntensityEps) {
            denom = kIntensityEps;
            if (degenerate_hits) ++*degenerate_hits;
        }
        into.row(m) +=
            (scale * y(m) / denom) * B.row(m).cwiseProduct(x.transpose());
    }
}

/// Draws (Z, y) given x: Z(m,k) ~ Poisson(B(m,k)x(k)), y = Z rowsums.
inline std::pair<Matrix, Vector> simulate_observation(const Matrix& B, const Vector& x,
                                                      Rng& rng) {
    require(B.cols() == x.size(), "simulate_observation: dimension mismatch");
    Matrix z(B.rows(), B.cols());
    for (Eigen::Index m = 0; m < B.rows(); ++m) {
        for (Eigen::Index k = 0; k < B.cols(); ++k) {
            const double lambda = B(m, k) * x(k);
            if (lambda <= 0.0) {
                z(m, k) = 0.0;
            } else {
                std::poisson_distribution<long> po(lambda);
                z(m, k) = static_cast<double>(po(rng));
            }
        }
    }
    return {z, z.rowwise().sum()};
}

} // namespace streamnmf
