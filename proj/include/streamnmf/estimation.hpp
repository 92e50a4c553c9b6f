#pragma once

#include "streamnmf/state_process.hpp"

#include <optional>
#include <vector>

namespace streamnmf {

/// Full parameter set theta = (psi, B).
template <StateProcess P>
struct Theta {
    Matrix B;
    typename P::Params psi;
};

/// The triple of smoothed statistics feeding the M-step: S1 = E[sum_t X_t],
/// S2 = E[sum_t Z_t], S3 = E[sum_t s3_t] (running averages in online mode).
struct SuffStats {
    Vector S1; // K
    Matrix S2; // M x K
    Vector S3; // J
};

/// gamma_t = (t + offset)^(-exponent) with exponent in (0.5, 1].
struct StepSizeSchedule {
    double exponent = 0.8;
    long offset = 0;

    StepSizeSchedule() = default;
    StepSizeSchedule(double a, long off = 0) : exponent(a), offset(off) {
        require(a > 0.5 && a <= 1.0, "step-size exponent must lie in (0.5, 1]");
        require(off >= 0, "step-size offset must be nonnegative");
    }

    double at(long t) const {
        require(t >= 1, "step size requested for t < 1");
        return std::pow(static_cast<double>(t + offset), -exponent);
    }
};

/// B(m,k) = S2(m,k) / S1(k), floored at kBasisFloor. Columns whose S1 entry
/// is not positive keep their previous values.
inline Matrix mstep_B(const Vector& s1, const Matrix& s2, const Matrix& previous) {
    require(s2.cols() == s1.size() && s2.rows() == previous.rows() &&
                s2.cols() == previous.cols(),
            "mstep_B: dimension mismatch");
    Matrix out = previous;
    for (Eigen::Index k = 0; k < s1.size(); ++k) {
        if (s1(k) > kIntensityEps) {
            out.col(k) = (s2.col(k) / s1(k)).cwiseMax(kBasisFloor);
        }
    }
    return out;
}

/// psi update via the process maximiser; degenerate statistics hold the
/// previous estimate (handled per model).
template <StateProcess P>
typename P::Params mstep_psi(const P& process, const Vector& s3,
                             const typename P::Params& previous) {
    return process.maximise(s3, previous);
}

/// Which components of theta the M-step may move; frozen components stay at
/// their initial values bit for bit.
struct EmOptions {
    bool estimate_B = true;
    bool estimate_psi = true;
};

/// One recorded point of an estimation run.
template <StateProcess P>
struct TraceEntry {
    long t = 0;
    Theta<P> theta;
    std::optional<SuffStats> stats;
    std::optional<double> loglik;
};

template <StateProcess P>
using EstimateTrace = std::vector<TraceEntry<P>>;

} // namespace streamnmf
