#pragma once

#include "streamnmf/state_process.hpp"

#include <algorithm>

namespace streamnmf {

struct RelaxedParams {
    double alpha = 0.5;

    bool operator==(const RelaxedParams&) const = default;
};

/// Continuous relaxation of the basis-selection chain: each coordinate lives
/// on (0,1), starts uniform, and moves to U(0,x) with probability rho(x) or
/// to U(x,1) otherwise, where rho(x) = alpha for x <= 0.5 and 1-alpha above.
/// Large alpha makes the chain cling to the ends of the interval.
///
/// The tie x' = x (probability zero) is assigned to the down branch so that
/// the density and the s3 indicators agree on every input.
class RelaxedBasisModel {
  public:
    using Params = RelaxedParams;
    static constexpr bool finite_enumerable = false;

    explicit RelaxedBasisModel(int k) : k_(k) { require(k >= 1, "K must be positive"); }

    int dim() const { return k_; }
    int s3_dim() const { return 2; }

    Vector sample_initial(const Params&, Rng& rng) const {
        Vector x(k_);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int k = 0; k < k_; ++k) x(k) = clamp_open(u(rng));
        return x;
    }

    double initial_logdensity(const Params&, const Vector& x) const {
        check_open(x);
        return 0.0; // U(0,1)^K
    }

    Vector sample_transition(const Params& psi, const Vector& x, Rng& rng) const {
        check_open(x);
        Vector out(k_);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (Eigen::Index k = 0; k < x.size(); ++k) {
            const double go_down = rho(psi, x(k));
            if (u(rng) < go_down) {
                out(k) = clamp_open(u(rng) * x(k));
            } else {
                out(k) = clamp_open(x(k) + u(rng) * (1.0 - x(k)));
            }
        }
        return out;
    }

    /// Per coordinate: rho(x)/x below x, (1-rho(x))/(1-x) above, summed logs.
    double transition_logdensity(const Params& psi, const Vector& x, const Vector& x2) const {
        check_open(x);
        check_open(x2);
        require(x.size() == x2.size(), "relaxed transition: length mismatch");
        double total = 0.0;
        for (Eigen::Index k = 0; k < x.size(); ++k) {
            const double go_down = rho(psi, x(k));
            if (x2(k) <= x(k)) {
                total += std::log(go_down) - std::log(x(k));
            } else {
                total += std::log(1.0 - go_down) - std::log(1.0 - x(k));
            }
        }
        return total;
    }

    Vector s3_initial(const Vector& x) const {
        check_open(x);
        return Vector::Zero(2); // no transition pair at t = 1
    }

    /// Counts, per coordinate, whether (prev, cur) lies in
    /// A_prev = ((0,0.5] x (0,prev]) u ((0.5,1) x (prev,1)); that event has
    /// probability alpha regardless of which half prev is in.
    Vector s3_pair(const Vector& prev, const Vector& cur) const {
        check_open(prev);
        check_open(cur);
        require(prev.size() == cur.size(), "relaxed s3: length mismatch");
        Vector s = Vector::Zero(2);
        for (Eigen::Index k = 0; k < prev.size(); ++k) {
            const bool in_a = prev(k) <= 0.5 ? cur(k) <= prev(k) : cur(k) > prev(k);
            s(in_a ? 0 : 1) += 1.0;
        }
        return s;
    }

    /// alpha = S3(1) / (S3(1)+S3(2)), clamped; holds on a zero denominator.
    Params maximise(const Vector& s3, const Params& previous) const {
        require(s3.size() == 2, "relaxed maximise: S3 must have 2 components");
        const double total = s3(0) + s3(1);
        if (total <= 0.0) return previous;
        return Params{std::clamp(s3(0) / total, kProbClamp, 1.0 - kProbClamp)};
    }

  private:
    static double rho(const Params& psi, double x) {
        return x <= 0.5 ? psi.alpha : 1.0 - psi.alpha;
    }

    // keeps samples strictly inside (0,1); hit with probability ~2^-53
    static double clamp_open(double v) {
        return std::clamp(v, std::numeric_limits<double>::min(), 1.0 - 1e-16);
    }

    static void check_open(const Vector& x) {
        require((x.array() > 0.0 && x.array() < 1.0).all(),
                "relaxed state entries must lie strictly inside (0,1)");
    }

    int k_;
};

} // namespace streamnmf
