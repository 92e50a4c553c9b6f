#pragma once

#include "streamnmf/state_process.hpp"

#include <algorithm>

namespace streamnmf {

/// Stay probabilities of the per-coordinate two-state chain:
/// p = Prob(0 -> 0), q = Prob(1 -> 1).
struct BasisSelectionParams {
    double p = 0.5;
    double q = 0.5;

    bool operator==(const BasisSelectionParams&) const = default;
};

/// Which occupancy count forms the denominator of the (p, q) maximiser.
/// `current` counts I{x_t = v} as written in the source estimator; `previous`
/// counts I{x_{t-1} = v}, which is the exact complete-data maximiser. The two
/// differ by a single boundary term that vanishes as T grows.
enum class S3Denominator { current, previous };

/// Binary basis-selection chain on {0,1}^K: coordinates evolve independently,
/// each a two-state Markov chain with stay probabilities (p, q); the initial
/// law is uniform over {0,1}^K. Coordinate k switches column k of B on or off.
class BasisSelectionModel {
  public:
    using Params = BasisSelectionParams;
    static constexpr bool finite_enumerable = true;

    explicit BasisSelectionModel(int k, S3Denominator denom = S3Denominator::current,
                                 int enumeration_cap = 20)
        : k_(k), denom_(denom) {
        states_ = enumerate_states(k, enumeration_cap);
    }

    int dim() const { return k_; }
    int s3_dim() const { return 4; }
    S3Denominator s3_denominator() const { return denom_; }

    Eigen::Index state_count() const { return static_cast<Eigen::Index>(states_.size()); }
    const Vector& state(Eigen::Index i) const { return states_[static_cast<size_t>(i)]; }

    Vector sample_initial(const Params&, Rng& rng) const {
        Vector x(k_);
        std::uniform_int_distribution<int> bit(0, 1);
        for (int k = 0; k < k_; ++k) x(k) = static_cast<double>(bit(rng));
        return x;
    }

    double initial_logdensity(const Params&, const Vector& x) const {
        check_binary(x);
        return -static_cast<double>(k_) * std::log(2.0);
    }

    Vector sample_transition(const Params& psi, const Vector& x, Rng& rng) const {
        check_binary(x);
        Vector out(k_);
        std::uniform_real_distribution<double> u((0.0), 1.0);
        for (int k = 0; k < k_; ++k) {
            const double stay = x(k) == 0.0 ? psi.p : psi.q;
            out(k) = u(rng) < stay ? x(k) : 1.0 - x(k);
        }
        return out;
    }

    /// sum_k log P(x(k) -> x2(k)) with P(0->0)=p, P(1->1)=q.
    double transition_logdensity(const Params& psi, const Vector& x, const Vector& x2) const {
        check_binary(x);
        check_binary(x2);
        require(x.size() == x2.size(), "basis transition: length mismatch");
        double total = 0.0;
        for (Eigen::Index k = 0; k < x.size(); ++k) {
            const double stay = x(k) == 0.0 ? psi.p : psi.q;
            total += std::log(x2(k) == x(k) ? stay : 1.0 - stay);
        }
        return total;
    }

    /// Occupancy-only statistic for t = 1: [0, #zeros, 0, #ones] under the
    /// `current` convention, zero under `previous`.
    Vector s3_initial(const Vector& x) const {
        check_binary(x);
        Vector s = Vector::Zero(4);
        if (denom_ == S3Denominator::current) {
            const double ones = x.sum();
            s(1) = static_cast<double>(x.size()) - ones;
            s(3) = ones;
        }
        return s;
    }

    /// [#(0,0) pairs, #denominator-zeros, #(1,1) pairs, #denominator-ones],
    /// summed over coordinates.
    Vector s3_pair(const Vector& prev, const Vector& cur) const {
        check_binary(prev);
        check_binary(cur);
        require(prev.size() == cur.size(), "basis s3: length mismatch");
        Vector s = Vector::Zero(4);
        const Vector& occupancy = denom_ == S3Denominator::current ? cur : prev;
        for (Eigen::Index k = 0; k < prev.size(); ++k) {
            if (prev(k) == 0.0 && cur(k) == 0.0) s(0) += 1.0;
            if (occupancy(k) == 0.0) s(1) += 1.0;
            if (prev(k) == 1.0 && cur(k) == 1.0) s(2) += 1.0;
            if (occupancy(k) == 1.0) s(3) += 1.0;
        }
        return s;
    }

    /// (p, q) = (S3(1)/S3(2), S3(3)/S3(4)), clamped into [delta, 1-delta].
    /// A component with a non-positive denominator holds its previous value.
    Params maximise(const Vector& s3, const Params& previous) const {
        require(s3.size() == 4, "basis maximise: S3 must have 4 components");
        Params out = previous;
        if (s3(1) > 0.0) out.p = clamp_prob(s3(0) / s3(1));
        if (s3(3) > 0.0) out.q = clamp_prob(s3(2) / s3(3));
        return out;
    }

    static double clamp_prob(double v) { return std::clamp(v, kProbClamp, 1.0 - kProbClamp); }

  private:
    static void check_binary(const Vector& x) {
        require((x.array() == 0.0 || x.array() == 1.0).all(),
                "basis-selection state entries must be 0 or 1");
    }

    int k_;
    S3Denominator denom_;
    std::vector<Vector> states_;
};

} // namespace streamnmf
