#pragma once

#include "streamnmf/common.hpp"

#include <concepts>
#include <vector>

namespace streamnmf {

// A state process supplies the Markov law of {X_t}: an initial sampler and
// density, a transition sampler and density, the per-transition statistic
// s3 whose smoothed sum drives the psi M-step, and the maximiser mapping
// that statistic back to psi. Parameters are passed explicitly so a single
// model object can serve a whole estimation run while psi evolves.

template <typename P>
concept StateProcess = requires(const P& proc, const typename P::Params& psi, const Vector& x,
                                const Vector& x2, const Vector& s3, Rng& rng) {
    typename P::Params;
    { proc.dim() } -> std::convertible_to<int>;
    { proc.s3_dim() } -> std::convertible_to<int>;
    { proc.sample_initial(psi, rng) } -> std::same_as<Vector>;
    { proc.initial_logdensity(psi, x) } -> std::convertible_to<double>;
    { proc.sample_transition(psi, x, rng) } -> std::same_as<Vector>;
    { proc.transition_logdensity(psi, x, x2) } -> std::convertible_to<double>;
    { proc.s3_initial(x) } -> std::same_as<Vector>;
    { proc.s3_pair(x, x2) } -> std::same_as<Vector>;
    { proc.maximise(s3, psi) } -> std::same_as<typename P::Params>;
};

/// A process whose state space can be enumerated; required for exact
/// filtering and the path-enumeration oracle.
template <typename P>
concept FiniteStateProcess = StateProcess<P> && P::finite_enumerable && requires(const P& proc) {
    { proc.state_count() } -> std::convertible_to<Eigen::Index>;
    { proc.state(Eigen::Index{}) } -> std::convertible_to<const Vector&>;
};

/// All 2^K binary vectors in lexicographic order; index i is the binary
/// expansion of i with coordinate 0 as the most significant bit.
inline std::vector<Vector> enumerate_states(int k, int cap = 20) {
    require(k >= 1, "enumerate_states: K must be positive");
    require(k <= cap, "enumerate_states: K exceeds enumeration cap");
    const Eigen::Index n = Eigen::Index{1} << k;
    std::vector<Vector> states(n, Vector::Zero(k));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int bit = 0; bit < k; ++bit) {
            states[i](bit) = static_cast<double>((i >> (k - 1 - bit)) & 1);
        }
    }
    return states;
}

} // namespace streamnmf
