#pragma once

#include "streamnmf/estimation.hpp"
#include "streamnmf/observation_model.hpp"

#include <span>
#include <vector>

namespace streamnmf {

/// One SMC sample: a state together with its forward-smoothing functionals
/// and its log-weight.
struct Particle {
    Vector x;  // K
    Vector T1; // K
    Matrix C;  // M x K
    Vector T3; // J
    double logw = 0.0;
};

/// 1 / sum w_i^2 for a normalised weight vector; N when uniform, 1 when
/// degenerate.
inline double effective_sample_size(const Vector& weights) {
    require((weights.array() >= 0.0).all(), "ess: weights must be nonnegative");
    require(std::abs(weights.sum() - 1.0) <= 1e-9, "ess: weights must sum to one");
    return 1.0 / weights.squaredNorm();
}

/// Systematic resampling: one uniform stratifies N equally spaced positions
/// through the weight CDF. Multiplicity of index i is always within 1 of
/// N * w_i.
inline std::vector<Eigen::Index> systematic_resample(const Vector& weights, Rng& rng) {
    const Eigen::Index n = weights.size();
    require(n >= 1, "systematic_resample: empty weight vector");
    require((weights.array() >= 0.0).all(), "systematic_resample: negative weight");
    require(std::abs(weights.sum() - 1.0) <= 1e-9, "systematic_resample: weights must sum to one");
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double u = uni(rng) / static_cast<double>(n);
    std::vector<Eigen::Index> idx(static_cast<size_t>(n));
    Eigen::Index j = 0;
    double cum = weights(0);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double pos = u + static_cast<double>(i) / static_cast<double>(n);
        while (cum < pos && j + 1 < n) cum += weights(++j);
        idx[static_cast<size_t>(i)] = j;
    }
    return idx;
}

/// SMC approximation of the backward kernel: probability that particle j is
/// the ancestor of a particle at x_new, proportional to w_j f_psi(x_new|x_j).
template <StateProcess P>
Vector particle_backward_kernel(const P& model, const typename P::Params& psi,
                                std::span<const Vector> prev_states, const Vector& prev_weights,
                                const Vector& x_new) {
    require(static_cast<Eigen::Index>(prev_states.size()) == prev_weights.size(),
            "particle_backward_kernel: size mismatch");
    Vector unnorm(prev_weights.size());
    for (Eigen::Index j = 0; j < prev_weights.size(); ++j) {
        unnorm(j) = prev_weights(j) *
                    std::exp(model.transition_logdensity(psi, prev_states[static_cast<size_t>(j)],
                                                         x_new));
    }
    const double z = unnorm.sum();
    if (!(z > 0.0))
        throw numeric_underflow_error("particle_backward_kernel: zero normaliser");
    return unnorm / z;
}

/// Bootstrap proposal: states are proposed from the model's own initial and
/// transition laws, so the f/q weight correction is identically zero and the
/// weight increment reduces to the observation log-likelihood.
struct BootstrapProposal {
    template <StateProcess P>
    std::pair<Vector, double> propose_initial(const P& model, const typename P::Params& psi,
                                              Rng& rng) const {
        return {model.sample_initial(psi, rng), 0.0};
    }
    template <StateProcess P>
    std::pair<Vector, double> propose(const P& model, const typename P::Params& psi,
                                      const Vector& x_prev, Rng& rng) const {
        return {model.sample_transition(psi, x_prev, rng), 0.0};
    }
};

struct SmcOptions {
    /// Resample after every step (the default) or only when
    /// ESS < ess_threshold * N. A threshold of 0 disables resampling.
    bool resample_every_step = true;
    double ess_threshold = 0.5;
    /// Route the functional recursions through the O(N^2) backward-kernel
    /// estimator instead of ancestral inheritance.
    bool use_backward_kernel = false;
};

/// Particle online EM: per-particle functional recursions, pre-resampling
/// M-step statistics, and systematic resampling. A proposal hook replaces
/// the bootstrap kernel when a smarter proposal is available.
template <StateProcess P, typename Proposal = BootstrapProposal>
class SmcOnlineEm {
  public:
    SmcOnlineEm(const P& model, Theta<P> theta0, StepSizeSchedule schedule, long burn_in,
                int n_particles, std::uint64_t seed, EmOptions opts = {}, SmcOptions smc = {},
                Proposal proposal = {})
        : model_(&model), theta_(std::move(theta0)), schedule_(schedule), burn_in_(burn_in),
          n_(n_particles), rng_(seed), opts_(opts), smc_(smc), proposal_(std::move(proposal)) {
        require(n_particles >= 2, "SMC needs at least two particles");
        require(burn_in >= 1, "burn-in must be at least 1");
        require(theta_.B.cols() == model.dim(), "B column count must equal K");
    }

    long t() const { return t_; }
    const Theta<P>& theta() const { return theta_; }
    const std::vector<Particle>& particles() const { return particles_; }
    const Vector& weights() const { return weights_; }
    const Vector& prev_observation() const { return y_prev_; }
    const SuffStats& stats() const { return stats_; }
    long long degenerate_intensity_hits() const { return degenerate_hits_; }

    /// Full Algorithm-1 step: E-step, pre-resampling M-step statistics,
    /// parameter update past burn-in, then resampling per policy.
    const Theta<P>& step(const Vector& y) {
        const long next_t = t_ + 1;
        if (next_t == 1) {
            initialise(y);
        } else {
            propagate(y);
        }
        stats_ = mstep_stats(y);
        if (t_ >= burn_in_) {
            if (opts_.estimate_B) theta_.B = mstep_B(stats_.S1, stats_.S2, theta_.B);
            if (opts_.estimate_psi) theta_.psi = mstep_psi(*model_, stats_.S3, theta_.psi);
        }
        maybe_resample();
        return theta_;
    }

    /// t = 1 E-step: propose from the initial proposal, weight by
    /// mu g / q, start the functionals at gamma_1 (x, s3_init) with C = 0.
    void initialise(const Vector& y) {
        require(t_ == 0, "initialise called twice");
        t_ = 1;
        const double gamma1 = schedule_.at(1);
        particles_.assign(static_cast<size_t>(n_), Particle{});
        Vector logw(n_);
        for (int i = 0; i < n_; ++i) {
            Particle& pt = particles_[static_cast<size_t>(i)];
            auto [x, correction] = proposal_.propose_initial(*model_, theta_.psi, rng_);
            pt.x = std::move(x);
            pt.T1 = gamma1 * pt.x;
            pt.C = Matrix::Zero(theta_.B.rows(), theta_.B.cols());
            pt.T3 = gamma1 * model_->s3_initial(pt.x);
            pt.logw = correction + observation_loglik(theta_.B, pt.x, y);
            logw(i) = pt.logw;
        }
        normalize_weights(logw, "degenerate initialisation: all particle weights vanished");
        y_prev_ = y;
    }

    /// t >= 2 E-step, leaving the particle set in its pre-resampling state.
    void propagate(const Vector& y) {
        require(t_ >= 1, "propagate before initialise");
        t_ += 1;
        const double gamma_t = schedule_.at(t_);
        const double gamma_prev = schedule_.at(t_ - 1);
        const double carry = 1.0 - gamma_t;

        if (smc_.use_backward_kernel) {
            propagate_backward_kernel(y, gamma_t, gamma_prev, carry);
            y_prev_ = y;
            return;
        }

        Vector logw(n_);
        for (int i = 0; i < n_; ++i) {
            Particle& pt = particles_[static_cast<size_t>(i)];
            pt.C *= carry;
            add_allocation_scaled(theta_.B, pt.x, y_prev_, carry * gamma_prev, pt.C,
                                  &degenerate_hits_);
            auto [x_new, correction] = proposal_.propose(*model_, theta_.psi, pt.x, rng_);
            pt.T1 = carry * pt.T1 + gamma_t * x_new;
            pt.T3 = carry * pt.T3 + gamma_t * model_->s3_pair(pt.x, x_new);
            pt.x = std::move(x_new);
            pt.logw += correction + observation_loglik(theta_.B, pt.x, y);
            logw(i) = pt.logw;
        }
        normalize_weights(logw, "particle collapse: all weights vanished after update");
        y_prev_ = y;
    }

    /// Weighted pre-resampling statistics feeding the M-step.
    SuffStats mstep_stats(const Vector& y) const {
        const double gamma_t = schedule_.at(t_);
        SuffStats out{Vector::Zero(model_->dim()),
                      Matrix::Zero(theta_.B.rows(), theta_.B.cols()),
                      Vector::Zero(model_->s3_dim())};
        for (int i = 0; i < n_; ++i) {
            const Particle& pt = particles_[static_cast<size_t>(i)];
            const double w = weights_(i);
            out.S1 += w * pt.T1;
            out.S2 += w * pt.C;
            add_allocation_scaled(theta_.B, pt.x, y, w * gamma_t, out.S2, &degenerate_hits_);
            out.S3 += w * pt.T3;
        }
        return out;
    }

    double ess() const { return effective_sample_size(weights_); }

    void maybe_resample() {
        bool do_it = smc_.resample_every_step;
        if (!do_it && smc_.ess_threshold > 0.0)
            do_it = ess() < smc_.ess_threshold * static_cast<double>(n_);
        if (do_it) resample();
    }

    void resample() {
        const std::vector<Eigen::Index> idx = systematic_resample(weights_, rng_);
        std::vector<Particle> next;
        next.reserve(static_cast<size_t>(n_));
        const double logw = -std::log(static_cast<double>(n_));
        for (Eigen::Index source : idx) {
            next.push_back(particles_[static_cast<size_t>(source)]);
            next.back().logw = logw;
        }
        particles_ = std::move(next);
        weights_ = Vector::Constant(n_, 1.0 / static_cast<double>(n_));
    }

  private:
    void propagate_backward_kernel(const Vector& y, double gamma_t, double gamma_prev,
                                   double carry) {
        // carried functionals of every previous particle
        std::vector<Vector> prev_x(static_cast<size_t>(n_));
        std::vector<Vector> carried_t1(static_cast<size_t>(n_));
        std::vector<Matrix> carried_c(static_cast<size_t>(n_));
        std::vector<Vector> carried_t3(static_cast<size_t>(n_));
        for (int j = 0; j < n_; ++j) {
            const Particle& pt = particles_[static_cast<size_t>(j)];
            prev_x[static_cast<size_t>(j)] = pt.x;
            carried_t1[static_cast<size_t>(j)] = carry * pt.T1;
            Matrix c = carry * pt.C;
            add_allocation_scaled(theta_.B, pt.x, y_prev_, carry * gamma_prev, c,
                                  &degenerate_hits_);
            carried_c[static_cast<size_t>(j)] = std::move(c);
            carried_t3[static_cast<size_t>(j)] = carry * pt.T3;
        }

        Vector logw(n_);
        std::vector<Particle> next(static_cast<size_t>(n_));
        for (int i = 0; i < n_; ++i) {
            const Particle& parent = particles_[static_cast<size_t>(i)];
            auto [x_new, correction] = proposal_.propose(*model_, theta_.psi, parent.x, rng_);
            Vector bk = particle_backward_kernel(*model_, theta_.psi,
                                                 std::span<const Vector>(prev_x), weights_,
                                                 x_new);
            Particle& pt = next[static_cast<size_t>(i)];
            pt.T1 = gamma_t * x_new;
            pt.C = Matrix::Zero(theta_.B.rows(), theta_.B.cols());
            pt.T3 = Vector::Zero(model_->s3_dim());
            for (int j = 0; j < n_; ++j) {
                const double b = bk(j);
                if (b == 0.0) continue;
                pt.T1 += b * carried_t1[static_cast<size_t>(j)];
                pt.C += b * carried_c[static_cast<size_t>(j)];
                pt.T3 += b * (carried_t3[static_cast<size_t>(j)] +
                              gamma_t * model_->s3_pair(prev_x[static_cast<size_t>(j)], x_new));
            }
            pt.x = std::move(x_new);
            pt.logw = parent.logw + correction + observation_loglik(theta_.B, pt.x, y);
            logw(i) = pt.logw;
        }
        particles_ = std::move(next);
        normalize_weights(logw, "particle collapse: all weights vanished after update");
    }

    // Particle logw fields keep the raw accumulated log-weights (so weight
    // increments stay observable); weights_ holds the normalised vector.
    void normalize_weights(const Vector& logw, const char* what) {
        try {
            weights_ = normalized_exp(logw);
        } catch (const numeric_underflow_error&) {
            throw particle_collapse_error(what);
        }
    }

    const P* model_;
    Theta<P> theta_;
    StepSizeSchedule schedule_;
    long burn_in_;
    int n_;
    Rng rng_;
    EmOptions opts_;
    SmcOptions smc_;
    Proposal proposal_;
    long t_ = 0;
    std::vector<Particle> particles_;
    Vector weights_;
    Vector y_prev_;
    SuffStats stats_;
    mutable long long degenerate_hits_ = 0;
};

} // namespace streamnmf
