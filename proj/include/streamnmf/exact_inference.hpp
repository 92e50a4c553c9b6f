#pragma once

#include "streamnmf/estimation.hpp"
#include "streamnmf/observation_model.hpp"

#include <span>
#include <vector>

namespace streamnmf {

/// Exact filtering posterior over an enumerated state space together with
/// the per-state forward-smoothing functionals. C is stored flattened, one
/// row per state, entry (m,k) at column m*K + k.
struct FilterState {
    long t = 0;
    Vector probs;          // S
    Matrix T1;             // S x K
    Matrix C;              // S x (M*K)
    Matrix T3;             // S x J
    double log_evidence = 0.0;
};

/// Coefficients of one forward-smoothing update:
///   T1' = carry * BK T1 + stat_scale * x'
///   T3' = sum_x BK(x'|x) (carry * T3(x) + stat_scale * s3(x, x'))
///   C'  = sum_x BK(x'|x) (carry * C(x)  + alloc_scale * E[Z_{t-1} | x, y_{t-1}])
/// Batch smoothing uses (1, 1, 1); the online stochastic approximation uses
/// carry = 1 - gamma_t, stat_scale = gamma_t, alloc_scale = (1-gamma_t) * gamma_{t-1}
/// (the allocation term of step t-1 joins the running average one step late).
struct SmoothingWeights {
    double carry = 1.0;
    double stat_scale = 1.0;
    double alloc_scale = 1.0;

    static SmoothingWeights batch() { return {1.0, 1.0, 1.0}; }
    static SmoothingWeights online(double gamma_t, double gamma_prev) {
        return {1.0 - gamma_t, gamma_t, (1.0 - gamma_t) * gamma_prev};
    }
};

/// Exact inference for a finite-enumerable state process: HMM filtering on
/// the (X, Y) chain, backward-kernel smoothing functional recursions, and
/// sufficient-statistic extraction. The joint transition matrix and the
/// per-state observation intensities are tabulated once per theta update.
template <FiniteStateProcess P>
class ExactInference {
  public:
    ExactInference(const P& model, Eigen::Index obs_rows)
        : model_(&model), rows_(obs_rows), states_(model.state_count()) {
        const int k = model.dim();
        const int j = model.s3_dim();
        state_table_.resize(states_, k);
        log_mu_.resize(states_);
        s3_init_table_.resize(states_, j);
        for (Eigen::Index s = 0; s < states_; ++s) {
            state_table_.row(s) = model.state(s).transpose();
            s3_init_table_.row(s) = model.s3_initial(model.state(s)).transpose();
        }
        // s3 pair tables, transposed so rowwise reductions run over new states
        s3_pair_t_.assign(static_cast<size_t>(j), Matrix(states_, states_));
        for (Eigen::Index from = 0; from < states_; ++from) {
            for (Eigen::Index to = 0; to < states_; ++to) {
                Vector s3 = model.s3_pair(model.state(from), model.state(to));
                for (int d = 0; d < j; ++d) s3_pair_t_[static_cast<size_t>(d)](to, from) = s3(d);
            }
        }
    }

    const P& model() const { return *model_; }
    Eigen::Index state_count() const { return states_; }
    Eigen::Index obs_rows() const { return rows_; }
    const Matrix& state_table() const { return state_table_; }
    long long degenerate_intensity_hits() const { return degenerate_hits_; }

    /// Installs theta, rebuilding the transition table when psi changed and
    /// the intensity tables when B changed.
    void set_theta(const Theta<P>& theta) {
        require(theta.B.rows() == rows_ && theta.B.cols() == model_->dim(),
                "ExactInference: B has wrong shape");
        if (!psi_set_ || !(theta.psi == psi_)) {
            psi_ = theta.psi;
            psi_set_ = true;
            rebuild_transitions();
        }
        if (B_.size() == 0 || B_ != theta.B) {
            B_ = theta.B;
            rebuild_intensities();
        }
    }

    const Matrix& transition_matrix() const { return trans_; }
    const Matrix& B() const { return B_; }

    /// t = 1: posterior proportional to mu(x) g_B(y|x); functionals start at
    /// gamma1 * (x, s3_init(x)) with C = 0  (gamma1 = 1 in batch mode).
    FilterState init(const Vector& y, double gamma1 = 1.0) const {
        FilterState fs;
        fs.t = 1;
        Vector logun = log_mu_ + loglik_all_states(y);
        double lse = 0.0;
        fs.probs = normalized_exp(logun, &lse);
        fs.log_evidence = lse;
        fs.T1 = gamma1 * state_table_;
        fs.T3 = gamma1 * s3_init_table_;
        fs.C = Matrix::Zero(states_, rows_ * model_->dim());
        return fs;
    }

    /// Advances the filter one step: probs'(x') prop g_B(y|x') sum_x f(x'|x) probs(x).
    void filter_step(FilterState& fs, const Vector& y) const {
        Vector pred = trans_.transpose() * fs.probs;
        Vector logun = pred.unaryExpr(&scalar_log) + loglik_all_states(y);
        double lse = 0.0;
        fs.probs = normalized_exp(logun, &lse);
        fs.log_evidence += lse;
        fs.t += 1;
    }

    /// p(x_{t-1} = . | x_t = new_state, y_{1:t-1}), proportional to
    /// prev_probs(x) f(new|x).
    Vector backward_kernel(const Vector& prev_probs, Eigen::Index new_state) const {
        require(prev_probs.size() == states_, "backward_kernel: bad filter size");
        Vector unnorm = prev_probs.cwiseProduct(trans_.col(new_state));
        const double z = unnorm.sum();
        if (!(z > 0.0))
            throw numeric_underflow_error("backward_kernel: state is unreachable");
        return unnorm / z;
    }

    /// Full backward kernel, BK(new, old); rows of unreachable states are zero.
    Matrix backward_kernel_matrix(const Vector& prev_probs) const {
        Matrix weighted = prev_probs.asDiagonal() * trans_; // (old, new)
        Vector pred = weighted.colwise().sum().transpose();
        Matrix bk = weighted.transpose();
        for (Eigen::Index s = 0; s < states_; ++s) {
            if (pred(s) > 0.0)
                bk.row(s) /= pred(s);
            else
                bk.row(s).setZero();
        }
        return bk;
    }

    /// One combined smoothing + filtering update. `fs` holds time t-1 with
    /// its functionals; y_prev is the observation that produced it and y the
    /// new observation.
    void smoothing_step(FilterState& fs, const Vector& y_prev, const Vector& y,
                        const SmoothingWeights& w) const {
        const Matrix bk = backward_kernel_matrix(fs.probs);

        fs.T1 = w.carry * (bk * fs.T1) + w.stat_scale * state_table_;

        Matrix t3_new(states_, model_->s3_dim());
        for (int d = 0; d < model_->s3_dim(); ++d) {
            t3_new.col(d) = w.carry * (bk * fs.T3.col(d)) +
                            w.stat_scale * bk.cwiseProduct(s3_pair_t_[static_cast<size_t>(d)])
                                               .rowwise()
                                               .sum();
        }
        fs.T3 = std::move(t3_new);

        fs.C = bk * (w.carry * fs.C + w.alloc_scale * allocation_table(y_prev));

        filter_step(fs, y);
    }

    /// Filter-weighted means of the functionals; the S2 component adds the
    /// current observation's allocation mean with weight `current_weight`
    /// (1 in batch mode, gamma_t online).
    SuffStats extract_suffstats(const FilterState& fs, const Vector& y,
                                double current_weight) const {
        SuffStats out;
        out.S1 = fs.T1.transpose() * fs.probs;
        out.S3 = fs.T3.transpose() * fs.probs;
        Vector s2_flat =
            (fs.C + current_weight * allocation_table(y)).transpose() * fs.probs;
        out.S2 = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                Eigen::RowMajor>>(
            s2_flat.data(), rows_, model_->dim());
        return out;
    }

  private:
    /// Row s = flattened E[Z | state s, y] under the current B, with the
    /// zero-intensity guard.
    Matrix allocation_table(const Vector& y) const {
        Matrix table(states_, rows_ * model_->dim());
        for (Eigen::Index s = 0; s < states_; ++s) {
            Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> a =
                allocation_posterior_mean_guarded(B_, model_->state(s), y,
                                                  &degenerate_hits_);
            table.row(s) = Eigen::Map<const RowVector>(a.data(), a.size());
        }
        return table;
    }

    Vector loglik_all_states(const Vector& y) const {
        require(y.size() == rows_, "observation has wrong length");
        require(is_count_vector(y), "observation entries must be nonnegative integers");
        double lg = 0.0;
        for (Eigen::Index m = 0; m < rows_; ++m) lg += log_factorial(y(m));
        Vector g = Vector::Constant(states_, -lg);
        g -= intensity_.rowwise().sum();
        for (Eigen::Index m = 0; m < rows_; ++m) {
            if (y(m) > 0.0) g += y(m) * log_intensity_.col(m);
        }
        return g;
    }

    void rebuild_transitions() {
        trans_.resize(states_, states_);
        for (Eigen::Index from = 0; from < states_; ++from) {
            for (Eigen::Index to = 0; to < states_; ++to) {
                trans_(from, to) = std::exp(
                    model_->transition_logdensity(psi_, model_->state(from), model_->state(to)));
            }
        }
        log_mu_.resize(states_);
        for (Eigen::Index s = 0; s < states_; ++s) {
            log_mu_(s) = model_->initial_logdensity(psi_, model_->state(s));
        }
    }

    void rebuild_intensities() {
        intensity_ = state_table_ * B_.transpose(); // (state, m)
        log_intensity_ = intensity_.unaryExpr(
            [](double v) { return v > 0.0 ? std::log(v) : kNegInf; });
    }

    const P* model_;
    Eigen::Index rows_;
    Eigen::Index states_;
    Matrix state_table_;   // S x K
    Matrix s3_init_table_; // S x J
    std::vector<Matrix> s3_pair_t_;
    typename P::Params psi_{};
    bool psi_set_ = false;
    Matrix trans_; // (from, to)
    Vector log_mu_;
    Matrix B_;
    Matrix intensity_;     // S x M
    Matrix log_intensity_; // S x M
    mutable long long degenerate_hits_ = 0;
};

/// sum_t log p(y_t | y_{1:t-1}) from the filter normalisers.
template <FiniteStateProcess P>
double marginal_loglik(const P& model, const Theta<P>& theta, std::span<const Vector> ys) {
    require(!ys.empty(), "marginal_loglik: empty observation sequence");
    ExactInference<P> engine(model, theta.B.rows());
    engine.set_theta(theta);
    FilterState fs = engine.init(ys[0]);
    for (size_t t = 1; t < ys.size(); ++t) engine.filter_step(fs, ys[t]);
    return fs.log_evidence;
}

/// One batch EM sweep: forward smoothing over the whole sequence, then the
/// M-step. Returns the updated theta and the marginal log-likelihood of the
/// theta that produced the smoothed statistics.
template <FiniteStateProcess P>
std::pair<Theta<P>, double> batch_em_iteration(const P& model, const Theta<P>& theta,
                                               std::span<const Vector> ys,
                                               const EmOptions& opts = {}) {
    require(!ys.empty(), "batch_em_iteration: empty observation sequence");
    ExactInference<P> engine(model, theta.B.rows());
    engine.set_theta(theta);
    FilterState fs = engine.init(ys[0]);
    for (size_t t = 1; t < ys.size(); ++t) {
        engine.smoothing_step(fs, ys[t - 1], ys[t], SmoothingWeights::batch());
    }
    SuffStats stats = engine.extract_suffstats(fs, ys.back(), 1.0);
    Theta<P> next = theta;
    if (opts.estimate_B) next.B = mstep_B(stats.S1, stats.S2, theta.B);
    if (opts.estimate_psi) next.psi = mstep_psi(model, stats.S3, theta.psi);
    return {std::move(next), fs.log_evidence};
}

/// Exact-smoothing expectations by explicit enumeration of all state paths;
/// the ground-truth oracle for the forward recursions. Refuses instances
/// with more than `max_paths` paths.
template <FiniteStateProcess P>
std::pair<SuffStats, double> brute_force_smoothed_stats(const P& model, const Theta<P>& theta,
                                                        std::span<const Vector> ys,
                                                        double max_paths = 1e7) {
    require(!ys.empty(), "brute_force_smoothed_stats: empty observation sequence");
    const Eigen::Index s_count = model.state_count();
    const size_t horizon = ys.size();
    const double path_count = std::pow(static_cast<double>(s_count),
                                       static_cast<double>(horizon));
    require(path_count <= max_paths, "brute_force_smoothed_stats: instance too large");

    const Eigen::Index m_rows = theta.B.rows();
    const int k = model.dim();
    const int j = model.s3_dim();

    // tables
    Matrix g(s_count, horizon);
    std::vector<std::vector<Matrix>> alloc(static_cast<size_t>(s_count));
    Vector log_mu(s_count);
    Matrix log_f(s_count, s_count);
    std::vector<Vector> s3_init(static_cast<size_t>(s_count));
    std::vector<std::vector<Vector>> s3_pair(static_cast<size_t>(s_count));
    for (Eigen::Index s = 0; s < s_count; ++s) {
        const Vector& xs = model.state(s);
        log_mu(s) = model.initial_logdensity(theta.psi, xs);
        s3_init[static_cast<size_t>(s)] = model.s3_initial(xs);
        alloc[static_cast<size_t>(s)].reserve(horizon);
        for (size_t t = 0; t < horizon; ++t) {
            g(s, t) = observation_loglik(theta.B, xs, ys[t]);
            alloc[static_cast<size_t>(s)].push_back(
                allocation_posterior_mean_guarded(theta.B, xs, ys[t]));
        }
        s3_pair[static_cast<size_t>(s)].resize(static_cast<size_t>(s_count));
        for (Eigen::Index s2 = 0; s2 < s_count; ++s2) {
            log_f(s, s2) = model.transition_logdensity(theta.psi, xs, model.state(s2));
            s3_pair[static_cast<size_t>(s)][static_cast<size_t>(s2)] =
                model.s3_pair(xs, model.state(s2));
        }
    }

    std::vector<Eigen::Index> path(horizon, 0);
    auto path_logweight = [&]() {
        double lw = log_mu(path[0]) + g(path[0], 0);
        for (size_t t = 1; t < horizon; ++t) lw += log_f(path[t - 1], path[t]) + g(path[t], t);
        return lw;
    };
    auto advance = [&]() {
        for (size_t d = 0; d < horizon; ++d) {
            if (++path[d] < s_count) return true;
            path[d] = 0;
        }
        return false;
    };

    double max_lw = kNegInf;
    do {
        max_lw = std::max(max_lw, path_logweight());
    } while (advance());
    if (!std::isfinite(max_lw))
        throw numeric_underflow_error("brute force: all paths have zero probability");

    double norm = 0.0;
    double total_w_logw = 0.0;
    SuffStats acc{Vector::Zero(k), Matrix::Zero(m_rows, k), Vector::Zero(j)};
    std::fill(path.begin(), path.end(), 0);
    do {
        const double lw = path_logweight();
        const double w = std::exp(lw - max_lw);
        if (w == 0.0) continue;
        norm += w;
        total_w_logw += w;
        Vector s1 = model.state(path[0]);
        Matrix s2 = alloc[static_cast<size_t>(path[0])][0];
        Vector s3 = s3_init[static_cast<size_t>(path[0])];
        for (size_t t = 1; t < horizon; ++t) {
            s1 += model.state(path[t]);
            s2 += alloc[static_cast<size_t>(path[t])][t];
            s3 += s3_pair[static_cast<size_t>(path[t - 1])][static_cast<size_t>(path[t])];
        }
        acc.S1 += w * s1;
        acc.S2 += w * s2;
        acc.S3 += w * s3;
    } while (advance());

    acc.S1 /= norm;
    acc.S2 /= norm;
    acc.S3 /= norm;
    return {std::move(acc), max_lw + std::log(norm)};
}

/// Single-pass online EM with exact per-state functional recursions.
/// Statistics and functionals accumulate from the first observation; the
/// M-step fires only once t >= burn_in.
template <FiniteStateProcess P>
class ExactOnlineEm {
  public:
    ExactOnlineEm(const P& model, Theta<P> theta0, StepSizeSchedule schedule, long burn_in,
                  EmOptions opts = {})
        : engine_(model, theta0.B.rows()), theta_(std::move(theta0)), schedule_(schedule),
          burn_in_(burn_in), opts_(opts) {
        require(burn_in >= 1, "burn-in must be at least 1");
    }

    long t() const { return t_; }
    const Theta<P>& theta() const { return theta_; }
    const FilterState& filter() const { return fs_; }
    const SuffStats& stats() const { return stats_; }
    const ExactInference<P>& engine() const { return engine_; }

    /// Consumes y_t, updates functionals and statistics, and (past burn-in)
    /// re-estimates theta. Returns the post-step parameter estimate.
    const Theta<P>& step(const Vector& y) {
        ++t_;
        engine_.set_theta(theta_);
        const double gamma_t = schedule_.at(t_);
        if (t_ == 1) {
            fs_ = engine_.init(y, gamma_t);
        } else {
            engine_.smoothing_step(fs_, y_prev_, y,
                                   SmoothingWeights::online(gamma_t, schedule_.at(t_ - 1)));
        }
        stats_ = engine_.extract_suffstats(fs_, y, gamma_t);
        y_prev_ = y;
        if (t_ >= burn_in_) {
            if (opts_.estimate_B) theta_.B = mstep_B(stats_.S1, stats_.S2, theta_.B);
            if (opts_.estimate_psi)
                theta_.psi = mstep_psi(engine_.model(), stats_.S3, theta_.psi);
        }
        return theta_;
    }

  private:
    ExactInference<P> engine_;
    Theta<P> theta_;
    StepSizeSchedule schedule_;
    long burn_in_;
    EmOptions opts_;
    long t_ = 0;
    FilterState fs_;
    SuffStats stats_;
    Vector y_prev_;
};

} // namespace streamnmf
