#pragma once

#include "streamnmf/exact_inference.hpp"
#include "streamnmf/smc_inference.hpp"

#include <deque>
#include <memory>

namespace streamnmf {

/// Pull interface over an observation stream; yields M-vectors of counts in
/// order, end signalled by nullopt. Implementations must not require the
/// whole stream in memory.
class ObservationSource {
  public:
    virtual ~ObservationSource() = default;
    virtual std::optional<Vector> next() = 0;
};

class MemoryObservationSource final : public ObservationSource {
  public:
    explicit MemoryObservationSource(std::vector<Vector> ys) : ys_(std::move(ys)) {}
    std::optional<Vector> next() override {
        if (pos_ >= ys_.size()) return std::nullopt;
        return ys_[pos_++];
    }

  private:
    std::vector<Vector> ys_;
    size_t pos_ = 0;
};

enum class InferenceEngine { exact, smc };

struct OnlineRunConfig {
    InferenceEngine engine = InferenceEngine::exact;
    StepSizeSchedule schedule{0.8};
    long burn_in = 100;
    int particles = 1000;
    std::uint64_t seed = 0;
    EmOptions estimate{};
    long trace_every = 100;
    SmcOptions smc{};
    bool record_stats = false;
};

struct BatchRunConfig {
    long iters = 50;
    double tol = 1e-8;
    std::uint64_t seed = 0;
    EmOptions estimate{};
};

/// Optional explicit starting values; anything left unset is drawn by the
/// default initialiser.
template <StateProcess P>
struct InitOverrides {
    std::optional<Matrix> B;
    std::optional<typename P::Params> psi;
};

namespace detail {

/// Default B start: i.i.d. uniform on [0.5 b, 1.5 b] where b scales the mean
/// observed count to a state with half its coordinates active.
inline Matrix draw_initial_B(Eigen::Index m_rows, int k, const std::deque<Vector>& warmup,
                             std::uint64_t seed) {
    require(!warmup.empty(), "cannot initialise B from an empty stream");
    double total = 0.0;
    for (const Vector& y : warmup) total += y.sum();
    const double mean_count =
        total / (static_cast<double>(warmup.size()) * static_cast<double>(m_rows));
    const double scale = mean_count / (static_cast<double>(k) / 2.0);
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> uni(0.5 * scale, 1.5 * scale);
    Matrix b(m_rows, k);
    for (Eigen::Index r = 0; r < m_rows; ++r)
        for (Eigen::Index c = 0; c < k; ++c) b(r, c) = std::max(uni(rng), kBasisFloor);
    return b;
}

template <StateProcess P>
Theta<P> initial_theta(Eigen::Index m_rows, const P& model, const std::deque<Vector>& warmup,
                       std::uint64_t seed, const InitOverrides<P>& init) {
    Theta<P> theta;
    theta.psi = init.psi.value_or(typename P::Params{});
    theta.B = init.B ? *init.B : draw_initial_B(m_rows, model.dim(), warmup, seed);
    require(theta.B.rows() == m_rows && theta.B.cols() == model.dim(),
            "initial B has wrong shape");
    require((theta.B.array() >= 0.0).all(), "initial B must be nonnegative");
    return theta;
}

} // namespace detail

/// One pass of online EM over a stream, snapshotting theta every
/// `trace_every` steps (plus the first and last step). Snapshots record the
/// post-M-step estimate.
template <StateProcess P>
EstimateTrace<P> run_online(const P& model, Eigen::Index obs_rows, ObservationSource& stream,
                            const OnlineRunConfig& config, InitOverrides<P> init = {}) {
    require(config.trace_every >= 1, "trace_every must be positive");

    // Warm-up buffer: sizes the default B initialiser; the buffered
    // observations are then replayed through the engine like any others.
    std::deque<Vector> buffer;
    const bool need_warmup = !init.B.has_value();
    for (long i = 0; i < 100; ++i) {
        std::optional<Vector> y = stream.next();
        if (!y) break;
        require(y->size() == obs_rows, "observation has wrong length");
        buffer.push_back(std::move(*y));
        if (!need_warmup) break; // one row is enough to prime the loop
    }
    require(!buffer.empty(), "empty observation stream");

    Theta<P> theta0 = detail::initial_theta(obs_rows, model, buffer, config.seed, init);

    auto pull = [&]() -> std::optional<Vector> {
        if (!buffer.empty()) {
            Vector y = std::move(buffer.front());
            buffer.pop_front();
            return y;
        }
        return stream.next();
    };

    EstimateTrace<P> trace;
    auto snapshot = [&](long t, const Theta<P>& th, const SuffStats* stats) {
        TraceEntry<P> entry;
        entry.t = t;
        entry.theta = th;
        if (config.record_stats && stats) entry.stats = *stats;
        trace.push_back(std::move(entry));
    };

    auto drive = [&](auto& engine) {
        long t = 0;
        while (std::optional<Vector> y = pull()) {
            const Theta<P>& th = engine.step(*y);
            t = engine.t();
            if (t == 1 || t % config.trace_every == 0)
                snapshot(t, th, &engine.stats());
        }
        require(t >= 1, "empty observation stream");
        if (trace.empty() || trace.back().t != t)
            snapshot(t, engine.theta(), &engine.stats());
    };

    if (config.engine == InferenceEngine::exact) {
        if constexpr (FiniteStateProcess<P>) {
            ExactOnlineEm<P> engine(model, theta0, config.schedule, config.burn_in,
                                    config.estimate);
            drive(engine);
        } else {
            throw std::invalid_argument(
                "exact engine requires a finite-enumerable state process");
        }
    } else {
        SmcOnlineEm<P> engine(model, theta0, config.schedule, config.burn_in, config.particles,
                              config.seed, config.estimate, config.smc);
        drive(engine);
    }
    return trace;
}

/// Batch EM driver. Entry 0 of the trace is theta0; entry i >= 1 records the
/// parameters after i EM sweeps together with the marginal log-likelihood of
/// the parameters that sweep started from. Stops when |delta loglik| <= tol.
template <FiniteStateProcess P>
EstimateTrace<P> run_batch(const P& model, Eigen::Index obs_rows, std::span<const Vector> ys,
                           const BatchRunConfig& config, InitOverrides<P> init = {}) {
    require(!ys.empty(), "empty observation sequence");
    std::deque<Vector> warmup;
    for (size_t i = 0; i < ys.size() && i < 100; ++i) warmup.push_back(ys[i]);
    Theta<P> theta = detail::initial_theta(obs_rows, model, warmup, config.seed, init);

    EstimateTrace<P> trace;
    trace.push_back(TraceEntry<P>{0, theta, std::nullopt, std::nullopt});

    double prev_loglik = std::numeric_limits<double>::infinity();
    for (long i = 1; i <= config.iters; ++i) {
        auto [next, loglik] = batch_em_iteration(model, theta, ys, config.estimate);
        theta = std::move(next);
        trace.push_back(TraceEntry<P>{i, theta, std::nullopt, loglik});
        if (std::abs(loglik - prev_loglik) <= config.tol) break;
        prev_loglik = loglik;
    }
    return trace;
}

} // namespace streamnmf
