#include "test_helpers.hpp"

using namespace streamnmf;
using Catch::Matchers::WithinAbs;

namespace {

Vector vec1(double a) {
    Vector v(1);
    v << a;
    return v;
}

Vector vec2(double a, double b) {
    Vector v(2);
    v << a, b;
    return v;
}

} // namespace

TEST_CASE("basis transition log-probabilities") {
    BasisSelectionModel model1(1);
    BasisSelectionParams psi{0.8, 0.6};
    CHECK_THAT(model1.transition_logdensity(psi, vec1(0), vec1(0)),
               WithinAbs(std::log(0.8), 1e-15));

    BasisSelectionModel model2(2);
    CHECK_THAT(model2.transition_logdensity(psi, vec2(0, 1), vec2(1, 1)),
               WithinAbs(std::log(0.2) + std::log(0.6), 1e-14));

    BasisSelectionParams paper{0.8571, 0.6926};
    CHECK_THAT(model1.transition_logdensity(paper, vec1(0), vec1(0)),
               WithinAbs(std::log(0.8571), 1e-15));

    CHECK_THROWS_AS(model1.transition_logdensity(psi, vec1(0.5), vec1(0)),
                    std::invalid_argument);
}

TEST_CASE("basis transition rows normalise") {
    for (int k : {1, 3, 8}) {
        BasisSelectionModel model(k);
        BasisSelectionParams psi{0.37, 0.82};
        for (Eigen::Index from = 0; from < model.state_count(); ++from) {
            double total = 0.0;
            for (Eigen::Index to = 0; to < model.state_count(); ++to)
                total += std::exp(
                    model.transition_logdensity(psi, model.state(from), model.state(to)));
            CHECK_THAT(total, WithinAbs(1.0, 1e-12));
        }
    }
}

TEST_CASE("basis s3 pairs and initial term") {
    BasisSelectionModel model(1);
    Vector s = model.s3_pair(vec1(0), vec1(0));
    CHECK(s == (Vector(4) << 1, 1, 0, 0).finished());
    s = model.s3_pair(vec1(0), vec1(1));
    CHECK(s == (Vector(4) << 0, 0, 0, 1).finished());

    BasisSelectionModel model5(5);
    Vector zeros = Vector::Zero(5);
    s = model5.s3_pair(zeros, zeros);
    CHECK(s == (Vector(4) << 5, 5, 0, 0).finished());

    // the t = 1 term has occupancy indicators only
    Vector init = model5.s3_initial(zeros);
    CHECK(init == (Vector(4) << 0, 5, 0, 0).finished());
}

TEST_CASE("basis s3 previous-state denominator convention") {
    BasisSelectionModel model(1, S3Denominator::previous);
    Vector s = model.s3_pair(vec1(0), vec1(1));
    CHECK(s == (Vector(4) << 0, 1, 0, 0).finished());
    CHECK(model.s3_initial(vec1(0)) == Vector::Zero(4));
}

TEST_CASE("basis maximiser") {
    BasisSelectionModel model(1);
    BasisSelectionParams prev{0.3, 0.4};

    BasisSelectionParams out = model.maximise((Vector(4) << 3, 4, 6, 8).finished(), prev);
    CHECK_THAT(out.p, WithinAbs(0.75, 1e-15));
    CHECK_THAT(out.q, WithinAbs(0.75, 1e-15));

    out = model.maximise((Vector(4) << 0, 4, 0, 8).finished(), prev);
    CHECK(out.p == kProbClamp);
    CHECK(out.q == kProbClamp);

    out = model.maximise((Vector(4) << 4, 4, 8, 8).finished(), prev);
    CHECK(out.p == 1.0 - kProbClamp);
    CHECK(out.q == 1.0 - kProbClamp);

    // zero denominators hold the previous value componentwise
    out = model.maximise((Vector(4) << 1, 0, 2, 0).finished(), prev);
    CHECK(out.p == prev.p);
    CHECK(out.q == prev.q);
}

TEST_CASE("relaxed transition log-density") {
    RelaxedBasisModel model(1);
    RelaxedParams psi{0.95};
    CHECK_THAT(model.transition_logdensity(psi, vec1(0.4), vec1(0.2)),
               WithinAbs(std::log(0.95 / 0.4), 1e-14));
    CHECK_THAT(model.transition_logdensity(psi, vec1(0.6), vec1(0.3)),
               WithinAbs(std::log(0.05 / 0.6), 1e-14));

    RelaxedBasisModel model2(2);
    const double expected = model.transition_logdensity(psi, vec1(0.4), vec1(0.2)) +
                            model.transition_logdensity(psi, vec1(0.6), vec1(0.3));
    CHECK_THAT(model2.transition_logdensity(psi, vec2(0.4, 0.6), vec2(0.2, 0.3)),
               WithinAbs(expected, 1e-14));

    CHECK_THROWS_AS(model.transition_logdensity(psi, vec1(0.0), vec1(0.5)),
                    std::invalid_argument);
    CHECK_THROWS_AS(model.transition_logdensity(psi, vec1(0.5), vec1(1.0)),
                    std::invalid_argument);
}

TEST_CASE("relaxed transition density integrates to one") {
    RelaxedBasisModel model(1);
    for (double alpha : {0.2, 0.5, 0.95}) {
        RelaxedParams psi{alpha};
        for (double x = 0.05; x < 1.0; x += 0.1) {
            // midpoint rule on each branch; the density is piecewise constant
            const long n = 2000;
            double integral = 0.0;
            for (long i = 0; i < n; ++i) {
                const double lo = (static_cast<double>(i) + 0.5) / static_cast<double>(n) * x;
                integral += std::exp(model.transition_logdensity(psi, vec1(x), vec1(lo))) * x /
                            static_cast<double>(n);
                const double hi =
                    x + (static_cast<double>(i) + 0.5) / static_cast<double>(n) * (1.0 - x);
                integral += std::exp(model.transition_logdensity(psi, vec1(x), vec1(hi))) *
                            (1.0 - x) / static_cast<double>(n);
            }
            CHECK_THAT(integral, WithinAbs(1.0, 1e-6));
        }
    }
}

TEST_CASE("relaxed sampling is deterministic per seed") {
    RelaxedBasisModel model(3);
    RelaxedParams psi{0.95};
    Rng r1(5), r2(5);
    Vector x = (Vector(3) << 0.2, 0.5, 0.8).finished();
    CHECK(model.sample_transition(psi, x, r1) == model.sample_transition(psi, x, r2));
}

TEST_CASE("relaxed chain hugs the ends of the interval") {
    // Long-run oracle: the kernel is symmetric under x -> 1-x, so the
    // stationary law puts equal mass on both halves; what alpha close to 1
    // produces is concentration near 0 and 1 plus strong short-range
    // persistence, and those are the frozen assertions.
    RelaxedBasisModel model(1);
    RelaxedParams psi{0.95};
    Rng rng(21);
    Vector x = vec1(0.9);
    const long steps = 100000;
    long above = 0;
    long near_ends = 0;
    for (long t = 0; t < steps; ++t) {
        x = model.sample_transition(psi, x, rng);
        if (x(0) > 0.5) ++above;
        if (x(0) < 0.2 || x(0) > 0.8) ++near_ends;
    }
    const double frac_above = static_cast<double>(above) / static_cast<double>(steps);
    const double frac_ends = static_cast<double>(near_ends) / static_cast<double>(steps);
    CHECK(frac_ends > 0.85);
    CHECK_THAT(frac_above, WithinAbs(0.5, 0.06));

    // persistence: started high, the chain stays high for a while
    long high_starts = 0;
    for (int rep = 0; rep < 200; ++rep) {
        Vector z = vec1(0.9);
        for (int t = 0; t < 60; ++t) {
            z = model.sample_transition(psi, z, rng);
            if (z(0) > 0.5) ++high_starts;
        }
    }
    CHECK(static_cast<double>(high_starts) / (200.0 * 60.0) > 0.55);
}

TEST_CASE("relaxed kernel is symmetric at alpha one half") {
    RelaxedBasisModel model(1);
    RelaxedParams psi{0.5};
    Rng rng(13);
    const long draws = 1000000;
    double total = 0.0;
    for (long d = 0; d < draws; ++d) total += model.sample_transition(psi, vec1(0.5), rng)(0);
    const double mean = total / static_cast<double>(draws);
    // var of one draw is 1/12; 3 sigma of the mean
    CHECK_THAT(mean, WithinAbs(0.5, 3.0 * std::sqrt(1.0 / 12.0 / static_cast<double>(draws))));
}

TEST_CASE("relaxed s3 indicators") {
    RelaxedBasisModel model(1);
    CHECK(model.s3_pair(vec1(0.4), vec1(0.2)) == vec2(1, 0));
    CHECK(model.s3_pair(vec1(0.6), vec1(0.7)) == vec2(1, 0));
    CHECK(model.s3_pair(vec1(0.4), vec1(0.6)) == vec2(0, 1));
    CHECK(model.s3_initial(vec1(0.4)) == Vector::Zero(2));

    RelaxedBasisModel model4(4);
    Rng rng(9);
    std::uniform_real_distribution<double> uni(0.01, 0.99);
    for (int trial = 0; trial < 100; ++trial) {
        Vector a(4), b(4);
        for (int k = 0; k < 4; ++k) {
            a(k) = uni(rng);
            b(k) = uni(rng);
        }
        Vector s = model4.s3_pair(a, b);
        CHECK(s(0) + s(1) == 4.0);
    }
}

TEST_CASE("relaxed maximiser") {
    RelaxedBasisModel model(1);
    RelaxedParams prev{0.42};
    CHECK_THAT(model.maximise(vec2(1, 3), prev).alpha, WithinAbs(0.25, 1e-15));
    CHECK_THAT(model.maximise(vec2(0.95, 0.05), prev).alpha, WithinAbs(0.95, 1e-15));
    CHECK(model.maximise(vec2(0, 0), prev).alpha == prev.alpha);
}

TEST_CASE("enumerate_states") {
    auto states1 = enumerate_states(1);
    REQUIRE(states1.size() == 2);
    CHECK(states1[0] == vec1(0));
    CHECK(states1[1] == vec1(1));

    auto states2 = enumerate_states(2);
    REQUIRE(states2.size() == 4);
    CHECK(states2[0] == vec2(0, 0));
    CHECK(states2[1] == vec2(0, 1));
    CHECK(states2[2] == vec2(1, 0));
    CHECK(states2[3] == vec2(1, 1));

    CHECK(enumerate_states(5).size() == 32);
    CHECK_THROWS_AS(enumerate_states(25), std::invalid_argument);
    CHECK_THROWS_AS(enumerate_states(0), std::invalid_argument);
}

TEST_CASE("basis maximiser recovers the chain parameters from a long path") {
    BasisSelectionModel model(1);
    BasisSelectionParams truth{0.8571, 0.6926};
    Rng rng(31);
    const long steps = 100000;
    Vector x = model.sample_initial(truth, rng);
    Vector s3 = model.s3_initial(x);
    for (long t = 1; t < steps; ++t) {
        Vector x_next = model.sample_transition(truth, x, rng);
        s3 += model.s3_pair(x, x_next);
        x = x_next;
    }
    BasisSelectionParams est = model.maximise(s3, {0.5, 0.5});
    CHECK_THAT(est.p, WithinAbs(truth.p, 0.01));
    CHECK_THAT(est.q, WithinAbs(truth.q, 0.01));
}

TEST_CASE("basis maximiser agrees with a complete-data grid search") {
    // counts oracle: complete-data log-likelihood of the transition
    // parameters depends on the path only via the four pair counts
    BasisSelectionModel model(1);
    BasisSelectionParams truth{0.8571, 0.6926};
    Rng rng(47);
    const long steps = 10000;
    Vector x = model.sample_initial(truth, rng);
    Vector s3 = model.s3_initial(x);
    double n00 = 0, n01 = 0, n11 = 0, n10 = 0;
    for (long t = 1; t < steps; ++t) {
        Vector x_next = model.sample_transition(truth, x, rng);
        s3 += model.s3_pair(x, x_next);
        if (x(0) == 0.0) {
            (x_next(0) == 0.0 ? n00 : n01) += 1.0;
        } else {
            (x_next(0) == 1.0 ? n11 : n10) += 1.0;
        }
        x = x_next;
    }
    const double step = 5e-4;
    auto grid_argmax = [&](double stay, double leave) {
        double best = -std::numeric_limits<double>::infinity();
        double arg = 0.0;
        for (double v = step; v < 1.0; v += step) {
            const double ll = stay * std::log(v) + leave * std::log(1.0 - v);
            if (ll > best) {
                best = ll;
                arg = v;
            }
        }
        return arg;
    };
    BasisSelectionParams est = model.maximise(s3, {0.5, 0.5});
    CHECK_THAT(est.p, WithinAbs(grid_argmax(n00, n01), step + 2.0 / static_cast<double>(steps)));
    CHECK_THAT(est.q, WithinAbs(grid_argmax(n11, n10), step + 2.0 / static_cast<double>(steps)));
}
