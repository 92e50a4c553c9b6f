#include "test_helpers.hpp"

using namespace streamnmf;
using Catch::Matchers::WithinAbs;

TEST_CASE("poisson_logpmf closed forms") {
    CHECK_THAT(poisson_logpmf(0, 1.0), WithinAbs(-1.0, 1e-15));
    CHECK_THAT(poisson_logpmf(2, 2.0), WithinAbs(std::log(2.0) - 2.0, 1e-15));
    CHECK(poisson_logpmf(3, 0.0) == kNegInf);
    CHECK(poisson_logpmf(0, 0.0) == 0.0);
}

TEST_CASE("poisson_logpmf rejects invalid arguments") {
    CHECK_THROWS_AS(poisson_logpmf(-1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(poisson_logpmf(1, -0.5), std::invalid_argument);
    CHECK_THROWS_AS(poisson_logpmf(1.5, 1.0), std::invalid_argument);
}

TEST_CASE("observation_loglik single-row cases") {
    Matrix b1(1, 1);
    b1 << 1.0;
    Vector x1(1), y0(1);
    x1 << 1.0;
    y0 << 0.0;
    CHECK_THAT(observation_loglik(b1, x1, y0), WithinAbs(-1.0, 1e-15));

    Matrix b2(1, 2);
    b2 << 1.0, 1.0;
    Vector x2(2), y2(1);
    x2 << 1.0, 1.0;
    y2 << 2.0;
    CHECK_THAT(observation_loglik(b2, x2, y2), WithinAbs(std::log(2.0) - 2.0, 1e-15));
}

TEST_CASE("observation_loglik equals a per-row sum") {
    Rng rng(11);
    std::uniform_real_distribution<double> uni(0.1, 2.0);
    Matrix b(2, 2);
    Vector x(2), y(2);
    for (int trial = 0; trial < 20; ++trial) {
        b << uni(rng), uni(rng), uni(rng), uni(rng);
        x << uni(rng), uni(rng);
        y << std::floor(uni(rng) * 4), std::floor(uni(rng) * 4);
        double by_rows = 0.0;
        for (Eigen::Index m = 0; m < 2; ++m) by_rows += poisson_logpmf(y(m), b.row(m).dot(x));
        CHECK_THAT(observation_loglik(b, x, y), WithinAbs(by_rows, 1e-13));
    }
}

TEST_CASE("observation_loglik row exchange invariance and dimension checks") {
    Matrix b(2, 2);
    b << 0.5, 1.5, 2.0, 0.2;
    Vector x(2), y(2);
    x << 0.7, 0.3;
    y << 3.0, 1.0;
    Matrix b_swapped = b;
    b_swapped.row(0).swap(b_swapped.row(1));
    Vector y_swapped(2);
    y_swapped << y(1), y(0);
    CHECK(observation_loglik(b, x, y) == observation_loglik(b_swapped, x, y_swapped));

    Vector y3(3);
    y3.setZero();
    CHECK_THROWS_AS(observation_loglik(b, x, y3), std::invalid_argument);
}

TEST_CASE("allocation probabilities") {
    Matrix b(1, 2);
    Vector x(2);

    b << 1.0, 1.0;
    x << 1.0, 1.0;
    Vector rho = allocation_probabilities(b, x, 0);
    CHECK_THAT(rho(0), WithinAbs(0.5, 1e-15));
    CHECK_THAT(rho(1), WithinAbs(0.5, 1e-15));

    b << 2.0, 1.0;
    rho = allocation_probabilities(b, x, 0);
    CHECK_THAT(rho(0), WithinAbs(2.0 / 3.0, 1e-15));
    CHECK_THAT(rho(1), WithinAbs(1.0 / 3.0, 1e-15));

    b << 1.0, 1.0;
    x << 1.0, 0.0;
    rho = allocation_probabilities(b, x, 0);
    CHECK(rho(0) == 1.0);
    CHECK(rho(1) == 0.0);

    x << 0.0, 0.0;
    CHECK_THROWS_AS(allocation_probabilities(b, x, 0), degenerate_intensity_error);
}

TEST_CASE("allocation probabilities form a simplex") {
    Rng rng(5);
    std::uniform_real_distribution<double> uni(0.05, 3.0);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix b(3, 4);
        Vector x(4);
        for (Eigen::Index r = 0; r < 3; ++r)
            for (Eigen::Index c = 0; c < 4; ++c) b(r, c) = uni(rng);
        for (Eigen::Index c = 0; c < 4; ++c) x(c) = uni(rng);
        for (Eigen::Index m = 0; m < 3; ++m) {
            Vector rho = allocation_probabilities(b, x, m);
            CHECK((rho.array() >= 0.0).all());
            CHECK_THAT(rho.sum(), WithinAbs(1.0, 1e-12));
        }
    }
}

TEST_CASE("allocation posterior mean basics") {
    Matrix b(1, 2);
    b << 1.0, 1.0;
    Vector x(2), y(1);
    x << 1.0, 1.0;
    y << 4.0;
    Matrix mean = allocation_posterior_mean(b, x, y);
    CHECK_THAT(mean(0, 0), WithinAbs(2.0, 1e-15));
    CHECK_THAT(mean(0, 1), WithinAbs(2.0, 1e-15));

    y << 0.0;
    CHECK(allocation_posterior_mean(b, x, y).isZero(0.0));

    x << 0.0, 0.0;
    y << 2.0;
    CHECK_THROWS_AS(allocation_posterior_mean(b, x, y), degenerate_intensity_error);
}

TEST_CASE("allocation posterior mean conserves row sums") {
    Rng rng(7);
    std::uniform_real_distribution<double> uni(0.05, 3.0);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix b(3, 2);
        Vector x(2), y(3);
        for (Eigen::Index r = 0; r < 3; ++r)
            for (Eigen::Index c = 0; c < 2; ++c) b(r, c) = uni(rng);
        for (Eigen::Index c = 0; c < 2; ++c) x(c) = uni(rng);
        for (Eigen::Index r = 0; r < 3; ++r) y(r) = std::floor(uni(rng) * 5);
        Matrix mean = allocation_posterior_mean(b, x, y);
        for (Eigen::Index r = 0; r < 3; ++r) CHECK_THAT(mean.row(r).sum(), WithinAbs(y(r), 1e-12));
    }
}

TEST_CASE("allocation posterior mean matches Monte Carlo") {
    // multinomial row sampling oracle, M = 3, K = 2, fixed seed
    Matrix b(3, 2);
    b << 0.8, 1.7, 2.1, 0.4, 1.0, 1.0;
    Vector x(2), y(3);
    x << 0.6, 0.9;
    y << 5.0, 3.0, 7.0;
    const Matrix exact = allocation_posterior_mean(b, x, y);

    Rng rng(99);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const long draws = 1000000;
    Matrix acc = Matrix::Zero(3, 2);
    for (Eigen::Index m = 0; m < 3; ++m) {
        Vector cells = b.row(m).transpose().cwiseProduct(x);
        const double rho0 = cells(0) / cells.sum();
        for (long d = 0; d < draws; ++d) {
            long n0 = 0;
            for (long c = 0; c < static_cast<long>(y(m)); ++c)
                if (uni(rng) < rho0) ++n0;
            acc(m, 0) += static_cast<double>(n0);
            acc(m, 1) += y(m) - static_cast<double>(n0);
        }
    }
    acc /= static_cast<double>(draws);
    // 3 sigma of the multinomial cell means at 1e6 draws
    for (Eigen::Index m = 0; m < 3; ++m) {
        Vector cells = b.row(m).transpose().cwiseProduct(x);
        const double rho0 = cells(0) / cells.sum();
        const double sigma = std::sqrt(y(m) * rho0 * (1.0 - rho0) / static_cast<double>(draws));
        CHECK_THAT(acc(m, 0), WithinAbs(exact(m, 0), 3.0 * sigma + 1e-12));
        CHECK_THAT(acc(m, 1), WithinAbs(exact(m, 1), 3.0 * sigma + 1e-12));
    }
}

TEST_CASE("simulate_observation zero intensity and determinism") {
    Matrix b = Matrix::Zero(2, 2);
    Vector x(2);
    x << 1.0, 1.0;
    Rng rng(3);
    auto [z, y] = simulate_observation(b, x, rng);
    CHECK(z.isZero(0.0));
    CHECK(y.isZero(0.0));

    b << 1.0, 0.5, 2.0, 0.1;
    Rng r1(42), r2(42);
    auto [z1, y1] = simulate_observation(b, x, r1);
    auto [z2, y2] = simulate_observation(b, x, r2);
    CHECK(z1 == z2);
    CHECK(y1 == y2);
}

TEST_CASE("simulate_observation marginal mean") {
    Matrix b(1, 1);
    b << 3.0;
    Vector x(1);
    x << 1.0;
    Rng rng(17);
    const long draws = 1000000;
    double total = 0.0;
    for (long d = 0; d < draws; ++d) total += simulate_observation(b, x, rng).second(0);
    const double mean = total / static_cast<double>(draws);
    CHECK_THAT(mean, WithinAbs(3.0, 3e-2));
    // 3 sigma marginal test of E[y(m)] = B(m,.)x
    CHECK_THAT(mean, WithinAbs(3.0, 3.0 * std::sqrt(3.0 / static_cast<double>(draws))));
}

TEST_CASE("guarded allocation mean floors degenerate denominators") {
    Matrix b = Matrix::Zero(1, 2);
    Vector x(2), y(1);
    x << 1.0, 1.0;
    y << 3.0;
    long long hits = 0;
    Matrix mean = allocation_posterior_mean_guarded(b, x, y, &hits);
    CHECK(mean.isZero(0.0));
    CHECK(hits == 1);
}
