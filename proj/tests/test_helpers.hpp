#pragma once

#include <streamnmf/streamnmf.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <vector>

namespace test_helpers {

using namespace streamnmf;

struct BasisInstance {
    int k = 1;
    Eigen::Index m = 1;
    Theta<BasisSelectionModel> theta;
    std::vector<Vector> ys;
};

/// Random finite-model instance with data simulated from its own parameters.
inline BasisInstance random_basis_instance(Rng& rng, int k, Eigen::Index m, long t_len) {
    BasisInstance instance;
    instance.k = k;
    instance.m = m;
    std::uniform_real_distribution<double> prob(0.2, 0.9);
    std::uniform_real_distribution<double> entry(0.3, 2.5);
    instance.theta.psi = {prob(rng), prob(rng)};
    instance.theta.B.resize(m, k);
    for (Eigen::Index r = 0; r < m; ++r)
        for (Eigen::Index c = 0; c < k; ++c) instance.theta.B(r, c) = entry(rng);
    BasisSelectionModel model(k);
    instance.ys = simulate_sequences(model, instance.theta, t_len, rng).ys;
    return instance;
}

inline bool close_rel(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

inline bool close_rel(const Matrix& a, const Matrix& b, double tol) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (Eigen::Index r = 0; r < a.rows(); ++r)
        for (Eigen::Index c = 0; c < a.cols(); ++c)
            if (!close_rel(a(r, c), b(r, c), tol)) return false;
    return true;
}

/// Unique scratch directory under the build tree, wiped on construction.
class ScratchDir {
  public:
    explicit ScratchDir(const std::string& name)
        : path_(std::filesystem::temp_directory_path() / ("streamnmf_test_" + name)) {
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~ScratchDir() { std::filesystem::remove_all(path_); }
    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
};

} // namespace test_helpers
