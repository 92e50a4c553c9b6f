#pragma once

#include "streamnmf/common.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace streamnmf {

/// Column matching between an estimated and a true basis matrix.
/// permutation[k] is the estimated column assigned to true column k; errors
/// are reported on the aligned matrix.
struct AlignmentReport {
    std::vector<int> permutation;
    Matrix aligned;   // estimate with columns reordered to match the truth
    Matrix abs_error; // M x K
    Matrix rel_error; // |err| / max(|true|, 1e-12)
    double max_abs = 0.0;
    double mean_abs = 0.0;
    double max_rel = 0.0;
    double mean_rel = 0.0;
};

/// Finds the column permutation minimising the squared distance to the
/// truth: exhaustive for K <= 10, greedy nearest-column matching above.
/// Basis columns are identifiable only up to relabeling of the hidden
/// coordinates, so estimates are always compared through this alignment.
inline AlignmentReport align_columns(const Matrix& b_est, const Matrix& b_true) {
    require(b_est.rows() == b_true.rows() && b_est.cols() == b_true.cols(),
            "align_columns: shape mismatch");
    const auto k = static_cast<int>(b_true.cols());

    // pairwise squared distances, (est column, true column)
    Matrix dist(k, k);
    for (int e = 0; e < k; ++e)
        for (int t = 0; t < k; ++t) dist(e, t) = (b_est.col(e) - b_true.col(t)).squaredNorm();

    std::vector<int> best(static_cast<size_t>(k));
    if (k <= 10) {
        std::vector<int> perm(static_cast<size_t>(k));
        std::iota(perm.begin(), perm.end(), 0);
        double best_cost = std::numeric_limits<double>::infinity();
        do {
            double cost = 0.0;
            for (int t = 0; t < k; ++t) cost += dist(perm[static_cast<size_t>(t)], t);
            if (cost < best_cost) {
                best_cost = cost;
                best = perm;
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
    } else {
        std::vector<bool> est_used(static_cast<size_t>(k), false);
        std::vector<bool> true_used(static_cast<size_t>(k), false);
        for (int round = 0; round < k; ++round) {
            double min_d = std::numeric_limits<double>::infinity();
            int bi = -1, bj = -1;
            for (int e = 0; e < k; ++e) {
                if (est_used[static_cast<size_t>(e)]) continue;
                for (int t = 0; t < k; ++t) {
                    if (true_used[static_cast<size_t>(t)]) continue;
                    if (dist(e, t) < min_d) {
                        min_d = dist(e, t);
                        bi = e;
                        bj = t;
                    }
                }
            }
            best[static_cast<size_t>(bj)] = bi;
            est_used[static_cast<size_t>(bi)] = true;
            true_used[static_cast<size_t>(bj)] = true;
        }
    }

    AlignmentReport report;
    report.permutation = best;
    report.aligned.resize(b_true.rows(), k);
    for (int t = 0; t < k; ++t) report.aligned.col(t) = b_est.col(best[static_cast<size_t>(t)]);
    report.abs_error = (report.aligned - b_true).cwiseAbs();
    report.rel_error =
        report.abs_error.cwiseQuotient(b_true.cwiseAbs().cwiseMax(kIntensityEps));
    report.max_abs = report.abs_error.maxCoeff();
    report.mean_abs = report.abs_error.mean();
    report.max_rel = report.rel_error.maxCoeff();
    report.mean_rel = report.rel_error.mean();
    return report;
}

} // namespace streamnmf
