#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "meshflow/errors.hpp"
#include "meshflow/rng.hpp"

namespace meshflow {

// Graph correlation and the Quadratic Assignment Procedure: correlation is
// Pearson's r over the C(n,2) off-diagonal cell pairs of two symmetric
// matrices; QAP builds the null by applying random node permutations jointly
// to the rows and columns of the label graph.

/// Co-membership matrix: 1 when two nodes share a label, diagonal 0.
inline Eigen::MatrixXd label_graph(const std::vector<int>& labels) {
    auto n = static_cast<Eigen::Index>(labels.size());
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j && labels[i] == labels[j]) b(i, j) = 1.0;
    return b;
}

/// Pearson correlation over off-diagonal (i < j) cells. `mask`, when given,
/// selects which cells participate (used by the drop policy for censored
/// pairs). Zero variance in either matrix is an error.
inline double graph_correlation(const Eigen::MatrixXd& a,
                                const Eigen::MatrixXd& b,
                                const std::vector<char>* mask = nullptr) {
    Eigen::Index n = a.rows();
    if (b.rows() != n || a.cols() != n || b.cols() != n)
        throw DataError("graph_correlation: mismatched node sets");
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    double cells = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
            if (mask && !(*mask)[static_cast<std::size_t>(i * n + j)]) continue;
            double x = a(i, j), y = b(i, j);
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
            cells += 1.0;
        }
    if (cells < 2) throw NumericError("graph_correlation: too few cells");
    double vx = sxx - sx * sx / cells;
    double vy = syy - sy * sy / cells;
    if (vx <= 0 || vy <= 0)
        throw NumericError("graph_correlation: zero variance");
    return (sxy - sx * sy / cells) / std::sqrt(vx * vy);
}

struct QapResult {
    double observed_r = 0.0;
    std::size_t permutation_count = 0;
    double permuted_max = 0.0;
    double p_value = 1.0;
    std::uint64_t seed = 0;
};

/// Permutation test of graph_correlation(a, label_graph(labels)). Each
/// iteration draws its own RNG stream from the master seed, so serial and
/// parallel runs produce identical results.
inline QapResult qap_test(const Eigen::MatrixXd& a,
                          const std::vector<int>& labels,
                          std::size_t n_perm = 10000, std::uint64_t seed = 1,
                          unsigned threads = 1,
                          const std::vector<char>* mask = nullptr) {
    if (n_perm < 1) throw ConfigError("qap_test: need at least one permutation");
    std::size_t n = labels.size();
    Eigen::MatrixXd b = label_graph(labels);
    QapResult res;
    res.seed = seed;
    res.permutation_count = n_perm;
    res.observed_r = graph_correlation(a, b, mask);

    std::vector<double> r_perm(n_perm);
    auto correlate_labels = [&](const std::vector<int>& lab) {
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0, cells = 0;
        auto an = static_cast<Eigen::Index>(n);
        for (Eigen::Index i = 0; i < an; ++i)
            for (Eigen::Index j = i + 1; j < an; ++j) {
                if (mask && !(*mask)[static_cast<std::size_t>(i * an + j)])
                    continue;
                double x = a(i, j);
                double y = lab[static_cast<std::size_t>(i)] ==
                                   lab[static_cast<std::size_t>(j)]
                               ? 1.0
                               : 0.0;
                sx += x;
                sy += y;
                sxx += x * x;
                syy += y * y;
                sxy += x * y;
                cells += 1.0;
            }
        double vx = sxx - sx * sx / cells;
        double vy = syy - sy * sy / cells;
        if (cells < 2 || vx <= 0 || vy <= 0)
            throw NumericError("graph_correlation: zero variance");
        return (sxy - sx * sy / cells) / std::sqrt(vx * vy);
    };
    auto worker = [&](std::size_t lo, std::size_t hi) {
        std::vector<std::size_t> perm(n);
        std::vector<int> permuted(n);
        for (std::size_t k = lo; k < hi; ++k) {
            Rng rng = make_rng(derive_seed(seed, k + 1));
            for (std::size_t i = 0; i < n; ++i) perm[i] = i;
            fisher_yates(perm, rng);
            // permuting rows+cols of the label graph = relabeling nodes
            for (std::size_t i = 0; i < n; ++i) permuted[i] = labels[perm[i]];
            r_perm[k] = correlate_labels(permuted);
        }
    };
    if (threads <= 1) {
        worker(0, n_perm);
    } else {
        std::vector<std::thread> pool;
        std::size_t chunk = (n_perm + threads - 1) / threads;
        for (unsigned t = 0; t < threads; ++t) {
            std::size_t lo = t * chunk, hi = std::min(n_perm, lo + chunk);
            if (lo < hi) pool.emplace_back(worker, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    std::size_t exceed = 0;
    res.permuted_max = -std::numeric_limits<double>::infinity();
    for (double r : r_perm) {
        if (r >= res.observed_r) ++exceed;
        res.permuted_max = std::max(res.permuted_max, r);
    }
    res.p_value = static_cast<double>(exceed + 1) /
                  static_cast<double>(n_perm + 1);  // add-one estimator
    return res;
}

}  // namespace meshflow
