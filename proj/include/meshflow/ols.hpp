#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "meshflow/errors.hpp"

namespace meshflow {

struct OlsFit {
    std::vector<std::string> names;
    Eigen::VectorXd beta;
    Eigen::VectorXd se;
    Eigen::VectorXd tval;
    double sigma2 = 0.0;  // residual variance, n - p denominator
    double r2 = 0.0;
    double adj_r2 = 0.0;
    std::size_t n = 0;

    double predict(const Eigen::VectorXd& x) const { return x.dot(beta); }
};

/// Least squares via column-pivoted Householder QR. Rank deficiency is fatal
/// and names the offending column.
inline OlsFit fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      std::vector<std::string> names = {}) {
    const auto n = X.rows();
    const auto p = X.cols();
    if (n <= p)
        throw NumericError("ols: need more rows (" + std::to_string(n) +
                           ") than columns (" + std::to_string(p) + ")");
    if (names.empty())
        for (Eigen::Index j = 0; j < p; ++j)
            names.push_back("x" + std::to_string(j));

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
        // pivoted columns past the numerical rank are the dependent ones
        auto perm = qr.colsPermutation().indices();
        std::string offender = names[perm[qr.rank()]];
        throw NumericError("ols: design is rank deficient, column '" + offender +
                           "' is linearly dependent");
    }

    OlsFit fit;
    fit.names = std::move(names);
    fit.n = static_cast<std::size_t>(n);
    fit.beta = qr.solve(y);

    Eigen::VectorXd resid = y - X * fit.beta;
    double ssr = resid.squaredNorm();
    fit.sigma2 = ssr / static_cast<double>(n - p);

    // (X'X)^-1 = P R^-1 R^-T P'
    Eigen::MatrixXd r = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
    Eigen::MatrixXd rinv =
        r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
    Eigen::MatrixXd xtx_inv = rinv * rinv.transpose();
    xtx_inv = qr.colsPermutation() * xtx_inv * qr.colsPermutation().transpose();

    fit.se.resize(p);
    fit.tval.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        fit.se[j] = std::sqrt(fit.sigma2 * xtx_inv(j, j));
        fit.tval[j] = fit.se[j] > 0 ? fit.beta[j] / fit.se[j] : 0.0;
    }

    double mean_y = y.mean();
    double sst = (y.array() - mean_y).matrix().squaredNorm();
    fit.r2 = sst > 0 ? 1.0 - ssr / sst : 1.0;
    fit.adj_r2 = 1.0 - (1.0 - fit.r2) * static_cast<double>(n - 1) /
                           static_cast<double>(n - p);
    return fit;
}

}  // namespace meshflow
