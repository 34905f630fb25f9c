#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "meshflow/errors.hpp"

namespace meshflow {

// Linear mixed model with crossed country random intercepts:
//   y_d = x_d' beta + u_{a(d)} + v_{b(d)} + eps_d
// u ~ N(0, sigma1^2), v ~ N(0, sigma2^2), eps ~ N(0, sigma^2). Fitted by
// maximum likelihood (REML optional): beta and sigma^2 are profiled out
// analytically and the two variance ratios theta_k = sigma_k^2 / sigma^2 are
// optimized by Nelder-Mead on the profiled deviance. The n x n covariance
// solve reduces to a 2c x 2c one through the Woodbury identity, so each
// objective evaluation costs O(c^3) with c = number of countries.

struct LmmData {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    std::vector<int> slot1;  // country index of the first pair member per row
    std::vector<int> slot2;
    int n_countries = 0;
    bool shared_effect = false;  // one effect per country across both slots
};

struct LmmOptions {
    bool reml = false;
    double tol = 1e-8;
    std::size_t max_eval = 4000;
    std::optional<double> null_loglik;  // reuse across a fit suite
};

struct LmmFit {
    std::vector<std::string> names;
    Eigen::VectorXd beta;
    Eigen::VectorXd se;
    Eigen::VectorXd tval;
    double var_country1 = 0.0;
    double var_country2 = 0.0;
    double var_residual = 0.0;
    double loglik = 0.0;
    double deviance = 0.0;
    double aic = 0.0;
    double mcfadden_r2 = 0.0;
    double null_loglik = 0.0;
    std::size_t n = 0;
    int n_countries = 0;
    bool boundary = false;  // a variance ratio landed on 0
    bool reml = false;
    std::vector<std::string> dropped_constant;  // columns without variation
};

namespace lmm_detail {

struct Sufficient {
    Eigen::MatrixXd ztz;   // q x q, q = 2c (or c when shared)
    Eigen::MatrixXd ztx;   // q x p
    Eigen::VectorXd zty;   // q
    Eigen::MatrixXd xtx;   // p x p
    Eigen::VectorXd xty;   // p
    double yty = 0.0;
    Eigen::Index q = 0, p = 0, n = 0;
    int c = 0;
    bool shared = false;
};

inline Sufficient build_sufficient(const LmmData& d) {
    Sufficient s;
    s.n = d.X.rows();
    s.p = d.X.cols();
    s.c = d.n_countries;
    s.shared = d.shared_effect;
    s.q = d.shared_effect ? s.c : 2 * s.c;
    s.ztz = Eigen::MatrixXd::Zero(s.q, s.q);
    s.ztx = Eigen::MatrixXd::Zero(s.q, s.p);
    s.zty = Eigen::VectorXd::Zero(s.q);
    for (Eigen::Index r = 0; r < s.n; ++r) {
        int a = d.slot1[static_cast<std::size_t>(r)];
        int b = d.slot2[static_cast<std::size_t>(r)];
        int za = a;
        int zb = d.shared_effect ? b : s.c + b;
        s.ztz(za, za) += 1.0;
        s.ztz(zb, zb) += 1.0;
        s.ztz(za, zb) += 1.0;
        s.ztz(zb, za) += 1.0;
        s.ztx.row(za) += d.X.row(r);
        s.ztx.row(zb) += d.X.row(r);
        s.zty(za) += d.y(r);
        s.zty(zb) += d.y(r);
    }
    s.xtx = d.X.transpose() * d.X;
    s.xty = d.X.transpose() * d.y;
    s.yty = d.y.squaredNorm();
    return s;
}

struct Profile {
    Eigen::VectorXd beta;
    Eigen::MatrixXd xtvx_inv;
    double sigma2 = 0.0;   // profiled residual variance
    double deviance = 0.0;
    double logdet_v = 0.0;
};

/// Profiled deviance at variance ratios (theta1, theta2); theta2 ignored in
/// shared mode.
inline Profile evaluate(const Sufficient& s, double theta1, double theta2,
                        bool reml) {
    Eigen::VectorXd dsqrt(s.q);
    if (s.shared) {
        dsqrt.setConstant(std::sqrt(theta1));
    } else {
        dsqrt.head(s.c).setConstant(std::sqrt(theta1));
        dsqrt.tail(s.c).setConstant(std::sqrt(theta2));
    }

    Eigen::MatrixXd k = Eigen::MatrixXd::Identity(s.q, s.q);
    k.noalias() += dsqrt.asDiagonal() * s.ztz * dsqrt.asDiagonal();
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success)
        throw NumericError("lmm: covariance factorization failed");

    double logdet_v = 0.0;
    for (Eigen::Index i = 0; i < s.q; ++i)
        logdet_v += 2.0 * std::log(llt.matrixL()(i, i));

    Eigen::MatrixXd zx = dsqrt.asDiagonal() * s.ztx;  // q x p
    Eigen::VectorXd zy = dsqrt.asDiagonal() * s.zty;  // q
    Eigen::MatrixXd kinv_zx = llt.solve(zx);
    Eigen::VectorXd kinv_zy = llt.solve(zy);

    Eigen::MatrixXd xtvx = s.xtx - zx.transpose() * kinv_zx;
    Eigen::VectorXd xtvy = s.xty - zx.transpose() * kinv_zy;
    double ytvy = s.yty - zy.dot(kinv_zy);

    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtvx);
    double dmax = ldlt.vectorD().maxCoeff();
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-12 * dmax)
        throw NumericError("lmm: fixed-effect design is rank deficient");

    Profile out;
    out.logdet_v = logdet_v;
    out.beta = ldlt.solve(xtvy);
    out.xtvx_inv = ldlt.solve(Eigen::MatrixXd::Identity(s.p, s.p));
    double quad = std::max(ytvy - out.beta.dot(xtvy), 1e-300);

    double n = static_cast<double>(s.n);
    double p = static_cast<double>(s.p);
    if (reml) {
        double logdet_xtvx = 0.0;
        Eigen::VectorXd dvec = ldlt.vectorD();
        for (Eigen::Index i = 0; i < s.p; ++i)
            logdet_xtvx += std::log(dvec(i));
        out.sigma2 = quad / (n - p);
        out.deviance = (n - p) * std::log(2.0 * M_PI * out.sigma2) + logdet_v +
                       logdet_xtvx + (n - p);
    } else {
        out.sigma2 = quad / n;
        out.deviance = n * std::log(2.0 * M_PI * out.sigma2) + logdet_v + n;
    }
    return out;
}

/// Nelder-Mead on d unconstrained coordinates (d = 1 or 2); variance ratios
/// are the squares of the coordinates so zero is reachable exactly.
inline std::vector<double> nelder_mead(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> start, double tol, std::size_t max_eval,
    double* f_best_out, bool* converged_out = nullptr) {
    std::size_t d = start.size();
    std::vector<std::vector<double>> simplex(d + 1, start);
    for (std::size_t i = 0; i < d; ++i)
        simplex[i + 1][i] += start[i] != 0.0 ? 0.25 * std::abs(start[i]) : 0.25;
    std::vector<double> fv(d + 1);
    std::size_t evals = 0;
    for (std::size_t i = 0; i <= d; ++i) fv[i] = (++evals, f(simplex[i]));

    auto order = [&] {
        std::vector<std::size_t> idx(d + 1);
        for (std::size_t i = 0; i <= d; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(),
                  [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        std::vector<std::vector<double>> s2;
        std::vector<double> f2;
        for (std::size_t i : idx) {
            s2.push_back(simplex[i]);
            f2.push_back(fv[i]);
        }
        simplex = std::move(s2);
        fv = std::move(f2);
    };

    bool converged = false;
    while (evals < max_eval) {
        order();
        if (std::abs(fv[d] - fv[0]) <= tol) {
            converged = true;
            break;
        }
        std::vector<double> centroid(d, 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t k = 0; k < d; ++k)
                centroid[k] += simplex[i][k] / static_cast<double>(d);

        auto point = [&](double coef) {
            std::vector<double> p(d);
            for (std::size_t k = 0; k < d; ++k)
                p[k] = centroid[k] + coef * (simplex[d][k] - centroid[k]);
            return p;
        };
        std::vector<double> xr = point(-1.0);
        double fr = (++evals, f(xr));
        if (fr < fv[0]) {
            std::vector<double> xe = point(-2.0);
            double fe = (++evals, f(xe));
            if (fe < fr) {
                simplex[d] = xe;
                fv[d] = fe;
            } else {
                simplex[d] = xr;
                fv[d] = fr;
            }
        } else if (fr < fv[d - 1]) {
            simplex[d] = xr;
            fv[d] = fr;
        } else {
            std::vector<double> xc = point(fr < fv[d] ? -0.5 : 0.5);
            double fc = (++evals, f(xc));
            if (fc < std::min(fr, fv[d])) {
                simplex[d] = xc;
                fv[d] = fc;
            } else {  // shrink toward the best vertex
                for (std::size_t i = 1; i <= d; ++i) {
                    for (std::size_t k = 0; k < d; ++k)
                        simplex[i][k] =
                            simplex[0][k] + 0.5 * (simplex[i][k] - simplex[0][k]);
                    fv[i] = (++evals, f(simplex[i]));
                }
            }
        }
    }
    order();
    if (f_best_out) *f_best_out = fv[0];
    if (converged_out) *converged_out = converged;
    return simplex[0];
}

}  // namespace lmm_detail

inline LmmFit fit_lmm(const LmmData& data, const LmmOptions& opts = {},
                      std::vector<std::string> names = {}) {
    if (data.X.rows() != data.y.size() ||
        data.X.rows() != static_cast<Eigen::Index>(data.slot1.size()) ||
        data.slot1.size() != data.slot2.size())
        throw DataError("lmm: inconsistent row counts");
    if (data.n_countries < 2)
        throw DataError("lmm: need at least 2 countries per random-effect factor");

    {  // name the offending column up front rather than failing mid-solve
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(data.X);
        qr.setThreshold(1e-10);
        if (qr.rank() < data.X.cols()) {
            auto bad = static_cast<std::size_t>(
                qr.colsPermutation().indices()[qr.rank()]);
            std::string label = bad < names.size() ? names[bad]
                                                   : "x" + std::to_string(bad);
            throw NumericError(
                "lmm: fixed-effect design is rank deficient, column '" + label +
                "' is linearly dependent");
        }
    }

    lmm_detail::Sufficient s = lmm_detail::build_sufficient(data);

    auto objective = [&](const std::vector<double>& u) {
        double t1 = u[0] * u[0];
        double t2 = data.shared_effect ? 0.0 : u[1] * u[1];
        return lmm_detail::evaluate(s, t1, t2, opts.reml).deviance;
    };

    std::size_t dims = data.shared_effect ? 1 : 2;
    double best_f = std::numeric_limits<double>::infinity();
    std::vector<double> best_u(dims, 0.0);
    bool any_converged = false;
    const std::vector<double> starts = {0.3, 1.0, 0.05};
    for (double s0 : starts) {
        double f = 0.0;
        bool conv = false;
        std::vector<double> u = lmm_detail::nelder_mead(
            objective, std::vector<double>(dims, s0), opts.tol, opts.max_eval,
            &f, &conv);
        any_converged = any_converged || conv;
        if (f < best_f) {
            best_f = f;
            best_u = u;
        }
    }
    if (!any_converged)
        throw NumericError("lmm: variance optimizer did not converge; best "
                           "deviance " + std::to_string(best_f) + " at ratios (" +
                           std::to_string(best_u[0] * best_u[0]) + ", " +
                           std::to_string(dims == 2 ? best_u[1] * best_u[1] : 0.0) +
                           ")");
    // the boundary candidates: either or both ratios exactly zero
    std::vector<std::vector<double>> corners = {std::vector<double>(dims, 0.0)};
    if (dims == 2) {
        corners.push_back({best_u[0], 0.0});
        corners.push_back({0.0, best_u[1]});
    }
    for (const auto& u : corners) {
        double f = objective(u);
        if (f <= best_f) {
            best_f = f;
            best_u = u;
        }
    }

    double theta1 = best_u[0] * best_u[0];
    double theta2 = data.shared_effect ? theta1 : best_u[1] * best_u[1];
    lmm_detail::Profile prof =
        lmm_detail::evaluate(s, theta1, data.shared_effect ? 0.0 : theta2,
                             opts.reml);

    LmmFit fit;
    fit.reml = opts.reml;
    fit.n = static_cast<std::size_t>(s.n);
    fit.n_countries = s.c;
    fit.beta = prof.beta;
    fit.var_residual = prof.sigma2;
    fit.var_country1 = theta1 * prof.sigma2;
    fit.var_country2 = theta2 * prof.sigma2;
    fit.boundary = theta1 == 0.0 || theta2 == 0.0;
    fit.deviance = prof.deviance;
    fit.loglik = -0.5 * prof.deviance;
    std::size_t n_var = data.shared_effect ? 2 : 3;  // ratios + residual
    fit.aic = prof.deviance + 2.0 * (static_cast<double>(s.p) + n_var);

    fit.se.resize(s.p);
    fit.tval.resize(s.p);
    for (Eigen::Index j = 0; j < s.p; ++j) {
        fit.se[j] = std::sqrt(prof.sigma2 * prof.xtvx_inv(j, j));
        fit.tval[j] = fit.se[j] > 0 ? fit.beta[j] / fit.se[j] : 0.0;
    }
    if (names.empty())
        for (Eigen::Index j = 0; j < s.p; ++j)
            names.push_back("x" + std::to_string(j));
    fit.names = std::move(names);

    if (opts.null_loglik) {
        fit.null_loglik = *opts.null_loglik;
    } else if (s.p == 1 && (data.X.array() == 1.0).all()) {
        fit.null_loglik = fit.loglik;  // this is the null model
    } else {
        LmmData null_data;
        null_data.X = Eigen::MatrixXd::Ones(s.n, 1);
        null_data.y = data.y;
        null_data.slot1 = data.slot1;
        null_data.slot2 = data.slot2;
        null_data.n_countries = data.n_countries;
        null_data.shared_effect = data.shared_effect;
        LmmOptions null_opts = opts;
        null_opts.null_loglik = 0.0;  // stop the recursion
        fit.null_loglik = fit_lmm(null_data, null_opts).loglik;
    }
    fit.mcfadden_r2 =
        fit.null_loglik != 0.0 ? 1.0 - fit.loglik / fit.null_loglik : 0.0;
    return fit;
}

/// Log-likelihood of the intercept-only model with the same random effects;
/// the McFadden baseline shared across a fit suite.
inline double lmm_null_loglik(const LmmData& data, const LmmOptions& opts = {}) {
    LmmData null_data;
    null_data.X = Eigen::MatrixXd::Ones(data.X.rows(), 1);
    null_data.y = data.y;
    null_data.slot1 = data.slot1;
    null_data.slot2 = data.slot2;
    null_data.n_countries = data.n_countries;
    null_data.shared_effect = data.shared_effect;
    LmmOptions o = opts;
    o.null_loglik = 0.0;
    return fit_lmm(null_data, o).loglik;
}

}  // namespace meshflow
