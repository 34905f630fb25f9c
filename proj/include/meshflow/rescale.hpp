#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "meshflow/csv.hpp"
#include "meshflow/densities.hpp"
#include "meshflow/ols.hpp"

namespace meshflow {

// Density rescaling. A log-linear OLS model predicts the observed density
// from each country pair's user counts, coverage shares and mean degrees;
// projecting the prediction to full population (users -> population,
// coverage -> 1) and carrying the pair's own residual yields the rescaled
// density t' and count T'. All arithmetic stays in log space.

namespace rescale_cols {
enum : int {
    intercept = 0,
    ln_users_1,
    ln_users_2,
    ln_cov_1,
    ln_cov_2,
    meandeg_1,
    meandeg_2,
    meandeg_1x2,
    same_country,
    same_x_ln_users,
    same_x_ln_cov,
    same_x_meandeg,
    count,
};
}  // namespace rescale_cols

inline const std::vector<std::string>& rescale_column_names() {
    static const std::vector<std::string> names = {
        "intercept",      "ln_users_1",     "ln_users_2",  "ln_cov_1",
        "ln_cov_2",       "meandeg_1",      "meandeg_2",   "meandeg_1x2",
        "same_country",   "same_x_ln_users", "same_x_ln_cov", "same_x_meandeg"};
    return names;
}

struct RescaleDesign {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;  // ln t
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (i <= j)
};

namespace detail {

/// One design row for the pair (i, j). Between-country slots are ordered by
/// user count (slot 1 holds the larger user base) so the two symmetric slots
/// are identifiable; same-country rows put the single country in both slots.
/// `projected` swaps users -> population and coverage -> 1, holding mean
/// degrees at their observed values.
inline Eigen::VectorXd rescale_row(const DensityMatrix& m, std::size_t i,
                                   std::size_t j, bool projected) {
    namespace rc = rescale_cols;
    std::size_t a = i, b = j;
    if (i != j && m.users(j) > m.users(i)) std::swap(a, b);

    auto ln_users = [&](std::size_t k) {
        return projected ? std::log(m.population(k)) : std::log(m.users(k));
    };
    auto ln_cov = [&](std::size_t k) {
        return projected ? 0.0 : std::log(m.coverage(k));
    };

    Eigen::VectorXd x = Eigen::VectorXd::Zero(rc::count);
    x[rc::intercept] = 1.0;
    x[rc::ln_users_1] = ln_users(a);
    x[rc::ln_users_2] = ln_users(b);
    x[rc::ln_cov_1] = ln_cov(a);
    x[rc::ln_cov_2] = ln_cov(b);
    x[rc::meandeg_1] = m.mean_degree(a);
    x[rc::meandeg_2] = m.mean_degree(b);
    x[rc::meandeg_1x2] = m.mean_degree(a) * m.mean_degree(b);
    if (i == j) {
        x[rc::same_country] = 1.0;
        x[rc::same_x_ln_users] = ln_users(i);
        x[rc::same_x_ln_cov] = ln_cov(i);
        x[rc::same_x_meandeg] = m.mean_degree(i);
    }
    return x;
}

}  // namespace detail

inline RescaleDesign build_design(const DensityMatrix& m) {
    for (std::size_t i = 0; i < m.size(); ++i) {
        double c = m.coverage(i);
        if (!(c > 0.0) || c > 1.0)
            throw DataError("coverage for " + m.code(i) + " is " +
                            std::to_string(c) + ", expected (0, 1]");
    }
    RescaleDesign d;
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = i; j < m.size(); ++j)
            if (m.present(i, j)) d.pairs.emplace_back(i, j);

    d.X.resize(static_cast<Eigen::Index>(d.pairs.size()), rescale_cols::count);
    d.y.resize(static_cast<Eigen::Index>(d.pairs.size()));
    for (std::size_t r = 0; r < d.pairs.size(); ++r) {
        auto [i, j] = d.pairs[r];
        d.X.row(static_cast<Eigen::Index>(r)) =
            detail::rescale_row(m, i, j, false).transpose();
        d.y[static_cast<Eigen::Index>(r)] = *m.log_density(i, j);
    }
    return d;
}

struct RescaleModel {
    OlsFit fit;  // full 12-term coefficient vector; dropped terms pinned to 0
    std::vector<std::string> dropped_columns;

    /// Predicted ln t at the observed covariates.
    double predict_observed(const DensityMatrix& m, std::size_t i,
                            std::size_t j) const {
        return fit.predict(detail::rescale_row(m, i, j, false));
    }

    /// Predicted ln t' under a hypothetical full-population sample.
    double project_full_population(const DensityMatrix& m, std::size_t i,
                                   std::size_t j) const {
        return fit.predict(detail::rescale_row(m, i, j, true));
    }
};

/// Fits the log-linear model. Columns that are identically zero in the
/// design (full coverage kills the ln-coverage terms; a matrix without
/// within-country pairs kills the same-country block) carry no information
/// and are pinned to coefficient 0; other rank deficiencies stay fatal.
inline RescaleModel fit_rescale_model(const DensityMatrix& m) {
    RescaleDesign d = build_design(m);
    RescaleModel model;

    std::vector<Eigen::Index> kept;
    for (Eigen::Index j = 0; j < d.X.cols(); ++j) {
        if (d.X.col(j).cwiseAbs().maxCoeff() > 0.0)
            kept.push_back(j);
        else
            model.dropped_columns.push_back(rescale_column_names()[
                static_cast<std::size_t>(j)]);
    }

    if (kept.size() == static_cast<std::size_t>(d.X.cols())) {
        model.fit = fit_ols(d.X, d.y, rescale_column_names());
        return model;
    }

    Eigen::MatrixXd xr(d.X.rows(), static_cast<Eigen::Index>(kept.size()));
    std::vector<std::string> names;
    for (std::size_t k = 0; k < kept.size(); ++k) {
        xr.col(static_cast<Eigen::Index>(k)) = d.X.col(kept[k]);
        names.push_back(rescale_column_names()[static_cast<std::size_t>(kept[k])]);
    }
    OlsFit reduced = fit_ols(xr, d.y, names);

    model.fit = reduced;
    model.fit.names = rescale_column_names();
    model.fit.beta = Eigen::VectorXd::Zero(rescale_cols::count);
    model.fit.se = Eigen::VectorXd::Zero(rescale_cols::count);
    model.fit.tval = Eigen::VectorXd::Zero(rescale_cols::count);
    for (std::size_t k = 0; k < kept.size(); ++k) {
        model.fit.beta[kept[k]] = reduced.beta[static_cast<Eigen::Index>(k)];
        model.fit.se[kept[k]] = reduced.se[static_cast<Eigen::Index>(k)];
        model.fit.tval[kept[k]] = reduced.tval[static_cast<Eigen::Index>(k)];
    }
    return model;
}

/// ln T' = ln T - ln c_i - ln c_j + ln t'_proj - ln t_hat. The denominator is
/// the model-predicted density at observed coverage, not the observed one.
inline double rescale_log_count(const RescaleModel& model,
                                const DensityMatrix& m, std::size_t i,
                                std::size_t j) {
    double ln_t_hat = model.predict_observed(m, i, j);
    double ln_t_proj = model.project_full_population(m, i, j);
    return std::log(m.ties(i, j)) - std::log(m.coverage(i)) -
           std::log(m.coverage(j)) + ln_t_proj - ln_t_hat;
}

// ---------------------------------------------------------------------------
// The rescaled network: per present pair the rescaled density and count, and
// for between-country pairs the edge weight w = ln t' - ln t'_min.

class RescaledNetwork {
public:
    RescaledNetwork() = default;

    static RescaledNetwork build(const DensityMatrix& m,
                                 const RescaleModel& model) {
        RescaledNetwork net;
        net.countries_ = m.countries();
        net.n_ = m.size();
        net.ln_t_prime_.assign(net.n_ * net.n_, 0.0);
        net.ln_count_prime_.assign(net.n_ * net.n_, 0.0);
        net.present_.assign(net.n_ * net.n_, 0);

        for (std::size_t i = 0; i < net.n_; ++i)
            for (std::size_t j = i; j < net.n_; ++j) {
                if (!m.present(i, j)) continue;
                double ln_t_hat = model.predict_observed(m, i, j);
                double ln_t_proj = model.project_full_population(m, i, j);
                double ln_t_prime = *m.log_density(i, j) + ln_t_proj - ln_t_hat;
                double ln_count = std::log(m.ties(i, j)) -
                                  std::log(m.coverage(i)) -
                                  std::log(m.coverage(j)) + ln_t_proj - ln_t_hat;
                net.set(net.ln_t_prime_, i, j, ln_t_prime);
                net.set(net.ln_count_prime_, i, j, ln_count);
                net.present_[i * net.n_ + j] = net.present_[j * net.n_ + i] = 1;
                if (i != j)
                    net.ln_t_prime_min_ = std::min(net.ln_t_prime_min_, ln_t_prime);
            }
        return net;
    }

    std::size_t size() const { return n_; }
    const std::vector<CountryCode>& countries() const { return countries_; }
    const CountryCode& code(std::size_t i) const { return countries_[i]; }

    std::optional<std::size_t> index_of(const CountryCode& c) const {
        for (std::size_t i = 0; i < n_; ++i)
            if (countries_[i] == c) return i;
        return std::nullopt;
    }

    bool present(std::size_t i, std::size_t j) const {
        return present_[i * n_ + j];
    }
    double ln_t_prime(std::size_t i, std::size_t j) const {
        return ln_t_prime_[i * n_ + j];
    }
    double count_prime(std::size_t i, std::size_t j) const {
        return std::exp(ln_count_prime_[i * n_ + j]);
    }
    double ln_t_prime_min() const { return ln_t_prime_min_; }

    /// Edge weight for a present between-country pair; absent pairs have no
    /// weight (no zero-fill).
    std::optional<double> weight(std::size_t i, std::size_t j) const {
        if (i == j || !present(i, j)) return std::nullopt;
        return ln_t_prime(i, j) - ln_t_prime_min_;
    }

    void set_cell(std::size_t i, std::size_t j, double ln_t_prime,
                  double ln_count_prime) {
        set(ln_t_prime_, i, j, ln_t_prime);
        set(ln_count_prime_, i, j, ln_count_prime);
        present_[i * n_ + j] = present_[j * n_ + i] = 1;
        if (i != j) ln_t_prime_min_ = std::min(ln_t_prime_min_, ln_t_prime);
    }

    static RescaledNetwork empty(std::vector<CountryCode> countries) {
        RescaledNetwork net;
        net.countries_ = std::move(countries);
        net.n_ = net.countries_.size();
        net.ln_t_prime_.assign(net.n_ * net.n_, 0.0);
        net.ln_count_prime_.assign(net.n_ * net.n_, 0.0);
        net.present_.assign(net.n_ * net.n_, 0);
        return net;
    }

private:
    void set(std::vector<double>& v, std::size_t i, std::size_t j, double x) {
        v[i * n_ + j] = x;
        v[j * n_ + i] = x;
    }

    std::vector<CountryCode> countries_;
    std::size_t n_ = 0;
    std::vector<double> ln_t_prime_;
    std::vector<double> ln_count_prime_;
    std::vector<char> present_;
    double ln_t_prime_min_ = std::numeric_limits<double>::infinity();
};

// ---------------------------------------------------------------------------
// rescaled.csv: i,j,ln_t_prime,T_prime,w (w blank for within-country rows).

inline void write_rescaled_csv(std::ostream& out, const RescaledNetwork& net) {
    CsvWriter w(out);
    w.row("i", "j", "ln_t_prime", "T_prime", "w");
    for (std::size_t i = 0; i < net.size(); ++i)
        for (std::size_t j = i; j < net.size(); ++j) {
            if (!net.present(i, j)) continue;
            auto weight = net.weight(i, j);
            w.row(net.code(i), net.code(j), net.ln_t_prime(i, j),
                  net.count_prime(i, j),
                  weight ? format_double(*weight) : std::string());
        }
}

inline RescaledNetwork read_rescaled_csv(const std::string& path) {
    CsvReader reader(path);
    std::size_t c_i = reader.column("i");
    std::size_t c_j = reader.column("j");
    std::size_t c_lt = reader.column("ln_t_prime");
    std::size_t c_tp = reader.column("T_prime");

    struct Row {
        CountryCode i, j;
        double ln_t_prime, ln_count;
    };
    std::vector<Row> rows;
    std::set<CountryCode> codes;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        if (f.size() < 5) detail::bad_row(reader, "too few fields");
        auto lt = parse_double(f[c_lt]);
        auto tp = parse_double(f[c_tp]);
        if (!lt || !tp || f[c_i].empty() || f[c_j].empty())
            detail::bad_row(reader, "bad rescaled row");
        rows.push_back({std::string(f[c_i]), std::string(f[c_j]), *lt,
                        std::log(*tp)});
        codes.insert(rows.back().i);
        codes.insert(rows.back().j);
    }
    RescaledNetwork net = RescaledNetwork::empty(
        std::vector<CountryCode>(codes.begin(), codes.end()));
    for (const auto& r : rows) {
        std::size_t i = *net.index_of(r.i), j = *net.index_of(r.j);
        net.set_cell(i, j, r.ln_t_prime, r.ln_count);
    }
    return net;
}

}  // namespace meshflow
