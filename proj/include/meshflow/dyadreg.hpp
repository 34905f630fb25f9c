#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "meshflow/lmm.hpp"
#include "meshflow/rescale.hpp"
#include "meshflow/types.hpp"

namespace meshflow {

// Dyadic regression table: one row per unordered country pair with a present
// rescaled density, response = log rescaled density, covariates as in the
// mixed-model specification (economic factors, cultural factors, controls).

enum class ImputePolicy { mean, min };

namespace dyad_cols {
enum : int {
    intercept = 0,
    mean_gdp,
    diff_gdp,
    trade_affinity,
    common_civilization,
    pdi_mean,
    pdi_diff,
    idv_mean,
    idv_diff,
    mas_mean,
    mas_diff,
    uai_mean,
    uai_diff,
    trust_mean,
    trust_diff,
    common_language,
    colonial_link,
    commonwealth_link,
    ln_pop_mean,
    ln_pop_ratio,
    ln_distance,
    same_region,
    contiguous,
    visa_required,
    ln_flights,
    both_eea,
    count,
};
}  // namespace dyad_cols

inline const std::vector<std::string>& dyad_column_names() {
    static const std::vector<std::string> names = {
        "intercept",       "mean_gdp",      "diff_gdp",     "trade_affinity",
        "common_civilization", "pdi_mean",  "pdi_diff",     "idv_mean",
        "idv_diff",        "mas_mean",      "mas_diff",     "uai_mean",
        "uai_diff",        "trust_mean",    "trust_diff",   "common_language",
        "colonial_link",   "commonwealth_link", "ln_pop_mean", "ln_pop_ratio",
        "ln_distance",     "same_region",   "contiguous",   "visa_required",
        "ln_flights",      "both_eea"};
    return names;
}

struct DyadDesign {
    std::vector<std::string> names;
    Eigen::MatrixXd X;
    Eigen::VectorXd y;  // ln t'
    std::vector<int> slot1, slot2;       // subset-country index per row
    std::vector<CountryCode> countries;  // the complete-case subset, sorted
    std::vector<PairKey> pairs;
    std::vector<char> trade_imputed;
    std::size_t n_imputed = 0;
};

/// Countries usable in the dyadic model: not excluded, and all country-level
/// covariates present.
inline std::vector<CountryCode> complete_case_subset(
    const CountryRegistry& registry) {
    std::vector<CountryCode> out;
    for (const auto& m : registry.rows()) {
        if (m.excluded) continue;
        if (m.gdp_per_capita <= 0 || !m.pdi || !m.idv || !m.mas || !m.uai ||
            !m.gen_trust || m.languages.empty() || m.region.empty())
            continue;
        out.push_back(m.code);
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline DyadDesign build_dyad_table(const RescaledNetwork& net,
                                   const CountryRegistry& registry,
                                   const DyadTable& dyads,
                                   const std::vector<CountryCode>& subset,
                                   ImputePolicy impute = ImputePolicy::mean) {
    namespace dc = dyad_cols;
    DyadDesign d;
    d.names = dyad_column_names();
    d.countries = subset;
    std::sort(d.countries.begin(), d.countries.end());

    std::vector<const CountryMeta*> meta;
    std::vector<std::size_t> net_idx;
    for (const auto& code : d.countries) {
        const CountryMeta* m = registry.find(code);
        if (!m || m->gdp_per_capita <= 0 || !m->pdi || !m->idv || !m->mas ||
            !m->uai || !m->gen_trust || m->languages.empty() || m->region.empty())
            throw DataError("dyad table: covariate missing for subset country " +
                            code);
        auto idx = net.index_of(code);
        if (!idx)
            throw DataError("dyad table: country " + code +
                            " absent from the rescaled network");
        meta.push_back(m);
        net_idx.push_back(*idx);
    }

    struct RawRow {
        int a, b;
        std::optional<double> affinity;
    };
    std::vector<RawRow> raw;
    for (std::size_t a = 0; a < d.countries.size(); ++a)
        for (std::size_t b = a + 1; b < d.countries.size(); ++b) {
            if (!net.present(net_idx[a], net_idx[b])) continue;  // censored pair
            RawRow r{static_cast<int>(a), static_cast<int>(b), std::nullopt};
            PairKey key(d.countries[a], d.countries[b]);
            auto it = dyads.find(key);
            if (it != dyads.end() && it->second.trade_flow &&
                it->second.total_trade_a > 0 && it->second.total_trade_b > 0 &&
                *it->second.trade_flow > 0) {
                r.affinity = std::log(*it->second.trade_flow /
                                      std::sqrt(it->second.total_trade_a *
                                                it->second.total_trade_b));
            }
            raw.push_back(r);
        }

    // imputation for missing trade affinities
    double fill = 0.0;
    {
        double sum = 0.0, minv = std::numeric_limits<double>::infinity();
        std::size_t n_obs = 0;
        for (const auto& r : raw)
            if (r.affinity) {
                sum += *r.affinity;
                minv = std::min(minv, *r.affinity);
                ++n_obs;
            }
        if (n_obs > 0)
            fill = impute == ImputePolicy::mean ? sum / static_cast<double>(n_obs)
                                                : minv;
    }

    d.X.resize(static_cast<Eigen::Index>(raw.size()), dc::count);
    d.y.resize(static_cast<Eigen::Index>(raw.size()));
    for (std::size_t r = 0; r < raw.size(); ++r) {
        int a = raw[r].a, b = raw[r].b;
        const CountryMeta& ma = *meta[a];
        const CountryMeta& mb = *meta[b];
        PairKey key(d.countries[a], d.countries[b]);
        DyadMeta dm;
        if (auto it = dyads.find(key); it != dyads.end()) dm = it->second;

        double distance =
            dm.distance_km ? *dm.distance_km
                           : haversine_km(ma.centroid, mb.centroid);
        bool share_language = std::any_of(
            ma.languages.begin(), ma.languages.end(),
            [&](const std::string& l) { return mb.languages.count(l) > 0; });

        Eigen::VectorXd x = Eigen::VectorXd::Zero(dc::count);
        x[dc::intercept] = 1.0;
        x[dc::mean_gdp] = (ma.gdp_per_capita + mb.gdp_per_capita) / 2.0 / 1000.0;
        x[dc::diff_gdp] =
            std::abs(ma.gdp_per_capita - mb.gdp_per_capita) / 1000.0;
        x[dc::trade_affinity] = raw[r].affinity.value_or(fill);
        x[dc::common_civilization] =
            ma.civilization == mb.civilization ? 1.0 : 0.0;
        x[dc::pdi_mean] = (*ma.pdi + *mb.pdi) / 2.0;
        x[dc::pdi_diff] = std::abs(*ma.pdi - *mb.pdi);
        x[dc::idv_mean] = (*ma.idv + *mb.idv) / 2.0;
        x[dc::idv_diff] = std::abs(*ma.idv - *mb.idv);
        x[dc::mas_mean] = (*ma.mas + *mb.mas) / 2.0;
        x[dc::mas_diff] = std::abs(*ma.mas - *mb.mas);
        x[dc::uai_mean] = (*ma.uai + *mb.uai) / 2.0;
        x[dc::uai_diff] = std::abs(*ma.uai - *mb.uai);
        x[dc::trust_mean] = (*ma.gen_trust + *mb.gen_trust) / 2.0;
        x[dc::trust_diff] = std::abs(*ma.gen_trust - *mb.gen_trust);
        x[dc::common_language] = share_language ? 1.0 : 0.0;
        x[dc::colonial_link] = dm.colonial_link ? 1.0 : 0.0;
        x[dc::commonwealth_link] = dm.commonwealth_link ? 1.0 : 0.0;
        x[dc::ln_pop_mean] = 0.5 * (std::log(ma.population) + std::log(mb.population));
        x[dc::ln_pop_ratio] = std::log(std::min(ma.population, mb.population) /
                                       std::max(ma.population, mb.population));
        x[dc::ln_distance] = std::log(std::max(distance, 1.0));
        x[dc::same_region] = ma.region == mb.region ? 1.0 : 0.0;
        x[dc::contiguous] = dm.contiguous ? 1.0 : 0.0;
        x[dc::visa_required] = dm.visa_required ? 1.0 : 0.0;
        x[dc::ln_flights] = std::log(dm.direct_flights + 1.0);
        x[dc::both_eea] = ma.eea_member && mb.eea_member ? 1.0 : 0.0;

        d.X.row(static_cast<Eigen::Index>(r)) = x.transpose();
        d.y[static_cast<Eigen::Index>(r)] =
            net.ln_t_prime(net_idx[a], net_idx[b]);
        d.slot1.push_back(a);
        d.slot2.push_back(b);
        d.pairs.push_back(key);
        d.trade_imputed.push_back(raw[r].affinity ? 0 : 1);
        if (!raw[r].affinity) ++d.n_imputed;
    }
    return d;
}

// ---------------------------------------------------------------------------
// Fit drivers.

struct DyadRegConfig {
    bool reml = false;
    bool shared_country_effect = false;
    ImputePolicy impute = ImputePolicy::mean;
};

inline LmmData to_lmm_data(const DyadDesign& d, const DyadRegConfig& cfg) {
    LmmData data;
    data.X = d.X;
    data.y = d.y;
    data.slot1 = d.slot1;
    data.slot2 = d.slot2;
    data.n_countries = static_cast<int>(d.countries.size());
    data.shared_effect = cfg.shared_country_effect;
    return data;
}

/// Column indices with any between-row variation (the intercept always
/// stays). A dyad table from a small country subset can lack, say, any
/// commonwealth pair; such columns are unestimable and get dropped.
inline std::vector<Eigen::Index> varying_columns(const Eigen::MatrixXd& x) {
    std::vector<Eigen::Index> kept = {0};
    for (Eigen::Index j = 1; j < x.cols(); ++j)
        if (x.col(j).maxCoeff() > x.col(j).minCoeff()) kept.push_back(j);
    return kept;
}

inline LmmFit fit_main_model(const DyadDesign& d, const DyadRegConfig& cfg = {}) {
    LmmOptions opts;
    opts.reml = cfg.reml;
    LmmData data = to_lmm_data(d, cfg);
    std::vector<Eigen::Index> kept = varying_columns(data.X);
    std::vector<std::string> names, dropped;
    Eigen::MatrixXd xr(data.X.rows(), static_cast<Eigen::Index>(kept.size()));
    for (std::size_t k = 0; k < kept.size(); ++k) {
        xr.col(static_cast<Eigen::Index>(k)) = data.X.col(kept[k]);
        names.push_back(d.names[static_cast<std::size_t>(kept[k])]);
    }
    for (Eigen::Index j = 1; j < data.X.cols(); ++j)
        if (std::find(kept.begin(), kept.end(), j) == kept.end())
            dropped.push_back(d.names[static_cast<std::size_t>(j)]);
    data.X = std::move(xr);
    LmmFit fit = fit_lmm(data, opts, names);
    fit.dropped_constant = std::move(dropped);
    return fit;
}

/// One model per (varying) covariate: intercept + that covariate, same
/// crossed random effects, same rows. The McFadden baseline is shared across
/// the suite.
inline std::vector<LmmFit> fit_one_variable_suite(const DyadDesign& d,
                                                  const DyadRegConfig& cfg = {}) {
    LmmData base = to_lmm_data(d, cfg);
    LmmOptions opts;
    opts.reml = cfg.reml;
    double null_ll = lmm_null_loglik(base, opts);
    opts.null_loglik = null_ll;

    std::vector<LmmFit> fits;
    for (int j = 1; j < dyad_cols::count; ++j) {
        if (base.X.col(j).maxCoeff() <= base.X.col(j).minCoeff()) continue;
        LmmData one = base;
        one.X.resize(base.X.rows(), 2);
        one.X.col(0).setOnes();
        one.X.col(1) = base.X.col(j);
        fits.push_back(fit_lmm(one, opts, {"intercept", d.names[j]}));
    }
    return fits;
}

struct CivDummyDesign {
    DyadDesign design;
    std::vector<std::string> dropped;  // civs without a same-civ dyad
};

/// Replaces the pooled common-civilization dummy with one dummy per
/// civilization; civilizations with no same-civilization dyad are dropped.
inline CivDummyDesign build_civilization_design(const DyadDesign& d,
                                                const CountryRegistry& registry) {
    CivDummyDesign out;
    std::vector<Civilization> civ_of;
    for (const auto& code : d.countries)
        civ_of.push_back(registry.find(code)->civilization);

    std::array<long long, kNumCivilizations> same_count{};
    for (std::size_t r = 0; r < d.pairs.size(); ++r) {
        Civilization ca = civ_of[d.slot1[r]], cb = civ_of[d.slot2[r]];
        if (ca == cb) ++same_count[static_cast<int>(ca)];
    }
    std::vector<int> kept;
    for (int c = 0; c < kNumCivilizations; ++c) {
        if (same_count[c] > 0)
            kept.push_back(c);
        else if (std::any_of(civ_of.begin(), civ_of.end(), [&](Civilization cv) {
                     return static_cast<int>(cv) == c;
                 }))
            out.dropped.push_back(civilization_names()[c]);
    }
    if (kept.empty()) throw DataError("civilization dummies: all dummies empty");

    DyadDesign& nd = out.design;
    nd = d;
    int base_cols = dyad_cols::count;
    nd.X.resize(d.X.rows(), base_cols - 1 + static_cast<int>(kept.size()));
    nd.names.clear();
    int col = 0;
    for (int j = 0; j < base_cols; ++j) {
        if (j == dyad_cols::common_civilization) continue;
        nd.X.col(col) = d.X.col(j);
        nd.names.push_back(d.names[j]);
        ++col;
    }
    for (int c : kept) {
        for (Eigen::Index r = 0; r < d.X.rows(); ++r) {
            Civilization ca = civ_of[d.slot1[static_cast<std::size_t>(r)]];
            Civilization cb = civ_of[d.slot2[static_cast<std::size_t>(r)]];
            nd.X(r, col) = (ca == cb && static_cast<int>(ca) == c) ? 1.0 : 0.0;
        }
        nd.names.push_back(std::string("same_civ_") + civilization_names()[c]);
        ++col;
    }
    return out;
}

inline LmmFit fit_civilization_dummies(const CivDummyDesign& cd,
                                       const DyadRegConfig& cfg = {}) {
    return fit_main_model(cd.design, cfg);
}

}  // namespace meshflow
