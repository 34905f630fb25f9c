#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "meshflow/densities.hpp"
#include "meshflow/dyadreg.hpp"
#include "meshflow/graph.hpp"
#include "meshflow/partition.hpp"
#include "meshflow/qap.hpp"
#include "meshflow/rescale.hpp"
#include "meshflow/rng.hpp"

namespace meshflow {

// Synthetic worlds stand in for the proprietary dataset: countries with
// planted civilizational blocks, a full-population tie graph drawn from
// pair-level probabilities, and snowball-sampled observations that mimic
// uneven market penetration. Everything is reproducible under the spec seed.

struct WorldSpec {
    int n_countries = 30;
    double population_min = 300;   // log-uniform bounds, users per country
    double population_max = 1500;
    int n_civilizations = 6;       // at most 8 (the civilization enum)
    double base_log_density = -5.0;
    double civilization_bonus = 1.0;   // added to ln p for same-civ pairs
    double within_country_bonus = 0.5; // extra for i == j (no distance decay)
    double distance_decay = 0.5;       // times ln(distance_km)
    double coverage_min = 0.1;         // per-country c_i, uniform
    double coverage_max = 0.5;
    int snowball_seeds = 5;
    // sd of the log-normal per-user tie propensity (mean one). Propensity
    // heterogeneity is what makes snowball samples overstate densities:
    // expansion reaches high-propensity users first, so sparse samples look
    // denser than the population they came from.
    double user_heterogeneity = 1.2;
    std::uint64_t seed = 1;
};

struct GroundTruth {
    WorldSpec spec;
    std::vector<CountryCode> codes;
    // Adult population P_i: users with at least one tie in the full graph
    // (the study universe; isolated users are outside it). In pair-level
    // mode this is the raw generated population.
    std::vector<double> population;
    std::vector<int> civ;
    std::vector<LatLon> centroid;
    std::vector<double> coverage;    // c_i targets
    Eigen::MatrixXd ln_p;            // planted ln tie probability
    Eigen::MatrixXd true_ties;       // realized full-population T

    // materialized user graph (empty in pair-level mode)
    std::vector<std::size_t> offset;        // country i users: [offset[i], offset[i+1])
    std::vector<std::vector<int>> user_adj;
    std::vector<char> adult;                // degree >= 1 in the full graph

    std::size_t n_users() const { return offset.empty() ? 0 : offset.back(); }
    int country_of(std::size_t user) const {
        auto it = std::upper_bound(offset.begin(), offset.end(), user);
        return static_cast<int>(it - offset.begin()) - 1;
    }

    double true_max_ties(std::size_t i, std::size_t j) const {
        if (i == j) return population[i] * (population[i] - 1.0) / 2.0;
        return population[i] * population[j];
    }

    /// Realized census log-density; absent when no tie was drawn.
    std::optional<double> true_log_density(std::size_t i, std::size_t j) const {
        if (true_ties(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) < 1.0)
            return std::nullopt;
        return std::log(true_ties(static_cast<Eigen::Index>(i),
                                  static_cast<Eigen::Index>(j))) -
               std::log(true_max_ties(i, j));
    }
};

namespace synth_detail {

inline CountryCode synth_code(int i) {
    CountryCode c = "AA";
    c[0] = static_cast<char>('A' + i / 26);
    c[1] = static_cast<char>('A' + i % 26);
    return c;
}

}  // namespace synth_detail

/// Draws country attributes and the planted pair probabilities, realizes
/// full-population tie counts, and (when `materialize`) the user graph
/// itself. Pair-level mode skips the graph and is cheap at any scale.
inline GroundTruth generate_world(const WorldSpec& spec, bool materialize = true) {
    if (spec.n_civilizations < 1 || spec.n_civilizations > kNumCivilizations)
        throw ConfigError("synth: n_civilizations must be in [1, 8]");
    if (spec.coverage_min <= 0 || spec.coverage_max > 1 ||
        spec.coverage_min > spec.coverage_max)
        throw ConfigError("synth: coverage bounds must satisfy 0 < min <= max <= 1");

    GroundTruth gt;
    gt.spec = spec;
    int n = spec.n_countries;
    Rng attr_rng = make_rng(derive_seed(spec.seed, 1));

    std::vector<double> raw_pop;  // generated user slots per country
    for (int i = 0; i < n; ++i) {
        gt.codes.push_back(synth_detail::synth_code(i));
        double lp = uniform_real(attr_rng, std::log(spec.population_min),
                                 std::log(spec.population_max));
        raw_pop.push_back(std::max(10.0, std::round(std::exp(lp))));
        gt.centroid.push_back({uniform_real(attr_rng, -60.0, 70.0),
                               uniform_real(attr_rng, -180.0, 180.0)});
        gt.coverage.push_back(
            uniform_real(attr_rng, spec.coverage_min, spec.coverage_max));
    }
    gt.population = raw_pop;
    // balanced planted blocks in shuffled order
    std::vector<int> civ(n);
    for (int i = 0; i < n; ++i) civ[i] = i % spec.n_civilizations;
    fisher_yates(civ, attr_rng);
    gt.civ = civ;

    gt.ln_p.resize(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            double lp = spec.base_log_density;
            if (gt.civ[i] == gt.civ[j]) lp += spec.civilization_bonus;
            if (i == j) {
                lp += spec.within_country_bonus;
            } else {
                double d = std::max(1.0, haversine_km(gt.centroid[i], gt.centroid[j]));
                lp -= spec.distance_decay * std::log(d);
            }
            if (lp >= 0.0)
                throw ConfigError("synth: tie probability >= 1 for pair " +
                                  gt.codes[i] + "-" + gt.codes[j]);
            gt.ln_p(i, j) = gt.ln_p(j, i) = lp;
        }

    Rng tie_rng = make_rng(derive_seed(spec.seed, 2));
    gt.true_ties = Eigen::MatrixXd::Zero(n, n);

    if (!materialize) {
        // pair-level mode: propensities integrate out (mean one), plain
        // binomial counts
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                double tmax = i == j ? raw_pop[i] * (raw_pop[i] - 1.0) / 2.0
                                     : raw_pop[i] * raw_pop[j];
                if (tmax < 1.0) continue;
                long long t = std::binomial_distribution<long long>(
                    static_cast<long long>(tmax),
                    std::exp(gt.ln_p(i, j)))(tie_rng);
                gt.true_ties(i, j) = gt.true_ties(j, i) = static_cast<double>(t);
            }
        return gt;
    }

    gt.offset.assign(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 0; i < n; ++i)
        gt.offset[static_cast<std::size_t>(i) + 1] =
            gt.offset[static_cast<std::size_t>(i)] +
            static_cast<std::size_t>(raw_pop[i]);
    gt.user_adj.assign(gt.n_users(), {});

    // per-user tie propensities, mean one; ties land on endpoints drawn
    // proportionally to propensity
    std::vector<double> activity(gt.n_users());
    {
        Rng act_rng = make_rng(derive_seed(spec.seed, 6));
        double sigma = spec.user_heterogeneity;
        std::normal_distribution<double> gauss(-0.5 * sigma * sigma, sigma);
        for (auto& a : activity) a = std::exp(gauss(act_rng));
    }
    // per-country prefix sums for weighted endpoint draws
    std::vector<std::vector<double>> prefix(static_cast<std::size_t>(n));
    std::vector<double> total_activity(static_cast<std::size_t>(n), 0.0);
    for (int c = 0; c < n; ++c) {
        std::size_t lo = gt.offset[static_cast<std::size_t>(c)];
        std::size_t hi = gt.offset[static_cast<std::size_t>(c) + 1];
        auto& pre = prefix[static_cast<std::size_t>(c)];
        pre.reserve(hi - lo);
        double acc = 0.0;
        for (std::size_t u = lo; u < hi; ++u) {
            acc += activity[u];
            pre.push_back(acc);
        }
        total_activity[static_cast<std::size_t>(c)] = acc;
    }
    auto draw_user = [&](int c) {
        const auto& pre = prefix[static_cast<std::size_t>(c)];
        double x = uniform_real(tie_rng, 0.0, pre.back());
        std::size_t idx = static_cast<std::size_t>(
            std::lower_bound(pre.begin(), pre.end(), x) - pre.begin());
        return gt.offset[static_cast<std::size_t>(c)] + std::min(idx, pre.size() - 1);
    };

    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            double tmax = i == j ? raw_pop[i] * (raw_pop[i] - 1.0) / 2.0
                                 : raw_pop[i] * raw_pop[j];
            if (tmax < 1.0) continue;
            double p = std::exp(gt.ln_p(i, j));
            double lambda =
                i == j ? p * total_activity[i] * total_activity[i] / 2.0
                       : p * total_activity[i] * total_activity[j];
            lambda = std::min(lambda, 0.3 * tmax);  // dedupe headroom
            long long t = std::poisson_distribution<long long>(lambda)(tie_rng);
            if (t == 0) continue;

            std::unordered_set<std::uint64_t> chosen;
            chosen.reserve(static_cast<std::size_t>(t) * 2);
            while (chosen.size() < static_cast<std::size_t>(t)) {
                std::size_t u = draw_user(i);
                std::size_t v = draw_user(j);
                if (u == v) continue;
                std::uint64_t key = (static_cast<std::uint64_t>(std::min(u, v)) << 32) |
                                    static_cast<std::uint64_t>(std::max(u, v));
                if (!chosen.insert(key).second) continue;
                gt.user_adj[std::min(u, v)].push_back(static_cast<int>(std::max(u, v)));
                gt.user_adj[std::max(u, v)].push_back(static_cast<int>(std::min(u, v)));
            }
            gt.true_ties(i, j) = gt.true_ties(j, i) = static_cast<double>(t);
        }
    if (materialize) {
        for (auto& nbrs : gt.user_adj) std::sort(nbrs.begin(), nbrs.end());
        // the adult universe: users holding at least one tie
        gt.adult.assign(gt.n_users(), 0);
        std::vector<double> adults(static_cast<std::size_t>(n), 0.0);
        for (std::size_t u = 0; u < gt.n_users(); ++u)
            if (!gt.user_adj[u].empty()) {
                gt.adult[u] = 1;
                adults[static_cast<std::size_t>(gt.country_of(u))] += 1.0;
            }
        gt.population = adults;
    }
    return gt;
}

// ---------------------------------------------------------------------------
// Snowball sampling: each country starts a campaign from a few uniformly
// chosen seeds; campaigns expand breadth-first along graph edges (crossing
// borders), marking users until each country's coverage target is met, and
// top up with uniform random users when the frontiers run dry.

struct SnowballSample {
    std::vector<char> marked;          // per user
    std::vector<std::size_t> marked_count;  // per country
};

inline SnowballSample snowball_sample_users(const GroundTruth& gt,
                                            const std::vector<double>& coverage) {
    int n = gt.spec.n_countries;
    if (gt.user_adj.empty())
        throw DataError("snowball: world was generated without a user graph");
    SnowballSample s;
    s.marked.assign(gt.n_users(), 0);
    s.marked_count.assign(static_cast<std::size_t>(n), 0);

    std::vector<std::size_t> target(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        if (coverage[static_cast<std::size_t>(i)] > 1.0)
            throw ConfigError("snowball: coverage > 1 for " + gt.codes[i]);
        target[static_cast<std::size_t>(i)] = static_cast<std::size_t>(
            std::ceil(coverage[static_cast<std::size_t>(i)] * gt.population[i]));
    }

    Rng rng = make_rng(derive_seed(gt.spec.seed, 3));
    auto mark = [&](std::size_t u) {
        int c = gt.country_of(u);
        if (!gt.adult[u] || s.marked[u] || s.marked_count[c] >= target[c])
            return false;
        s.marked[u] = 1;
        ++s.marked_count[c];
        return true;
    };

    std::vector<std::deque<std::size_t>> frontier(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        std::size_t oi = gt.offset[static_cast<std::size_t>(i)];
        std::size_t slots = gt.offset[static_cast<std::size_t>(i) + 1] - oi;
        std::size_t want = std::min<std::size_t>(
            static_cast<std::size_t>(gt.spec.snowball_seeds), target[i]);
        std::set<std::size_t> seeds;
        while (seeds.size() < want) {
            std::size_t u = oi + uniform_index(rng, slots);
            if (gt.adult[u]) seeds.insert(u);
        }
        for (std::size_t u : seeds)
            if (mark(u)) frontier[static_cast<std::size_t>(i)].push_back(u);
    }

    bool progress = true;
    while (progress) {
        progress = false;
        for (int i = 0; i < n; ++i) {
            auto& q = frontier[static_cast<std::size_t>(i)];
            if (q.empty()) continue;
            std::size_t u = q.front();
            q.pop_front();
            progress = true;
            for (int v : gt.user_adj[u])
                if (mark(static_cast<std::size_t>(v)))
                    q.push_back(static_cast<std::size_t>(v));
        }
    }

    // uniform top-up for countries whose frontier exhausted early
    for (int i = 0; i < n; ++i) {
        std::size_t oi = gt.offset[static_cast<std::size_t>(i)];
        std::size_t slots = gt.offset[static_cast<std::size_t>(i) + 1] - oi;
        while (s.marked_count[static_cast<std::size_t>(i)] <
               target[static_cast<std::size_t>(i)]) {
            std::size_t u = oi + uniform_index(rng, slots);
            mark(u);
        }
    }
    return s;
}

/// Observed density matrix over the marked users (minimum degree one within
/// the observed subgraph, matching the pipeline's rule).
inline DensityMatrix observe_densities(const GroundTruth& gt,
                                       const SnowballSample& s) {
    int n = gt.spec.n_countries;
    std::vector<CountryCode> codes = gt.codes;
    DensityMatrix m(codes);

    std::vector<std::size_t> deg(gt.n_users(), 0);
    for (std::size_t u = 0; u < gt.n_users(); ++u) {
        if (!s.marked[u]) continue;
        for (int v : gt.user_adj[u])
            if (s.marked[static_cast<std::size_t>(v)]) ++deg[u];
    }

    std::vector<double> n_users(static_cast<std::size_t>(n), 0.0);
    std::vector<double> deg_sum(static_cast<std::size_t>(n), 0.0);
    for (std::size_t u = 0; u < gt.n_users(); ++u) {
        if (!s.marked[u] || deg[u] == 0) continue;
        int c = gt.country_of(u);
        n_users[c] += 1.0;
        deg_sum[c] += static_cast<double>(deg[u]);
        for (int v : gt.user_adj[u]) {
            auto uv = static_cast<std::size_t>(v);
            if (uv > u && s.marked[uv] && deg[uv] > 0) {
                std::size_t i = *m.index_of(gt.codes[c]);
                std::size_t j = *m.index_of(gt.codes[gt.country_of(uv)]);
                m.set_ties(i, j, m.ties(i, j) + 1.0);
            }
        }
    }
    for (int c = 0; c < n; ++c) {
        std::size_t i = *m.index_of(gt.codes[c]);
        double mean_deg = n_users[c] > 0 ? deg_sum[c] / n_users[c] : 0.0;
        m.set_country(i, n_users[c], gt.population[c], mean_deg);
    }
    m.apply_edge_floor(1.0);
    return m;
}

/// Density matrix of the full (census) graph, for fixed-point checks.
inline DensityMatrix census_densities(const GroundTruth& gt) {
    SnowballSample all;
    all.marked = gt.adult;
    all.marked_count.assign(static_cast<std::size_t>(gt.spec.n_countries), 0);
    return observe_densities(gt, all);
}

// ---------------------------------------------------------------------------
// Synthetic per-country covariates and dyadic metadata, so the downstream
// regression stages can run end-to-end on generated worlds. Languages and
// regions correlate loosely with the planted civilizations.

struct SynthWorldTables {
    CountryRegistry registry;
    DyadTable dyads;
};

inline SynthWorldTables synth_world_tables(const GroundTruth& gt) {
    Rng rng = make_rng(derive_seed(gt.spec.seed, 4));
    SynthWorldTables out;
    int n = gt.spec.n_countries;
    for (int i = 0; i < n; ++i) {
        CountryMeta m;
        m.code = gt.codes[i];
        m.name = "Country " + gt.codes[i];
        m.population = gt.population[i];
        m.civilization = static_cast<Civilization>(gt.civ[i] % kNumCivilizations);
        m.gdp_per_capita = uniform_real(rng, 1000.0, 60000.0);
        m.pdi = uniform_real(rng, 20.0, 95.0);
        m.idv = uniform_real(rng, 20.0, 95.0);
        m.mas = uniform_real(rng, 20.0, 95.0);
        m.uai = uniform_real(rng, 20.0, 95.0);
        m.gen_trust = uniform_real(rng, 10.0, 70.0);
        // civilization language for most countries, a private one otherwise
        if (uniform_real(rng) < 0.7)
            m.languages.insert("civ" + std::to_string(gt.civ[i]));
        else
            m.languages.insert("lang" + m.code);
        m.region = "R" + std::to_string(
                             static_cast<int>((gt.centroid[i].lon + 180.0) / 90.0));
        m.eea_member = uniform_real(rng) < 0.15;
        m.centroid = gt.centroid[i];
        m.excluded = false;
        out.registry.add(std::move(m));
    }
    // dyad covariates are independent noise (distance enters only through
    // distance_km itself), keeping the recovery oracles unconfounded
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            DyadMeta d;
            d.pair = PairKey(gt.codes[i], gt.codes[j]);
            if (uniform_real(rng) < 0.6)
                d.trade_flow = std::exp(uniform_real(rng, 10.0, 20.0));
            d.colonial_link = uniform_real(rng) < 0.05;
            d.commonwealth_link = uniform_real(rng) < 0.04;
            d.contiguous = uniform_real(rng) < 0.08;
            d.visa_required = uniform_real(rng) < 0.3;
            d.direct_flights = std::floor(uniform_real(rng, 0.0, 30.0));
            d.distance_km =
                std::max(1.0, haversine_km(gt.centroid[i], gt.centroid[j]));
            out.dyads.emplace(d.pair, std::move(d));
        }
    // dyadic trade totals, as the ingest loader derives them
    std::map<CountryCode, double> totals;
    for (const auto& [key, d] : out.dyads)
        if (d.trade_flow) {
            totals[key.a] += *d.trade_flow;
            totals[key.b] += *d.trade_flow;
        }
    for (auto& [key, d] : out.dyads) {
        d.total_trade_a = totals.count(key.a) ? totals[key.a] : 0.0;
        d.total_trade_b = totals.count(key.b) ? totals[key.b] : 0.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// End-to-end recovery report: how well the pipeline recovers the planted
// world from a snowball sample.

struct SynthReport {
    double corr_rescaled_vs_truth = 0.0;  // pearson(ln t', true ln t)
    double corr_observed_vs_truth = 0.0;  // pearson(ln t_obs, true ln t)
    double ari_greedy = 0.0;
    double ari_walktrap = 0.0;
    double qap_p_value = 1.0;
    double qap_observed_r = 0.0;
    double lmm_civ_coefficient = 0.0;
    double lmm_civ_se = 0.0;
    std::size_t n_pairs_compared = 0;
};

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    double n = static_cast<double>(x.size());
    if (n < 2) throw NumericError("pearson: too few points");
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sx += x[k];
        sy += y[k];
        sxx += x[k] * x[k];
        syy += y[k] * y[k];
        sxy += x[k] * y[k];
    }
    double vx = sxx - sx * sx / n, vy = syy - sy * sy / n;
    if (vx <= 0 || vy <= 0) throw NumericError("pearson: zero variance");
    return (sxy - sx * sy / n) / std::sqrt(vx * vy);
}

inline SynthReport planted_recovery_report(const WorldSpec& spec,
                                           std::size_t qap_perms = 1000,
                                           bool with_lmm = true) {
    GroundTruth gt = generate_world(spec);
    SnowballSample sample = snowball_sample_users(gt, gt.coverage);
    DensityMatrix observed = observe_densities(gt, sample);
    RescaleModel model = fit_rescale_model(observed);
    RescaledNetwork net = RescaledNetwork::build(observed, model);

    SynthReport rep;
    {
        std::vector<double> truth, rescaled, raw;
        for (std::size_t i = 0; i < observed.size(); ++i)
            for (std::size_t j = i + 1; j < observed.size(); ++j) {
                auto gi = static_cast<std::size_t>(i);  // codes align by sort
                auto true_ln = gt.true_log_density(gi, j);
                if (!observed.present(i, j) || !true_ln) continue;
                truth.push_back(*true_ln);
                rescaled.push_back(net.ln_t_prime(i, j));
                raw.push_back(*observed.log_density(i, j));
            }
        rep.n_pairs_compared = truth.size();
        rep.corr_rescaled_vs_truth = pearson(rescaled, truth);
        rep.corr_observed_vs_truth = pearson(raw, truth);
    }

    WeightedCountryGraph graph = WeightedCountryGraph::from_rescaled(net);
    Partition planted = Partition::from_labels(gt.civ, PartitionSource::civilization);
    rep.ari_greedy = rand_indices(detect_greedy(graph), planted).adjusted_rand;
    rep.ari_walktrap = rand_indices(detect_walktrap(graph), planted).adjusted_rand;

    {
        auto n = static_cast<Eigen::Index>(net.size());
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i + 1; j < n; ++j) {
                auto w = net.weight(static_cast<std::size_t>(i),
                                    static_cast<std::size_t>(j));
                if (w) a(i, j) = a(j, i) = *w;
            }
        QapResult qap = qap_test(a, gt.civ, qap_perms, derive_seed(spec.seed, 5));
        rep.qap_p_value = qap.p_value;
        rep.qap_observed_r = qap.observed_r;
    }

    if (with_lmm) {
        SynthWorldTables tables = synth_world_tables(gt);
        std::vector<CountryCode> subset = complete_case_subset(tables.registry);
        DyadDesign design =
            build_dyad_table(net, tables.registry, tables.dyads, subset);
        LmmFit fit = fit_main_model(design);
        for (std::size_t j = 0; j < fit.names.size(); ++j)
            if (fit.names[j] == "common_civilization") {
                rep.lmm_civ_coefficient = fit.beta[static_cast<Eigen::Index>(j)];
                rep.lmm_civ_se = fit.se[static_cast<Eigen::Index>(j)];
            }
    }
    return rep;
}

}  // namespace meshflow
