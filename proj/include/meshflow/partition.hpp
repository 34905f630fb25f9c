#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "meshflow/graph.hpp"
#include "meshflow/rng.hpp"

namespace meshflow {

// ---------------------------------------------------------------------------
// Partitions: one community id per country, ids dense 0..m-1.

enum class PartitionSource { civilization, greedy, walktrap, spinglass, external };

inline const char* to_string(PartitionSource s) {
    switch (s) {
        case PartitionSource::civilization: return "civilization";
        case PartitionSource::greedy: return "greedy";
        case PartitionSource::walktrap: return "walktrap";
        case PartitionSource::spinglass: return "spinglass";
        case PartitionSource::external: return "external";
    }
    return "?";
}

struct Partition {
    std::vector<int> labels;
    PartitionSource source = PartitionSource::external;

    int n_communities() const {
        return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    }

    /// Renumbers labels densely by first appearance.
    static Partition from_labels(const std::vector<int>& raw,
                                 PartitionSource source) {
        Partition p;
        p.source = source;
        p.labels.reserve(raw.size());
        std::map<int, int> remap;
        for (int label : raw) {
            auto [it, inserted] = remap.emplace(label, static_cast<int>(remap.size()));
            p.labels.push_back(it->second);
        }
        return p;
    }
};

/// Weighted modularity Q = (1/2m) sum_ij [w_ij - s_i s_j / 2m] delta(c_i, c_j).
inline double modularity(const WeightedCountryGraph& g,
                         const std::vector<int>& labels) {
    double two_m = 2.0 * g.total_weight();
    if (two_m <= 0) throw NumericError("modularity: graph has no edge weight");
    std::size_t n = g.size();
    int k = *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<double> internal(k, 0.0), strength(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        strength[labels[i]] += g.weighted_degree(i);
        for (std::size_t j = i + 1; j < n; ++j)
            if (g.has_edge(i, j) && labels[i] == labels[j])
                internal[labels[i]] += g.weight(i, j);
    }
    double q = 0.0;
    for (int c = 0; c < k; ++c)
        q += 2.0 * internal[c] / two_m - (strength[c] / two_m) * (strength[c] / two_m);
    return q;
}

// ---------------------------------------------------------------------------
// Greedy agglomerative modularity maximization (Clauset-Newman-Moore style,
// dense variant; country graphs are small). Merges the connected community
// pair with the largest dQ, ties broken by canonical pair order, and returns
// the partition along the merge path with maximum Q.

inline Partition detect_greedy(const WeightedCountryGraph& g,
                               double* best_q_out = nullptr) {
    std::size_t n = g.size();
    if (n == 0 || g.edge_count() == 0)
        throw DataError("detect_greedy: empty graph");
    double two_m = 2.0 * g.total_weight();

    // community-level weight fractions: e[c][d], a[c] = row sums
    std::vector<std::vector<double>> e(n, std::vector<double>(n, 0.0));
    std::vector<double> a(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (g.has_edge(i, j)) {
                e[i][j] = g.weight(i, j) / two_m;
                a[i] += e[i][j];
            }

    std::vector<int> rep(n);       // smallest original node in the community
    std::vector<char> alive(n, 1);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        rep[i] = static_cast<int>(i);
        labels[i] = static_cast<int>(i);
    }

    double q = 0.0;
    for (std::size_t i = 0; i < n; ++i) q -= a[i] * a[i];
    double best_q = q;
    std::vector<int> best_labels = labels;

    for (std::size_t step = 1; step < n; ++step) {
        double best_dq = -std::numeric_limits<double>::infinity();
        int bi = -1, bj = -1;
        for (std::size_t i = 0; i < n; ++i) {
            if (!alive[i]) continue;
            for (std::size_t j = i + 1; j < n; ++j) {
                if (!alive[j] || e[i][j] <= 0.0) continue;
                double dq = 2.0 * (e[i][j] - a[i] * a[j]);
                int ri = std::min(rep[i], rep[j]), rj = std::max(rep[i], rep[j]);
                bool better = dq > best_dq;
                if (dq == best_dq && bi >= 0) {
                    int cri = std::min(rep[bi], rep[bj]),
                        crj = std::max(rep[bi], rep[bj]);
                    better = std::tie(ri, rj) < std::tie(cri, crj);
                }
                if (better) {
                    best_dq = dq;
                    bi = static_cast<int>(i);
                    bj = static_cast<int>(j);
                }
            }
        }
        if (bi < 0) break;  // remaining communities are disconnected

        // merge bj into bi
        double cross = e[bi][bj];
        for (std::size_t kcol = 0; kcol < n; ++kcol) {
            if (!alive[kcol] || kcol == static_cast<std::size_t>(bi) ||
                kcol == static_cast<std::size_t>(bj))
                continue;
            e[bi][kcol] += e[bj][kcol];
            e[kcol][bi] = e[bi][kcol];
        }
        e[bi][bi] += e[bj][bj] + 2.0 * cross;
        e[bi][bj] = e[bj][bi] = 0.0;
        a[bi] += a[bj];
        alive[bj] = 0;
        rep[bi] = std::min(rep[bi], rep[bj]);
        for (std::size_t i = 0; i < n; ++i)
            if (labels[i] == bj) labels[i] = bi;

        q += best_dq;
        if (q > best_q) {
            best_q = q;
            best_labels = labels;
        }
    }
    if (best_q_out) *best_q_out = best_q;
    return Partition::from_labels(best_labels, PartitionSource::greedy);
}

// ---------------------------------------------------------------------------
// Walktrap (Pons-Latapy): communities merged bottom-up by Ward-style
// random-walk distance, cut at maximum modularity. Runs per connected
// component; each component's cut maximizes its own modularity contribution
// under the global normalization.

namespace detail {

struct WalktrapCommunity {
    std::vector<double> profile;  // average t-step transition row
    double size = 0.0;
    int rep = 0;
    bool alive = false;
};

}  // namespace detail

inline Partition detect_walktrap(const WeightedCountryGraph& g,
                                 std::size_t t_steps = 4) {
    std::size_t n = g.size();
    if (n == 0) throw DataError("detect_walktrap: empty graph");
    std::vector<int> comp = g.components();
    int n_comp = *std::max_element(comp.begin(), comp.end()) + 1;
    double two_m = 2.0 * g.total_weight();

    std::vector<int> labels(n, -1);
    int next_label = 0;

    for (int c = 0; c < n_comp; ++c) {
        std::vector<std::size_t> nodes;
        for (std::size_t i = 0; i < n; ++i)
            if (comp[i] == c) nodes.push_back(i);
        std::size_t m = nodes.size();
        if (m == 1) {
            labels[nodes[0]] = next_label++;
            continue;
        }

        // t-step transition rows for the component
        std::vector<double> deg(m, 0.0);
        std::vector<std::vector<double>> p(m, std::vector<double>(m, 0.0));
        for (std::size_t a = 0; a < m; ++a) {
            for (std::size_t b = 0; b < m; ++b)
                if (g.has_edge(nodes[a], nodes[b]))
                    deg[a] += g.weight(nodes[a], nodes[b]);
            for (std::size_t b = 0; b < m; ++b)
                if (g.has_edge(nodes[a], nodes[b]))
                    p[a][b] = g.weight(nodes[a], nodes[b]) / deg[a];
        }
        std::vector<std::vector<double>> pt = p;
        for (std::size_t step = 1; step < t_steps; ++step) {
            std::vector<std::vector<double>> nx(m, std::vector<double>(m, 0.0));
            for (std::size_t a = 0; a < m; ++a)
                for (std::size_t kk = 0; kk < m; ++kk) {
                    if (pt[a][kk] == 0.0) continue;
                    for (std::size_t b = 0; b < m; ++b)
                        nx[a][b] += pt[a][kk] * p[kk][b];
                }
            pt = std::move(nx);
        }

        std::vector<detail::WalktrapCommunity> comms(m);
        std::vector<std::vector<char>> adj(m, std::vector<char>(m, 0));
        std::vector<int> local(m);
        for (std::size_t a = 0; a < m; ++a) {
            comms[a].profile = pt[a];
            comms[a].size = 1.0;
            comms[a].rep = static_cast<int>(nodes[a]);
            comms[a].alive = true;
            local[a] = static_cast<int>(a);
            for (std::size_t b = 0; b < m; ++b)
                adj[a][b] = g.has_edge(nodes[a], nodes[b]);
        }

        auto delta_sigma = [&](std::size_t a, std::size_t b) {
            double r2 = 0.0;
            for (std::size_t kk = 0; kk < m; ++kk) {
                double d = comms[a].profile[kk] - comms[b].profile[kk];
                r2 += d * d / deg[kk];
            }
            return comms[a].size * comms[b].size /
                   (comms[a].size + comms[b].size) * r2;
        };

        // merge path, tracking the component's modularity contribution
        auto contribution = [&](const std::vector<int>& lab) {
            std::map<int, std::pair<double, double>> acc;  // internal, strength
            for (std::size_t a = 0; a < m; ++a) {
                acc[lab[a]].second += deg[a];
                for (std::size_t b = a + 1; b < m; ++b)
                    if (adj[a][b] && lab[a] == lab[b])
                        acc[lab[a]].first += g.weight(nodes[a], nodes[b]);
            }
            double qc = 0.0;
            for (const auto& [_, is] : acc)
                qc += 2.0 * is.first / two_m -
                      (is.second / two_m) * (is.second / two_m);
            return qc;
        };

        double best_q = contribution(local);
        std::vector<int> best_local = local;
        for (std::size_t step = 1; step < m; ++step) {
            double best_ds = std::numeric_limits<double>::infinity();
            int bi = -1, bj = -1;
            for (std::size_t a = 0; a < m; ++a) {
                if (!comms[a].alive) continue;
                for (std::size_t b = a + 1; b < m; ++b) {
                    if (!comms[b].alive || !adj[a][b]) continue;
                    double ds = delta_sigma(a, b);
                    int ra = std::min(comms[a].rep, comms[b].rep);
                    int rb = std::max(comms[a].rep, comms[b].rep);
                    bool better = ds < best_ds;
                    if (ds == best_ds && bi >= 0) {
                        int cra = std::min(comms[bi].rep, comms[bj].rep);
                        int crb = std::max(comms[bi].rep, comms[bj].rep);
                        better = std::tie(ra, rb) < std::tie(cra, crb);
                    }
                    if (better) {
                        best_ds = ds;
                        bi = static_cast<int>(a);
                        bj = static_cast<int>(b);
                    }
                }
            }
            if (bi < 0) break;

            double sa = comms[bi].size, sb = comms[bj].size;
            for (std::size_t kk = 0; kk < m; ++kk)
                comms[bi].profile[kk] =
                    (sa * comms[bi].profile[kk] + sb * comms[bj].profile[kk]) /
                    (sa + sb);
            comms[bi].size += sb;
            comms[bi].rep = std::min(comms[bi].rep, comms[bj].rep);
            comms[bj].alive = false;
            for (std::size_t kk = 0; kk < m; ++kk) {
                adj[bi][kk] = adj[bi][kk] || adj[bj][kk];
                adj[kk][bi] = adj[bi][kk];
            }
            for (std::size_t a = 0; a < m; ++a)
                if (local[a] == bj) local[a] = bi;

            double qc = contribution(local);
            if (qc > best_q) {
                best_q = qc;
                best_local = local;
            }
        }

        std::map<int, int> remap;
        for (std::size_t a = 0; a < m; ++a) {
            auto [it, inserted] = remap.emplace(best_local[a], next_label);
            if (inserted) ++next_label;
            labels[nodes[a]] = it->second;
        }
    }
    return Partition::from_labels(labels, PartitionSource::walktrap);
}

// ---------------------------------------------------------------------------
// Spinglass (Reichardt-Bornholdt Potts model, gamma-weighted configuration
// null), simulated annealing with a fixed geometric schedule, deterministic
// under seed.

struct SpinglassConfig {
    std::uint64_t seed = 1;
    double gamma = 1.0;
    int spins = 25;
    double t_start = 1.0;
    double t_stop = 0.005;
    double cooling = 0.99;
};

inline Partition detect_spinglass(const WeightedCountryGraph& g,
                                  const SpinglassConfig& cfg = {}) {
    std::size_t n = g.size();
    if (n == 0) throw DataError("detect_spinglass: empty graph");
    double two_m = 2.0 * g.total_weight();
    if (two_m <= 0) throw DataError("detect_spinglass: graph has no edge weight");

    Rng rng = make_rng(cfg.seed);
    int spins = std::min<int>(cfg.spins, static_cast<int>(n));
    std::vector<int> spin(n);
    for (std::size_t i = 0; i < n; ++i)
        spin[i] = static_cast<int>(uniform_index(rng, spins));

    std::vector<double> strength(n);
    for (std::size_t i = 0; i < n; ++i) strength[i] = g.weighted_degree(i);
    std::vector<double> spin_strength(spins, 0.0);
    for (std::size_t i = 0; i < n; ++i) spin_strength[spin[i]] += strength[i];

    const auto& adj = g.adjacency();
    auto weight_to_spin = [&](std::size_t v, int s) {
        double sum = 0.0;
        for (std::size_t u : adj[v])
            if (spin[u] == s) sum += g.weight(v, u);
        return sum;
    };
    // energy change for moving v to spin s
    auto delta_h = [&](std::size_t v, int s) {
        int s0 = spin[v];
        if (s == s0) return 0.0;
        double gain = weight_to_spin(v, s) -
                      cfg.gamma * strength[v] * spin_strength[s] / two_m;
        double loss = weight_to_spin(v, s0) -
                      cfg.gamma * strength[v] * (spin_strength[s0] - strength[v]) /
                          two_m;
        return loss - gain;
    };
    auto move = [&](std::size_t v, int s) {
        spin_strength[spin[v]] -= strength[v];
        spin_strength[s] += strength[v];
        spin[v] = s;
    };

    for (double temp = cfg.t_start; temp > cfg.t_stop; temp *= cfg.cooling) {
        for (std::size_t step = 0; step < n; ++step) {
            std::size_t v = uniform_index(rng, n);
            int s = static_cast<int>(uniform_index(rng, spins));
            double dh = delta_h(v, s);
            if (dh <= 0.0 || uniform_real(rng) < std::exp(-dh / temp)) move(v, s);
        }
    }

    // zero-temperature polish: single moves while any improves
    for (int sweep = 0; sweep < 100; ++sweep) {
        bool improved = false;
        for (std::size_t v = 0; v < n; ++v) {
            int best_s = spin[v];
            double best_dh = 0.0;
            for (int s = 0; s < spins; ++s) {
                double dh = delta_h(v, s);
                if (dh < best_dh) {
                    best_dh = dh;
                    best_s = s;
                }
            }
            if (best_s != spin[v]) {
                move(v, best_s);
                improved = true;
            }
        }
        if (!improved) break;
    }
    return Partition::from_labels(spin, PartitionSource::spinglass);
}

// ---------------------------------------------------------------------------
// Comparison statistics.

struct CrossTab {
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    std::vector<std::vector<long long>> counts;
};

inline CrossTab cross_tabulate(const Partition& pa, const Partition& pb,
                               const std::vector<std::string>& row_names = {}) {
    if (pa.labels.size() != pb.labels.size())
        throw DataError("cross_tabulate: mismatched country sets");
    int r = pa.n_communities(), c = pb.n_communities();
    CrossTab tab;
    tab.counts.assign(r, std::vector<long long>(c, 0));
    for (std::size_t i = 0; i < pa.labels.size(); ++i)
        ++tab.counts[pa.labels[i]][pb.labels[i]];
    for (int i = 0; i < r; ++i)
        tab.row_labels.push_back(
            static_cast<std::size_t>(i) < row_names.size() ? row_names[i]
                                                           : std::to_string(i));
    for (int j = 0; j < c; ++j) tab.col_labels.push_back(std::to_string(j));
    return tab;
}

struct RandIndices {
    double rand = 0.0;
    double adjusted_rand = 0.0;
};

/// Raw Rand (pairwise agreement share) and Hubert-Arabie adjusted Rand.
inline RandIndices rand_indices(const Partition& pa, const Partition& pb) {
    std::size_t n = pa.labels.size();
    if (n != pb.labels.size())
        throw DataError("rand_indices: mismatched country sets");
    if (n < 2) throw DataError("rand_indices: need at least 2 elements");

    int r = pa.n_communities(), c = pb.n_communities();
    std::vector<std::vector<double>> nij(r, std::vector<double>(c, 0.0));
    std::vector<double> ai(r, 0.0), bj(c, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        nij[pa.labels[k]][pb.labels[k]] += 1.0;
        ai[pa.labels[k]] += 1.0;
        bj[pb.labels[k]] += 1.0;
    }
    auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
    double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) sum_ij += choose2(nij[i][j]);
    for (int i = 0; i < r; ++i) sum_a += choose2(ai[i]);
    for (int j = 0; j < c; ++j) sum_b += choose2(bj[j]);
    double pairs = choose2(static_cast<double>(n));

    RandIndices out;
    out.rand = (pairs + 2.0 * sum_ij - sum_a - sum_b) / pairs;
    double expected = sum_a * sum_b / pairs;
    double denom = 0.5 * (sum_a + sum_b) - expected;
    out.adjusted_rand = denom == 0.0 ? 1.0 : (sum_ij - expected) / denom;
    return out;
}

struct ChiSquare {
    double statistic = 0.0;
    long long df = 0;
};

inline ChiSquare chi_square(const CrossTab& tab) {
    std::size_t r = tab.counts.size();
    if (r == 0) throw DataError("chi_square: empty table");
    std::size_t c = tab.counts[0].size();
    std::vector<double> row_sum(r, 0.0), col_sum(c, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            row_sum[i] += static_cast<double>(tab.counts[i][j]);
            col_sum[j] += static_cast<double>(tab.counts[i][j]);
            total += static_cast<double>(tab.counts[i][j]);
        }
    for (double s : row_sum)
        if (s <= 0) throw DataError("chi_square: zero row marginal");
    for (double s : col_sum)
        if (s <= 0) throw DataError("chi_square: zero column marginal");

    ChiSquare out;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            double expected = row_sum[i] * col_sum[j] / total;
            double d = static_cast<double>(tab.counts[i][j]) - expected;
            out.statistic += d * d / expected;
        }
    out.df = static_cast<long long>((r - 1) * (c - 1));
    return out;
}

}  // namespace meshflow
