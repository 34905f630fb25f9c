#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <string>
#include <vector>

#include "meshflow/graph.hpp"
#include "meshflow/rng.hpp"

namespace meshflow {

// ---------------------------------------------------------------------------
// Centralities.

inline std::vector<double> weighted_degrees(const WeightedCountryGraph& g) {
    std::vector<double> deg(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) deg[i] = g.weighted_degree(i);
    return deg;
}

/// Principal eigenvector of the weight matrix by power iteration on the
/// largest connected component (other nodes score 0). Scores are
/// nonnegative, oriented positive and normalized to unit Euclidean norm.
inline std::vector<double> eigenvector_centrality(const WeightedCountryGraph& g,
                                                  double tol = 1e-10,
                                                  std::size_t max_iter = 1000000) {
    std::size_t n = g.size();
    std::vector<double> scores(n, 0.0);
    if (n == 0) return scores;

    std::vector<int> comp = g.components();
    int n_comp = *std::max_element(comp.begin(), comp.end()) + 1;
    std::vector<std::size_t> comp_size(n_comp, 0);
    for (int c : comp) ++comp_size[c];
    int main_comp = static_cast<int>(
        std::max_element(comp_size.begin(), comp_size.end()) - comp_size.begin());

    std::vector<std::size_t> nodes;
    for (std::size_t i = 0; i < n; ++i)
        if (comp[i] == main_comp) nodes.push_back(i);
    if (nodes.size() == 1) {
        scores[nodes[0]] = 1.0;
        return scores;
    }

    // positive diagonal shift makes the top eigenvalue strictly dominant
    // (bipartite components otherwise oscillate) without changing the
    // eigenvector
    double shift = 1.0;
    for (std::size_t i : nodes) shift = std::max(shift, g.weighted_degree(i));

    std::size_t m = nodes.size();
    std::vector<double> x(m, 1.0 / std::sqrt(static_cast<double>(m))), next(m);
    const auto& adj = g.adjacency();
    for (std::size_t it = 0; it < max_iter; ++it) {
        for (std::size_t a = 0; a < m; ++a) {
            double s = shift * x[a];
            for (std::size_t nb : adj[nodes[a]]) {
                // neighbors stay within the component
                std::size_t b = static_cast<std::size_t>(
                    std::lower_bound(nodes.begin(), nodes.end(), nb) - nodes.begin());
                s += g.weight(nodes[a], nb) * x[b];
            }
            next[a] = s;
        }
        double norm = 0.0;
        for (double v : next) norm += v * v;
        norm = std::sqrt(norm);
        if (norm == 0.0) throw NumericError("eigenvector: zero iterate");
        double delta = 0.0;
        for (std::size_t a = 0; a < m; ++a) {
            next[a] /= norm;
            delta = std::max(delta, std::abs(next[a] - x[a]));
        }
        x = next;
        if (delta <= tol) {
            // orient so the largest-magnitude entry is positive
            double peak = 0.0;
            for (double v : x)
                if (std::abs(v) > std::abs(peak)) peak = v;
            double sign = peak < 0 ? -1.0 : 1.0;
            for (std::size_t a = 0; a < m; ++a)
                scores[nodes[a]] = std::max(0.0, sign * x[a]);
            double norm2 = 0.0;
            for (double v : scores) norm2 += v * v;
            norm2 = std::sqrt(norm2);
            for (double& v : scores) v /= norm2;
            return scores;
        }
    }
    throw NumericError("eigenvector centrality did not converge after " +
                       std::to_string(max_iter) + " iterations");
}

/// Brandes betweenness over weighted shortest paths. Weights are converted
/// to distances by the affine reversal d = (w_max + eps) - w, which preserves
/// the weight ordering (1/w would distort near-zero weights). Each unordered
/// pair contributes once.
inline std::vector<double> betweenness_centrality(const WeightedCountryGraph& g,
                                                  double eps = 1e-9) {
    std::size_t n = g.size();
    std::vector<double> cb(n, 0.0);
    if (n < 3) return cb;
    double wmax = g.max_weight();
    auto dist_of = [&](std::size_t u, std::size_t v) {
        return (wmax + eps) - g.weight(u, v);
    };
    const auto& adj = g.adjacency();
    const double inf = std::numeric_limits<double>::infinity();

    std::vector<double> d(n), sigma(n), delta(n);
    std::vector<std::vector<std::size_t>> pred(n);
    for (std::size_t s = 0; s < n; ++s) {
        std::fill(d.begin(), d.end(), inf);
        std::fill(sigma.begin(), sigma.end(), 0.0);
        std::fill(delta.begin(), delta.end(), 0.0);
        for (auto& p : pred) p.clear();
        d[s] = 0.0;
        sigma[s] = 1.0;

        using Entry = std::pair<double, std::size_t>;
        std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> pq;
        pq.push({0.0, s});
        std::vector<std::size_t> settled;
        std::vector<char> done(n, 0);
        while (!pq.empty()) {
            auto [du, u] = pq.top();
            pq.pop();
            if (done[u]) continue;
            done[u] = 1;
            settled.push_back(u);
            for (std::size_t v : adj[u]) {
                double alt = d[u] + dist_of(u, v);
                if (alt < d[v]) {
                    d[v] = alt;
                    sigma[v] = sigma[u];
                    pred[v].assign(1, u);
                    pq.push({alt, v});
                } else if (alt == d[v] && !done[v]) {
                    sigma[v] += sigma[u];
                    pred[v].push_back(u);
                }
            }
        }
        for (auto it = settled.rbegin(); it != settled.rend(); ++it) {
            std::size_t w = *it;
            for (std::size_t v : pred[w])
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            if (w != s) cb[w] += delta[w];
        }
    }
    for (double& v : cb) v /= 2.0;  // each unordered pair was seen twice
    return cb;
}

/// Arithmetic mean of scores per label. Every node must be labeled.
inline std::map<std::string, double> group_mean_centrality(
    const std::vector<double>& scores, const std::vector<std::string>& labels) {
    if (scores.size() != labels.size())
        throw DataError("group_mean_centrality: unlabeled country");
    std::map<std::string, std::pair<double, std::size_t>> acc;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i].empty())
            throw DataError("group_mean_centrality: unlabeled country");
        auto& [sum, count] = acc[labels[i]];
        sum += scores[i];
        ++count;
    }
    std::map<std::string, double> means;
    for (const auto& [label, sc] : acc)
        means[label] = sc.first / static_cast<double>(sc.second);
    return means;
}

// ---------------------------------------------------------------------------
// Top-k edges, by rescaled count or by normalized density weight.

enum class EdgeRankMode { raw_count_prime, density_weight };

struct RankedEdge {
    std::size_t i, j;  // i < j
    double key;
};

struct TopEdges {
    std::vector<RankedEdge> edges;
    bool truncated_request = false;  // k exceeded the edge count
};

inline TopEdges top_k_edges(const RescaledNetwork& net, std::size_t k,
                            EdgeRankMode mode) {
    if (k < 1) throw ConfigError("top_k_edges: k must be >= 1");
    std::vector<RankedEdge> all;
    for (std::size_t i = 0; i < net.size(); ++i)
        for (std::size_t j = i + 1; j < net.size(); ++j) {
            if (!net.present(i, j)) continue;
            double key = mode == EdgeRankMode::raw_count_prime
                             ? net.count_prime(i, j)
                             : *net.weight(i, j);
            all.push_back({i, j, key});
        }
    std::sort(all.begin(), all.end(), [](const RankedEdge& a, const RankedEdge& b) {
        if (a.key != b.key) return a.key > b.key;
        return std::tie(a.i, a.j) < std::tie(b.i, b.j);
    });
    TopEdges out;
    out.truncated_request = k > all.size();
    all.resize(std::min(k, all.size()));
    out.edges = std::move(all);
    return out;
}

// ---------------------------------------------------------------------------
// Force-directed layout (Fruchterman-Reingold). The ln-density weights of
// the full graph pass through the monotonic transform
// f(x) = ((x - min) / range)^4 and act as attraction multipliers.

struct LayoutConfig {
    std::size_t iterations = 500;
    std::uint64_t seed = 1;
    std::size_t k_top = 1000;  // overlay edge count
};

struct LayoutResult {
    std::vector<double> x, y;
    std::vector<RankedEdge> overlay;  // top-k edges by density weight
};

inline double layout_transform(double v, double lo, double hi) {
    if (hi <= lo) return 0.0;
    double t = (v - lo) / (hi - lo);
    return t * t * t * t;
}

inline LayoutResult layout(const RescaledNetwork& net,
                           const LayoutConfig& cfg = {}) {
    std::size_t n = net.size();
    LayoutResult res;
    res.x.assign(n, 0.0);
    res.y.assign(n, 0.0);
    if (n == 0) return res;

    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (net.present(i, j)) {
                lo = std::min(lo, net.ln_t_prime(i, j));
                hi = std::max(hi, net.ln_t_prime(i, j));
            }

    double side = static_cast<double>(n);  // area = n^2
    double k = std::sqrt(side * side / static_cast<double>(n));
    Rng rng = make_rng(cfg.seed);
    for (std::size_t i = 0; i < n; ++i) {
        res.x[i] = uniform_real(rng, 0.0, side);
        res.y[i] = uniform_real(rng, 0.0, side);
    }

    std::vector<double> dx(n), dy(n);
    for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
        std::fill(dx.begin(), dx.end(), 0.0);
        std::fill(dy.begin(), dy.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                double ex = res.x[i] - res.x[j], ey = res.y[i] - res.y[j];
                double d2 = ex * ex + ey * ey;
                double d = std::sqrt(d2) + 1e-9;
                double rep = k * k / d;
                dx[i] += ex / d * rep;
                dy[i] += ey / d * rep;
                dx[j] -= ex / d * rep;
                dy[j] -= ey / d * rep;
                if (net.present(i, j) && i != j) {
                    double mult = layout_transform(net.ln_t_prime(i, j), lo, hi);
                    double att = d2 / k * mult;
                    dx[i] -= ex / d * att;
                    dy[i] -= ey / d * att;
                    dx[j] += ex / d * att;
                    dy[j] += ey / d * att;
                }
            }
        // linear cooling
        double temp = side / 10.0 *
                      (1.0 - static_cast<double>(iter) /
                                 static_cast<double>(cfg.iterations));
        for (std::size_t i = 0; i < n; ++i) {
            double len = std::sqrt(dx[i] * dx[i] + dy[i] * dy[i]);
            if (len > 0) {
                double step = std::min(len, temp);
                res.x[i] += dx[i] / len * step;
                res.y[i] += dy[i] / len * step;
            }
            res.x[i] = std::clamp(res.x[i], 0.0, side);
            res.y[i] = std::clamp(res.y[i], 0.0, side);
        }
    }

    std::size_t have_edges = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (net.present(i, j)) ++have_edges;
    if (have_edges > 0)
        res.overlay = top_k_edges(net, std::min(cfg.k_top, have_edges),
                                  EdgeRankMode::density_weight)
                          .edges;
    return res;
}

}  // namespace meshflow
