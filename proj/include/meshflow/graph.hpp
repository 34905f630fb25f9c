#pragma once

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>
#include <vector>

#include "meshflow/errors.hpp"
#include "meshflow/rescale.hpp"
#include "meshflow/types.hpp"

namespace meshflow {

/// Undirected weighted graph over countries. No self-loops; weights finite
/// and nonnegative.
class WeightedCountryGraph {
public:
    WeightedCountryGraph() = default;

    explicit WeightedCountryGraph(std::vector<CountryCode> nodes)
        : nodes_(std::move(nodes)),
          n_(nodes_.size()),
          weight_(n_ * n_, 0.0),
          edge_(n_ * n_, 0) {}

    static WeightedCountryGraph from_rescaled(const RescaledNetwork& net) {
        WeightedCountryGraph g(net.countries());
        for (std::size_t i = 0; i < net.size(); ++i)
            for (std::size_t j = i + 1; j < net.size(); ++j)
                if (auto w = net.weight(i, j)) g.add_edge(i, j, *w);
        return g;
    }

    std::size_t size() const { return n_; }
    const std::vector<CountryCode>& nodes() const { return nodes_; }
    const CountryCode& code(std::size_t i) const { return nodes_[i]; }

    void add_edge(std::size_t i, std::size_t j, double w) {
        if (i == j) throw DataError("self-loop on " + nodes_[i]);
        if (!std::isfinite(w) || w < 0)
            throw DataError("bad edge weight on " + nodes_[i] + "-" + nodes_[j]);
        if (!edge_[i * n_ + j]) ++n_edges_;
        weight_[i * n_ + j] = weight_[j * n_ + i] = w;
        edge_[i * n_ + j] = edge_[j * n_ + i] = 1;
        adj_dirty_ = true;
    }

    bool has_edge(std::size_t i, std::size_t j) const { return edge_[i * n_ + j]; }
    double weight(std::size_t i, std::size_t j) const { return weight_[i * n_ + j]; }
    std::size_t edge_count() const { return n_edges_; }

    const std::vector<std::vector<std::size_t>>& adjacency() const {
        if (adj_dirty_) {
            adj_.assign(n_, {});
            for (std::size_t i = 0; i < n_; ++i)
                for (std::size_t j = 0; j < n_; ++j)
                    if (edge_[i * n_ + j]) adj_[i].push_back(j);
            adj_dirty_ = false;
        }
        return adj_;
    }

    double weighted_degree(std::size_t i) const {
        double s = 0.0;
        for (std::size_t j = 0; j < n_; ++j)
            if (edge_[i * n_ + j]) s += weight_[i * n_ + j];
        return s;
    }

    double total_weight() const {
        double s = 0.0;
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = i + 1; j < n_; ++j)
                if (edge_[i * n_ + j]) s += weight_[i * n_ + j];
        return s;
    }

    double max_weight() const {
        double m = 0.0;
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = i + 1; j < n_; ++j)
                if (edge_[i * n_ + j]) m = std::max(m, weight_[i * n_ + j]);
        return m;
    }

    /// Connected component id per node (by edge presence, not weight).
    std::vector<int> components() const {
        std::vector<int> comp(n_, -1);
        const auto& adj = adjacency();
        int next = 0;
        for (std::size_t s = 0; s < n_; ++s) {
            if (comp[s] >= 0) continue;
            comp[s] = next;
            std::queue<std::size_t> q;
            q.push(s);
            while (!q.empty()) {
                std::size_t u = q.front();
                q.pop();
                for (std::size_t v : adj[u])
                    if (comp[v] < 0) {
                        comp[v] = next;
                        q.push(v);
                    }
            }
            ++next;
        }
        return comp;
    }

private:
    std::vector<CountryCode> nodes_;
    std::size_t n_ = 0;
    std::vector<double> weight_;
    std::vector<char> edge_;
    std::size_t n_edges_ = 0;
    mutable std::vector<std::vector<std::size_t>> adj_;
    mutable bool adj_dirty_ = true;
};

}  // namespace meshflow
