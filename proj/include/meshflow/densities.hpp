#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "meshflow/csv.hpp"
#include "meshflow/types.hpp"

namespace meshflow {

// ---------------------------------------------------------------------------
// Reciprocal user graph: an undirected edge exists iff both directed records
// were observed. Users without any reciprocal tie are dropped (minimum
// degree of one).

struct UserGraph {
    std::vector<UserId> users;           // index -> id, degree >= 1 only
    std::vector<std::vector<int>> adj;   // sorted neighbor lists
    std::size_t n_edges = 0;
    std::size_t dropped_self_loops = 0;
    std::size_t dropped_foreign = 0;     // records naming non-accepted users

    std::optional<int> index_of(const UserId& u) const {
        auto it = std::lower_bound(users.begin(), users.end(), u);
        if (it == users.end() || *it != u) return std::nullopt;
        return static_cast<int>(it - users.begin());
    }

    std::size_t degree(int u) const { return adj[u].size(); }
};

inline UserGraph reciprocal_graph(const std::vector<EdgeRecord>& records,
                                  const std::set<UserId>& accepted) {
    UserGraph g;
    std::unordered_map<UserId, int> id;
    std::vector<UserId> names;
    auto intern = [&](const UserId& u) {
        auto [it, inserted] = id.emplace(u, static_cast<int>(names.size()));
        if (inserted) names.push_back(u);
        return it->second;
    };

    std::set<std::pair<int, int>> directed;
    for (const auto& r : records) {
        if (r.sender == r.recipient) {
            ++g.dropped_self_loops;
            continue;
        }
        if (!accepted.count(r.sender) || !accepted.count(r.recipient)) {
            ++g.dropped_foreign;
            continue;
        }
        if (r.count >= 1) directed.emplace(intern(r.sender), intern(r.recipient));
    }

    std::vector<std::set<int>> nbrs(names.size());
    for (const auto& [u, v] : directed) {
        if (u < v && directed.count({v, u})) {
            nbrs[u].insert(v);
            nbrs[v].insert(u);
            ++g.n_edges;
        }
    }

    // compact to users with degree >= 1, in sorted id order so lookups and
    // downstream iteration are deterministic
    std::vector<int> order(names.size());
    for (std::size_t i = 0; i < names.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return names[a] < names[b]; });
    std::vector<int> remap(names.size(), -1);
    for (int old : order) {
        if (nbrs[old].empty()) continue;
        remap[old] = static_cast<int>(g.users.size());
        g.users.push_back(names[old]);
    }
    g.adj.resize(g.users.size());
    for (std::size_t old = 0; old < names.size(); ++old) {
        if (remap[old] < 0) continue;
        for (int v : nbrs[old]) g.adj[remap[old]].push_back(remap[v]);
        std::sort(g.adj[remap[old]].begin(), g.adj[remap[old]].end());
    }
    return g;
}

// ---------------------------------------------------------------------------
// Country-pair densities. T(i,j) is stored raw; pairs whose count falls
// below the edge floor are recorded as absent rather than zero, and
// log-densities exist only for present pairs (no -inf anywhere).

class DensityMatrix {
public:
    DensityMatrix() = default;
    explicit DensityMatrix(std::vector<CountryCode> countries)
        : countries_(std::move(countries)),
          n_(countries_.size()),
          ties_(n_ * n_, 0.0),
          present_(n_ * n_, 0),
          users_(n_, 0.0),
          population_(n_, 0.0),
          mean_degree_(n_, 0.0) {
        for (std::size_t i = 0; i < n_; ++i) index_[countries_[i]] = i;
    }

    std::size_t size() const { return n_; }
    const std::vector<CountryCode>& countries() const { return countries_; }
    const CountryCode& code(std::size_t i) const { return countries_[i]; }

    std::optional<std::size_t> index_of(const CountryCode& c) const {
        auto it = index_.find(c);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    double ties(std::size_t i, std::size_t j) const { return ties_[cell(i, j)]; }
    bool present(std::size_t i, std::size_t j) const { return present_[cell(i, j)]; }

    double max_ties(std::size_t i, std::size_t j) const {
        if (i == j) return users_[i] * (users_[i] - 1.0) / 2.0;
        return users_[i] * users_[j];
    }

    /// ln t = ln(T / Tmax); absent when the pair is censored or empty.
    std::optional<double> log_density(std::size_t i, std::size_t j) const {
        if (!present(i, j)) return std::nullopt;
        return std::log(ties(i, j)) - std::log(max_ties(i, j));
    }

    double users(std::size_t i) const { return users_[i]; }
    double population(std::size_t i) const { return population_[i]; }
    double coverage(std::size_t i) const { return users_[i] / population_[i]; }
    double mean_degree(std::size_t i) const { return mean_degree_[i]; }

    void set_ties(std::size_t i, std::size_t j, double t) {
        ties_[cell(i, j)] = t;
        ties_[cell(j, i)] = t;
    }
    void set_present(std::size_t i, std::size_t j, bool p) {
        present_[cell(i, j)] = p;
        present_[cell(j, i)] = p;
    }
    void set_country(std::size_t i, double users, double population,
                     double mean_degree) {
        users_[i] = users;
        population_[i] = population;
        mean_degree_[i] = mean_degree;
    }

    /// Applies the censoring floor: pairs with 0 < T < floor become absent.
    void apply_edge_floor(double floor) {
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = i; j < n_; ++j)
                set_present(i, j, ties(i, j) >= floor && ties(i, j) > 0.0);
    }

    double total_ties() const {
        double sum = 0.0;
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = i; j < n_; ++j) sum += ties(i, j);
        return sum;
    }

private:
    std::size_t cell(std::size_t i, std::size_t j) const { return i * n_ + j; }

    std::vector<CountryCode> countries_;
    std::size_t n_ = 0;
    std::vector<double> ties_;
    std::vector<char> present_;
    std::vector<double> users_;
    std::vector<double> population_;
    std::vector<double> mean_degree_;
    std::map<CountryCode, std::size_t> index_;
};

/// Collapses the user graph to country-pair tie counts. Every graph user
/// must map to a retained country; a missing residence is a pipeline bug.
inline DensityMatrix collapse_to_countries(
    const UserGraph& g, const std::map<UserId, CountryCode>& residence,
    const CountryRegistry& registry, const std::vector<CountryCode>& retained,
    double edge_floor = 1.0) {
    std::vector<CountryCode> countries = retained;
    std::sort(countries.begin(), countries.end());
    DensityMatrix m(countries);

    std::vector<int> country_of(g.users.size(), -1);
    std::vector<double> n_users(m.size(), 0.0);
    std::vector<double> degree_sum(m.size(), 0.0);
    for (std::size_t u = 0; u < g.users.size(); ++u) {
        auto it = residence.find(g.users[u]);
        if (it == residence.end())
            throw DataError("graph user '" + g.users[u] + "' has no residence");
        auto idx = m.index_of(it->second);
        if (!idx)
            throw DataError("graph user '" + g.users[u] +
                            "' resides in a non-retained country " + it->second);
        country_of[u] = static_cast<int>(*idx);
        n_users[*idx] += 1.0;
        degree_sum[*idx] += static_cast<double>(g.degree(static_cast<int>(u)));
    }

    for (std::size_t u = 0; u < g.users.size(); ++u)
        for (int v : g.adj[u])
            if (static_cast<std::size_t>(v) > u) {
                std::size_t i = country_of[u], j = country_of[v];
                m.set_ties(i, j, m.ties(i, j) + 1.0);
            }

    for (std::size_t i = 0; i < m.size(); ++i) {
        const CountryMeta* meta = registry.find(m.code(i));
        if (!meta) throw DataError("country " + m.code(i) + " not in registry");
        double mean_deg = n_users[i] > 0 ? degree_sum[i] / n_users[i] : 0.0;
        m.set_country(i, n_users[i], meta->population, mean_deg);
    }
    m.apply_edge_floor(edge_floor);
    return m;
}

// ---------------------------------------------------------------------------
// densities.csv

inline void write_densities_csv(std::ostream& out, const DensityMatrix& m) {
    CsvWriter w(out);
    w.row("i", "j", "T", "Tmax", "ln_t", "N_i", "N_j", "c_i", "c_j",
          "meandeg_i", "meandeg_j");
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = i; j < m.size(); ++j) {
            if (!m.present(i, j)) continue;
            w.row(m.code(i), m.code(j), m.ties(i, j), m.max_ties(i, j),
                  *m.log_density(i, j), m.users(i), m.users(j), m.coverage(i),
                  m.coverage(j), m.mean_degree(i), m.mean_degree(j));
        }
}

inline DensityMatrix read_densities_csv(const std::string& path) {
    CsvReader reader(path);
    std::size_t c_i = reader.column("i");
    std::size_t c_j = reader.column("j");
    std::size_t c_T = reader.column("T");
    std::size_t c_Ni = reader.column("N_i");
    std::size_t c_Nj = reader.column("N_j");
    std::size_t c_ci = reader.column("c_i");
    std::size_t c_cj = reader.column("c_j");
    std::size_t c_di = reader.column("meandeg_i");
    std::size_t c_dj = reader.column("meandeg_j");

    struct Row {
        CountryCode i, j;
        double T;
    };
    std::vector<Row> rows;
    struct Info {
        double n, c, deg;
    };
    std::map<CountryCode, Info> info;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        if (f.size() < 11) detail::bad_row(reader, "too few fields");
        Row r{std::string(f[c_i]), std::string(f[c_j]), 0.0};
        auto T = parse_double(f[c_T]);
        auto ni = parse_double(f[c_Ni]), nj = parse_double(f[c_Nj]);
        auto ci = parse_double(f[c_ci]), cj = parse_double(f[c_cj]);
        auto di = parse_double(f[c_di]), dj = parse_double(f[c_dj]);
        if (!T || !ni || !nj || !ci || !cj || !di || !dj)
            detail::bad_row(reader, "bad density row");
        r.T = *T;
        info[r.i] = {*ni, *ci, *di};
        info[r.j] = {*nj, *cj, *dj};
        rows.push_back(std::move(r));
    }

    std::vector<CountryCode> countries;
    for (const auto& [code, _] : info) countries.push_back(code);
    DensityMatrix m(countries);
    for (const auto& [code, in] : info) {
        std::size_t idx = *m.index_of(code);
        m.set_country(idx, in.n, in.n / in.c, in.deg);
    }
    for (const auto& r : rows) {
        std::size_t i = *m.index_of(r.i), j = *m.index_of(r.j);
        m.set_ties(i, j, r.T);
        m.set_present(i, j, true);
    }
    return m;
}

}  // namespace meshflow
