#include <catch2/catch_amalgamated.hpp>

#include "meshflow/partition.hpp"
#include "meshflow/rng.hpp"

using namespace meshflow;

namespace {

std::vector<CountryCode> codes(std::size_t n) {
    std::vector<CountryCode> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(std::string(1, static_cast<char>('A' + i / 26)) +
                      std::string(1, static_cast<char>('A' + i % 26)));
    return out;
}

// two 4-cliques joined by one weak edge
WeightedCountryGraph dumbbell() {
    WeightedCountryGraph g(codes(8));
    for (std::size_t base : {std::size_t(0), std::size_t(4)})
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = i + 1; j < 4; ++j)
                g.add_edge(base + i, base + j, 5.0);
    g.add_edge(0, 4, 0.5);
    return g;
}

std::vector<int> dumbbell_truth() { return {0, 0, 0, 0, 1, 1, 1, 1}; }

struct Planted {
    WeightedCountryGraph graph;
    std::vector<int> truth;
};

// four strong blocks of six nodes
Planted planted_blocks(std::uint64_t seed) {
    Rng rng = make_rng(seed);
    std::size_t n = 24;
    Planted p{WeightedCountryGraph(codes(n)), {}};
    for (std::size_t i = 0; i < n; ++i)
        p.truth.push_back(static_cast<int>(i / 6));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (p.truth[i] == p.truth[j]) {
                if (uniform_real(rng) < 0.95)
                    p.graph.add_edge(i, j, uniform_real(rng, 4.0, 6.0));
            } else if (uniform_real(rng) < 0.1) {
                p.graph.add_edge(i, j, uniform_real(rng, 0.1, 0.6));
            }
        }
    return p;
}

WeightedCountryGraph random_graph(Rng& rng, std::size_t n) {
    WeightedCountryGraph g(codes(n));
    for (std::size_t i = 1; i < n; ++i)
        g.add_edge(i, uniform_index(rng, i), uniform_real(rng, 0.2, 4.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (!g.has_edge(i, j) && uniform_real(rng) < 0.3)
                g.add_edge(i, j, uniform_real(rng, 0.2, 4.0));
    return g;
}

Partition make_partition(std::vector<int> labels) {
    return Partition::from_labels(labels, PartitionSource::external);
}

// pair-enumeration oracle for both Rand flavors
RandIndices pair_oracle(const Partition& pa, const Partition& pb) {
    std::size_t n = pa.labels.size();
    double a = 0, b = 0, c = 0, d = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            bool same_a = pa.labels[i] == pa.labels[j];
            bool same_b = pb.labels[i] == pb.labels[j];
            if (same_a && same_b) a += 1;
            else if (same_a && !same_b) b += 1;
            else if (!same_a && same_b) c += 1;
            else d += 1;
        }
    RandIndices out;
    out.rand = (a + d) / (a + b + c + d);
    double denom = (a + b) * (b + d) + (a + c) * (c + d);
    out.adjusted_rand = denom == 0 ? 1.0 : 2.0 * (a * d - b * c) / denom;
    return out;
}

}  // namespace

TEST_CASE("greedy recovers the planted dumbbell", "[partition]") {
    Partition p = detect_greedy(dumbbell());
    CHECK(p.n_communities() == 2);
    CHECK(rand_indices(p, make_partition(dumbbell_truth())).adjusted_rand == 1.0);
}

TEST_CASE("greedy leaves the uniform complete graph whole", "[partition]") {
    WeightedCountryGraph g(codes(6));
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = i + 1; j < 6; ++j) g.add_edge(i, j, 1.0);
    double q = 0.0;
    Partition p = detect_greedy(g, &q);
    CHECK(p.n_communities() == 1);
    CHECK(q == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("greedy's internal Q matches recomputation from scratch",
          "[partition]") {
    Rng rng = make_rng(401);
    for (int trial = 0; trial < 10; ++trial) {
        WeightedCountryGraph g = random_graph(rng, 10);
        double q_internal = 0.0;
        Partition p = detect_greedy(g, &q_internal);
        CHECK(std::abs(q_internal - modularity(g, p.labels)) < 1e-12);
    }
}

TEST_CASE("empty graph is fatal for detection", "[partition]") {
    WeightedCountryGraph g(codes(3));
    CHECK_THROWS_AS(detect_greedy(g), DataError);
    CHECK_THROWS_AS(detect_spinglass(g), DataError);
}

TEST_CASE("walktrap recovers the planted dumbbell", "[partition]") {
    Partition p = detect_walktrap(dumbbell());
    CHECK(rand_indices(p, make_partition(dumbbell_truth())).adjusted_rand == 1.0);
}

TEST_CASE("walktrap on a single edge is Q-consistent", "[partition]") {
    WeightedCountryGraph g(codes(2));
    g.add_edge(0, 1, 1.0);
    Partition p = detect_walktrap(g);
    CHECK((p.n_communities() == 1 || p.n_communities() == 2));
    // never worse than all-singletons
    std::vector<int> singletons = {0, 1};
    CHECK(modularity(g, p.labels) >= modularity(g, singletons));
}

TEST_CASE("walktrap recovers strong planted blocks", "[partition]") {
    std::vector<double> aris;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Planted pl = planted_blocks(seed);
        Partition p = detect_walktrap(pl.graph);
        aris.push_back(rand_indices(p, make_partition(pl.truth)).adjusted_rand);
    }
    std::sort(aris.begin(), aris.end());
    double median = (aris[9] + aris[10]) / 2.0;
    CHECK(median >= 0.9);
}

TEST_CASE("spinglass recovers the dumbbell across seeds", "[partition]") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SpinglassConfig cfg;
        cfg.seed = seed;
        Partition p = detect_spinglass(dumbbell(), cfg);
        CHECK(rand_indices(p, make_partition(dumbbell_truth())).adjusted_rand ==
              1.0);
    }
}

TEST_CASE("spinglass is deterministic under a fixed seed", "[partition]") {
    Planted pl = planted_blocks(3);
    SpinglassConfig cfg;
    cfg.seed = 12;
    Partition a = detect_spinglass(pl.graph, cfg);
    Partition b = detect_spinglass(pl.graph, cfg);
    CHECK(a.labels == b.labels);
}

TEST_CASE("spinglass on the uniform complete graph has Q near zero",
          "[partition]") {
    WeightedCountryGraph g(codes(6));
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = i + 1; j < 6; ++j) g.add_edge(i, j, 1.0);
    SpinglassConfig cfg;
    cfg.seed = 5;
    Partition p = detect_spinglass(g, cfg);
    CHECK(modularity(g, p.labels) == Catch::Approx(0.0).margin(0.05));
}

TEST_CASE("spinglass keeps pace with greedy on planted blocks", "[partition]") {
    std::vector<double> sg, gr;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Planted pl = planted_blocks(seed + 100);
        Partition truth = make_partition(pl.truth);
        SpinglassConfig cfg;
        cfg.seed = seed;
        sg.push_back(
            rand_indices(detect_spinglass(pl.graph, cfg), truth).adjusted_rand);
        gr.push_back(rand_indices(detect_greedy(pl.graph), truth).adjusted_rand);
    }
    std::sort(sg.begin(), sg.end());
    std::sort(gr.begin(), gr.end());
    CHECK(sg[5] >= gr[5] - 0.1);  // medians
}

TEST_CASE("detected partitions never lose to all-singletons", "[partition]") {
    Rng rng = make_rng(402);
    for (int trial = 0; trial < 10; ++trial) {
        WeightedCountryGraph g = random_graph(rng, 12);
        std::vector<int> singletons(12);
        for (int i = 0; i < 12; ++i) singletons[i] = i;
        double q0 = modularity(g, singletons);
        CHECK(modularity(g, detect_greedy(g).labels) >= q0);
        CHECK(modularity(g, detect_walktrap(g).labels) >= q0);
        SpinglassConfig cfg;
        cfg.seed = trial + 1;
        CHECK(modularity(g, detect_spinglass(g, cfg).labels) >= q0);
    }
}

TEST_CASE("cross tabulation", "[partition]") {
    SECTION("identical partitions give a diagonal-permutation matrix") {
        Partition a = make_partition({0, 1, 1, 2, 0});
        CrossTab tab = cross_tabulate(a, a);
        for (std::size_t i = 0; i < tab.counts.size(); ++i)
            for (std::size_t j = 0; j < tab.counts[i].size(); ++j)
                if (i != j) CHECK(tab.counts[i][j] == 0);
    }
    SECTION("8 civilizations by 4 communities") {
        std::vector<int> civs, comms;
        Rng rng = make_rng(403);
        for (int i = 0; i < 141; ++i) {
            civs.push_back(i % 8);
            comms.push_back(static_cast<int>(uniform_index(rng, 4)));
        }
        CrossTab tab = cross_tabulate(make_partition(civs), make_partition(comms));
        REQUIRE(tab.counts.size() == 8);
        REQUIRE(tab.counts[0].size() == 4);
        // row sums are the civilization sizes
        std::vector<long long> sizes(8, 0);
        for (int c : civs) ++sizes[c];
        for (int r = 0; r < 8; ++r) {
            long long sum = 0;
            for (long long v : tab.counts[r]) sum += v;
            CHECK(sum == sizes[r]);
        }
    }
    SECTION("mismatched country sets are fatal") {
        CHECK_THROWS_AS(
            cross_tabulate(make_partition({0, 1}), make_partition({0, 1, 2})),
            DataError);
    }
}

TEST_CASE("rand indices", "[partition]") {
    SECTION("identical partitions score 1") {
        Partition a = make_partition({0, 1, 2, 1, 0});
        RandIndices ri = rand_indices(a, a);
        CHECK(ri.rand == 1.0);
        CHECK(ri.adjusted_rand == 1.0);
    }
    SECTION("two elements, split vs merged") {
        RandIndices ri =
            rand_indices(make_partition({0, 1}), make_partition({0, 0}));
        CHECK(ri.rand == 0.0);
    }
    SECTION("matches the pair-enumeration oracle exactly") {
        Rng rng = make_rng(404);
        for (int trial = 0; trial < 50; ++trial) {
            std::size_t n = 12;
            std::vector<int> la(n), lb(n);
            for (std::size_t i = 0; i < n; ++i) {
                la[i] = static_cast<int>(uniform_index(rng, 4));
                lb[i] = static_cast<int>(uniform_index(rng, 3));
            }
            Partition a = make_partition(la), b = make_partition(lb);
            RandIndices fast = rand_indices(a, b);
            RandIndices slow = pair_oracle(a, b);
            CHECK(fast.rand == slow.rand);
            CHECK(fast.adjusted_rand == Catch::Approx(slow.adjusted_rand).epsilon(1e-12));
            // symmetric in arguments
            RandIndices rev = rand_indices(b, a);
            CHECK(rev.rand == fast.rand);
            CHECK(rev.adjusted_rand == Catch::Approx(fast.adjusted_rand));
            CHECK(fast.adjusted_rand <= 1.0);
        }
    }
    SECTION("fewer than two elements is fatal") {
        CHECK_THROWS_AS(rand_indices(make_partition({0}), make_partition({0})),
                        DataError);
    }
}

TEST_CASE("chi-square statistic and degrees of freedom", "[partition]") {
    auto table_of = [](int r, int c, long long fill) {
        CrossTab tab;
        tab.counts.assign(r, std::vector<long long>(c, fill));
        for (int i = 0; i < r; ++i) tab.row_labels.push_back(std::to_string(i));
        for (int j = 0; j < c; ++j) tab.col_labels.push_back(std::to_string(j));
        return tab;
    };
    CHECK(chi_square(table_of(8, 4, 1)).df == 21);
    CHECK(chi_square(table_of(8, 8, 1)).df == 49);
    CHECK(chi_square(table_of(8, 3, 1)).df == 14);

    SECTION("independence-structured table scores zero") {
        // counts = products of marginals / total
        CrossTab tab;
        std::vector<long long> rows = {10, 20, 30};
        std::vector<long long> cols = {6, 24, 12, 18};
        long long total = 60;
        tab.counts.assign(3, std::vector<long long>(4, 0));
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 4; ++j)
                tab.counts[i][j] = rows[i] * cols[j] / total;
        tab.row_labels = {"a", "b", "c"};
        tab.col_labels = {"1", "2", "3", "4"};
        CHECK(chi_square(tab).statistic == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("invariant under row and column permutation") {
        Rng rng = make_rng(405);
        CrossTab tab = table_of(4, 5, 0);
        for (auto& row : tab.counts)
            for (auto& cell : row)
                cell = static_cast<long long>(uniform_index(rng, 20) + 1);
        double base = chi_square(tab).statistic;
        CrossTab shuffled = tab;
        std::reverse(shuffled.counts.begin(), shuffled.counts.end());
        for (auto& row : shuffled.counts) std::reverse(row.begin(), row.end());
        CHECK(chi_square(shuffled).statistic == Catch::Approx(base));
    }
    SECTION("zero marginal is fatal") {
        CrossTab tab = table_of(3, 3, 1);
        for (int j = 0; j < 3; ++j) tab.counts[1][j] = 0;
        CHECK_THROWS_AS(chi_square(tab), DataError);
    }
}
