#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "gnnsim/graph.hpp"
#include "test_helpers.hpp"

using namespace gnnsim;

TEST_CASE("build_graph symmetrizes, deduplicates and drops self-loops") {
    // Duplicates, reversed duplicates and a self-loop collapse to 2 edges.
    Graph g = build_graph(3, {{0, 1}, {1, 0}, {0, 1}, {2, 2}, {1, 2}});
    CHECK(g.num_edges == 2);
    g.validate();
    CHECK(g.degrees[1] == 2);
    CHECK(g.neighbors(1)[0] == 0);
    CHECK(g.neighbors(1)[1] == 2);
}

TEST_CASE("g8 toy graph adjacency matches a hand count") {
    Graph g = testutil::g8_graph();
    g.validate();
    CHECK(g.num_vertices == 8);
    // Independent oracle: count directed entries from a dense adjacency matrix.
    bool adj[8][8] = {};
    for (auto [u, v] : testutil::g8_edges()) adj[u][v] = adj[v][u] = true;
    int directed = 0;
    for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) directed += adj[u][v];
    CHECK(directed == 16);
    CHECK(2 * g.num_edges == uint64_t(directed));
    CHECK(g.csr_offsets[8] == uint64_t(directed));
}

TEST_CASE("generate_er extremes") {
    Graph empty = generate_er(100, 0.0, 7);
    CHECK(empty.num_edges == 0);
    Graph full = generate_er(100, 1.0, 7);
    CHECK(full.num_edges == 4950);
    full.validate();
}

TEST_CASE("generate_er edge count stays within 4 sigma of the binomial mean") {
    Graph g = generate_er(10000, 0.002, 123);
    const double pairs = 10000.0 * 9999.0 / 2.0;
    const double mean = pairs * 0.002;  // 99,990
    const double sigma = std::sqrt(mean * 0.998);
    CHECK(std::abs(double(g.num_edges) - mean) < 4.0 * sigma);
}

TEST_CASE("generate_er is reproducible per seed") {
    Graph a = generate_er(500, 0.01, 42);
    Graph b = generate_er(500, 0.01, 42);
    Graph c = generate_er(500, 0.01, 43);
    CHECK(a.csr_neighbors == b.csr_neighbors);
    CHECK(a.csr_offsets == b.csr_offsets);
    CHECK(a.csr_neighbors != c.csr_neighbors);
}

TEST_CASE("normalize_adjacency isolated vertex gets a unit self weight") {
    Graph g = build_graph(3, {{0, 1}});
    auto m = normalize_adjacency<double>(g);
    CHECK(m.row_size(2) == 1);
    CHECK(m.cols[m.offsets[2]] == 2);
    CHECK(m.vals[m.offsets[2]] == 1.0);
}

TEST_CASE("normalize_adjacency on K2 gives four 0.5 weights") {
    Graph g = build_graph(2, {{0, 1}});
    auto m = normalize_adjacency<double>(g);
    REQUIRE(m.vals.size() == 4);
    for (double w : m.vals) CHECK(w == 0.5);
}

TEST_CASE("normalize_adjacency star weights") {
    // Star with center 0 and three leaves.
    Graph g = build_graph(4, {{0, 1}, {0, 2}, {0, 3}});
    auto m = normalize_adjacency<double>(g);
    // center self weight 1/4, center-leaf 1/sqrt(4*2)
    for (uint64_t i = m.offsets[0]; i < m.offsets[1]; ++i) {
        if (m.cols[i] == 0)
            CHECK(m.vals[i] == doctest::Approx(0.25).epsilon(1e-15));
        else
            CHECK(m.vals[i] == doctest::Approx(1.0 / std::sqrt(8.0)).epsilon(1e-15));
    }
}

TEST_CASE("normalize_adjacency is symmetric and row sizes are degree+1") {
    Graph g = generate_er(120, 0.05, 5);
    auto m = normalize_adjacency<double>(g);
    for (VertexId v = 0; v < g.num_vertices; ++v) {
        CHECK(m.row_size(v) == g.degrees[v] + 1);
        for (uint64_t i = m.offsets[v]; i < m.offsets[v + 1]; ++i) {
            const VertexId u = m.cols[i];
            // find (u,v)
            bool found = false;
            for (uint64_t j = m.offsets[u]; j < m.offsets[u + 1]; ++j)
                if (m.cols[j] == v) {
                    CHECK(m.vals[j] == m.vals[i]);
                    found = true;
                }
            CHECK(found);
        }
    }
}

TEST_CASE("normalize_adjacency without self-loops matches 1/sqrt(DuDv)") {
    Graph g = testutil::g8_graph();
    auto m = normalize_adjacency<double>(g, false);
    CHECK(m.vals.size() == 2 * g.num_edges);
    for (VertexId v = 0; v < g.num_vertices; ++v)
        for (uint64_t i = m.offsets[v]; i < m.offsets[v + 1]; ++i) {
            const VertexId u = m.cols[i];
            CHECK(u != v);
            CHECK(m.vals[i] ==
                  doctest::Approx(1.0 / std::sqrt(double(g.degrees[u]) * g.degrees[v]))
                      .epsilon(1e-15));
        }
}

TEST_CASE("mean_adjacency rows sum to one except isolated vertices") {
    Graph g = build_graph(5, {{0, 1}, {0, 2}, {1, 2}, {3, 0}});
    auto m = mean_adjacency<double>(g);
    for (VertexId v = 0; v < 5; ++v) {
        double s = 0;
        for (uint64_t i = m.offsets[v]; i < m.offsets[v + 1]; ++i) s += m.vals[i];
        if (g.degrees[v] == 0)
            CHECK(s == 0.0);
        else
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("generate_er rejects bad arguments") {
    CHECK_THROWS(generate_er(0, 0.5, 1));
    CHECK_THROWS(generate_er(10, -0.1, 1));
    CHECK_THROWS(generate_er(10, 1.5, 1));
}
