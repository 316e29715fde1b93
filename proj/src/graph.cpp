#include "gnnsim/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gnnsim/rng.hpp"

namespace gnnsim {

void Graph::validate() const {
    if (csr_offsets.size() != size_t(num_vertices) + 1)
        throw std::runtime_error("graph: offsets length != N+1");
    if (csr_offsets.front() != 0 || csr_offsets.back() != 2 * num_edges)
        throw std::runtime_error("graph: offsets[N] != 2*num_edges");
    if (degrees.size() != num_vertices)
        throw std::runtime_error("graph: degrees length != N");
    for (VertexId v = 0; v < num_vertices; ++v) {
        if (csr_offsets[v] > csr_offsets[v + 1])
            throw std::runtime_error("graph: offsets not non-decreasing");
        if (degrees[v] != csr_offsets[v + 1] - csr_offsets[v])
            throw std::runtime_error("graph: degree/offset mismatch");
        auto ns = neighbors(v);
        for (size_t i = 0; i < ns.size(); ++i) {
            if (ns[i] >= num_vertices) throw std::runtime_error("graph: neighbor id out of range");
            if (ns[i] == v) throw std::runtime_error("graph: self-loop present");
            if (i > 0 && ns[i] <= ns[i - 1])
                throw std::runtime_error("graph: neighbors not strictly ascending");
        }
    }
}

Graph build_graph(VertexId num_vertices, std::vector<std::pair<VertexId, VertexId>> edges) {
    for (auto& [u, v] : edges) {
        if (u >= num_vertices || v >= num_vertices)
            throw std::runtime_error("build_graph: vertex id out of range");
        if (u > v) std::swap(u, v);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    std::erase_if(edges, [](const auto& e) { return e.first == e.second; });

    Graph g;
    g.num_vertices = num_vertices;
    g.num_edges = edges.size();
    g.degrees.assign(num_vertices, 0);
    for (const auto& [u, v] : edges) {
        ++g.degrees[u];
        ++g.degrees[v];
    }
    g.csr_offsets.assign(size_t(num_vertices) + 1, 0);
    for (VertexId v = 0; v < num_vertices; ++v)
        g.csr_offsets[v + 1] = g.csr_offsets[v] + g.degrees[v];
    g.csr_neighbors.resize(2 * g.num_edges);
    std::vector<uint64_t> cursor(g.csr_offsets.begin(), g.csr_offsets.end() - 1);
    for (const auto& [u, v] : edges) {
        g.csr_neighbors[cursor[u]++] = v;
        g.csr_neighbors[cursor[v]++] = u;
    }
    // Inputs sorted by (u,v) leave each row sorted except for rows receiving
    // both lower and upper entries; sort each row to be safe.
    for (VertexId v = 0; v < num_vertices; ++v)
        std::sort(g.csr_neighbors.begin() + g.csr_offsets[v],
                  g.csr_neighbors.begin() + g.csr_offsets[v + 1]);
    return g;
}

template <typename T>
CsrMatrix<T> normalize_adjacency(const Graph& g, bool add_self_loops) {
    CsrMatrix<T> m;
    m.n = g.num_vertices;
    const uint64_t loop = add_self_loops ? 1 : 0;
    m.offsets.assign(size_t(g.num_vertices) + 1, 0);
    for (VertexId v = 0; v < g.num_vertices; ++v)
        m.offsets[v + 1] = m.offsets[v] + g.degrees[v] + loop;
    m.cols.resize(m.offsets.back());
    m.vals.resize(m.offsets.back());
    for (VertexId v = 0; v < g.num_vertices; ++v) {
        const double dv = static_cast<double>(g.degrees[v]) + (add_self_loops ? 1.0 : 0.0);
        uint64_t w = m.offsets[v];
        bool self_done = !add_self_loops;
        auto emit = [&](VertexId u) {
            const double du = static_cast<double>(g.degrees[u]) + (add_self_loops ? 1.0 : 0.0);
            m.cols[w] = u;
            m.vals[w] = static_cast<T>(1.0 / std::sqrt(dv * du));
            ++w;
        };
        for (VertexId u : g.neighbors(v)) {
            if (!self_done && u > v) {
                emit(v);
                self_done = true;
            }
            emit(u);
        }
        if (!self_done) emit(v);
    }
    return m;
}

template <typename T>
CsrMatrix<T> mean_adjacency(const Graph& g) {
    CsrMatrix<T> m;
    m.n = g.num_vertices;
    m.offsets = g.csr_offsets;
    m.cols = g.csr_neighbors;
    m.vals.resize(m.cols.size());
    for (VertexId v = 0; v < g.num_vertices; ++v) {
        const T w = g.degrees[v] ? static_cast<T>(1.0 / double(g.degrees[v])) : T{0};
        for (uint64_t i = m.offsets[v]; i < m.offsets[v + 1]; ++i) m.vals[i] = w;
    }
    return m;
}

template CsrMatrix<float> normalize_adjacency<float>(const Graph&, bool);
template CsrMatrix<double> normalize_adjacency<double>(const Graph&, bool);
template CsrMatrix<float> mean_adjacency<float>(const Graph&);
template CsrMatrix<double> mean_adjacency<double>(const Graph&);

Graph generate_er(VertexId n, double p, uint64_t seed) {
    if (n < 1) throw std::invalid_argument("generate_er: n must be >= 1");
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("generate_er: p must be in [0,1]");
    std::vector<std::pair<VertexId, VertexId>> edges;
    if (p > 0.0) {
        const uint64_t total = uint64_t(n) * (n - 1) / 2;
        // Pairs (u,v), u<v, enumerated row-major by u; indices are visited in
        // ascending order, so the row cursor only moves forward.
        VertexId u = 0;
        uint64_t row_begin = 0;
        uint64_t row_len = n - 1;
        auto pair_at = [&](uint64_t idx) {
            while (idx >= row_begin + row_len) {
                row_begin += row_len;
                --row_len;
                ++u;
            }
            return std::make_pair(u, VertexId(u + 1 + (idx - row_begin)));
        };
        if (p >= 1.0) {
            edges.reserve(total);
            for (uint64_t i = 0; i < total; ++i) edges.push_back(pair_at(i));
        } else {
            // Batagelj-Brandes geometric skipping.
            auto eng = make_engine(seed, /*stream=*/0x45527ull);
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            const double log1mp = std::log1p(-p);
            double idx = -1;
            while (true) {
                const double r = unit(eng);
                idx += 1.0 + std::floor(std::log1p(-r) / log1mp);
                if (idx >= double(total)) break;
                edges.push_back(pair_at(uint64_t(idx)));
            }
        }
    }
    return build_graph(n, std::move(edges));
}

}  // namespace gnnsim
