#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gnnsim {

using VertexId = uint32_t;

// Undirected graph in CSR form. Each edge is stored in both directions;
// neighbor lists are sorted ascending, with no duplicates and no self-loops.
struct Graph {
    VertexId num_vertices = 0;
    uint64_t num_edges = 0;  // undirected edge count
    std::vector<uint64_t> csr_offsets;
    std::vector<VertexId> csr_neighbors;
    std::vector<VertexId> degrees;

    std::span<const VertexId> neighbors(VertexId v) const {
        return {csr_neighbors.data() + csr_offsets[v],
                csr_neighbors.data() + csr_offsets[v + 1]};
    }
    VertexId degree(VertexId v) const { return degrees[v]; }

    // Throws std::runtime_error if any structural invariant is violated.
    void validate() const;
};

// Build from an arbitrary edge list: symmetrizes, de-duplicates,
// drops self-loops.
Graph build_graph(VertexId num_vertices, std::vector<std::pair<VertexId, VertexId>> edges);

// Weighted CSR with the same shape conventions as Graph.
template <typename T>
struct CsrMatrix {
    VertexId n = 0;
    std::vector<uint64_t> offsets;
    std::vector<VertexId> cols;
    std::vector<T> vals;

    size_t row_size(VertexId v) const { return offsets[v + 1] - offsets[v]; }
};

// Symmetric normalization with optional self-loop augmentation.
// With self-loops (default): weight(u,v) = 1/sqrt((D_u+1)(D_v+1)), including
// the (v,v) entries. Without: weight(u,v) = 1/sqrt(D_u D_v), no diagonal.
template <typename T>
CsrMatrix<T> normalize_adjacency(const Graph& g, bool add_self_loops = true);

// Row-mean operator: weight(v,u) = 1/D_v, no self-loops; rows of isolated
// vertices are empty (mean treated as zero).
template <typename T>
CsrMatrix<T> mean_adjacency(const Graph& g);

// Seeded G(n,p): each unordered pair is an edge independently with
// probability p. Uses geometric skipping, so sparse graphs cost O(edges).
Graph generate_er(VertexId n, double p, uint64_t seed);

}  // namespace gnnsim
