#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gnnsim/graph.hpp"

namespace gnnsim {

// Disjoint vertex partition with derived boundary sets.
// boundary_sets[i] = (union of N(v) for v in inner_sets[i]) \ inner_sets[i].
struct Partition {
    uint32_t num_parts = 0;
    std::vector<uint32_t> assignment;              // vertex -> part
    std::vector<std::vector<VertexId>> inner_sets; // ascending per part
    std::vector<std::vector<VertexId>> boundary_sets;

    uint64_t boundary_total() const;
    uint64_t edge_cut(const Graph& g) const;
};

// Greedy BFS region growing from spread-out seeds, then one refinement sweep.
// Deterministic for a fixed seed. Balance: max part size stays within
// max(ceil(N/P), floor(1.05*N/P)).
Partition partition_vertices(const Graph& g, uint32_t num_parts, uint64_t seed);

// Builds a Partition (with boundary sets) from a fixed assignment.
Partition partition_from_assignment(const Graph& g, std::vector<uint32_t> assignment);

// Sum of boundary-set sizes over N.
double replication_factor(const Partition& p);

// Expected |B_i| for G(n,p) with n/m-sized balanced parts:
// (n - n/m) * (1 - (1-p)^(n/m)).
double expected_boundary(double n, double m, double p);

// K disjoint chunks covering V, produced by the same partitioner.
struct ChunkPlan {
    uint32_t num_chunks = 0;
    std::vector<uint32_t> chunk_of;                // vertex -> chunk
    std::vector<std::vector<VertexId>> chunks;     // ascending per chunk
    std::vector<uint32_t> epoch_order;             // identity until shuffled
};

ChunkPlan make_chunks(const Graph& g, uint32_t num_chunks, uint64_t seed);
ChunkPlan chunk_plan_from_assignment(VertexId n, std::vector<uint32_t> chunk_of);

// Deterministic Fisher-Yates permutation of 0..K-1 for (seed, epoch).
std::vector<uint32_t> shuffle_chunk_order(const ChunkPlan& plan, uint64_t epoch, uint64_t seed);

// Text format: first line the part count, then one part id per vertex line.
void save_assignment(const std::string& path, uint32_t num_parts,
                     const std::vector<uint32_t>& assignment);
std::pair<uint32_t, std::vector<uint32_t>> load_assignment(const std::string& path);

}  // namespace gnnsim
