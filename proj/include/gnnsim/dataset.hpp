#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gnnsim/graph.hpp"
#include "gnnsim/matrix.hpp"

namespace gnnsim {

enum class Split : uint8_t { Unused = 0, Train = 1, Val = 2, Test = 3 };

// Node-classification dataset: graph + features + labels + split masks.
struct Dataset {
    Graph graph;
    MatF features;                 // N x F
    std::vector<uint32_t> labels;  // length N, each < num_classes
    uint32_t num_classes = 0;
    std::vector<uint8_t> split;    // length N, Split values

    VertexId num_vertices() const { return graph.num_vertices; }
    uint32_t num_features() const { return uint32_t(features.cols()); }

    std::vector<uint8_t> mask(Split s) const;
    size_t mask_count(Split s) const;

    void validate() const;
};

// Directory layout: meta.json, graph.txt, features.f32, labels.u32, masks.u8.
// graph.txt holds "N M" then M undirected edges "u v"; binary payloads are
// little-endian, features row-major f32.
Dataset load_dataset(const std::string& dir);
void save_dataset(const Dataset& d, const std::string& dir);

// Planted-partition benchmark: labels are block ids, features are the one-hot
// block id plus seeded Gaussian noise, masks split 60/20/20 inside each block.
Dataset generate_sbm(uint32_t num_blocks, uint32_t block_size, double p_in, double p_out,
                     uint64_t seed);

}  // namespace gnnsim
