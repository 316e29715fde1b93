#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gnnsim/fabric.hpp"

namespace gnnsim {

// Inputs to the closed-form communication calculators. `vecs` is the number
// of vectors carried per vertex across a stage boundary (2 for models with an
// initial-residual input, else 1); values are accounted at 4 bytes each.
struct CommModelInput {
    double n = 0;        // vertices
    double layers = 0;   // L
    double hidden = 0;   // H
    double stages = 1;   // S (pipeline stages)
    double ways = 1;     // W (graph-parallel ways)
    double alpha = 0;    // replication factor of the graph partition
    double vecs = 1;
    double bytes_per_value = 4;
};

constexpr double kGiB = 1024.0 * 1024.0 * 1024.0;

// 2 (S-1) N H vecs, in bytes.
double volume_pipeline(const CommModelInput& in);
// 2 alpha L N H, in bytes (alpha * N stands for the boundary-set total).
double volume_graph(const CommModelInput& in);
// Graph term plus pipeline term.
double volume_hybrid(const CommModelInput& in);

struct CrossoverReport {
    double bytes_graph = 0, bytes_pipeline = 0, bytes_hybrid = 0;
    // Mode names ordered by ascending predicted volume; ties keep this order
    // and are flagged below.
    std::vector<std::string> ordering;
    bool tie = false;
    std::vector<std::string> inequalities;  // one line per pairwise comparison
    std::string winner;
};

CrossoverReport crossover_report(const CommModelInput& graph_in, const CommModelInput& pipe_in,
                                 const CommModelInput& hybrid_in);

struct BubbleReport {
    double measured_bubble = 0;  // idle fraction over the trace span
    double ideal_bubble = 0;     // (S-1)/(K+S-1) for uniform chunk costs
    uint32_t stages = 0;
    uint32_t chunks = 0;
    double span = 0;
};

// Measured bubble = (workers * span - total compute time) / (workers * span).
// Stage and chunk counts are recovered from the trace events.
BubbleReport bubble_analysis(const std::vector<TraceEvent>& trace);

// Measured-vs-analytic comparison row (the `compare` CSV).
struct CompareRow {
    std::string mode;
    double n, layers, hidden, stages, ways, alpha, vecs;
    double predicted_bytes;
    uint64_t measured_bytes;
    double rel_error;
};
void write_compare_csv(const std::string& path, const std::vector<CompareRow>& rows);

}  // namespace gnnsim
