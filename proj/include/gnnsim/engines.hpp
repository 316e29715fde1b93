#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gnnsim/dataset.hpp"
#include "gnnsim/fabric.hpp"
#include "gnnsim/nn.hpp"
#include "gnnsim/partition.hpp"

namespace gnnsim {

// Consecutive, disjoint layer ranges covering 0..L-1; stage s feeds s+1.
struct StageAssignment {
    uint32_t num_stages = 1;
    std::vector<std::pair<uint32_t, uint32_t>> ranges;  // [begin, end) per stage

    uint32_t begin(uint32_t s) const { return ranges[s].first; }
    uint32_t end(uint32_t s) const { return ranges[s].second; }
};

// Near-equal consecutive split of `layers` into `stages` ranges.
StageAssignment make_stage_assignment(uint32_t layers, uint32_t stages);

// The three convergence techniques plus the staleness-free oracle mode.
struct StalenessConfig {
    bool shuffle_chunks = true;
    uint32_t fix_alpha = 10;           // historical snapshot period (epochs)
    bool historical_gradients = false; // default: zero cross-chunk gradients
    bool synchronous_mode = false;     // stall on true dependencies instead
};

struct EpochMetrics {
    uint32_t epoch = 0;  // 1-based
    double train_loss = 0;
    double train_acc = 0, val_acc = 0, test_acc = 0;
    uint64_t comm_bytes_graph = 0;
    uint64_t comm_bytes_pipeline = 0;
    uint64_t comm_bytes_weightsync = 0;
    double wall_time_s = 0;      // simulated time (zero without a cost model)
    double bubble_fraction = 0;  // idle fraction over the epoch span
};

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& metrics);

class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

template <typename T>
struct WorkerParams {
    uint32_t layer_begin = 0, layer_end = 0;
    std::vector<LayerParams<T>> params;  // for layers [begin, end)
};

template <typename T>
struct TrainResult {
    std::vector<EpochMetrics> metrics;
    std::vector<LayerParams<T>> params;        // assembled full model
    std::vector<WorkerParams<T>> worker_params;
    std::vector<TraceEvent> trace;
    std::vector<EpochComm> comm;               // per-epoch ledger snapshots
    uint64_t peak_buffer_bytes = 0;            // max per-worker stash footprint
};

template <typename T>
struct TrainOptions {
    ModelConfig model;
    OptimizerConfig<T> optimizer;
    uint32_t epochs = 1;
    uint64_t seed = 1;
    StalenessConfig staleness;
    Fabric::Options fabric;
};

// Single-worker full-graph reference trainer; zero communication.
template <typename T>
TrainResult<T> train_sequential(const Dataset& ds, const TrainOptions<T>& opt);

// Graph parallelism: one worker per partition, boundary rows exchanged per
// layer in both passes, weight gradients all-reduced once per epoch.
template <typename T>
TrainResult<T> train_graph_parallel(const Dataset& ds, const Partition& part,
                                    const TrainOptions<T>& opt);

// Chunk-pipelined layer-level model parallelism (one worker per stage).
template <typename T>
TrainResult<T> train_pipeline(const Dataset& ds, const ChunkPlan& plan,
                              const StageAssignment& stages, const TrainOptions<T>& opt);

// Hybrid: S stages of size-G graph-parallel groups. Degenerates to the pure
// pipeline at G=1 and to graph parallelism at S=1 (with a single chunk).
template <typename T>
TrainResult<T> train_hybrid(const Dataset& ds, const Partition& part, const ChunkPlan& plan,
                            const StageAssignment& stages, const GroupMap& gmap,
                            const TrainOptions<T>& opt);

extern template TrainResult<float> train_sequential<float>(const Dataset&,
                                                           const TrainOptions<float>&);
extern template TrainResult<double> train_sequential<double>(const Dataset&,
                                                             const TrainOptions<double>&);
extern template TrainResult<float> train_graph_parallel<float>(const Dataset&, const Partition&,
                                                               const TrainOptions<float>&);
extern template TrainResult<double> train_graph_parallel<double>(const Dataset&, const Partition&,
                                                                 const TrainOptions<double>&);
extern template TrainResult<float> train_pipeline<float>(const Dataset&, const ChunkPlan&,
                                                         const StageAssignment&,
                                                         const TrainOptions<float>&);
extern template TrainResult<double> train_pipeline<double>(const Dataset&, const ChunkPlan&,
                                                           const StageAssignment&,
                                                           const TrainOptions<double>&);
extern template TrainResult<float> train_hybrid<float>(const Dataset&, const Partition&,
                                                       const ChunkPlan&, const StageAssignment&,
                                                       const GroupMap&,
                                                       const TrainOptions<float>&);
extern template TrainResult<double> train_hybrid<double>(const Dataset&, const Partition&,
                                                         const ChunkPlan&, const StageAssignment&,
                                                         const GroupMap&,
                                                         const TrainOptions<double>&);

}  // namespace gnnsim
