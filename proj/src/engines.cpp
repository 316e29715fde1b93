#include "engines_impl.hpp"

#include <cstdio>
#include <fstream>

namespace gnnsim {

StageAssignment make_stage_assignment(uint32_t layers, uint32_t stages) {
    if (stages == 0 || stages > layers)
        throw std::invalid_argument("stage assignment needs 1 <= stages <= layers");
    StageAssignment sa;
    sa.num_stages = stages;
    const uint32_t base = layers / stages, rem = layers % stages;
    uint32_t begin = 0;
    for (uint32_t s = 0; s < stages; ++s) {
        const uint32_t len = base + (s < rem ? 1 : 0);
        sa.ranges.push_back({begin, begin + len});
        begin += len;
    }
    return sa;
}

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& metrics) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "epoch,train_loss,train_acc,val_acc,test_acc,comm_bytes_graph,comm_bytes_pipeline,"
           "comm_bytes_weightsync,wall_time_s,bubble_fraction\n";
    char buf[320];
    for (const auto& m : metrics) {
        std::snprintf(buf, sizeof buf, "%u,%.9g,%.9g,%.9g,%.9g,%llu,%llu,%llu,%.9g,%.9g\n",
                      m.epoch, m.train_loss, m.train_acc, m.val_acc, m.test_acc,
                      static_cast<unsigned long long>(m.comm_bytes_graph),
                      static_cast<unsigned long long>(m.comm_bytes_pipeline),
                      static_cast<unsigned long long>(m.comm_bytes_weightsync), m.wall_time_s,
                      m.bubble_fraction);
        out << buf;
    }
}

template TrainResult<float> train_sequential<float>(const Dataset&, const TrainOptions<float>&);
template TrainResult<double> train_sequential<double>(const Dataset&, const TrainOptions<double>&);
template TrainResult<float> train_graph_parallel<float>(const Dataset&, const Partition&,
                                                        const TrainOptions<float>&);
template TrainResult<double> train_graph_parallel<double>(const Dataset&, const Partition&,
                                                          const TrainOptions<double>&);
template TrainResult<float> train_pipeline<float>(const Dataset&, const ChunkPlan&,
                                                  const StageAssignment&,
                                                  const TrainOptions<float>&);
template TrainResult<double> train_pipeline<double>(const Dataset&, const ChunkPlan&,
                                                    const StageAssignment&,
                                                    const TrainOptions<double>&);
template TrainResult<float> train_hybrid<float>(const Dataset&, const Partition&,
                                                const ChunkPlan&, const StageAssignment&,
                                                const GroupMap&, const TrainOptions<float>&);
template TrainResult<double> train_hybrid<double>(const Dataset&, const Partition&,
                                                  const ChunkPlan&, const StageAssignment&,
                                                  const GroupMap&, const TrainOptions<double>&);

}  // namespace gnnsim
