#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "gnnsim/graph.hpp"

namespace gnnsim {

enum class MsgTag : uint32_t {
    ForwardEmb = 0,
    BackwardGrad,
    GraphBoundaryFwd,
    GraphBoundaryBwd,
    WeightSync,
    Control,
};
constexpr uint32_t kNumTags = 6;
const char* tag_name(MsgTag t);

enum class LinkClass : uint32_t { IntraNode = 0, InterNode = 1 };
const char* link_class_name(LinkClass c);

// Worker placement and grouping for hybrid parallelism. Groups partition the
// workers into equal-size sets; same-rank workers across groups hold the same
// graph partition.
struct GroupMap {
    uint32_t num_workers = 1;
    uint32_t workers_per_node = 4;
    uint32_t group_size = 1;
    std::vector<uint32_t> node_of;
    std::vector<uint32_t> group_of;
    std::vector<uint32_t> rank_in_group;
    std::vector<std::vector<uint32_t>> groups;  // group id -> workers by rank

    uint32_t num_groups() const { return uint32_t(groups.size()); }
    uint32_t spanning_groups() const;
};

// Places groups to maximize node locality: each node hosts as many whole
// groups as fit, leftovers are pooled into the remaining (spanning) groups.
GroupMap assign_groups(uint32_t num_workers, uint32_t workers_per_node, uint32_t num_stages,
                       uint32_t group_size);

struct Message {
    uint32_t src = 0, dst = 0;
    MsgTag tag = MsgTag::Control;
    std::vector<VertexId> vertex_ids;
    std::vector<double> payload;
    double send_time = 0;
    int32_t chunk = -1, layer_lo = -1, layer_hi = -1;

    // Accounted volume: 4 bytes per payload value; vertex-id framing is
    // tracked separately and Control carries no data bytes.
    uint64_t data_bytes() const { return tag == MsgTag::Control ? 0 : payload.size() * 4; }
    uint64_t id_bytes() const { return vertex_ids.size() * 8; }
};

struct EpochComm {
    uint64_t by_tag_link[kNumTags][2] = {{0}};
    uint64_t id_bytes = 0;
    uint64_t by_tag(uint32_t t) const { return by_tag_link[t][0] + by_tag_link[t][1]; }
    uint64_t by_link(uint32_t l) const {
        uint64_t s = 0;
        for (uint32_t t = 0; t < kNumTags; ++t) s += by_tag_link[t][l];
        return s;
    }
    uint64_t total() const {
        uint64_t s = 0;
        for (uint32_t t = 0; t < kNumTags; ++t) s += by_tag(t);
        return s;
    }
    uint64_t graph_bytes() const {
        return by_tag(uint32_t(MsgTag::GraphBoundaryFwd)) +
               by_tag(uint32_t(MsgTag::GraphBoundaryBwd));
    }
    uint64_t pipeline_bytes() const {
        return by_tag(uint32_t(MsgTag::ForwardEmb)) + by_tag(uint32_t(MsgTag::BackwardGrad));
    }
    uint64_t weight_sync_bytes() const { return by_tag(uint32_t(MsgTag::WeightSync)); }
};

// Per-link byte counters with per-epoch snapshots. Counters only grow within
// an epoch; close_epoch checks sent == received on every (src,dst,tag).
class CommLedger {
  public:
    void reset(uint32_t num_workers, const std::vector<uint32_t>& node_of);
    void on_send(const Message& m);
    void on_recv(const Message& m);
    EpochComm close_epoch();

    uint32_t closed_epochs() const { return uint32_t(epochs_.size()); }
    const EpochComm& epoch(uint32_t e) const;
    const std::vector<EpochComm>& epochs() const { return epochs_; }

  private:
    struct Pair {
        uint64_t sent = 0, received = 0, id_sent = 0;
    };
    uint32_t workers_ = 0;
    std::vector<uint32_t> node_of_;
    std::vector<Pair> pair_;  // (src*W+dst)*kNumTags + tag
    EpochComm cur_;
    std::vector<EpochComm> epochs_;
};

// CommReport row set for one epoch, aggregated by (tag, link class).
struct CommReportRow {
    uint32_t epoch;
    MsgTag tag;
    LinkClass link;
    uint64_t bytes;
    double gib;  // bytes / 2^30
};
std::vector<CommReportRow> ledger_report(const CommLedger& ledger, uint32_t epoch);
void write_comm_report_csv(const std::string& path, const std::vector<CommReportRow>& rows);

// Optional simulated-time cost model; zero bandwidth means infinitely fast
// links. Only traces and bubble analysis consume these times.
struct SimCostModel {
    double uniform_chunk_cost = 0.0;     // per (stage, chunk, direction) compute
    double intra_node_bandwidth = 0.0;   // bytes per second, 0 = infinite
    double inter_node_bandwidth = 0.0;
};

struct TraceEvent {
    uint32_t worker;
    double t_start, t_end;
    enum class Kind { Compute, Send, Recv, Idle } kind;
    int32_t chunk = -1, layer_lo = -1, layer_hi = -1;
};
const char* trace_kind_name(TraceEvent::Kind k);
void write_trace_jsonl(const std::string& path, const std::vector<TraceEvent>& events);

class FabricError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class WorkerCtx;

// Simulated multi-worker substrate. Deterministic mode runs every worker as a
// fiber on one thread under a fixed round-robin scheduler; concurrent mode
// runs real threads over blocking channels. Both produce identical ledgers,
// traces and results for the same run configuration.
class Fabric {
  public:
    enum class Mode { Deterministic, Concurrent };

    struct Options {
        Mode mode = Mode::Deterministic;
        std::vector<uint32_t> node_of;  // defaults to worker/4
        SimCostModel cost;
        double watchdog_seconds = 60.0;
        bool collect_trace = true;
    };

    explicit Fabric(uint32_t num_workers);
    Fabric(uint32_t num_workers, Options opts);
    ~Fabric();

    Fabric(const Fabric&) = delete;
    Fabric& operator=(const Fabric&) = delete;

    // Runs body(ctx) once per worker; returns after all complete. Throws the
    // first worker exception, FabricError on deadlock or watchdog timeout.
    void run(const std::function<void(WorkerCtx&)>& body);

    uint32_t num_workers() const;
    CommLedger& ledger();
    const CommLedger& ledger() const;
    // Merged trace, sorted by (t_start, worker, sequence).
    std::vector<TraceEvent> trace() const;

  private:
    friend class WorkerCtx;
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

class WorkerCtx {
  public:
    uint32_t id() const { return id_; }
    uint32_t num_workers() const;

    void send(uint32_t dst, Message m);
    Message recv(uint32_t src, MsgTag tag);
    void barrier();
    // Advance simulated time and record a compute event.
    void compute(double cost, int32_t chunk = -1, int32_t layer_lo = -1, int32_t layer_hi = -1);
    double clock() const;
    // Serialize a ledger close across workers: only worker `owner` runs fn,
    // after the epoch-end barrier.
    void epoch_close(uint32_t owner, const std::function<void()>& fn);

  private:
    friend class Fabric;
    WorkerCtx(Fabric::Impl* impl, uint32_t id) : impl_(impl), id_(id) {}
    Fabric::Impl* impl_;
    uint32_t id_;
};

}  // namespace gnnsim
