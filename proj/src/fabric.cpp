#include "gnnsim/fabric.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <boost/context/continuation.hpp>
#include <boost/context/detail/exception.hpp>
#include <boost/context/fixedsize_stack.hpp>

namespace ctx = boost::context;

namespace gnnsim {

const char* tag_name(MsgTag t) {
    switch (t) {
        case MsgTag::ForwardEmb: return "ForwardEmb";
        case MsgTag::BackwardGrad: return "BackwardGrad";
        case MsgTag::GraphBoundaryFwd: return "GraphBoundaryFwd";
        case MsgTag::GraphBoundaryBwd: return "GraphBoundaryBwd";
        case MsgTag::WeightSync: return "WeightSync";
        case MsgTag::Control: return "Control";
    }
    return "?";
}

const char* link_class_name(LinkClass c) {
    return c == LinkClass::IntraNode ? "intra_node" : "inter_node";
}

uint32_t GroupMap::spanning_groups() const {
    uint32_t s = 0;
    for (const auto& g : groups) {
        for (size_t i = 1; i < g.size(); ++i)
            if (node_of[g[i]] != node_of[g[0]]) {
                ++s;
                break;
            }
    }
    return s;
}

GroupMap assign_groups(uint32_t num_workers, uint32_t workers_per_node, uint32_t num_stages,
                       uint32_t group_size) {
    if (workers_per_node == 0) throw std::invalid_argument("assign_groups: workers_per_node == 0");
    if (num_stages * group_size != num_workers)
        throw std::invalid_argument("assign_groups: num_workers != num_stages * group_size");
    GroupMap m;
    m.num_workers = num_workers;
    m.workers_per_node = workers_per_node;
    m.group_size = group_size;
    m.node_of.resize(num_workers);
    for (uint32_t w = 0; w < num_workers; ++w) m.node_of[w] = w / workers_per_node;

    // Fit whole groups inside nodes first; pool the leftovers into the
    // remaining groups in id order.
    std::vector<std::vector<uint32_t>> groups;
    std::vector<uint32_t> leftovers;
    if (group_size <= workers_per_node) {
        uint32_t w = 0;
        while (w < num_workers) {
            const uint32_t node_end = std::min((m.node_of[w] + 1) * workers_per_node, num_workers);
            while (w + group_size <= node_end && groups.size() < num_stages) {
                std::vector<uint32_t> g(group_size);
                for (uint32_t i = 0; i < group_size; ++i) g[i] = w + i;
                groups.push_back(std::move(g));
                w += group_size;
            }
            while (w < node_end) leftovers.push_back(w++);
        }
    } else {
        for (uint32_t w = 0; w < num_workers; ++w) leftovers.push_back(w);
    }
    for (size_t i = 0; i + group_size <= leftovers.size(); i += group_size)
        groups.emplace_back(leftovers.begin() + i, leftovers.begin() + i + group_size);
    std::sort(groups.begin(), groups.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });

    m.groups = std::move(groups);
    m.group_of.resize(num_workers);
    m.rank_in_group.resize(num_workers);
    for (uint32_t g = 0; g < m.groups.size(); ++g)
        for (uint32_t r = 0; r < m.groups[g].size(); ++r) {
            m.group_of[m.groups[g][r]] = g;
            m.rank_in_group[m.groups[g][r]] = r;
        }
    return m;
}

// ---- CommLedger ----

void CommLedger::reset(uint32_t num_workers, const std::vector<uint32_t>& node_of) {
    workers_ = num_workers;
    node_of_ = node_of;
    pair_.assign(size_t(num_workers) * num_workers * kNumTags, {});
    cur_ = {};
    epochs_.clear();
}

void CommLedger::on_send(const Message& m) {
    auto& p = pair_[(size_t(m.src) * workers_ + m.dst) * kNumTags + uint32_t(m.tag)];
    p.sent += m.data_bytes();
    p.id_sent += m.id_bytes();
    const bool intra = node_of_[m.src] == node_of_[m.dst];
    cur_.by_tag_link[uint32_t(m.tag)][intra ? 0 : 1] += m.data_bytes();
    cur_.id_bytes += m.id_bytes();
}

void CommLedger::on_recv(const Message& m) {
    auto& p = pair_[(size_t(m.src) * workers_ + m.dst) * kNumTags + uint32_t(m.tag)];
    p.received += m.data_bytes();
}

EpochComm CommLedger::close_epoch() {
    for (size_t i = 0; i < pair_.size(); ++i)
        if (pair_[i].sent != pair_[i].received)
            throw FabricError("ledger: bytes sent != received at epoch close on channel " +
                              std::to_string(i / kNumTags));
    epochs_.push_back(cur_);
    EpochComm e = cur_;
    cur_ = {};
    for (auto& p : pair_) p = {};
    return e;
}

const EpochComm& CommLedger::epoch(uint32_t e) const {
    if (e >= epochs_.size()) throw std::out_of_range("ledger: epoch not closed");
    return epochs_[e];
}

std::vector<CommReportRow> ledger_report(const CommLedger& ledger, uint32_t epoch) {
    const EpochComm& e = ledger.epoch(epoch);  // throws if still open
    std::vector<CommReportRow> rows;
    for (uint32_t t = 0; t < kNumTags; ++t)
        for (uint32_t l = 0; l < 2; ++l) {
            const uint64_t b = e.by_tag_link[t][l];
            if (b == 0) continue;
            rows.push_back({epoch, MsgTag(t), LinkClass(l), b, double(b) / double(1ull << 30)});
        }
    return rows;
}

void write_comm_report_csv(const std::string& path, const std::vector<CommReportRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "epoch,tag,link_class,bytes,gib\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.9g", r.gib);
        out << r.epoch << ',' << tag_name(r.tag) << ',' << link_class_name(r.link) << ','
            << r.bytes << ',' << buf << '\n';
    }
}

const char* trace_kind_name(TraceEvent::Kind k) {
    switch (k) {
        case TraceEvent::Kind::Compute: return "compute";
        case TraceEvent::Kind::Send: return "send";
        case TraceEvent::Kind::Recv: return "recv";
        case TraceEvent::Kind::Idle: return "idle";
    }
    return "?";
}

void write_trace_jsonl(const std::string& path, const std::vector<TraceEvent>& events) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    char buf[256];
    for (const auto& e : events) {
        std::snprintf(buf, sizeof buf,
                      "{\"worker\":%u,\"t_start\":%.9g,\"t_end\":%.9g,\"kind\":\"%s\","
                      "\"chunk\":%d,\"layer_lo\":%d,\"layer_hi\":%d}\n",
                      e.worker, e.t_start, e.t_end, trace_kind_name(e.kind), e.chunk, e.layer_lo,
                      e.layer_hi);
        out << buf;
    }
}

// ---- Fabric ----

struct Fabric::Impl {
    uint32_t W;
    Options opts;
    CommLedger ledger;
    std::vector<std::deque<Message>> queues;  // (src*W+dst)*kNumTags+tag
    std::vector<double> clock;
    std::vector<std::vector<TraceEvent>> events;
    std::vector<WorkerCtx> ctxs;

    // Deterministic scheduler state.
    enum class WState { Runnable, BlockedRecv, BlockedBarrier, Done };
    std::vector<ctx::continuation> fibers;
    std::vector<ctx::continuation*> yield_sink;
    std::vector<WState> state;
    std::vector<size_t> blocked_channel;
    std::vector<std::exception_ptr> errors;

    // Concurrent state.
    std::mutex mu;
    std::condition_variable cv;
    bool aborted = false;
    uint64_t barrier_gen = 0;
    uint32_t barrier_waiting = 0;
    std::vector<std::string> wait_desc;

    size_t chan(uint32_t src, uint32_t dst, MsgTag tag) const {
        return (size_t(src) * W + dst) * kNumTags + uint32_t(tag);
    }

    double transfer_seconds(const Message& m) const {
        const bool intra = opts.node_of[m.src] == opts.node_of[m.dst];
        const double bw = intra ? opts.cost.intra_node_bandwidth : opts.cost.inter_node_bandwidth;
        if (bw <= 0) return 0.0;
        return double(m.data_bytes() + m.id_bytes()) / bw;
    }

    void add_event(uint32_t w, double t0, double t1, TraceEvent::Kind kind, int32_t chunk,
                   int32_t lo, int32_t hi) {
        if (!opts.collect_trace) return;
        events[w].push_back({w, t0, t1, kind, chunk, lo, hi});
    }

    void yield(uint32_t w) {
        auto& sink = *yield_sink[w];
        sink = sink.resume();
    }
};

Fabric::Fabric(uint32_t num_workers) : Fabric(num_workers, Options{}) {}

Fabric::Fabric(uint32_t num_workers, Options opts) : impl_(std::make_unique<Impl>()) {
    impl_->W = num_workers;
    if (opts.node_of.empty()) {
        opts.node_of.resize(num_workers);
        for (uint32_t w = 0; w < num_workers; ++w) opts.node_of[w] = w / 4;
    }
    impl_->opts = std::move(opts);
    impl_->ledger.reset(num_workers, impl_->opts.node_of);
    impl_->queues.resize(size_t(num_workers) * num_workers * kNumTags);
    impl_->clock.assign(num_workers, 0.0);
    impl_->events.resize(num_workers);
    for (uint32_t w = 0; w < num_workers; ++w) impl_->ctxs.push_back(WorkerCtx(impl_.get(), w));
}

Fabric::~Fabric() = default;

uint32_t Fabric::num_workers() const { return impl_->W; }
CommLedger& Fabric::ledger() { return impl_->ledger; }
const CommLedger& Fabric::ledger() const { return impl_->ledger; }

std::vector<TraceEvent> Fabric::trace() const {
    std::vector<TraceEvent> all;
    for (const auto& ev : impl_->events) all.insert(all.end(), ev.begin(), ev.end());
    std::stable_sort(all.begin(), all.end(), [](const TraceEvent& a, const TraceEvent& b) {
        if (a.t_start != b.t_start) return a.t_start < b.t_start;
        return a.worker < b.worker;
    });
    return all;
}

uint32_t WorkerCtx::num_workers() const { return impl_->W; }
double WorkerCtx::clock() const { return impl_->clock[id_]; }

void WorkerCtx::compute(double cost, int32_t chunk, int32_t layer_lo, int32_t layer_hi) {
    auto* im = impl_;
    const double t0 = im->clock[id_];
    im->clock[id_] += cost;
    im->add_event(id_, t0, im->clock[id_], TraceEvent::Kind::Compute, chunk, layer_lo, layer_hi);
}

void WorkerCtx::epoch_close(uint32_t owner, const std::function<void()>& fn) {
    barrier();
    if (id_ == owner) fn();
    barrier();
}

namespace {

class AbortedError : public std::exception {};

}  // namespace

void WorkerCtx::send(uint32_t dst, Message m) {
    auto* im = impl_;
    if (dst == id_ || dst >= im->W) throw std::invalid_argument("send: bad destination");
    m.src = id_;
    m.dst = dst;
    m.send_time = im->clock[id_];
    im->add_event(id_, m.send_time, m.send_time, TraceEvent::Kind::Send, m.chunk, m.layer_lo,
                  m.layer_hi);
    const size_t c = im->chan(id_, dst, m.tag);
    if (im->opts.mode == Fabric::Mode::Deterministic) {
        im->ledger.on_send(m);
        im->queues[c].push_back(std::move(m));
        if (im->state[dst] == Fabric::Impl::WState::BlockedRecv && im->blocked_channel[dst] == c)
            im->state[dst] = Fabric::Impl::WState::Runnable;
    } else {
        std::lock_guard<std::mutex> lk(im->mu);
        if (im->aborted) throw AbortedError();
        im->ledger.on_send(m);
        im->queues[c].push_back(std::move(m));
        im->cv.notify_all();
    }
}

Message WorkerCtx::recv(uint32_t src, MsgTag tag) {
    auto* im = impl_;
    if (src == id_ || src >= im->W) throw std::invalid_argument("recv: bad source");
    const size_t c = im->chan(src, id_, tag);
    Message m;
    if (im->opts.mode == Fabric::Mode::Deterministic) {
        while (im->queues[c].empty()) {
            im->state[id_] = Fabric::Impl::WState::BlockedRecv;
            im->blocked_channel[id_] = c;
            im->yield(id_);
        }
        m = std::move(im->queues[c].front());
        im->queues[c].pop_front();
        im->ledger.on_recv(m);
    } else {
        std::unique_lock<std::mutex> lk(im->mu);
        im->wait_desc[id_] = std::string("recv src=") + std::to_string(src) + " tag=" +
                             tag_name(tag);
        const auto deadline = std::chrono::steady_clock::now() +
                              std::chrono::duration<double>(im->opts.watchdog_seconds);
        while (im->queues[c].empty()) {
            if (im->aborted) throw AbortedError();
            if (im->cv.wait_until(lk, deadline) == std::cv_status::timeout &&
                im->queues[c].empty() && !im->aborted) {
                std::ostringstream os;
                os << "watchdog: worker " << id_ << " blocked on recv(src=" << src
                   << ", tag=" << tag_name(tag) << "); waiting workers:";
                for (uint32_t w = 0; w < im->W; ++w)
                    if (!im->wait_desc[w].empty()) os << " [" << w << ": " << im->wait_desc[w] << "]";
                im->aborted = true;
                im->cv.notify_all();
                throw FabricError(os.str());
            }
        }
        m = std::move(im->queues[c].front());
        im->queues[c].pop_front();
        im->ledger.on_recv(m);
        im->wait_desc[id_].clear();
    }
    const double arrival = m.send_time + im->transfer_seconds(m);
    if (arrival > im->clock[id_]) {
        im->add_event(id_, im->clock[id_], arrival, TraceEvent::Kind::Idle, m.chunk, m.layer_lo,
                      m.layer_hi);
        im->clock[id_] = arrival;
    }
    im->add_event(id_, im->clock[id_], im->clock[id_], TraceEvent::Kind::Recv, m.chunk,
                  m.layer_lo, m.layer_hi);
    return m;
}

void WorkerCtx::barrier() {
    auto* im = impl_;
    if (im->opts.mode == Fabric::Mode::Deterministic) {
        im->state[id_] = Fabric::Impl::WState::BlockedBarrier;
        im->yield(id_);
        return;
    }
    std::unique_lock<std::mutex> lk(im->mu);
    if (im->aborted) throw AbortedError();
    const uint64_t gen = im->barrier_gen;
    im->wait_desc[id_] = "barrier";
    if (++im->barrier_waiting == im->W) {
        double mx = 0;
        for (double t : im->clock) mx = std::max(mx, t);
        for (auto& t : im->clock) t = mx;
        im->barrier_waiting = 0;
        ++im->barrier_gen;
        for (auto& d : im->wait_desc) d.clear();
        im->cv.notify_all();
        return;
    }
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration<double>(im->opts.watchdog_seconds);
    while (im->barrier_gen == gen) {
        if (im->aborted) throw AbortedError();
        if (im->cv.wait_until(lk, deadline) == std::cv_status::timeout &&
            im->barrier_gen == gen && !im->aborted) {
            im->aborted = true;
            im->cv.notify_all();
            throw FabricError("watchdog: barrier timeout at worker " + std::to_string(id_));
        }
    }
}

void Fabric::run(const std::function<void(WorkerCtx&)>& body) {
    auto* im = impl_.get();
    const uint32_t W = im->W;
    im->errors.assign(W, nullptr);
    im->wait_desc.assign(W, "");

    if (im->opts.mode == Mode::Concurrent) {
        std::vector<std::thread> threads;
        threads.reserve(W);
        for (uint32_t w = 0; w < W; ++w) {
            threads.emplace_back([im, w, &body]() {
                try {
                    body(im->ctxs[w]);
                } catch (const AbortedError&) {
                } catch (...) {
                    std::lock_guard<std::mutex> lk(im->mu);
                    if (!im->errors[w]) im->errors[w] = std::current_exception();
                    im->aborted = true;
                    im->cv.notify_all();
                }
            });
        }
        for (auto& t : threads) t.join();
        for (uint32_t w = 0; w < W; ++w)
            if (im->errors[w]) std::rethrow_exception(im->errors[w]);
        if (im->aborted) throw FabricError("run aborted");
        return;
    }

    // Deterministic: fibers under a strict round-robin scheduler.
    im->state.assign(W, Fabric::Impl::WState::Runnable);
    im->blocked_channel.assign(W, 0);
    im->fibers.clear();
    im->fibers.resize(W);
    im->yield_sink.assign(W, nullptr);
    for (uint32_t w = 0; w < W; ++w) {
        im->fibers[w] = ctx::callcc(
            std::allocator_arg, ctx::fixedsize_stack(1 << 20),
            [im, w, &body](ctx::continuation&& sink) {
                im->yield_sink[w] = &sink;
                sink = sink.resume();  // handshake: wait for the scheduler
                try {
                    body(im->ctxs[w]);
                } catch (const ctx::detail::forced_unwind&) {
                    throw;  // fiber teardown must propagate
                } catch (...) {
                    im->errors[w] = std::current_exception();
                }
                im->state[w] = Fabric::Impl::WState::Done;
                return std::move(sink);
            });
    }

    auto all_done = [&]() {
        for (auto s : im->state)
            if (s != Fabric::Impl::WState::Done) return false;
        return true;
    };
    while (!all_done()) {
        bool progressed = false;
        for (uint32_t w = 0; w < W; ++w) {
            if (im->state[w] != Fabric::Impl::WState::Runnable) continue;
            im->fibers[w] = im->fibers[w].resume();
            progressed = true;
            if (im->errors[w]) {
                // Abort: remaining fibers are unwound by their destructors.
                im->fibers.clear();
                std::rethrow_exception(im->errors[w]);
            }
        }
        // Release the barrier once every live worker reached it.
        uint32_t at_barrier = 0, live = 0;
        for (auto s : im->state) {
            live += s != Fabric::Impl::WState::Done;
            at_barrier += s == Fabric::Impl::WState::BlockedBarrier;
        }
        if (live > 0 && at_barrier == live) {
            double mx = 0;
            for (double t : im->clock) mx = std::max(mx, t);
            for (auto& t : im->clock) t = mx;
            for (auto& s : im->state)
                if (s == Fabric::Impl::WState::BlockedBarrier) s = Fabric::Impl::WState::Runnable;
            progressed = true;
        }
        if (!progressed && !all_done()) {
            std::ostringstream os;
            os << "deadlock:";
            for (uint32_t w = 0; w < W; ++w) {
                if (im->state[w] == Fabric::Impl::WState::BlockedRecv) {
                    const size_t c = im->blocked_channel[w];
                    const uint32_t src = uint32_t(c / kNumTags / W);
                    const uint32_t tag = uint32_t(c % kNumTags);
                    os << " [worker " << w << " waiting recv(src=" << src
                       << ", tag=" << tag_name(MsgTag(tag)) << ")"
                       << (im->state[src] == Fabric::Impl::WState::Done ? ", sender finished" : "")
                       << "]";
                } else if (im->state[w] == Fabric::Impl::WState::BlockedBarrier) {
                    os << " [worker " << w << " at barrier]";
                }
            }
            im->fibers.clear();
            throw FabricError(os.str());
        }
    }
    im->fibers.clear();
    for (uint32_t w = 0; w < W; ++w)
        if (im->errors[w]) std::rethrow_exception(im->errors[w]);
}

}  // namespace gnnsim
