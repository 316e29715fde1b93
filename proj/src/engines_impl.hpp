#pragma once

// Template bodies for the four trainers. Compiled once via engines.cpp.
//
// Bitwise reproducibility contract: every execution mode performs per-vertex
// arithmetic through the shared kernels in nn.hpp, reductions always run in
// ascending vertex order, parameter gradients are accumulated from full
// stashed matrices at epoch end, and group reductions fold in rank order.
// The degenerate configurations therefore reproduce train_sequential exactly.

#include <algorithm>
#include <cassert>
#include <cstring>

#include "gnnsim/engines.hpp"

namespace gnnsim {
namespace detail {

template <typename T>
Mat<T> cast_features(const MatF& f) {
    Mat<T> m(f.rows(), f.cols());
    for (size_t i = 0; i < f.size(); ++i) m.data()[i] = T(f.data()[i]);
    return m;
}

// Train-loss sum plus per-split correct counts, accumulated over rows in the
// order given (ascending everywhere).
struct SplitStats {
    double loss_sum = 0;
    uint64_t correct[3] = {0, 0, 0};

    void add(const SplitStats& o) {
        loss_sum += o.loss_sum;
        for (int i = 0; i < 3; ++i) correct[i] += o.correct[i];
    }
};

template <typename T>
void accumulate_metrics_rows(const Mat<T>& logits, const std::vector<VertexId>& rows,
                             const std::vector<uint32_t>& labels,
                             const std::vector<uint8_t>& split, SplitStats& st) {
    const uint32_t c = uint32_t(logits.cols());
    for (VertexId v : rows) {
        const uint8_t s = split[v];
        if (s == 0) continue;
        const bool ok = argmax_row(logits.row(v), c) == labels[v];
        if (s == uint8_t(Split::Train)) st.loss_sum += xent_row_loss(logits.row(v), c, labels[v]);
        st.correct[s - 1] += ok;
    }
}

template <typename T>
void pack_rows(const Mat<T>& m, const std::vector<VertexId>& ids, uint32_t offset,
               uint32_t width, std::vector<double>& out) {
    for (VertexId v : ids) {
        const T* r = m.row(v) + offset;
        for (uint32_t j = 0; j < width; ++j) out.push_back(double(r[j]));
    }
}

template <typename T>
size_t unpack_rows(Mat<T>& m, const std::vector<VertexId>& ids, uint32_t offset, uint32_t width,
                   const std::vector<double>& data, size_t pos) {
    for (VertexId v : ids) {
        T* r = m.row(v) + offset;
        for (uint32_t j = 0; j < width; ++j) r[j] = T(data[pos++]);
    }
    return pos;
}

template <typename T>
std::vector<double> flatten_grads(const std::vector<ParamGrads<T>>& grads) {
    std::vector<double> out;
    for (const auto& g : grads) {
        for (size_t i = 0; i < g.weight.size(); ++i) out.push_back(double(g.weight.data()[i]));
        for (T b : g.bias) out.push_back(double(b));
    }
    return out;
}

template <typename T>
void unflatten_grads(std::vector<ParamGrads<T>>& grads, const std::vector<double>& data) {
    size_t pos = 0;
    for (auto& g : grads) {
        for (size_t i = 0; i < g.weight.size(); ++i) g.weight.data()[i] = T(data[pos++]);
        for (auto& b : g.bias) b = T(data[pos++]);
    }
}

template <typename T>
void add_flat_grads(std::vector<ParamGrads<T>>& grads, const std::vector<double>& data) {
    size_t pos = 0;
    for (auto& g : grads) {
        for (size_t i = 0; i < g.weight.size(); ++i) g.weight.data()[i] += T(data[pos++]);
        for (auto& b : g.bias) b += T(data[pos++]);
    }
}

// Gradient sum across a worker group, folded in rank order at rank 0 and
// broadcast back; every member ends with identical values.
template <typename T>
void group_weight_sync(WorkerCtx& ctx, const std::vector<uint32_t>& peers, uint32_t rank,
                       std::vector<ParamGrads<T>>& grads) {
    const uint32_t G = uint32_t(peers.size());
    if (G <= 1) return;
    if (rank == 0) {
        for (uint32_t r2 = 1; r2 < G; ++r2) {
            Message m = ctx.recv(peers[r2], MsgTag::WeightSync);
            add_flat_grads(grads, m.payload);
        }
        const std::vector<double> flat = flatten_grads(grads);
        for (uint32_t r2 = 1; r2 < G; ++r2) {
            Message m;
            m.tag = MsgTag::WeightSync;
            m.payload = flat;
            ctx.send(peers[r2], std::move(m));
        }
        unflatten_grads(grads, flat);  // everyone applies the broadcast values
    } else {
        Message m;
        m.tag = MsgTag::WeightSync;
        m.payload = flatten_grads(grads);
        ctx.send(peers[0], std::move(m));
        Message back = ctx.recv(peers[0], MsgTag::WeightSync);
        unflatten_grads(grads, back.payload);
    }
}

// Metrics reduction to the group's rank 0 over zero-byte Control messages.
template <typename T>
bool reduce_metrics(WorkerCtx& ctx, const std::vector<uint32_t>& peers, uint32_t rank,
                    SplitStats& st) {
    const uint32_t G = uint32_t(peers.size());
    if (rank != 0) {
        Message m;
        m.tag = MsgTag::Control;
        m.payload = {st.loss_sum, double(st.correct[0]), double(st.correct[1]),
                     double(st.correct[2])};
        ctx.send(peers[0], std::move(m));
        return false;
    }
    for (uint32_t r2 = 1; r2 < G; ++r2) {
        Message m = ctx.recv(peers[r2], MsgTag::Control);
        SplitStats o;
        o.loss_sum = m.payload[0];
        for (int i = 0; i < 3; ++i) o.correct[i] = uint64_t(m.payload[1 + i]);
        st.add(o);
    }
    return true;
}

struct SplitCounts {
    uint64_t count[3] = {0, 0, 0};
};

inline SplitCounts split_counts(const std::vector<uint8_t>& split) {
    SplitCounts c;
    for (uint8_t s : split)
        if (s >= 1 && s <= 3) ++c.count[s - 1];
    return c;
}

inline void fill_quality_metrics(EpochMetrics& m, const SplitStats& st, const SplitCounts& c) {
    m.train_loss = c.count[0] ? st.loss_sum / double(c.count[0]) : 0.0;
    m.train_acc = c.count[0] ? double(st.correct[0]) / double(c.count[0]) : 0.0;
    m.val_acc = c.count[1] ? double(st.correct[1]) / double(c.count[1]) : 0.0;
    m.test_acc = c.count[2] ? double(st.correct[2]) / double(c.count[2]) : 0.0;
    if (!std::isfinite(m.train_loss))
        throw NumericError("non-finite training loss at epoch " + std::to_string(m.epoch));
}

inline std::vector<VertexId> all_rows(VertexId n) {
    std::vector<VertexId> rows(n);
    for (VertexId v = 0; v < n; ++v) rows[v] = v;
    return rows;
}

inline std::vector<VertexId> ascending_intersection(const std::vector<VertexId>& a,
                                                    const std::vector<VertexId>& b) {
    std::vector<VertexId> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sequential reference trainer.
// ---------------------------------------------------------------------------

template <typename T>
TrainResult<T> train_sequential(const Dataset& ds, const TrainOptions<T>& opt) {
    ds.validate();
    const auto specs = build_layer_specs(opt.model, ds.num_features(), ds.num_classes);
    const uint32_t L = uint32_t(specs.size());
    const VertexId n = ds.num_vertices();
    const bool needs_h0 = model_needs_h0(specs);
    const auto adj = build_adj_bundle<T>(ds.graph, opt.model.self_loops);
    const Mat<T> x0 = detail::cast_features<T>(ds.features);
    const auto rows = detail::all_rows(n);
    const auto counts = detail::split_counts(ds.split);
    if (counts.count[0] == 0) throw std::invalid_argument("train_sequential: empty train mask");
    const T inv_train = T(1.0 / double(counts.count[0]));

    auto params = init_params<T>(specs, opt.seed);
    Optimizer<T> optim(opt.optimizer, specs);

    TrainResult<T> res;
    std::vector<Mat<T>> h(L), pre(L), dz(L), dagg(L), dh(L);
    for (uint32_t l = 0; l < L; ++l) {
        h[l] = Mat<T>(n, specs[l].out_dim);
        pre[l] = Mat<T>(n, specs[l].k_in());
        dz[l] = Mat<T>(n, specs[l].out_dim);
        dagg[l] = Mat<T>(n, specs[l].k_in());
        dh[l] = Mat<T>(n, specs[l].out_dim);
    }
    Mat<T> dh0;
    if (needs_h0) dh0 = Mat<T>(n, opt.model.hidden);
    uint64_t bytes = 0;
    for (uint32_t l = 0; l < L; ++l)
        bytes += (h[l].size() + pre[l].size() + dz[l].size() + dagg[l].size() + dh[l].size()) *
                 sizeof(T);
    res.peak_buffer_bytes = bytes;

    for (uint32_t t = 1; t <= opt.epochs; ++t) {
        std::vector<DropMask<T>> masks(L);
        for (uint32_t l = 0; l < L; ++l)
            masks[l] = DropMask<T>::make(opt.model.dropout, opt.seed, t, l, n, specs[l].in_dim);

        // Forward.
        for (uint32_t l = 0; l < L; ++l) {
            const Mat<T>& src = l == 0 ? x0 : h[l - 1];
            const Mat<T>* h0 = needs_h0 && l > 0 ? &h[0] : nullptr;
            for (VertexId v : rows)
                kernel::forward_row(specs[l], params[l], adj, v,
                                    [&](VertexId u) { return src.row(u); }, masks[l],
                                    h0 ? h0->row(v) : nullptr, pre[l].row(v), h[l].row(v));
        }
        const Mat<T>& logits = h[L - 1];

        EpochMetrics em;
        em.epoch = t;
        detail::SplitStats st;
        detail::accumulate_metrics_rows(logits, rows, ds.labels, ds.split, st);
        detail::fill_quality_metrics(em, st, counts);
        res.metrics.push_back(em);

        // Backward.
        dh[L - 1].zero();
        for (VertexId v : rows)
            if (ds.split[v] == uint8_t(Split::Train))
                xent_row_grad(logits.row(v), ds.num_classes, ds.labels[v], inv_train,
                              dh[L - 1].row(v));
        if (needs_h0) dh0.zero();
        for (int l = int(L) - 1; l >= 0; --l) {
            const auto& spec = specs[l];
            if (l == 0 && needs_h0)
                for (VertexId v : rows) {
                    T* d = dh[0].row(v);
                    const T* r0 = dh0.row(v);
                    for (uint32_t j = 0; j < opt.model.hidden; ++j) d[j] += r0[j];
                }
            for (VertexId v : rows)
                kernel::backward_out_row(spec, params[l], dh[l].row(v), h[l].row(v),
                                         dz[l].row(v), dagg[l].row(v),
                                         needs_h0 && spec.kind == LayerKind::Gcn2Conv
                                             ? dh0.row(v)
                                             : nullptr);
            if (l > 0) {
                Mat<T>& target = dh[l - 1];
                for (VertexId u : rows)
                    kernel::backward_prev_row(spec, adj, u,
                                              [&](VertexId v2) { return dagg[l].row(v2); },
                                              dagg[l].row(u), masks[l], target.row(u));
            }
        }
        std::vector<ParamGrads<T>> grads;
        grads.reserve(L);
        for (uint32_t l = 0; l < L; ++l)
            grads.push_back(param_grads_for_rows(specs[l], rows, pre[l], dz[l]));
        optim.step(params, grads, 0, L);
    }
    res.params = std::move(params);
    res.worker_params.push_back({0, L, res.params});
    return res;
}

// ---------------------------------------------------------------------------
// Graph-parallel trainer: layer-synchronous, one worker per partition.
// ---------------------------------------------------------------------------

namespace detail {

// Boundary push sets: sets[r][r2] = V_r intersect B_{r2}, ascending.
inline std::vector<std::vector<std::vector<VertexId>>> boundary_push_sets(const Partition& part) {
    const uint32_t W = part.num_parts;
    std::vector<std::vector<std::vector<VertexId>>> sets(W);
    for (uint32_t r = 0; r < W; ++r) {
        sets[r].resize(W);
        for (uint32_t r2 = 0; r2 < W; ++r2) {
            if (r2 == r) continue;
            for (VertexId u : part.boundary_sets[r2])
                if (part.assignment[u] == r) sets[r][r2].push_back(u);
        }
    }
    return sets;
}

template <typename T>
struct MetricSlots {
    std::vector<EpochMetrics>* metrics;
    std::vector<double>* busy;  // epoch-major, [epoch * W + w]
    std::vector<EpochComm>* comm;
    uint32_t W = 1;
};

}  // namespace detail

template <typename T>
TrainResult<T> train_graph_parallel(const Dataset& ds, const Partition& part,
                                    const TrainOptions<T>& opt) {
    ds.validate();
    const uint32_t W = part.num_parts;
    if (part.assignment.size() != ds.num_vertices())
        throw std::invalid_argument("train_graph_parallel: partition does not cover the graph");
    const auto specs = build_layer_specs(opt.model, ds.num_features(), ds.num_classes);
    const uint32_t L = uint32_t(specs.size());
    const VertexId n = ds.num_vertices();
    const bool needs_h0 = model_needs_h0(specs);
    const auto adj = build_adj_bundle<T>(ds.graph, opt.model.self_loops);
    const Mat<T> x0 = detail::cast_features<T>(ds.features);
    const auto counts = detail::split_counts(ds.split);
    if (counts.count[0] == 0) throw std::invalid_argument("train_graph_parallel: empty train mask");
    const T inv_train = T(1.0 / double(counts.count[0]));
    const auto push_sets = detail::boundary_push_sets(part);

    std::vector<uint32_t> peers(W);
    for (uint32_t r = 0; r < W; ++r) peers[r] = r;

    TrainResult<T> res;
    res.metrics.resize(opt.epochs);
    res.comm.resize(opt.epochs);
    res.worker_params.resize(W);
    std::vector<double> busy(size_t(opt.epochs) * W, 0.0);
    std::vector<uint64_t> peak(W, 0);

    Fabric fabric(W, opt.fabric);

    auto body = [&](WorkerCtx& ctx) {
        const uint32_t r = ctx.id();
        const auto& own = part.inner_sets[r];
        auto params = init_params<T>(specs, opt.seed);
        Optimizer<T> optim(opt.optimizer, specs);

        Mat<T> xin = x0;  // worker-local: layer-1 boundary pushes land here
        std::vector<Mat<T>> h(L), pre(L), dz(L), dagg(L), dh(L);
        uint64_t bytes = 0;
        for (uint32_t l = 0; l < L; ++l) {
            h[l] = Mat<T>(n, specs[l].out_dim);
            pre[l] = Mat<T>(n, specs[l].k_in());
            dz[l] = Mat<T>(n, specs[l].out_dim);
            dagg[l] = Mat<T>(n, specs[l].k_in());
            dh[l] = Mat<T>(n, specs[l].out_dim);
            bytes += (h[l].size() + pre[l].size() + dz[l].size() + dagg[l].size() +
                      dh[l].size()) * sizeof(T);
        }
        Mat<T> dh0;
        if (needs_h0) dh0 = Mat<T>(n, opt.model.hidden);
        peak[r] = bytes;

        auto exchange = [&](Mat<T>& buf, MsgTag tag, uint32_t offset, uint32_t width,
                            int32_t layer) {
            for (uint32_t r2 = 0; r2 < W; ++r2) {
                if (r2 == r || push_sets[r][r2].empty()) continue;
                Message m;
                m.tag = tag;
                m.vertex_ids = push_sets[r][r2];
                m.layer_lo = m.layer_hi = layer;
                detail::pack_rows(buf, m.vertex_ids, offset, width, m.payload);
                ctx.send(r2, std::move(m));
            }
            for (uint32_t r2 = 0; r2 < W; ++r2) {
                if (r2 == r || push_sets[r2][r].empty()) continue;
                Message m = ctx.recv(r2, tag);
                detail::unpack_rows(buf, m.vertex_ids, offset, width, m.payload, 0);
            }
        };

        for (uint32_t t = 1; t <= opt.epochs; ++t) {
            ctx.barrier();
            const double t0 = ctx.clock();
            std::vector<DropMask<T>> masks(L);
            for (uint32_t l = 0; l < L; ++l)
                masks[l] = DropMask<T>::make(opt.model.dropout, opt.seed, t, l, n, specs[l].in_dim);

            // Forward, layer by layer; boundary rows of the previous layer are
            // pushed to their consumers before each aggregating layer.
            for (uint32_t l = 0; l < L; ++l) {
                Mat<T>& src = l == 0 ? xin : h[l - 1];
                if (specs[l].aggregates() && W > 1)
                    exchange(src, MsgTag::GraphBoundaryFwd, 0, specs[l].in_dim, int32_t(l));
                const Mat<T>* h0 = needs_h0 && l > 0 ? &h[0] : nullptr;
                for (VertexId v : own)
                    kernel::forward_row(specs[l], params[l], adj, v,
                                        [&](VertexId u) { return src.row(u); }, masks[l],
                                        h0 ? h0->row(v) : nullptr, pre[l].row(v), h[l].row(v));
            }

            // Metrics.
            detail::SplitStats st;
            detail::accumulate_metrics_rows(h[L - 1], own, ds.labels, ds.split, st);
            if (detail::reduce_metrics<T>(ctx, peers, r, st)) {
                res.metrics[t - 1].epoch = t;
                detail::fill_quality_metrics(res.metrics[t - 1], st, counts);
            }

            // Backward.
            dh[L - 1].zero();
            for (VertexId v : own)
                if (ds.split[v] == uint8_t(Split::Train))
                    xent_row_grad(h[L - 1].row(v), ds.num_classes, ds.labels[v], inv_train,
                                  dh[L - 1].row(v));
            if (needs_h0) dh0.zero();
            for (int l = int(L) - 1; l >= 0; --l) {
                const auto& spec = specs[l];
                if (l == 0 && needs_h0)
                    for (VertexId v : own) {
                        T* d = dh[0].row(v);
                        const T* r0 = dh0.row(v);
                        for (uint32_t j = 0; j < opt.model.hidden; ++j) d[j] += r0[j];
                    }
                for (VertexId v : own)
                    kernel::backward_out_row(spec, params[l], dh[l].row(v), h[l].row(v),
                                             dz[l].row(v), dagg[l].row(v),
                                             needs_h0 && spec.kind == LayerKind::Gcn2Conv
                                                 ? dh0.row(v)
                                                 : nullptr);
                if (spec.aggregates() && W > 1) {
                    const uint32_t off = spec.kind == LayerKind::SageConv ? spec.in_dim : 0;
                    exchange(dagg[l], MsgTag::GraphBoundaryBwd, off, spec.in_dim, int32_t(l));
                }
                if (l > 0) {
                    Mat<T>& target = dh[l - 1];
                    for (VertexId u : own)
                        kernel::backward_prev_row(spec, adj, u,
                                                  [&](VertexId v2) { return dagg[l].row(v2); },
                                                  dagg[l].row(u), masks[l], target.row(u));
                }
            }

            std::vector<ParamGrads<T>> grads;
            grads.reserve(L);
            for (uint32_t l = 0; l < L; ++l)
                grads.push_back(param_grads_for_rows(specs[l], own, pre[l], dz[l]));
            detail::group_weight_sync(ctx, peers, r, grads);
            optim.step(params, grads, 0, L);

            busy[size_t(t - 1) * W + r] = 0.0;
            ctx.epoch_close(0, [&]() {
                EpochComm e = fabric.ledger().close_epoch();
                auto& m = res.metrics[t - 1];
                m.comm_bytes_graph = e.graph_bytes();
                m.comm_bytes_pipeline = e.pipeline_bytes();
                m.comm_bytes_weightsync = e.weight_sync_bytes();
                m.wall_time_s = ctx.clock() - t0;
                m.bubble_fraction = 0.0;
                res.comm[t - 1] = e;
            });
        }
        res.worker_params[r] = {0, L, std::move(params)};
    };

    fabric.run(body);
    res.params = res.worker_params[0].params;
    res.trace = fabric.trace();
    res.peak_buffer_bytes = *std::max_element(peak.begin(), peak.end());
    return res;
}

// ---------------------------------------------------------------------------
// Hybrid trainer: S pipeline stages x G graph-parallel ranks, chunked with
// embedding staleness. The pure pipeline is the G=1 special case.
// ---------------------------------------------------------------------------

namespace detail {

// Per-chunk push sets: sets[k][r][r2] = C_k intersect V_r intersect B_{r2}.
inline std::vector<std::vector<std::vector<std::vector<VertexId>>>> chunk_push_sets(
    const Partition& part, const ChunkPlan& plan) {
    const uint32_t G = part.num_parts, K = plan.num_chunks;
    std::vector<std::vector<std::vector<std::vector<VertexId>>>> sets(
        K, std::vector<std::vector<std::vector<VertexId>>>(G,
                                                           std::vector<std::vector<VertexId>>(G)));
    for (uint32_t r2 = 0; r2 < G; ++r2)
        for (VertexId u : part.boundary_sets[r2])
            sets[plan.chunk_of[u]][part.assignment[u]][r2].push_back(u);
    return sets;
}

inline std::vector<std::vector<std::vector<VertexId>>> chunk_rank_rows(const Partition& part,
                                                                       const ChunkPlan& plan) {
    const uint32_t G = part.num_parts, K = plan.num_chunks;
    std::vector<std::vector<std::vector<VertexId>>> rows(
        K, std::vector<std::vector<VertexId>>(G));
    for (uint32_t r = 0; r < G; ++r)
        for (VertexId v : part.inner_sets[r]) rows[plan.chunk_of[v]][r].push_back(v);
    for (auto& per_chunk : rows)
        for (auto& lst : per_chunk) std::sort(lst.begin(), lst.end());
    return rows;
}

}  // namespace detail

template <typename T>
TrainResult<T> train_hybrid(const Dataset& ds, const Partition& part, const ChunkPlan& plan,
                            const StageAssignment& sa, const GroupMap& gmap,
                            const TrainOptions<T>& opt) {
    ds.validate();
    const uint32_t S = sa.num_stages;
    const uint32_t G = gmap.group_size;
    const uint32_t W = gmap.num_workers;
    const uint32_t K = plan.num_chunks;
    const VertexId n = ds.num_vertices();
    if (W != S * G || gmap.num_groups() != S)
        throw std::invalid_argument("train_hybrid: worker count != stages * group_size");
    if (part.num_parts != G)
        throw std::invalid_argument("train_hybrid: partition parts != group size");
    if (plan.chunk_of.size() != n || part.assignment.size() != n)
        throw std::invalid_argument("train_hybrid: plan/partition do not cover the graph");
    const auto specs = build_layer_specs(opt.model, ds.num_features(), ds.num_classes);
    const uint32_t L = uint32_t(specs.size());
    if (sa.ranges.empty() || sa.begin(0) != 0 || sa.end(S - 1) != L)
        throw std::invalid_argument("train_hybrid: stage ranges must cover all layers");
    for (uint32_t s = 0; s + 1 < S; ++s)
        if (sa.end(s) != sa.begin(s + 1) || sa.end(s) <= sa.begin(s))
            throw std::invalid_argument("train_hybrid: stage ranges must be consecutive");

    const bool needs_h0 = model_needs_h0(specs);
    const bool sync = opt.staleness.synchronous_mode;
    const bool hist = opt.staleness.historical_gradients && !sync;
    const uint32_t fix_alpha = std::max<uint32_t>(1, opt.staleness.fix_alpha);
    const uint32_t H = opt.model.hidden;
    const auto adj = build_adj_bundle<T>(ds.graph, opt.model.self_loops);
    const Mat<T> x0 = detail::cast_features<T>(ds.features);
    const auto counts = detail::split_counts(ds.split);
    if (counts.count[0] == 0) throw std::invalid_argument("train_hybrid: empty train mask");
    const T inv_train = T(1.0 / double(counts.count[0]));

    const auto push_sets = detail::chunk_push_sets(part, plan);
    const auto part_sets = detail::boundary_push_sets(part);
    const auto rank_rows = detail::chunk_rank_rows(part, plan);

    TrainResult<T> res;
    res.metrics.resize(opt.epochs);
    res.comm.resize(opt.epochs);
    res.worker_params.resize(W);
    std::vector<double> busy(size_t(opt.epochs) * W, 0.0);
    std::vector<uint64_t> peak(W, 0);

    Fabric fabric(W, opt.fabric);
    const double chunk_cost = opt.fabric.cost.uniform_chunk_cost;

    auto body = [&](WorkerCtx& ctx) {
        const uint32_t w = ctx.id();
        const uint32_t s = gmap.group_of[w];
        const uint32_t r = gmap.rank_in_group[w];
        const auto& peers = gmap.groups[s];
        const uint32_t lb = sa.begin(s), le = sa.end(s), len = le - lb;
        const bool first_stage = s == 0, last_stage = s + 1 == S;
        const uint32_t up = first_stage ? 0 : gmap.groups[s - 1][r];
        const uint32_t down = last_stage ? 0 : gmap.groups[s + 1][r];
        const auto& own = part.inner_sets[r];
        const uint32_t in_dim0 = specs[lb].in_dim;
        const uint32_t out_dim_last = specs[le - 1].out_dim;

        auto params = init_params<T>(specs, opt.seed);
        Optimizer<T> optim(opt.optimizer, specs);

        // Full-width stashes; cur/snap pairs back the staleness reads.
        Mat<T> in_cur(n, in_dim0), in_snap;
        std::vector<Mat<T>> h_cur(len), h_snap(len), pre(len), dz(len), dagg(len),
            dagg_snap(len), dh(len);
        const bool need_in_snap = !sync && specs[lb].aggregates();
        if (first_stage) in_cur = x0;
        if (need_in_snap) in_snap = first_stage ? x0 : Mat<T>(n, in_dim0);
        for (uint32_t i = 0; i < len; ++i) {
            const auto& sp = specs[lb + i];
            h_cur[i] = Mat<T>(n, sp.out_dim);
            pre[i] = Mat<T>(n, sp.k_in());
            dz[i] = Mat<T>(n, sp.out_dim);
            dagg[i] = Mat<T>(n, sp.k_in());
            dh[i] = Mat<T>(n, sp.out_dim);
            if (!sync && i + 1 < len && specs[lb + i + 1].aggregates())
                h_snap[i] = Mat<T>(n, sp.out_dim);
            if (hist && sp.aggregates()) dagg_snap[i] = Mat<T>(n, sp.k_in());
        }
        Mat<T> dh_in;
        if (!first_stage) dh_in = Mat<T>(n, in_dim0);
        Mat<T> h0_cur, dh0_run;
        if (needs_h0) {
            if (!first_stage) h0_cur = Mat<T>(n, H);
            dh0_run = Mat<T>(n, H);
        }
        {
            uint64_t bytes = (in_cur.size() + in_snap.size() + dh_in.size() + h0_cur.size() +
                              dh0_run.size()) * sizeof(T);
            for (uint32_t i = 0; i < len; ++i)
                bytes += (h_cur[i].size() + h_snap[i].size() + pre[i].size() + dz[i].size() +
                          dagg[i].size() + dagg_snap[i].size() + dh[i].size()) * sizeof(T);
            peak[w] = bytes;
        }
        // h0 source: the first layer's output on stage 0, else the received copy.
        Mat<T>* h0mat = nullptr;
        if (needs_h0) h0mat = first_stage ? &h_cur[0] : &h0_cur;

        std::vector<uint8_t> fwd_done(K, 0), bwd_done(K, 0);
        [[maybe_unused]] uint64_t snap_version = 0;
        std::vector<DropMask<T>> masks(len);
        double busy_epoch = 0;
        auto charge = [&](double cost, int32_t chunk, int32_t dir_layer_lo, int32_t dir_layer_hi) {
            ctx.compute(cost, chunk, dir_layer_lo, dir_layer_hi);
            busy_epoch += cost;
        };

        auto exchange_rows = [&](uint32_t k, Mat<T>& buf, MsgTag tag, uint32_t offset,
                                 uint32_t width, int32_t layer) {
            for (uint32_t r2 = 0; r2 < G; ++r2) {
                if (r2 == r || push_sets[k][r][r2].empty()) continue;
                Message m;
                m.tag = tag;
                m.vertex_ids = push_sets[k][r][r2];
                m.chunk = int32_t(k);
                m.layer_lo = m.layer_hi = layer;
                detail::pack_rows(buf, m.vertex_ids, offset, width, m.payload);
                ctx.send(peers[r2], std::move(m));
            }
            for (uint32_t r2 = 0; r2 < G; ++r2) {
                if (r2 == r || push_sets[k][r2][r].empty()) continue;
                Message m = ctx.recv(peers[r2], tag);
                detail::unpack_rows(buf, m.vertex_ids, offset, width, m.payload, 0);
            }
        };
        auto exchange_rows_full = [&](Mat<T>& buf, MsgTag tag, uint32_t offset, uint32_t width,
                                      int32_t layer) {
            for (uint32_t r2 = 0; r2 < G; ++r2) {
                if (r2 == r || part_sets[r][r2].empty()) continue;
                Message m;
                m.tag = tag;
                m.vertex_ids = part_sets[r][r2];
                m.layer_lo = m.layer_hi = layer;
                detail::pack_rows(buf, m.vertex_ids, offset, width, m.payload);
                ctx.send(peers[r2], std::move(m));
            }
            for (uint32_t r2 = 0; r2 < G; ++r2) {
                if (r2 == r || part_sets[r2][r].empty()) continue;
                Message m = ctx.recv(peers[r2], tag);
                detail::unpack_rows(buf, m.vertex_ids, offset, width, m.payload, 0);
            }
        };

        auto src_buffers = [&](uint32_t i) -> std::pair<Mat<T>&, Mat<T>&> {
            if (i == 0) return {in_cur, in_snap};
            return {h_cur[i - 1], h_snap[i - 1]};
        };

        for (uint32_t t = 1; t <= opt.epochs; ++t) {
            ctx.barrier();  // epoch entry sync
            const double t0 = ctx.clock();
            busy_epoch = 0;
            const uint64_t expected_version = uint64_t(fix_alpha) * ((t - 1) / fix_alpha);
            if (!sync && (t - 1) % fix_alpha == 0) {
                if (need_in_snap && !first_stage) in_snap = in_cur;
                for (uint32_t i = 0; i < len; ++i) {
                    if (h_snap[i].rows()) h_snap[i] = h_cur[i];
                    if (dagg_snap[i].rows()) dagg_snap[i] = dagg[i];
                }
                snap_version = t - 1;
            }
            (void)expected_version;
            for (uint32_t i = 0; i < len; ++i)
                masks[i] =
                    DropMask<T>::make(opt.model.dropout, opt.seed, t, lb + i, n, specs[lb + i].in_dim);
            std::fill(fwd_done.begin(), fwd_done.end(), uint8_t(0));
            std::fill(bwd_done.begin(), bwd_done.end(), uint8_t(0));
            std::vector<uint32_t> order(K);
            for (uint32_t k = 0; k < K; ++k) order[k] = k;
            if (opt.staleness.shuffle_chunks) order = shuffle_chunk_order(plan, t, opt.seed);

            auto recv_forward_chunk = [&](uint32_t k) {
                Message m = ctx.recv(up, MsgTag::ForwardEmb);
                size_t pos = detail::unpack_rows(in_cur, m.vertex_ids, 0, in_dim0, m.payload, 0);
                if (needs_h0) detail::unpack_rows(h0_cur, m.vertex_ids, 0, H, m.payload, pos);
                (void)k;
            };
            auto send_forward_chunk = [&](uint32_t k) {
                Message m;
                m.tag = MsgTag::ForwardEmb;
                m.vertex_ids = rank_rows[k][r];
                m.chunk = int32_t(k);
                m.layer_lo = int32_t(lb);
                m.layer_hi = int32_t(le) - 1;
                detail::pack_rows(h_cur[len - 1], m.vertex_ids, 0, out_dim_last, m.payload);
                if (needs_h0) detail::pack_rows(*h0mat, m.vertex_ids, 0, H, m.payload);
                ctx.send(down, std::move(m));
            };
            auto recv_backward_chunk = [&](uint32_t k) {
                Message m = ctx.recv(down, MsgTag::BackwardGrad);
                size_t pos =
                    detail::unpack_rows(dh[len - 1], m.vertex_ids, 0, out_dim_last, m.payload, 0);
                if (needs_h0) detail::unpack_rows(dh0_run, m.vertex_ids, 0, H, m.payload, pos);
                (void)k;
            };
            auto send_backward_chunk = [&](uint32_t k) {
                Message m;
                m.tag = MsgTag::BackwardGrad;
                m.vertex_ids = rank_rows[k][r];
                m.chunk = int32_t(k);
                m.layer_lo = int32_t(lb);
                m.layer_hi = int32_t(le) - 1;
                detail::pack_rows(dh_in, m.vertex_ids, 0, in_dim0, m.payload);
                if (needs_h0) detail::pack_rows(dh0_run, m.vertex_ids, 0, H, m.payload);
                ctx.send(up, std::move(m));
            };
            auto grad_logit_rows = [&](const std::vector<VertexId>& rows) {
                for (VertexId v : rows) {
                    T* d = dh[len - 1].row(v);
                    if (ds.split[v] == uint8_t(Split::Train))
                        xent_row_grad(h_cur[len - 1].row(v), ds.num_classes, ds.labels[v],
                                      inv_train, d);
                    else
                        std::fill(d, d + ds.num_classes, T{0});
                }
            };
            auto forward_rows_at = [&](uint32_t i, const std::vector<VertexId>& rows,
                                       bool stale_reads) {
                const auto& sp = specs[lb + i];
                auto [src_cur, src_snap] = src_buffers(i);
                Mat<T>* snap = &src_snap;
                auto getter = [&, snap](VertexId u) -> const T* {
                    if (!stale_reads || fwd_done[plan.chunk_of[u]]) return src_cur.row(u);
                    assert(snap_version == expected_version && "stale read version mismatch");
                    return snap->row(u);
                };
                for (VertexId v : rows)
                    kernel::forward_row(sp, params[lb + i], adj, v, getter, masks[i],
                                        h0mat && lb + i > 0 ? h0mat->row(v) : nullptr,
                                        pre[i].row(v), h_cur[i].row(v));
            };
            auto backward_rows_at = [&](uint32_t i, const std::vector<VertexId>& rows) {
                const uint32_t l = lb + i;
                const auto& sp = specs[l];
                if (l == 0 && needs_h0)
                    for (VertexId v : rows) {
                        T* d = dh[0].row(v);
                        const T* r0 = dh0_run.row(v);
                        for (uint32_t j = 0; j < H; ++j) d[j] += r0[j];
                    }
                for (VertexId v : rows)
                    kernel::backward_out_row(sp, params[l], dh[i].row(v), h_cur[i].row(v),
                                             dz[i].row(v), dagg[i].row(v),
                                             needs_h0 && sp.kind == LayerKind::Gcn2Conv
                                                 ? dh0_run.row(v)
                                                 : nullptr);
            };
            auto backward_prev_rows_at = [&](uint32_t i, const std::vector<VertexId>& rows,
                                             bool stale_reads) {
                const uint32_t l = lb + i;
                const auto& sp = specs[l];
                Mat<T>& target = i > 0 ? dh[i - 1] : dh_in;
                auto getter = [&](VertexId v2) -> const T* {
                    if (!stale_reads || bwd_done[plan.chunk_of[v2]]) return dagg[i].row(v2);
                    if (hist) {
                        assert(snap_version == expected_version && "stale read version mismatch");
                        return dagg_snap[i].row(v2);
                    }
                    return nullptr;  // zeroed historical gradients
                };
                for (VertexId u : rows)
                    kernel::backward_prev_row(sp, adj, u, getter, dagg[i].row(u), masks[i],
                                              target.row(u));
            };

            if (!sync) {
                // Forward pipeline over chunks (Algorithm semantics: a chunk is
                // marked processed before its own computation starts).
                for (uint32_t kk = 0; kk < K; ++kk) {
                    const uint32_t k = order[kk];
                    fwd_done[k] = 1;
                    if (!first_stage) recv_forward_chunk(k);
                    for (uint32_t i = 0; i < len; ++i) {
                        if (specs[lb + i].aggregates() && G > 1)
                            exchange_rows(k, src_buffers(i).first, MsgTag::GraphBoundaryFwd, 0,
                                          specs[lb + i].in_dim, int32_t(lb + i));
                        forward_rows_at(i, rank_rows[k][r], true);
                    }
                    charge(chunk_cost, int32_t(k), int32_t(lb), int32_t(le) - 1);
                    if (!last_stage) send_forward_chunk(k);
                }
            } else {
                for (uint32_t kk = 0; kk < K; ++kk) {
                    fwd_done[order[kk]] = 1;
                    if (!first_stage) recv_forward_chunk(order[kk]);
                }
                for (uint32_t i = 0; i < len; ++i) {
                    if (specs[lb + i].aggregates() && G > 1)
                        exchange_rows_full(src_buffers(i).first, MsgTag::GraphBoundaryFwd, 0,
                                           specs[lb + i].in_dim, int32_t(lb + i));
                    forward_rows_at(i, own, false);
                }
                charge(chunk_cost * K, -1, int32_t(lb), int32_t(le) - 1);
                if (!last_stage)
                    for (uint32_t kk = 0; kk < K; ++kk) send_forward_chunk(order[kk]);
            }

            // Metrics at the last stage, reduced to its rank 0.
            if (last_stage) {
                detail::SplitStats st;
                detail::accumulate_metrics_rows(h_cur[len - 1], own, ds.labels, ds.split, st);
                if (detail::reduce_metrics<T>(ctx, peers, r, st)) {
                    res.metrics[t - 1].epoch = t;
                    detail::fill_quality_metrics(res.metrics[t - 1], st, counts);
                }
                if (needs_h0 && !sync) dh0_run.zero();
            }

            if (!sync) {
                // Backward pipeline, chunks in reverse forward order.
                for (uint32_t kk = K; kk-- > 0;) {
                    const uint32_t k = order[kk];
                    bwd_done[k] = 1;
                    if (last_stage)
                        grad_logit_rows(rank_rows[k][r]);
                    else
                        recv_backward_chunk(k);
                    for (uint32_t i = len; i-- > 0;) {
                        backward_rows_at(i, rank_rows[k][r]);
                        if (specs[lb + i].aggregates() && G > 1) {
                            const auto& sp = specs[lb + i];
                            const uint32_t off =
                                sp.kind == LayerKind::SageConv ? sp.in_dim : 0;
                            exchange_rows(k, dagg[i], MsgTag::GraphBoundaryBwd, off, sp.in_dim,
                                          int32_t(lb + i));
                        }
                        if (lb + i > 0) backward_prev_rows_at(i, rank_rows[k][r], true);
                    }
                    charge(chunk_cost, int32_t(k), int32_t(lb), int32_t(le) - 1);
                    if (!first_stage) send_backward_chunk(k);
                }
            } else {
                if (last_stage) {
                    grad_logit_rows(own);
                    if (needs_h0) dh0_run.zero();
                } else {
                    for (uint32_t kk = K; kk-- > 0;) recv_backward_chunk(order[kk]);
                }
                for (uint32_t i = len; i-- > 0;) {
                    backward_rows_at(i, own);
                    if (specs[lb + i].aggregates() && G > 1) {
                        const auto& sp = specs[lb + i];
                        const uint32_t off = sp.kind == LayerKind::SageConv ? sp.in_dim : 0;
                        exchange_rows_full(dagg[i], MsgTag::GraphBoundaryBwd, off, sp.in_dim,
                                           int32_t(lb + i));
                    }
                    if (lb + i > 0) backward_prev_rows_at(i, own, false);
                }
                charge(chunk_cost * K, -1, int32_t(lb), int32_t(le) - 1);
                if (!first_stage)
                    for (uint32_t kk = K; kk-- > 0;) send_backward_chunk(order[kk]);
            }

            // Weight update from the full stashes, own rows in ascending order.
            std::vector<ParamGrads<T>> grads;
            grads.reserve(len);
            for (uint32_t i = 0; i < len; ++i)
                grads.push_back(param_grads_for_rows(specs[lb + i], own, pre[i], dz[i]));
            detail::group_weight_sync(ctx, peers, r, grads);
            optim.step(params, grads, lb, le);

            busy[size_t(t - 1) * W + w] = busy_epoch;
            ctx.epoch_close(0, [&]() {
                EpochComm e = fabric.ledger().close_epoch();
                auto& m = res.metrics[t - 1];
                m.comm_bytes_graph = e.graph_bytes();
                m.comm_bytes_pipeline = e.pipeline_bytes();
                m.comm_bytes_weightsync = e.weight_sync_bytes();
                m.wall_time_s = ctx.clock() - t0;
                double total_busy = 0;
                for (uint32_t w2 = 0; w2 < W; ++w2) total_busy += busy[size_t(t - 1) * W + w2];
                const double span = m.wall_time_s * double(W);
                m.bubble_fraction = span > 0 ? (span - total_busy) / span : 0.0;
                res.comm[t - 1] = e;
            });
        }

        std::vector<LayerParams<T>> owned(params.begin() + lb, params.begin() + le);
        res.worker_params[w] = {lb, le, std::move(owned)};
    };

    fabric.run(body);
    res.params.clear();
    for (uint32_t s2 = 0; s2 < S; ++s2) {
        const auto& wp = res.worker_params[gmap.groups[s2][0]];
        for (const auto& p : wp.params) res.params.push_back(p);
    }
    res.trace = fabric.trace();
    res.peak_buffer_bytes = *std::max_element(peak.begin(), peak.end());
    return res;
}

template <typename T>
TrainResult<T> train_pipeline(const Dataset& ds, const ChunkPlan& plan,
                              const StageAssignment& sa, const TrainOptions<T>& opt) {
    // One worker per stage: the hybrid engine with a single trivial partition.
    Partition whole = partition_from_assignment(
        ds.graph, std::vector<uint32_t>(ds.num_vertices(), 0));
    GroupMap gmap = assign_groups(sa.num_stages, 4, sa.num_stages, 1);
    if (!opt.fabric.node_of.empty()) gmap.node_of = opt.fabric.node_of;
    return train_hybrid(ds, whole, plan, sa, gmap, opt);
}

}  // namespace gnnsim
