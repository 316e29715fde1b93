#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gnnsim/graph.hpp"
#include "gnnsim/matrix.hpp"
#include "gnnsim/rng.hpp"

namespace gnnsim {

enum class ModelKind { GCN, Sage, GCNII };
enum class LayerKind { Dense, GcnConv, SageConv, Gcn2Conv };
enum class OptimizerKind { Adam, Sgd };

ModelKind parse_model_kind(const std::string& s);
std::string model_kind_name(ModelKind k);

struct ModelConfig {
    ModelKind kind = ModelKind::GCN;
    uint32_t layers = 2;
    uint32_t hidden = 16;
    double dropout = 0.5;
    double gcnii_alpha = 0.1;   // initial-residual strength
    double gcnii_lambda = 0.5;  // identity-map decay
    bool self_loops = true;
};

struct LayerSpec {
    LayerKind kind = LayerKind::Dense;
    uint32_t in_dim = 0;
    uint32_t out_dim = 0;
    bool relu = true;
    double alpha = 0.0;  // Gcn2Conv only
    double beta = 0.0;   // Gcn2Conv only

    bool aggregates() const { return kind != LayerKind::Dense; }
    bool has_bias() const { return kind != LayerKind::Gcn2Conv; }
    // Width of the cached pre-transform matrix (doubled by Sage's concat).
    uint32_t k_in() const { return kind == LayerKind::SageConv ? 2 * in_dim : in_dim; }
};

// Layer schedule: first layer maps features to hidden, the last maps hidden
// to classes (logits, no activation). GCNII wraps its residual convolutions
// between two dense layers, so it needs layers >= 3.
std::vector<LayerSpec> build_layer_specs(const ModelConfig& cfg, uint32_t in_features,
                                         uint32_t num_classes);
bool model_needs_h0(const std::vector<LayerSpec>& specs);
uint64_t param_count(const std::vector<LayerSpec>& specs);

template <typename T>
struct LayerParams {
    Mat<T> weight;        // k_in x out_dim
    std::vector<T> bias;  // out_dim, empty for Gcn2Conv
};

template <typename T>
std::vector<LayerParams<T>> init_params(const std::vector<LayerSpec>& specs, uint64_t seed) {
    std::vector<LayerParams<T>> ps;
    ps.reserve(specs.size());
    for (size_t i = 0; i < specs.size(); ++i) {
        LayerParams<T> p;
        p.weight = Mat<T>(specs[i].k_in(), specs[i].out_dim);
        glorot_uniform(p.weight, seed, mix64(0x57454947ull, i));
        if (specs[i].has_bias()) p.bias.assign(specs[i].out_dim, T{0});
        ps.push_back(std::move(p));
    }
    return ps;
}

// Sparse operators used by the layer kernels. `norm` is the symmetric
// normalized adjacency, `mean`/`mean_t` the row-mean operator and its
// transpose (weights 1/D_v indexed by source row).
template <typename T>
struct AdjBundle {
    const Graph* graph = nullptr;
    CsrMatrix<T> norm;
    CsrMatrix<T> mean;
    CsrMatrix<T> mean_t;
};

template <typename T>
AdjBundle<T> build_adj_bundle(const Graph& g, bool self_loops = true) {
    AdjBundle<T> b;
    b.graph = &g;
    b.norm = normalize_adjacency<T>(g, self_loops);
    b.mean = mean_adjacency<T>(g);
    b.mean_t = b.mean;
    for (VertexId u = 0; u < g.num_vertices; ++u)
        for (uint64_t i = b.mean_t.offsets[u]; i < b.mean_t.offsets[u + 1]; ++i) {
            const VertexId v = b.mean_t.cols[i];
            b.mean_t.vals[i] = g.degrees[v] ? T(1.0 / double(g.degrees[v])) : T{0};
        }
    return b;
}

// Stateless dropout: the keep decision for (vertex, column) is a pure
// function of (seed, epoch, layer), so every worker regenerates identical
// masks and chunking cannot perturb them.
template <typename T>
struct DropMask {
    bool enabled = false;
    T scale = T{1};
    uint32_t cols = 0;
    std::vector<uint64_t> bits;

    static DropMask off() { return {}; }

    static DropMask make(double rate, uint64_t seed, uint64_t epoch, uint32_t layer_index,
                         VertexId n, uint32_t cols) {
        DropMask m;
        if (rate <= 0.0) return m;
        if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
        m.enabled = true;
        m.cols = cols;
        const double keep = 1.0 - rate;
        m.scale = T(1.0 / keep);
        const uint64_t total = uint64_t(n) * cols;
        m.bits.assign((total + 63) / 64, 0);
        const uint64_t key = mix64(seed, epoch, layer_index);
        for (uint64_t i = 0; i < total; ++i)
            if (hash_unit(mix64(key, i)) < keep) m.bits[i >> 6] |= 1ull << (i & 63);
        return m;
    }

    bool kept(VertexId v, uint32_t j) const {
        const uint64_t i = uint64_t(v) * cols + j;
        return (bits[i >> 6] >> (i & 63)) & 1;
    }
    // Applied identically on the forward value and the backward gradient.
    T apply(T x, VertexId v, uint32_t j) const {
        if (!enabled) return x;
        return kept(v, j) ? x * scale : T{0};
    }
};

namespace kernel {

// z[v] += sum over the CSR row of w * dropped(src(u)); ascending column order.
template <typename T, typename Src>
void spmv_row(const CsrMatrix<T>& adj, VertexId v, Src&& src, const DropMask<T>& mask,
              uint32_t dim, T* acc) {
    for (uint32_t j = 0; j < dim; ++j) acc[j] = T{0};
    for (uint64_t i = adj.offsets[v]; i < adj.offsets[v + 1]; ++i) {
        const VertexId u = adj.cols[i];
        const T w = adj.vals[i];
        const T* row = src(u);
        if (!row) continue;
        for (uint32_t j = 0; j < dim; ++j) acc[j] += w * mask.apply(row[j], u, j);
    }
}

// Forward one vertex row. `src(u)` returns the raw previous-layer row to read
// for vertex u (current or snapshot — the caller decides); dropout is applied
// in here so that every execution mode performs identical arithmetic.
template <typename T, typename Src>
void forward_row(const LayerSpec& spec, const LayerParams<T>& p, const AdjBundle<T>& adj,
                 VertexId v, Src&& src, const DropMask<T>& mask, const T* h0_row,
                 T* pre_row, T* out_row) {
    const uint32_t in = spec.in_dim, out = spec.out_dim;
    switch (spec.kind) {
        case LayerKind::Dense: {
            const T* x = src(v);
            for (uint32_t j = 0; j < in; ++j) pre_row[j] = mask.apply(x[j], v, j);
            dense_rows(pre_row, in, p.weight, p.bias, out_row, out);
            break;
        }
        case LayerKind::GcnConv: {
            spmv_row(adj.norm, v, src, mask, in, pre_row);
            dense_rows(pre_row, in, p.weight, p.bias, out_row, out);
            break;
        }
        case LayerKind::SageConv: {
            const T* x = src(v);
            for (uint32_t j = 0; j < in; ++j) pre_row[j] = mask.apply(x[j], v, j);
            spmv_row(adj.mean, v, src, mask, in, pre_row + in);
            dense_rows(pre_row, 2 * in, p.weight, p.bias, out_row, out);
            break;
        }
        case LayerKind::Gcn2Conv: {
            const T a = T(spec.alpha), beta = T(spec.beta);
            spmv_row(adj.norm, v, src, mask, in, pre_row);
            for (uint32_t j = 0; j < in; ++j)
                pre_row[j] = (T{1} - a) * pre_row[j] + a * h0_row[j];
            dense_rows(pre_row, in, p.weight, p.bias, out_row, out);
            for (uint32_t j = 0; j < out; ++j)
                out_row[j] = (T{1} - beta) * pre_row[j] + beta * out_row[j];
            break;
        }
    }
    if (spec.relu)
        for (uint32_t j = 0; j < out; ++j)
            if (out_row[j] < T{0}) out_row[j] = T{0};
}

// Backward through activation and dense transform for one row: fills dz and
// dagg (gradient wrt the pre-transform matrix; the cross-vertex currency).
// For Gcn2Conv also accumulates the initial-residual gradient into dh0_row.
template <typename T>
void backward_out_row(const LayerSpec& spec, const LayerParams<T>& p, const T* dout,
                      const T* out_row, T* dz_row, T* dagg_row, T* dh0_row) {
    const uint32_t out = spec.out_dim, k = spec.k_in();
    if (spec.relu) {
        for (uint32_t j = 0; j < out; ++j) dz_row[j] = out_row[j] > T{0} ? dout[j] : T{0};
    } else {
        for (uint32_t j = 0; j < out; ++j) dz_row[j] = dout[j];
    }
    dense_rows_wt(dz_row, out, p.weight, dagg_row, k);
    if (spec.kind == LayerKind::Gcn2Conv) {
        const T a = T(spec.alpha), beta = T(spec.beta);
        for (uint32_t j = 0; j < k; ++j)
            dagg_row[j] = (T{1} - beta) * dz_row[j] + beta * dagg_row[j];
        for (uint32_t j = 0; j < k; ++j) dh0_row[j] += a * dagg_row[j];
    }
}

// Backward to the previous layer for one row. `dget(v)` returns the dagg row
// of vertex v or nullptr (contribution treated as zero — the staleness hook).
template <typename T, typename DGet>
void backward_prev_row(const LayerSpec& spec, const AdjBundle<T>& adj, VertexId u,
                       DGet&& dget, const T* own_dagg_row, const DropMask<T>& mask,
                       T* dprev_row) {
    const uint32_t in = spec.in_dim;
    switch (spec.kind) {
        case LayerKind::Dense:
            for (uint32_t j = 0; j < in; ++j) dprev_row[j] = own_dagg_row[j];
            break;
        case LayerKind::GcnConv:
            spmv_row(adj.norm, u, dget, DropMask<T>::off(), in, dprev_row);
            break;
        case LayerKind::SageConv: {
            for (uint32_t j = 0; j < in; ++j) dprev_row[j] = own_dagg_row[j];
            for (uint64_t i = adj.mean_t.offsets[u]; i < adj.mean_t.offsets[u + 1]; ++i) {
                const T w = adj.mean_t.vals[i];
                const T* d = dget(adj.mean_t.cols[i]);
                if (!d) continue;
                for (uint32_t j = 0; j < in; ++j) dprev_row[j] += w * d[in + j];
            }
            break;
        }
        case LayerKind::Gcn2Conv: {
            const T oma = T{1} - T(spec.alpha);
            for (uint32_t j = 0; j < in; ++j) dprev_row[j] = T{0};
            for (uint64_t i = adj.norm.offsets[u]; i < adj.norm.offsets[u + 1]; ++i) {
                const T w = adj.norm.vals[i];
                const T* d = dget(adj.norm.cols[i]);
                if (!d) continue;
                for (uint32_t j = 0; j < in; ++j) dprev_row[j] += w * (oma * d[j]);
            }
            break;
        }
    }
    for (uint32_t j = 0; j < in; ++j) dprev_row[j] = mask.apply(dprev_row[j], u, j);
}

}  // namespace kernel

// Parameter gradients from the stashed pre/dz matrices; accumulation runs
// over the given rows in the given order (callers pass ascending ids).
template <typename T>
struct ParamGrads {
    Mat<T> weight;
    std::vector<T> bias;
};

template <typename T>
ParamGrads<T> param_grads_for_rows(const LayerSpec& spec, const std::vector<VertexId>& rows,
                                   const Mat<T>& pre, const Mat<T>& dz) {
    ParamGrads<T> g;
    const uint32_t k = spec.k_in(), out = spec.out_dim;
    g.weight = Mat<T>(k, out);
    if (spec.has_bias()) g.bias.assign(out, T{0});
    for (VertexId v : rows) {
        const T* x = pre.row(v);
        const T* d = dz.row(v);
        for (uint32_t i = 0; i < k; ++i) {
            const T xi = x[i];
            if (xi == T{0}) continue;
            T* gr = g.weight.row(i);
            for (uint32_t j = 0; j < out; ++j) gr[j] += xi * d[j];
        }
        if (spec.has_bias())
            for (uint32_t j = 0; j < out; ++j) g.bias[j] += d[j];
    }
    if (spec.kind == LayerKind::Gcn2Conv) {
        const T beta = T(spec.beta);
        for (size_t i = 0; i < g.weight.size(); ++i) g.weight.data()[i] *= beta;
    }
    return g;
}

// ---- Whole-matrix operations (unit-test surface and sequential trainer) ----

// z = A_hat * h with deterministic ascending-neighbor summation.
template <typename T>
Mat<T> aggregate(const CsrMatrix<T>& adj, const Mat<T>& h) {
    if (h.rows() != adj.n) throw std::invalid_argument("aggregate: row count mismatch");
    Mat<T> z(h.rows(), h.cols());
    const auto mask = DropMask<T>::off();
    for (VertexId v = 0; v < adj.n; ++v)
        kernel::spmv_row(adj, v, [&](VertexId u) { return h.row(u); }, mask,
                         uint32_t(h.cols()), z.row(v));
    return z;
}

template <typename T>
struct ForwardCache {
    Mat<T> pre;  // N x k_in
    Mat<T> out;  // N x out_dim
};

template <typename T>
ForwardCache<T> layer_forward(const LayerSpec& spec, const LayerParams<T>& p,
                              const AdjBundle<T>& adj, const Mat<T>& h_prev, const Mat<T>* h0,
                              const DropMask<T>& mask) {
    if (h_prev.cols() != spec.in_dim) throw std::invalid_argument("layer_forward: in_dim mismatch");
    if (spec.kind == LayerKind::Gcn2Conv && !h0)
        throw std::invalid_argument("layer_forward: Gcn2Conv requires h0");
    const size_t n = h_prev.rows();
    ForwardCache<T> c;
    c.pre = Mat<T>(n, spec.k_in());
    c.out = Mat<T>(n, spec.out_dim);
    for (VertexId v = 0; v < n; ++v)
        kernel::forward_row(spec, p, adj, v, [&](VertexId u) { return h_prev.row(u); }, mask,
                            h0 ? h0->row(v) : nullptr, c.pre.row(v), c.out.row(v));
    return c;
}

template <typename T>
struct BackwardResult {
    Mat<T> grad_in;  // N x in_dim
    Mat<T> grad_h0;  // N x in_dim for Gcn2Conv, else empty
    ParamGrads<T> grads;
};

template <typename T>
BackwardResult<T> layer_backward(const LayerSpec& spec, const LayerParams<T>& p,
                                 const AdjBundle<T>& adj, const ForwardCache<T>& cache,
                                 const Mat<T>& grad_out, const DropMask<T>& mask) {
    const size_t n = grad_out.rows();
    if (cache.out.rows() != n || grad_out.cols() != spec.out_dim)
        throw std::invalid_argument("layer_backward: shape mismatch");
    BackwardResult<T> r;
    Mat<T> dz(n, spec.out_dim), dagg(n, spec.k_in());
    r.grad_in = Mat<T>(n, spec.in_dim);
    if (spec.kind == LayerKind::Gcn2Conv) r.grad_h0 = Mat<T>(n, spec.in_dim);
    for (VertexId v = 0; v < n; ++v)
        kernel::backward_out_row(spec, p, grad_out.row(v), cache.out.row(v), dz.row(v),
                                 dagg.row(v),
                                 spec.kind == LayerKind::Gcn2Conv ? r.grad_h0.row(v) : nullptr);
    for (VertexId v = 0; v < n; ++v)
        kernel::backward_prev_row(spec, adj, v, [&](VertexId u) { return dagg.row(u); },
                                  dagg.row(v), mask, r.grad_in.row(v));
    std::vector<VertexId> rows(n);
    for (size_t v = 0; v < n; ++v) rows[v] = VertexId(v);
    r.grads = param_grads_for_rows(spec, rows, cache.pre, dz);
    return r;
}

// ---- Loss head ----

template <typename T>
struct LossResult {
    double loss = 0;
    Mat<T> grad_logits;
    uint64_t correct = 0;
};

// Per-row pieces, shared by engines so partial sums match the whole-matrix op.
template <typename T>
double xent_row_loss(const T* logits, uint32_t classes, uint32_t label) {
    T mx = logits[0];
    for (uint32_t j = 1; j < classes; ++j) mx = std::max(mx, logits[j]);
    T sum{0};
    for (uint32_t j = 0; j < classes; ++j) sum += std::exp(logits[j] - mx);
    return double(std::log(sum)) - double(logits[label] - mx);
}

template <typename T>
void xent_row_grad(const T* logits, uint32_t classes, uint32_t label, T inv_count, T* grad) {
    T mx = logits[0];
    for (uint32_t j = 1; j < classes; ++j) mx = std::max(mx, logits[j]);
    T sum{0};
    for (uint32_t j = 0; j < classes; ++j) {
        grad[j] = std::exp(logits[j] - mx);
        sum += grad[j];
    }
    for (uint32_t j = 0; j < classes; ++j) {
        grad[j] = grad[j] / sum * inv_count;
        if (j == label) grad[j] -= inv_count;
    }
}

template <typename T>
uint32_t argmax_row(const T* logits, uint32_t classes) {
    uint32_t best = 0;
    for (uint32_t j = 1; j < classes; ++j)
        if (logits[j] > logits[best]) best = j;
    return best;
}

template <typename T>
LossResult<T> softmax_xent(const Mat<T>& logits, const std::vector<uint32_t>& labels,
                           const std::vector<uint8_t>& mask) {
    const size_t n = logits.rows();
    const uint32_t c = uint32_t(logits.cols());
    if (labels.size() != n || mask.size() != n)
        throw std::invalid_argument("softmax_xent: length mismatch");
    uint64_t count = 0;
    for (uint8_t m : mask) count += m != 0;
    if (count == 0) throw std::invalid_argument("softmax_xent: empty mask");
    LossResult<T> r;
    r.grad_logits = Mat<T>(n, c);
    const T inv = T(1.0 / double(count));
    double loss_sum = 0;
    for (size_t v = 0; v < n; ++v) {
        if (!mask[v]) continue;
        loss_sum += xent_row_loss(logits.row(v), c, labels[v]);
        xent_row_grad(logits.row(v), c, labels[v], inv, r.grad_logits.row(v));
        r.correct += argmax_row(logits.row(v), c) == labels[v];
    }
    r.loss = loss_sum / double(count);
    return r;
}

// ---- Optimizers ----

template <typename T>
struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
class Optimizer {
  public:
    Optimizer() = default;
    Optimizer(OptimizerConfig<T> cfg, const std::vector<LayerSpec>& specs) : cfg_(cfg) {
        for (const auto& s : specs) {
            slots_.push_back({std::vector<T>(size_t(s.k_in()) * s.out_dim, T{0}),
                              std::vector<T>(size_t(s.k_in()) * s.out_dim, T{0}),
                              std::vector<T>(s.has_bias() ? s.out_dim : 0, T{0}),
                              std::vector<T>(s.has_bias() ? s.out_dim : 0, T{0})});
        }
    }

    uint64_t step_count() const { return step_; }

    // Applies one update to the given layer range [lo, hi).
    void step(std::vector<LayerParams<T>>& params, const std::vector<ParamGrads<T>>& grads,
              size_t lo, size_t hi) {
        ++step_;
        for (size_t l = lo; l < hi; ++l) {
            auto& s = slots_[l];
            update(params[l].weight.data(), grads[l - lo].weight.data(),
                   params[l].weight.size(), s.mw.data(), s.vw.data());
            if (!params[l].bias.empty())
                update(params[l].bias.data(), grads[l - lo].bias.data(), params[l].bias.size(),
                       s.mb.data(), s.vb.data());
        }
    }

  private:
    struct Slot {
        std::vector<T> mw, vw, mb, vb;
    };

    void update(T* p, const T* g, size_t n, T* m, T* v) {
        const T lr = T(cfg_.lr);
        if (cfg_.kind == OptimizerKind::Sgd) {
            for (size_t i = 0; i < n; ++i) p[i] -= lr * g[i];
            return;
        }
        const T b1 = T(cfg_.beta1), b2 = T(cfg_.beta2), eps = T(cfg_.eps);
        const T c1 = T(1.0 - std::pow(cfg_.beta1, double(step_)));
        const T c2 = T(1.0 - std::pow(cfg_.beta2, double(step_)));
        for (size_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (T{1} - b1) * g[i];
            v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
            const T mhat = m[i] / c1;
            const T vhat = v[i] / c2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }

    OptimizerConfig<T> cfg_;
    uint64_t step_ = 0;
    std::vector<Slot> slots_;
};

// ---- Checkpoints ----
// One binary file per stage: u64 header length, JSON header describing tensor
// shapes, then the tensors as little-endian f32.
void save_checkpoint(const std::string& path, const std::vector<std::string>& names,
                     const std::vector<const float*>& data,
                     const std::vector<std::pair<uint64_t, uint64_t>>& shapes);
struct CheckpointTensor {
    std::string name;
    uint64_t rows = 0, cols = 0;
    std::vector<float> data;
};
std::vector<CheckpointTensor> load_checkpoint(const std::string& path);

template <typename T>
void save_stage_checkpoint(const std::string& path, const std::vector<LayerSpec>& specs,
                           const std::vector<LayerParams<T>>& params, size_t lo, size_t hi) {
    std::vector<std::string> names;
    std::vector<std::vector<float>> storage;
    std::vector<const float*> ptrs;
    std::vector<std::pair<uint64_t, uint64_t>> shapes;
    for (size_t l = lo; l < hi; ++l) {
        storage.emplace_back(params[l].weight.size());
        for (size_t i = 0; i < params[l].weight.size(); ++i)
            storage.back()[i] = float(params[l].weight.data()[i]);
        names.push_back("layer" + std::to_string(l) + ".weight");
        shapes.push_back({params[l].weight.rows(), params[l].weight.cols()});
        if (!params[l].bias.empty()) {
            storage.emplace_back(params[l].bias.begin(), params[l].bias.end());
            names.push_back("layer" + std::to_string(l) + ".bias");
            shapes.push_back({1, params[l].bias.size()});
        }
    }
    for (const auto& s : storage) ptrs.push_back(s.data());
    save_checkpoint(path, names, ptrs, shapes);
}

}  // namespace gnnsim
