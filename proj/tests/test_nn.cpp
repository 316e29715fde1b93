#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "gnnsim/nn.hpp"
#include "test_helpers.hpp"

using namespace gnnsim;

namespace {

MatD random_mat(size_t r, size_t c, uint64_t seed, double scale = 1.0) {
    MatD m(r, c);
    std::mt19937_64 eng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (size_t i = 0; i < m.size(); ++i) m.data()[i] = u(eng);
    return m;
}

// Straight-line scalar re-implementation of the three layer kinds, written
// directly from the update formulas with no shared code with the library.
MatD oracle_layer_forward(const LayerSpec& spec, const LayerParams<double>& p, const Graph& g,
                          const MatD& h, const MatD* h0, const DropMask<double>& mask) {
    const size_t n = g.num_vertices;
    auto drop = [&](VertexId v, uint32_t j) { return mask.apply(h.at(v, j), v, j); };
    MatD out(n, spec.out_dim);
    for (VertexId v = 0; v < n; ++v) {
        std::vector<double> pre;
        switch (spec.kind) {
            case LayerKind::Dense: {
                pre.resize(spec.in_dim);
                for (uint32_t j = 0; j < spec.in_dim; ++j) pre[j] = drop(v, j);
                break;
            }
            case LayerKind::GcnConv: {
                pre.assign(spec.in_dim, 0.0);
                const double dv = g.degrees[v] + 1.0;
                for (uint32_t j = 0; j < spec.in_dim; ++j) pre[j] += drop(v, j) / dv;
                for (VertexId u : g.neighbors(v)) {
                    const double w = 1.0 / std::sqrt(dv * (g.degrees[u] + 1.0));
                    for (uint32_t j = 0; j < spec.in_dim; ++j) pre[j] += w * drop(u, j);
                }
                break;
            }
            case LayerKind::SageConv: {
                pre.assign(2 * spec.in_dim, 0.0);
                for (uint32_t j = 0; j < spec.in_dim; ++j) pre[j] = drop(v, j);
                if (g.degrees[v])
                    for (VertexId u : g.neighbors(v))
                        for (uint32_t j = 0; j < spec.in_dim; ++j)
                            pre[spec.in_dim + j] += drop(u, j) / double(g.degrees[v]);
                break;
            }
            case LayerKind::Gcn2Conv: {
                std::vector<double> agg(spec.in_dim, 0.0);
                const double dv = g.degrees[v] + 1.0;
                for (uint32_t j = 0; j < spec.in_dim; ++j) agg[j] += drop(v, j) / dv;
                for (VertexId u : g.neighbors(v)) {
                    const double w = 1.0 / std::sqrt(dv * (g.degrees[u] + 1.0));
                    for (uint32_t j = 0; j < spec.in_dim; ++j) agg[j] += w * drop(u, j);
                }
                pre.resize(spec.in_dim);
                for (uint32_t j = 0; j < spec.in_dim; ++j)
                    pre[j] = (1.0 - spec.alpha) * agg[j] + spec.alpha * h0->at(v, j);
                break;
            }
        }
        for (uint32_t o = 0; o < spec.out_dim; ++o) {
            double z = p.bias.empty() ? 0.0 : p.bias[o];
            for (size_t i = 0; i < pre.size(); ++i) z += pre[i] * p.weight.at(i, o);
            if (spec.kind == LayerKind::Gcn2Conv)
                z = (1.0 - spec.beta) * pre[o] + spec.beta * z;
            out.at(v, o) = spec.relu ? std::max(z, 0.0) : z;
        }
    }
    return out;
}

struct Instance {
    Graph g;
    AdjBundle<double> adj;
    LayerSpec spec;
    LayerParams<double> params;
    MatD h, h0;
    DropMask<double> mask;
};

Instance make_instance(LayerKind kind, uint64_t seed, VertexId n = 6, uint32_t in = 4,
                       uint32_t out = 4, double dropout = 0.0) {
    Instance ins;
    ins.g = generate_er(n, 0.5, seed);
    ins.adj = build_adj_bundle<double>(ins.g);
    ins.spec = {kind, in, out, true, 0.15, 0.7};
    ins.params.weight = random_mat(ins.spec.k_in(), out, seed * 3 + 1, 0.8);
    if (ins.spec.has_bias()) {
        ins.params.bias.resize(out);
        auto b = random_mat(1, out, seed * 3 + 2, 0.3);
        for (uint32_t j = 0; j < out; ++j) ins.params.bias[j] = b.at(0, j);
    }
    ins.h = random_mat(n, in, seed * 3 + 3, 1.0);
    ins.h0 = random_mat(n, in, seed * 3 + 4, 1.0);
    ins.mask = dropout > 0 ? DropMask<double>::make(dropout, seed, 1, 0, n, in)
                           : DropMask<double>::off();
    return ins;
}

// Scalar objective sum(R .* forward) used for the finite-difference checks;
// R is fixed so the objective is differentiable wherever relu is inactive at
// the boundary (retry with another seed would handle exact zeros; with random
// continuous data they do not occur).
double objective(const Instance& ins, const MatD& r) {
    auto cache = layer_forward(ins.spec, ins.params, ins.adj, ins.h,
                               ins.spec.kind == LayerKind::Gcn2Conv ? &ins.h0 : nullptr,
                               ins.mask);
    double s = 0;
    for (size_t i = 0; i < cache.out.size(); ++i) s += r.data()[i] * cache.out.data()[i];
    return s;
}

double max_rel_err(double got, double want) {
    const double denom = std::max({std::abs(got), std::abs(want), 1e-8});
    return std::abs(got - want) / denom;
}

void finite_difference_check(LayerKind kind, uint64_t seed, double dropout) {
    Instance ins = make_instance(kind, seed, 6, 4, 4, dropout);
    MatD r = random_mat(6, 4, seed + 991, 1.0);
    auto cache = layer_forward(ins.spec, ins.params, ins.adj, ins.h,
                               kind == LayerKind::Gcn2Conv ? &ins.h0 : nullptr, ins.mask);
    auto back = layer_backward(ins.spec, ins.params, ins.adj, cache, r, ins.mask);

    const double step = 1e-5;
    double worst = 0;
    auto check_slot = [&](double* slot, double analytic) {
        const double save = *slot;
        *slot = save + step;
        const double up = objective(ins, r);
        *slot = save - step;
        const double down = objective(ins, r);
        *slot = save;
        worst = std::max(worst, max_rel_err(analytic, (up - down) / (2 * step)));
    };
    Instance& mut = ins;
    for (size_t i = 0; i < mut.params.weight.size(); ++i)
        check_slot(mut.params.weight.data() + i, back.grads.weight.data()[i]);
    for (size_t i = 0; i < mut.params.bias.size(); ++i)
        check_slot(&mut.params.bias[i], back.grads.bias[i]);
    for (size_t i = 0; i < mut.h.size(); ++i)
        check_slot(mut.h.data() + i, back.grad_in.data()[i]);
    if (kind == LayerKind::Gcn2Conv)
        for (size_t i = 0; i < mut.h0.size(); ++i)
            check_slot(mut.h0.data() + i, back.grad_h0.data()[i]);
    CHECK(worst < 1e-6);
}

}  // namespace

TEST_CASE("aggregate equals the input on an edgeless graph") {
    Graph g = build_graph(4, {});
    auto adj = normalize_adjacency<double>(g);
    MatD h = random_mat(4, 3, 5);
    MatD z = aggregate(adj, h);
    for (size_t i = 0; i < h.size(); ++i) CHECK(z.data()[i] == h.data()[i]);
}

TEST_CASE("aggregate on K2 with identity features") {
    Graph g = build_graph(2, {{0, 1}});
    auto adj = normalize_adjacency<double>(g);
    MatD h(2, 2);
    h.at(0, 0) = 1;
    h.at(1, 1) = 1;
    MatD z = aggregate(adj, h);
    for (size_t i = 0; i < 4; ++i) CHECK(z.data()[i] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("aggregate matches a dense reference multiply") {
    Graph g = generate_er(50, 0.12, 77);
    auto adj = normalize_adjacency<double>(g);
    MatD h = random_mat(50, 7, 78);
    MatD z = aggregate(adj, h);
    auto dense = testutil::dense_norm_adj(g);
    for (VertexId v = 0; v < 50; ++v)
        for (uint32_t j = 0; j < 7; ++j) {
            double want = 0;
            for (VertexId u = 0; u < 50; ++u) want += dense[v][u] * h.at(u, j);
            CHECK(std::abs(z.at(v, j) - want) < 1e-12);
        }
}

TEST_CASE("gcn layer is the identity on an edgeless graph with identity weights") {
    Graph g = build_graph(3, {});
    auto adj = build_adj_bundle<double>(g);
    LayerSpec spec{LayerKind::GcnConv, 3, 3, true, 0, 0};
    LayerParams<double> p;
    p.weight = MatD(3, 3);
    for (int i = 0; i < 3; ++i) p.weight.at(i, i) = 1.0;
    p.bias.assign(3, 0.0);
    MatD h = random_mat(3, 3, 9);
    for (size_t i = 0; i < h.size(); ++i) h.data()[i] = std::abs(h.data()[i]);
    auto cache = layer_forward<double>(spec, p, adj, h, nullptr, DropMask<double>::off());
    for (size_t i = 0; i < h.size(); ++i)
        CHECK(cache.out.data()[i] == doctest::Approx(h.data()[i]).epsilon(1e-15));
}

TEST_CASE("gcnii with alpha=1 ignores h_prev") {
    Instance ins = make_instance(LayerKind::Gcn2Conv, 4);
    ins.spec.alpha = 1.0;
    auto a = layer_forward(ins.spec, ins.params, ins.adj, ins.h, &ins.h0, ins.mask);
    MatD h2 = random_mat(ins.h.rows(), ins.h.cols(), 1234);
    auto b = layer_forward(ins.spec, ins.params, ins.adj, h2, &ins.h0, ins.mask);
    for (size_t i = 0; i < a.out.size(); ++i) CHECK(a.out.data()[i] == b.out.data()[i]);
}

TEST_CASE("layer_forward matches the straight-line scalar oracle") {
    for (auto kind : {LayerKind::Dense, LayerKind::GcnConv, LayerKind::SageConv,
                      LayerKind::Gcn2Conv})
        for (uint64_t seed : {11ull, 12ull, 13ull}) {
            Instance ins = make_instance(kind, seed, 5, 3, 4);
            auto got = layer_forward(ins.spec, ins.params, ins.adj, ins.h,
                                     kind == LayerKind::Gcn2Conv ? &ins.h0 : nullptr, ins.mask);
            // square dims required for gcn2
            if (kind == LayerKind::Gcn2Conv) continue;
            MatD want = oracle_layer_forward(ins.spec, ins.params, ins.g, ins.h,
                                             &ins.h0, ins.mask);
            for (size_t i = 0; i < want.size(); ++i)
                CHECK(std::abs(got.out.data()[i] - want.data()[i]) < 1e-12);
        }
    // gcn2 with square dims
    for (uint64_t seed : {21ull, 22ull}) {
        Instance ins = make_instance(LayerKind::Gcn2Conv, seed, 5, 4, 4);
        auto got = layer_forward(ins.spec, ins.params, ins.adj, ins.h, &ins.h0, ins.mask);
        MatD want = oracle_layer_forward(ins.spec, ins.params, ins.g, ins.h, &ins.h0, ins.mask);
        for (size_t i = 0; i < want.size(); ++i)
            CHECK(std::abs(got.out.data()[i] - want.data()[i]) < 1e-12);
    }
}

TEST_CASE("layer_forward with dropout matches the oracle under the same mask") {
    for (auto kind : {LayerKind::GcnConv, LayerKind::SageConv}) {
        Instance ins = make_instance(kind, 31, 5, 3, 4, 0.5);
        auto got = layer_forward<double>(ins.spec, ins.params, ins.adj, ins.h, nullptr, ins.mask);
        MatD want = oracle_layer_forward(ins.spec, ins.params, ins.g, ins.h, nullptr, ins.mask);
        for (size_t i = 0; i < want.size(); ++i)
            CHECK(std::abs(got.out.data()[i] - want.data()[i]) < 1e-12);
    }
}

TEST_CASE("layer_backward zero upstream gradient gives zero gradients") {
    Instance ins = make_instance(LayerKind::GcnConv, 41);
    auto cache = layer_forward<double>(ins.spec, ins.params, ins.adj, ins.h, nullptr, ins.mask);
    MatD zero(ins.h.rows(), ins.spec.out_dim);
    auto back = layer_backward(ins.spec, ins.params, ins.adj, cache, zero, ins.mask);
    for (size_t i = 0; i < back.grads.weight.size(); ++i)
        CHECK(back.grads.weight.data()[i] == 0.0);
    for (size_t i = 0; i < back.grad_in.size(); ++i) CHECK(back.grad_in.data()[i] == 0.0);
}

TEST_CASE("finite-difference gradient checks pass for all layer kinds") {
    for (uint64_t seed = 1; seed <= 50; ++seed) {
        finite_difference_check(LayerKind::GcnConv, seed, 0.0);
        finite_difference_check(LayerKind::SageConv, seed, 0.0);
        finite_difference_check(LayerKind::Gcn2Conv, seed, 0.0);
    }
}

TEST_CASE("finite-difference gradient checks pass with a frozen dropout mask") {
    for (uint64_t seed = 60; seed < 70; ++seed) {
        finite_difference_check(LayerKind::GcnConv, seed, 0.5);
        finite_difference_check(LayerKind::SageConv, seed, 0.5);
        finite_difference_check(LayerKind::Gcn2Conv, seed, 0.5);
    }
}

TEST_CASE("gcnii h0 gradient vanishes exactly when alpha is zero") {
    Instance ins = make_instance(LayerKind::Gcn2Conv, 71);
    ins.spec.alpha = 0.0;
    auto cache = layer_forward(ins.spec, ins.params, ins.adj, ins.h, &ins.h0, ins.mask);
    MatD r = random_mat(ins.h.rows(), ins.spec.out_dim, 72);
    auto back = layer_backward(ins.spec, ins.params, ins.adj, cache, r, ins.mask);
    for (size_t i = 0; i < back.grad_h0.size(); ++i) CHECK(back.grad_h0.data()[i] == 0.0);
    ins.spec.alpha = 0.3;
    cache = layer_forward(ins.spec, ins.params, ins.adj, ins.h, &ins.h0, ins.mask);
    back = layer_backward(ins.spec, ins.params, ins.adj, cache, r, ins.mask);
    double mx = 0;
    for (size_t i = 0; i < back.grad_h0.size(); ++i)
        mx = std::max(mx, std::abs(back.grad_h0.data()[i]));
    CHECK(mx > 0.0);
}

TEST_CASE("softmax_xent uniform logits give ln C") {
    MatD logits(4, 5);
    logits.fill(0.7);
    std::vector<uint32_t> labels = {0, 1, 2, 3};
    std::vector<uint8_t> mask = {1, 1, 1, 1};
    auto r = softmax_xent(logits, labels, mask);
    CHECK(r.loss == doctest::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("softmax_xent saturated correct logit gives near-zero loss and grad") {
    MatD logits(1, 3);
    logits.at(0, 1) = 50.0;
    std::vector<uint32_t> labels = {1};
    std::vector<uint8_t> mask = {1};
    auto r = softmax_xent(logits, labels, mask);
    CHECK(r.loss < 1e-12);
    for (size_t i = 0; i < r.grad_logits.size(); ++i)
        CHECK(std::abs(r.grad_logits.data()[i]) < 1e-12);
    CHECK(r.correct == 1);
}

TEST_CASE("softmax_xent gradient matches finite differences and masks rows") {
    MatD logits = random_mat(3, 2, 81);
    std::vector<uint32_t> labels = {1, 0, 1};
    std::vector<uint8_t> mask = {1, 0, 1};
    auto r = softmax_xent(logits, labels, mask);
    for (uint32_t j = 0; j < 2; ++j) CHECK(r.grad_logits.at(1, j) == 0.0);
    const double step = 1e-5;
    for (size_t i = 0; i < logits.size(); ++i) {
        const double save = logits.data()[i];
        logits.data()[i] = save + step;
        const double up = softmax_xent(logits, labels, mask).loss;
        logits.data()[i] = save - step;
        const double down = softmax_xent(logits, labels, mask).loss;
        logits.data()[i] = save;
        const double fd = (up - down) / (2 * step);
        CHECK(max_rel_err(r.grad_logits.data()[i], fd) < 1e-6);
    }
    CHECK_THROWS_AS(softmax_xent(logits, labels, std::vector<uint8_t>{0, 0, 0}),
                    std::invalid_argument);
}

TEST_CASE("adam leaves parameters alone under zero gradients") {
    auto specs = build_layer_specs({ModelKind::GCN, 2, 4}, 3, 2);
    auto params = init_params<double>(specs, 5);
    auto before = params;
    Optimizer<double> opt({}, specs);
    std::vector<ParamGrads<double>> grads;
    for (const auto& s : specs) {
        ParamGrads<double> g;
        g.weight = MatD(s.k_in(), s.out_dim);
        g.bias.assign(s.out_dim, 0.0);
        grads.push_back(std::move(g));
    }
    opt.step(params, grads, 0, specs.size());
    for (size_t l = 0; l < specs.size(); ++l)
        CHECK(testutil::bitwise_equal(params[l].weight, before[l].weight));
}

TEST_CASE("first adam step moves each parameter by about lr") {
    auto specs = build_layer_specs({ModelKind::GCN, 1, 4}, 3, 2);
    auto params = init_params<double>(specs, 6);
    auto before = params;
    OptimizerConfig<double> cfg;
    cfg.lr = 0.001;
    Optimizer<double> opt(cfg, specs);
    std::vector<ParamGrads<double>> grads;
    for (const auto& s : specs) {
        ParamGrads<double> g;
        g.weight = MatD(s.k_in(), s.out_dim);
        g.weight.fill(0.37);
        g.bias.assign(s.out_dim, 0.37);
        grads.push_back(std::move(g));
    }
    opt.step(params, grads, 0, specs.size());
    for (size_t i = 0; i < params[0].weight.size(); ++i) {
        const double delta = std::abs(params[0].weight.data()[i] - before[0].weight.data()[i]);
        CHECK(delta >= 0.999 * cfg.lr);
        CHECK(delta <= cfg.lr);
    }
}

TEST_CASE("adam is deterministic given identical inputs") {
    auto specs = build_layer_specs({ModelKind::GCN, 2, 4}, 3, 2);
    auto run = [&]() {
        auto params = init_params<double>(specs, 7);
        Optimizer<double> opt({}, specs);
        std::vector<ParamGrads<double>> grads;
        for (const auto& s : specs) {
            ParamGrads<double> g;
            g.weight = random_mat(s.k_in(), s.out_dim, 99);
            g.bias.assign(s.out_dim, 0.1);
            grads.push_back(std::move(g));
        }
        for (int i = 0; i < 3; ++i) opt.step(params, grads, 0, specs.size());
        return params;
    };
    auto a = run();
    auto b = run();
    for (size_t l = 0; l < a.size(); ++l)
        CHECK(testutil::bitwise_equal(a[l].weight, b[l].weight));
}

TEST_CASE("sgd applies the plain update") {
    auto specs = build_layer_specs({ModelKind::GCN, 1, 2}, 2, 2);
    auto params = init_params<double>(specs, 8);
    auto before = params;
    OptimizerConfig<double> cfg;
    cfg.kind = OptimizerKind::Sgd;
    cfg.lr = 0.5;
    Optimizer<double> opt(cfg, specs);
    std::vector<ParamGrads<double>> grads(1);
    grads[0].weight = MatD(specs[0].k_in(), specs[0].out_dim);
    grads[0].weight.fill(1.0);
    grads[0].bias.assign(specs[0].out_dim, 2.0);
    opt.step(params, grads, 0, 1);
    for (size_t i = 0; i < params[0].weight.size(); ++i)
        CHECK(params[0].weight.data()[i] == before[0].weight.data()[i] - 0.5);
    for (size_t j = 0; j < params[0].bias.size(); ++j)
        CHECK(params[0].bias[j] == before[0].bias[j] - 1.0);
}

TEST_CASE("checkpoints round trip tensors through the stage format") {
    auto specs = build_layer_specs({ModelKind::GCNII, 4, 6}, 5, 3);
    auto params = init_params<float>(specs, 12);
    auto dir = testutil::fresh_dir("ckpt");
    const std::string path = (dir / "stage0.ckpt").string();
    save_stage_checkpoint(path, specs, params, 0, specs.size());
    auto tensors = load_checkpoint(path);
    size_t idx = 0;
    for (size_t l = 0; l < specs.size(); ++l) {
        CHECK(tensors[idx].name == "layer" + std::to_string(l) + ".weight");
        CHECK(tensors[idx].rows == params[l].weight.rows());
        CHECK(std::memcmp(tensors[idx].data.data(), params[l].weight.data(),
                          params[l].weight.size() * 4) == 0);
        ++idx;
        if (!params[l].bias.empty()) ++idx;
    }
}

TEST_CASE("model schedules have consistent shapes") {
    auto gcn = build_layer_specs({ModelKind::GCN, 3, 16}, 10, 4);
    CHECK(gcn.size() == 3);
    CHECK(gcn[0].in_dim == 10);
    CHECK(gcn[2].out_dim == 4);
    CHECK(!gcn[2].relu);
    auto sage = build_layer_specs({ModelKind::Sage, 2, 16}, 10, 4);
    CHECK(sage[0].k_in() == 20);
    auto gcnii = build_layer_specs({ModelKind::GCNII, 5, 16}, 10, 4);
    CHECK(gcnii.size() == 5);
    CHECK(gcnii[0].kind == LayerKind::Dense);
    CHECK(gcnii[4].kind == LayerKind::Dense);
    for (int l = 1; l <= 3; ++l) {
        CHECK(gcnii[l].kind == LayerKind::Gcn2Conv);
        CHECK(gcnii[l].beta == doctest::Approx(std::log(0.5 / l + 1.0)).epsilon(1e-12));
        CHECK(!gcnii[l].has_bias());
    }
    CHECK(model_needs_h0(gcnii));
    CHECK(!model_needs_h0(gcn));
    CHECK_THROWS_AS(build_layer_specs({ModelKind::GCNII, 2, 16}, 10, 4), std::invalid_argument);
}

TEST_CASE("glorot init is reproducible and in range") {
    MatD w(20, 30);
    glorot_uniform(w, 5, 1);
    MatD w2(20, 30);
    glorot_uniform(w2, 5, 1);
    CHECK(testutil::bitwise_equal(w, w2));
    const double bound = std::sqrt(6.0 / 50.0);
    for (size_t i = 0; i < w.size(); ++i) CHECK(std::abs(w.data()[i]) <= bound);
}
