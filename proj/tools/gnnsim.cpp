// Command-line front end: dataset generation, partitioning, training runs,
// and the analytic communication reports.
//
// Exit codes: 0 success, 2 usage/configuration error, 3 runtime failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gnnsim/analytics.hpp"
#include "gnnsim/dataset.hpp"
#include "gnnsim/engines.hpp"
#include "gnnsim/fabric.hpp"
#include "gnnsim/partition.hpp"

using namespace gnnsim;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0, kUsage = 2, kRuntime = 3;

struct RunConfig {
    std::string dataset;
    std::string gen_sbm;  // "BLOCKSxSIZE" inline generator spec
    double p_in = 0.1, p_out = 0.005;
    std::string mode = "sequential";  // sequential|graph|pipeline|hybrid
    std::string model = "gcn";
    uint32_t layers = 8;
    uint32_t hidden = 16;
    uint32_t epochs = 10;
    double lr = 0.001;
    double dropout = 0.5;
    uint64_t seed = 1;
    uint32_t workers = 0;  // 0: derived from the mode
    uint32_t stages = 1;
    uint32_t group_size = 1;
    uint32_t chunks = 0;  // 0 -> default 4 * stages
    bool shuffle = true;
    uint32_t fix_alpha = 10;
    bool historical_grads = false;
    bool synchronous = false;
    bool deterministic = true;
    bool self_loops = true;
    std::string optimizer = "adam";
    uint32_t workers_per_node = 4;
    double uniform_chunk_cost = 0.0;
    double intra_bw = 0.0, inter_bw = 0.0;
    double gcnii_alpha = 0.1, gcnii_lambda = 0.5;
    std::string out = "out";
};

json config_to_json(const RunConfig& c) {
    return json{{"dataset", c.dataset},
                {"gen_sbm", c.gen_sbm},
                {"p_in", c.p_in},
                {"p_out", c.p_out},
                {"mode", c.mode},
                {"model", c.model},
                {"layers", c.layers},
                {"hidden", c.hidden},
                {"epochs", c.epochs},
                {"lr", c.lr},
                {"dropout", c.dropout},
                {"seed", c.seed},
                {"workers", c.workers},
                {"stages", c.stages},
                {"group_size", c.group_size},
                {"chunks", c.chunks},
                {"shuffle", c.shuffle},
                {"fix_alpha", c.fix_alpha},
                {"historical_grads", c.historical_grads},
                {"synchronous", c.synchronous},
                {"deterministic", c.deterministic},
                {"self_loops", c.self_loops},
                {"optimizer", c.optimizer},
                {"workers_per_node", c.workers_per_node},
                {"uniform_chunk_cost", c.uniform_chunk_cost},
                {"intra_bw", c.intra_bw},
                {"inter_bw", c.inter_bw},
                {"gcnii_alpha", c.gcnii_alpha},
                {"gcnii_lambda", c.gcnii_lambda},
                {"out", c.out}};
}

void config_from_json(const json& j, RunConfig& c) {
    auto get = [&](const char* k, auto& slot) {
        if (j.contains(k)) slot = j.at(k).get<std::decay_t<decltype(slot)>>();
    };
    get("dataset", c.dataset);
    get("gen_sbm", c.gen_sbm);
    get("p_in", c.p_in);
    get("p_out", c.p_out);
    get("mode", c.mode);
    get("model", c.model);
    get("layers", c.layers);
    get("hidden", c.hidden);
    get("epochs", c.epochs);
    get("lr", c.lr);
    get("dropout", c.dropout);
    get("seed", c.seed);
    get("workers", c.workers);
    get("stages", c.stages);
    get("group_size", c.group_size);
    get("chunks", c.chunks);
    get("shuffle", c.shuffle);
    get("fix_alpha", c.fix_alpha);
    get("historical_grads", c.historical_grads);
    get("synchronous", c.synchronous);
    get("deterministic", c.deterministic);
    get("self_loops", c.self_loops);
    get("optimizer", c.optimizer);
    get("workers_per_node", c.workers_per_node);
    get("uniform_chunk_cost", c.uniform_chunk_cost);
    get("intra_bw", c.intra_bw);
    get("inter_bw", c.inter_bw);
    get("gcnii_alpha", c.gcnii_alpha);
    get("gcnii_lambda", c.gcnii_lambda);
    get("out", c.out);
}

void add_run_options(CLI::App* cmd, RunConfig& c) {
    cmd->add_option("--dataset", c.dataset, "dataset directory");
    cmd->add_option("--gen-sbm", c.gen_sbm, "inline SBM spec BLOCKSxSIZE, e.g. 4x100");
    cmd->add_option("--p-in", c.p_in);
    cmd->add_option("--p-out", c.p_out);
    cmd->add_option("--mode", c.mode, "sequential|graph|pipeline|hybrid");
    cmd->add_option("--model", c.model, "gcn|sage|gcnii");
    cmd->add_option("--layers", c.layers);
    cmd->add_option("--hidden", c.hidden);
    cmd->add_option("--epochs", c.epochs);
    cmd->add_option("--lr", c.lr);
    cmd->add_option("--dropout", c.dropout);
    cmd->add_option("--seed", c.seed);
    cmd->add_option("--workers", c.workers, "worker count (0: derive from mode)");
    cmd->add_option("--stages", c.stages);
    cmd->add_option("--group-size", c.group_size);
    cmd->add_option("--chunks", c.chunks, "pipeline chunks (default 4*stages)");
    cmd->add_flag("--shuffle,!--no-shuffle", c.shuffle, "shuffle chunk order per epoch");
    cmd->add_option("--fix-alpha", c.fix_alpha, "historical snapshot period");
    cmd->add_flag("--historical-grads,!--no-historical-grads", c.historical_grads);
    cmd->add_flag("--synchronous,!--no-synchronous", c.synchronous);
    cmd->add_flag("--deterministic,!--concurrent", c.deterministic,
                  "deterministic single-thread scheduler (default) or real threads");
    cmd->add_flag("--self-loops,!--no-self-loops", c.self_loops);
    cmd->add_option("--optimizer", c.optimizer, "adam|sgd");
    cmd->add_option("--workers-per-node", c.workers_per_node);
    cmd->add_option("--uniform-chunk-cost", c.uniform_chunk_cost,
                    "simulated compute cost per chunk per direction");
    cmd->add_option("--intra-bw", c.intra_bw, "simulated intra-node bytes/s (0 = infinite)");
    cmd->add_option("--inter-bw", c.inter_bw, "simulated inter-node bytes/s (0 = infinite)");
    cmd->add_option("--gcnii-alpha", c.gcnii_alpha);
    cmd->add_option("--gcnii-lambda", c.gcnii_lambda);
    cmd->add_option("--out,-o", c.out, "output directory");
}

std::pair<uint32_t, uint32_t> parse_blocks_spec(const std::string& s) {
    const auto x = s.find('x');
    if (x == std::string::npos) throw CLI::ValidationError("--gen-sbm expects BLOCKSxSIZE");
    return {uint32_t(std::stoul(s.substr(0, x))), uint32_t(std::stoul(s.substr(x + 1)))};
}

Dataset resolve_dataset(const RunConfig& c) {
    if (!c.gen_sbm.empty()) {
        auto [blocks, size] = parse_blocks_spec(c.gen_sbm);
        return generate_sbm(blocks, size, c.p_in, c.p_out, c.seed);
    }
    if (c.dataset.empty())
        throw std::invalid_argument("no dataset: pass --dataset DIR or --gen-sbm BLOCKSxSIZE");
    return load_dataset(c.dataset);
}

struct ResolvedRun {
    Dataset ds;
    ModelConfig model;
    TrainOptions<float> opt;
    uint32_t stages = 1, group_size = 1, workers = 1, chunks = 1;
};

ResolvedRun resolve_run(const RunConfig& c) {
    ResolvedRun r;
    r.ds = resolve_dataset(c);
    r.model.kind = parse_model_kind(c.model);
    r.model.layers = c.layers;
    r.model.hidden = c.hidden;
    r.model.dropout = c.dropout;
    r.model.gcnii_alpha = c.gcnii_alpha;
    r.model.gcnii_lambda = c.gcnii_lambda;
    r.model.self_loops = c.self_loops;
    r.opt.model = r.model;
    r.opt.epochs = c.epochs;
    r.opt.seed = c.seed;
    r.opt.optimizer.lr = c.lr;
    if (c.optimizer == "sgd") r.opt.optimizer.kind = OptimizerKind::Sgd;
    else if (c.optimizer != "adam") throw std::invalid_argument("unknown optimizer " + c.optimizer);
    r.opt.staleness.shuffle_chunks = c.shuffle;
    r.opt.staleness.fix_alpha = c.fix_alpha;
    r.opt.staleness.historical_gradients = c.historical_grads;
    r.opt.staleness.synchronous_mode = c.synchronous;
    r.opt.fabric.mode = c.deterministic ? Fabric::Mode::Deterministic : Fabric::Mode::Concurrent;
    r.opt.fabric.cost.uniform_chunk_cost = c.uniform_chunk_cost;
    r.opt.fabric.cost.intra_node_bandwidth = c.intra_bw;
    r.opt.fabric.cost.inter_node_bandwidth = c.inter_bw;

    r.stages = c.stages;
    r.group_size = c.group_size;
    r.chunks = c.chunks;
    if (c.mode == "sequential") {
        if (c.workers > 1)
            throw std::invalid_argument("constraint violated: sequential mode uses one worker");
        r.workers = 1;
    } else if (c.mode == "graph") {
        r.workers = c.workers ? c.workers : 2;
    } else if (c.mode == "pipeline") {
        if (c.workers && c.workers != c.stages)
            throw std::invalid_argument(
                "constraint violated: pipeline mode requires workers == stages");
        r.workers = r.stages;
        if (r.chunks == 0) r.chunks = 4 * r.stages;
    } else if (c.mode == "hybrid") {
        if (c.workers && c.workers != c.stages * c.group_size)
            throw std::invalid_argument(
                "constraint violated: hybrid mode requires workers == stages * group_size");
        r.workers = r.stages * r.group_size;
        if (r.chunks == 0) r.chunks = 4 * r.stages;
    } else {
        throw std::invalid_argument("unknown mode " + c.mode);
    }
    const uint32_t wpn = std::max(1u, c.workers_per_node);
    r.opt.fabric.node_of.resize(r.workers);
    for (uint32_t w = 0; w < r.workers; ++w) r.opt.fabric.node_of[w] = w / wpn;
    return r;
}

void write_run_outputs(const RunConfig& cfg, const ResolvedRun& run,
                       const TrainResult<float>& res, const StageAssignment* sa) {
    fs::create_directories(cfg.out);
    write_metrics_csv((fs::path(cfg.out) / "metrics.csv").string(), res.metrics);
    write_trace_jsonl((fs::path(cfg.out) / "trace.jsonl").string(), res.trace);
    std::vector<CommReportRow> rows;
    for (uint32_t e = 0; e < res.comm.size(); ++e) {
        CommLedger tmp;  // rebuild rows from snapshots
        for (uint32_t t = 0; t < kNumTags; ++t)
            for (uint32_t l = 0; l < 2; ++l) {
                const uint64_t b = res.comm[e].by_tag_link[t][l];
                if (b)
                    rows.push_back({e, MsgTag(t), LinkClass(l), b, double(b) / double(1ull << 30)});
            }
    }
    write_comm_report_csv((fs::path(cfg.out) / "comm_report.csv").string(), rows);
    {
        std::ofstream out(fs::path(cfg.out) / "config.json");
        out << config_to_json(cfg).dump(2) << "\n";
    }
    const auto specs = build_layer_specs(run.model, run.ds.num_features(), run.ds.num_classes);
    if (sa) {
        for (uint32_t s = 0; s < sa->num_stages; ++s) {
            std::vector<LayerParams<float>> full(specs.size());
            for (uint32_t l = sa->begin(s); l < sa->end(s); ++l)
                full[l] = res.params[l];
            save_stage_checkpoint(
                (fs::path(cfg.out) / ("stage_" + std::to_string(s) + ".ckpt")).string(), specs,
                full, sa->begin(s), sa->end(s));
        }
    } else {
        save_stage_checkpoint((fs::path(cfg.out) / "stage_0.ckpt").string(), specs, res.params, 0,
                              specs.size());
    }
}

int cmd_train(const RunConfig& cfg, bool emit_compare) {
    ResolvedRun run = resolve_run(cfg);
    TrainResult<float> res;
    std::optional<StageAssignment> sa;
    Partition part;
    double alpha = 0.0;
    if (cfg.mode == "sequential") {
        res = train_sequential(run.ds, run.opt);
    } else if (cfg.mode == "graph") {
        part = partition_vertices(run.ds.graph, run.workers, cfg.seed);
        alpha = replication_factor(part);
        res = train_graph_parallel(run.ds, part, run.opt);
    } else if (cfg.mode == "pipeline") {
        sa = make_stage_assignment(run.model.layers, run.stages);
        ChunkPlan plan = make_chunks(run.ds.graph, run.chunks, cfg.seed);
        res = train_pipeline(run.ds, plan, *sa, run.opt);
    } else {
        sa = make_stage_assignment(run.model.layers, run.stages);
        part = partition_vertices(run.ds.graph, run.group_size, cfg.seed);
        alpha = replication_factor(part);
        ChunkPlan plan = make_chunks(run.ds.graph, run.chunks, cfg.seed);
        GroupMap gmap = assign_groups(run.workers, cfg.workers_per_node, run.stages,
                                      run.group_size);
        res = train_hybrid(run.ds, part, plan, *sa, gmap, run.opt);
    }
    write_run_outputs(cfg, run, res, sa ? &*sa : nullptr);

    if (emit_compare) {
        const auto specs = build_layer_specs(run.model, run.ds.num_features(), run.ds.num_classes);
        const double vecs = model_needs_h0(specs) ? 2.0 : 1.0;
        CommModelInput in;
        in.n = run.ds.num_vertices();
        in.layers = run.model.layers;
        in.hidden = run.model.hidden;
        in.stages = run.stages;
        in.ways = run.group_size;
        in.alpha = alpha;
        in.vecs = vecs;
        std::vector<CompareRow> rows;
        for (uint32_t e = 0; e < res.metrics.size(); ++e) {
            double predicted = 0;
            uint64_t measured = 0;
            if (cfg.mode == "graph") {
                // Exact per-layer form: aggregating layers move their input
                // widths, which equals 2*alpha*L*N*H only for uniform widths.
                double per_dir = 0;
                for (const auto& s : specs)
                    if (s.aggregates()) per_dir += in.alpha * in.n * s.in_dim * 4.0;
                predicted = 2.0 * per_dir;
                measured = res.metrics[e].comm_bytes_graph;
            } else if (cfg.mode == "pipeline") {
                predicted = volume_pipeline(in);
                measured = res.metrics[e].comm_bytes_pipeline;
            } else if (cfg.mode == "hybrid") {
                double per_dir = 0;
                for (const auto& s : specs)
                    if (s.aggregates()) per_dir += in.alpha * in.n * s.in_dim * 4.0;
                predicted = 2.0 * per_dir + volume_pipeline(in);
                measured = res.metrics[e].comm_bytes_graph + res.metrics[e].comm_bytes_pipeline;
            }
            const double rel = predicted > 0 ? std::abs(predicted - double(measured)) / predicted
                                             : double(measured);
            rows.push_back({cfg.mode, in.n, in.layers, in.hidden, in.stages, in.ways, in.alpha,
                            in.vecs, predicted, measured, rel});
        }
        write_compare_csv((fs::path(cfg.out) / "compare.csv").string(), rows);
        for (const auto& r : rows)
            std::printf("epoch predicted=%.0f measured=%llu rel_error=%.3g\n", r.predicted_bytes,
                        static_cast<unsigned long long>(r.measured_bytes), r.rel_error);
    }

    if (!res.metrics.empty()) {
        const auto& last = res.metrics.back();
        std::printf("done: epochs=%u loss=%.6f train=%.4f val=%.4f test=%.4f "
                    "graph_bytes=%llu pipeline_bytes=%llu peak_buffer_bytes=%llu\n",
                    last.epoch, last.train_loss, last.train_acc, last.val_acc, last.test_acc,
                    static_cast<unsigned long long>(last.comm_bytes_graph),
                    static_cast<unsigned long long>(last.comm_bytes_pipeline),
                    static_cast<unsigned long long>(res.peak_buffer_bytes));
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale distributed GNN training simulator"};
    app.require_subcommand(1);

    // gen -------------------------------------------------------------------
    auto* gen = app.add_subcommand("gen", "generate a dataset directory");
    struct {
        std::string sbm, er, out = "dataset";
        double p_in = 0.1, p_out = 0.005;
        uint64_t seed = 1;
    } g;
    gen->add_option("--sbm", g.sbm, "BLOCKSxSIZE planted-partition dataset");
    gen->add_option("--er", g.er, "N,P random graph (graph.txt only dataset with unit labels)");
    gen->add_option("--p-in", g.p_in);
    gen->add_option("--p-out", g.p_out);
    gen->add_option("--seed", g.seed);
    gen->add_option("--out,-o", g.out);

    // partition -------------------------------------------------------------
    auto* part_cmd = app.add_subcommand("partition", "partition a dataset into parts/chunks");
    struct {
        std::string dataset, out = "partition_out";
        uint32_t parts = 8, chunks = 0;
        uint64_t seed = 1;
    } pt;
    part_cmd->add_option("--dataset", pt.dataset)->required();
    part_cmd->add_option("--parts", pt.parts);
    part_cmd->add_option("--chunks", pt.chunks);
    part_cmd->add_option("--seed", pt.seed);
    part_cmd->add_option("--out,-o", pt.out);

    // train / compare ---------------------------------------------------------
    RunConfig train_cfg;
    std::string train_config_file;
    auto* train = app.add_subcommand("train", "run a training experiment");
    train->add_option("--config", train_config_file, "JSON config (flags override it)");
    add_run_options(train, train_cfg);

    RunConfig cmp_cfg;
    std::string cmp_config_file;
    auto* cmp = app.add_subcommand("compare", "train and compare measured vs analytic bytes");
    cmp->add_option("--config", cmp_config_file, "JSON config (flags override it)");
    add_run_options(cmp, cmp_cfg);

    // analyze -----------------------------------------------------------------
    auto* an = app.add_subcommand("analyze", "closed-form communication reports");
    struct {
        std::string sweep_depth, mode = "pipeline", out;
        double n = 0, hidden = 0, stages = 8, ways = 1, alpha = 0, vecs = 1, layers = 32;
        bool crossover = false;
    } a;
    an->add_option("--sweep-depth", a.sweep_depth, "comma-separated depths");
    an->add_option("--mode", a.mode);
    an->add_option("--n", a.n, "vertices");
    an->add_option("--hidden", a.hidden);
    an->add_option("--stages", a.stages);
    an->add_option("--ways", a.ways);
    an->add_option("--alpha", a.alpha, "replication factor");
    an->add_option("--vecs", a.vecs);
    an->add_option("--layers", a.layers);
    an->add_flag("--crossover", a.crossover, "report the mode ordering and inequalities");
    an->add_option("--out,-o", a.out, "optional CSV output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*gen) {
            if (!g.sbm.empty()) {
                auto [blocks, size] = parse_blocks_spec(g.sbm);
                Dataset d = generate_sbm(blocks, size, g.p_in, g.p_out, g.seed);
                save_dataset(d, g.out);
                std::printf("wrote %s: N=%u edges=%llu F=%u C=%u\n", g.out.c_str(),
                            d.num_vertices(), static_cast<unsigned long long>(d.graph.num_edges),
                            d.num_features(), d.num_classes);
            } else if (!g.er.empty()) {
                const auto comma = g.er.find(',');
                if (comma == std::string::npos)
                    throw std::invalid_argument("--er expects N,P");
                const uint32_t n = uint32_t(std::stoul(g.er.substr(0, comma)));
                const double p = std::stod(g.er.substr(comma + 1));
                Graph graph = generate_er(n, p, g.seed);
                Dataset d;
                d.graph = std::move(graph);
                d.features = MatF(n, 1);
                d.num_classes = 1;
                d.labels.assign(n, 0);
                d.split.assign(n, uint8_t(Split::Train));
                save_dataset(d, g.out);
                std::printf("wrote %s: N=%u edges=%llu\n", g.out.c_str(), n,
                            static_cast<unsigned long long>(d.graph.num_edges));
            } else {
                throw std::invalid_argument("gen: pass --sbm or --er");
            }
            return kOk;
        }
        if (*part_cmd) {
            Dataset d = load_dataset(pt.dataset);
            fs::create_directories(pt.out);
            Partition p = partition_vertices(d.graph, pt.parts, pt.seed);
            save_assignment((fs::path(pt.out) / "parts.txt").string(), p.num_parts, p.assignment);
            // Random balanced baseline for context.
            std::vector<uint32_t> rnd(d.num_vertices());
            for (VertexId v = 0; v < d.num_vertices(); ++v) rnd[v] = v % pt.parts;
            std::mt19937_64 eng(pt.seed);
            std::shuffle(rnd.begin(), rnd.end(), eng);
            const double base = replication_factor(partition_from_assignment(d.graph, rnd));
            std::printf("replication_factor=%.4f random_baseline=%.4f edge_cut=%llu\n",
                        replication_factor(p), base,
                        static_cast<unsigned long long>(p.edge_cut(d.graph)));
            if (pt.chunks) {
                ChunkPlan plan = make_chunks(d.graph, pt.chunks, pt.seed);
                save_assignment((fs::path(pt.out) / "chunks.txt").string(), plan.num_chunks,
                                plan.chunk_of);
            }
            return kOk;
        }
        if (*train || *cmp) {
            RunConfig& cfg = *train ? train_cfg : cmp_cfg;
            CLI::App* cmd = *train ? train : cmp;
            const std::string& file = *train ? train_config_file : cmp_config_file;
            if (!file.empty()) {
                std::ifstream in(file);
                if (!in) throw std::invalid_argument("cannot read config " + file);
                RunConfig from_file;
                config_from_json(json::parse(in), from_file);
                // Precedence: explicit flags > file > defaults. CLI11 already
                // applied flags into cfg; start from the file and copy over
                // every field the user actually passed.
                auto passed = [&](const std::string& name) {
                    const CLI::Option* o = cmd->get_option_no_throw(name);
                    return o && o->count() > 0;
                };
                RunConfig out = from_file;
                if (passed("--dataset")) out.dataset = cfg.dataset;
                if (passed("--gen-sbm")) out.gen_sbm = cfg.gen_sbm;
                if (passed("--p-in")) out.p_in = cfg.p_in;
                if (passed("--p-out")) out.p_out = cfg.p_out;
                if (passed("--mode")) out.mode = cfg.mode;
                if (passed("--model")) out.model = cfg.model;
                if (passed("--layers")) out.layers = cfg.layers;
                if (passed("--hidden")) out.hidden = cfg.hidden;
                if (passed("--epochs")) out.epochs = cfg.epochs;
                if (passed("--lr")) out.lr = cfg.lr;
                if (passed("--dropout")) out.dropout = cfg.dropout;
                if (passed("--seed")) out.seed = cfg.seed;
                if (passed("--workers")) out.workers = cfg.workers;
                if (passed("--stages")) out.stages = cfg.stages;
                if (passed("--group-size")) out.group_size = cfg.group_size;
                if (passed("--chunks")) out.chunks = cfg.chunks;
                if (passed("--shuffle")) out.shuffle = cfg.shuffle;
                if (passed("--fix-alpha")) out.fix_alpha = cfg.fix_alpha;
                if (passed("--historical-grads")) out.historical_grads = cfg.historical_grads;
                if (passed("--synchronous")) out.synchronous = cfg.synchronous;
                if (passed("--deterministic")) out.deterministic = cfg.deterministic;
                if (passed("--self-loops")) out.self_loops = cfg.self_loops;
                if (passed("--optimizer")) out.optimizer = cfg.optimizer;
                if (passed("--workers-per-node")) out.workers_per_node = cfg.workers_per_node;
                if (passed("--uniform-chunk-cost"))
                    out.uniform_chunk_cost = cfg.uniform_chunk_cost;
                if (passed("--intra-bw")) out.intra_bw = cfg.intra_bw;
                if (passed("--inter-bw")) out.inter_bw = cfg.inter_bw;
                if (passed("--gcnii-alpha")) out.gcnii_alpha = cfg.gcnii_alpha;
                if (passed("--gcnii-lambda")) out.gcnii_lambda = cfg.gcnii_lambda;
                if (passed("--out")) out.out = cfg.out;
                cfg = out;
            }
            return cmd_train(cfg, /*emit_compare=*/cmp->parsed());
        }
        if (*an) {
            if (a.sweep_depth.empty() && !a.crossover)
                throw std::invalid_argument("analyze: pass --sweep-depth or --crossover");
            if (a.n <= 0 || a.hidden <= 0)
                throw std::invalid_argument("analyze: --n and --hidden are required");
            if (!a.sweep_depth.empty()) {
                std::vector<double> depths;
                std::stringstream ss(a.sweep_depth);
                for (std::string item; std::getline(ss, item, ',');)
                    depths.push_back(std::stod(item));
                if (depths.empty()) throw std::invalid_argument("analyze: empty depth list");
                std::ostringstream csv;
                csv << "mode,N,L,H,S,W,alpha,vecs,predicted_bytes,predicted_gib\n";
                std::printf("depth sweep (%s): N=%.0f H=%.0f S=%.0f alpha=%.4g vecs=%.0f\n",
                            a.mode.c_str(), a.n, a.hidden, a.stages, a.alpha, a.vecs);
                for (double l : depths) {
                    CommModelInput in;
                    in.n = a.n;
                    in.hidden = a.hidden;
                    in.stages = a.stages;
                    in.ways = a.ways;
                    in.alpha = a.alpha;
                    in.vecs = a.vecs;
                    in.layers = l;
                    const double bytes = a.mode == "pipeline" ? volume_pipeline(in)
                                         : a.mode == "graph"  ? volume_graph(in)
                                         : a.mode == "hybrid" ? volume_hybrid(in)
                                                              : -1.0;
                    if (bytes < 0) throw std::invalid_argument("analyze: unknown mode " + a.mode);
                    std::printf("  L=%-4.0f predicted=%.0f bytes (%.4f GiB)\n", l, bytes,
                                bytes / kGiB);
                    char row[256];
                    std::snprintf(row, sizeof row, "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                                  a.mode.c_str(), a.n, l, a.hidden, a.stages, a.ways, a.alpha,
                                  a.vecs, bytes, bytes / kGiB);
                    csv << row;
                }
                if (!a.out.empty()) {
                    std::ofstream f(a.out);
                    f << csv.str();
                }
            }
            if (a.crossover) {
                CommModelInput gi, pi, hi;
                gi.n = pi.n = hi.n = a.n;
                gi.hidden = pi.hidden = hi.hidden = a.hidden;
                gi.layers = pi.layers = hi.layers = a.layers;
                gi.alpha = a.alpha;
                gi.stages = 1;
                pi.stages = a.stages;
                pi.vecs = a.vecs;
                hi.stages = std::max(1.0, a.stages / 2.0);
                hi.ways = 2;
                hi.alpha = a.alpha / 2.0;  // coarser split halves the boundary, roughly
                hi.vecs = a.vecs;
                auto r = crossover_report(gi, pi, hi);
                std::printf("volumes: graph=%.0f pipeline=%.0f hybrid=%.0f winner=%s%s\n",
                            r.bytes_graph, r.bytes_pipeline, r.bytes_hybrid, r.winner.c_str(),
                            r.tie ? " (tie, zero margin)" : "");
                for (const auto& s : r.inequalities) std::printf("  %s\n", s.c_str());
                std::printf("note: volume is not runtime; tiny per-chunk compute can make the "
                            "pipeline slower on lightweight graphs regardless of volume\n");
            }
            return kOk;
        }
    } catch (const NumericError& e) {
        std::fprintf(stderr, "runtime error: %s\n", e.what());
        return kRuntime;
    } catch (const FabricError& e) {
        std::fprintf(stderr, "runtime error: %s\n", e.what());
        return kRuntime;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kUsage;
    } catch (const CLI::Error& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kRuntime;
    }
    return kOk;
}
