#include "gnnsim/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace gnnsim {

double volume_pipeline(const CommModelInput& in) {
    if (in.stages < 1) throw std::invalid_argument("volume_pipeline: stages >= 1 required");
    return 2.0 * (in.stages - 1.0) * in.n * in.hidden * in.vecs * in.bytes_per_value;
}

double volume_graph(const CommModelInput& in) {
    if (in.alpha < 0) throw std::invalid_argument("volume_graph: alpha >= 0 required");
    return 2.0 * in.alpha * in.layers * in.n * in.hidden * in.bytes_per_value;
}

double volume_hybrid(const CommModelInput& in) {
    return volume_graph(in) + volume_pipeline(in);
}

CrossoverReport crossover_report(const CommModelInput& graph_in, const CommModelInput& pipe_in,
                                 const CommModelInput& hybrid_in) {
    CrossoverReport r;
    r.bytes_graph = volume_graph(graph_in);
    r.bytes_pipeline = volume_pipeline(pipe_in);
    r.bytes_hybrid = volume_hybrid(hybrid_in);

    std::vector<std::pair<double, std::string>> v = {{r.bytes_graph, "graph"},
                                                     {r.bytes_pipeline, "pipeline"},
                                                     {r.bytes_hybrid, "hybrid"}};
    std::stable_sort(v.begin(), v.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [bytes, name] : v) r.ordering.push_back(name);
    r.tie = v[0].first == v[1].first;
    r.winner = r.tie ? "tie" : v[0].second;

    auto line = [](const std::string& text, double lhs, double rhs) {
        std::ostringstream os;
        os << text << ": " << lhs << (lhs < rhs ? " < " : lhs > rhs ? " > " : " == ") << rhs;
        return os.str();
    };
    // The binding inequalities, in units of 2NH (the paper's normalization).
    r.inequalities.push_back(line("graph vs pipeline, alpha_g*L vs (S_p-1)",
                                  graph_in.alpha * graph_in.layers, pipe_in.stages - 1.0));
    r.inequalities.push_back(line("hybrid vs graph, alpha_h*L+(S_h-1) vs alpha_g*L",
                                  hybrid_in.alpha * hybrid_in.layers + hybrid_in.stages - 1.0,
                                  graph_in.alpha * graph_in.layers));
    r.inequalities.push_back(line("hybrid vs pipeline, alpha_h*L+(S_h-1) vs (S_p-1)",
                                  hybrid_in.alpha * hybrid_in.layers + hybrid_in.stages - 1.0,
                                  pipe_in.stages - 1.0));
    return r;
}

BubbleReport bubble_analysis(const std::vector<TraceEvent>& trace) {
    if (trace.empty()) throw std::invalid_argument("bubble_analysis: empty trace");
    BubbleReport r;
    double t0 = trace.front().t_start, t1 = trace.front().t_end;
    double busy = 0;
    std::map<uint32_t, double> per_worker_busy;
    int32_t max_chunk = -1;
    for (const auto& e : trace) {
        t0 = std::min(t0, e.t_start);
        t1 = std::max(t1, e.t_end);
        if (e.kind == TraceEvent::Kind::Compute) {
            busy += e.t_end - e.t_start;
            per_worker_busy[e.worker] += e.t_end - e.t_start;
        } else {
            per_worker_busy[e.worker];  // count idle-only workers too
        }
        max_chunk = std::max(max_chunk, e.chunk);
    }
    r.stages = uint32_t(per_worker_busy.size());
    r.chunks = uint32_t(max_chunk + 1);
    r.span = t1 - t0;
    const double denom = double(r.stages) * r.span;
    r.measured_bubble = denom > 0 ? (denom - busy) / denom : 0.0;
    r.ideal_bubble = r.stages >= 1 && r.chunks >= 1
                         ? double(r.stages - 1) / double(r.chunks + r.stages - 1)
                         : 0.0;
    return r;
}

void write_compare_csv(const std::string& path, const std::vector<CompareRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "mode,N,L,H,S,W,alpha,vecs,predicted_bytes,measured_bytes,rel_error\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%llu,%.9g\n",
                      r.mode.c_str(), r.n, r.layers, r.hidden, r.stages, r.ways, r.alpha, r.vecs,
                      r.predicted_bytes, static_cast<unsigned long long>(r.measured_bytes),
                      r.rel_error);
        out << buf;
    }
}

}  // namespace gnnsim
