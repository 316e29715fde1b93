#include "gnnsim/partition.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "gnnsim/rng.hpp"

namespace gnnsim {

uint64_t Partition::boundary_total() const {
    uint64_t s = 0;
    for (const auto& b : boundary_sets) s += b.size();
    return s;
}

uint64_t Partition::edge_cut(const Graph& g) const {
    uint64_t cut = 0;
    for (VertexId v = 0; v < g.num_vertices; ++v)
        for (VertexId u : g.neighbors(v))
            if (v < u && assignment[v] != assignment[u]) ++cut;
    return cut;
}

Partition partition_from_assignment(const Graph& g, std::vector<uint32_t> assignment) {
    if (assignment.size() != g.num_vertices)
        throw std::invalid_argument("partition_from_assignment: assignment length != N");
    Partition p;
    p.num_parts = assignment.empty() ? 0 : *std::max_element(assignment.begin(), assignment.end()) + 1;
    p.assignment = std::move(assignment);
    p.inner_sets.assign(p.num_parts, {});
    p.boundary_sets.assign(p.num_parts, {});
    for (VertexId v = 0; v < g.num_vertices; ++v) p.inner_sets[p.assignment[v]].push_back(v);
    std::vector<uint8_t> seen(g.num_vertices, 0);
    for (uint32_t i = 0; i < p.num_parts; ++i) {
        std::fill(seen.begin(), seen.end(), 0);
        auto& b = p.boundary_sets[i];
        for (VertexId v : p.inner_sets[i])
            for (VertexId u : g.neighbors(v))
                if (p.assignment[u] != i && !seen[u]) {
                    seen[u] = 1;
                    b.push_back(u);
                }
        std::sort(b.begin(), b.end());
    }
    return p;
}

namespace {

constexpr VertexId kUnassigned = std::numeric_limits<VertexId>::max();

// Multi-source BFS distance; unreached stays at UINT32_MAX.
std::vector<uint32_t> bfs_dist(const Graph& g, const std::vector<VertexId>& sources) {
    std::vector<uint32_t> dist(g.num_vertices, std::numeric_limits<uint32_t>::max());
    std::deque<VertexId> q;
    for (VertexId s : sources) {
        dist[s] = 0;
        q.push_back(s);
    }
    while (!q.empty()) {
        VertexId v = q.front();
        q.pop_front();
        for (VertexId u : g.neighbors(v))
            if (dist[u] == std::numeric_limits<uint32_t>::max()) {
                dist[u] = dist[v] + 1;
                q.push_back(u);
            }
    }
    return dist;
}

std::vector<uint32_t> grow_regions(const Graph& g, uint32_t parts, uint64_t seed, uint64_t cap) {
    const VertexId n = g.num_vertices;
    auto eng = make_engine(seed, /*stream=*/0x504152ull);
    std::vector<VertexId> seeds;
    seeds.push_back(VertexId(std::uniform_int_distribution<uint64_t>(0, n - 1)(eng)));
    while (seeds.size() < parts) {
        auto dist = bfs_dist(g, seeds);
        // Prefer an unreachable vertex (new component), else the farthest one;
        // ties break toward the smallest id.
        VertexId pick = kUnassigned;
        uint32_t best = 0;
        std::vector<uint8_t> taken(n, 0);
        for (VertexId s : seeds) taken[s] = 1;
        for (VertexId v = 0; v < n; ++v) {
            if (taken[v]) continue;
            if (dist[v] == std::numeric_limits<uint32_t>::max()) {
                pick = v;
                break;
            }
            if (dist[v] > best) {
                best = dist[v];
                pick = v;
            }
        }
        if (pick == kUnassigned) {  // fewer free vertices than parts was excluded by caller
            for (VertexId v = 0; v < n; ++v)
                if (!taken[v]) {
                    pick = v;
                    break;
                }
        }
        seeds.push_back(pick);
    }

    std::vector<uint32_t> part(n, kUnassigned);
    std::vector<std::deque<VertexId>> frontier(parts);
    std::vector<uint64_t> size(parts, 0);
    VertexId assigned = 0;
    VertexId fresh_cursor = 0;
    for (uint32_t i = 0; i < parts; ++i)
        if (part[seeds[i]] == kUnassigned) {
            part[seeds[i]] = i;
            ++size[i];
            ++assigned;
            for (VertexId u : g.neighbors(seeds[i])) frontier[i].push_back(u);
        }
    // Round-robin growth, one claim per part per round, capped for balance.
    while (assigned < n) {
        bool progress = false;
        for (uint32_t i = 0; i < parts && assigned < n; ++i) {
            if (size[i] >= cap) continue;
            VertexId claim = kUnassigned;
            while (!frontier[i].empty()) {
                VertexId v = frontier[i].front();
                frontier[i].pop_front();
                if (part[v] == kUnassigned) {
                    claim = v;
                    break;
                }
            }
            if (claim == kUnassigned) {
                while (fresh_cursor < n && part[fresh_cursor] != kUnassigned) ++fresh_cursor;
                if (fresh_cursor < n) claim = fresh_cursor;
            }
            if (claim == kUnassigned) continue;
            part[claim] = i;
            ++size[i];
            ++assigned;
            progress = true;
            for (VertexId u : g.neighbors(claim))
                if (part[u] == kUnassigned) frontier[i].push_back(u);
        }
        if (!progress) {
            // All open parts are at cap; caps guarantee this cannot happen,
            // but guard against it to avoid a spin.
            throw std::logic_error("partition growth stalled");
        }
    }
    return part;
}

// One Kernighan-Lin-style sweep: move a vertex to the neighboring part with
// the highest edge gain when the move respects the balance cap.
void refine_once(const Graph& g, std::vector<uint32_t>& part, uint32_t parts, uint64_t cap) {
    std::vector<uint64_t> size(parts, 0);
    for (VertexId v = 0; v < g.num_vertices; ++v) ++size[part[v]];
    std::vector<uint32_t> count(parts, 0);
    for (VertexId v = 0; v < g.num_vertices; ++v) {
        const uint32_t cur = part[v];
        if (size[cur] <= 1) continue;
        for (VertexId u : g.neighbors(v)) ++count[part[u]];
        uint32_t best = cur;
        for (VertexId u : g.neighbors(v)) {
            const uint32_t c = part[u];
            if (c == cur || size[c] + 1 > cap) continue;
            if (count[c] > count[best] || (count[c] == count[best] && c < best)) best = c;
        }
        if (best != cur && count[best] > count[cur]) {
            part[v] = best;
            --size[cur];
            ++size[best];
        }
        for (VertexId u : g.neighbors(v)) count[part[u]] = 0;
        count[cur] = 0;
    }
}

uint64_t balance_cap(VertexId n, uint32_t parts) {
    const uint64_t ceil_avg = (uint64_t(n) + parts - 1) / parts;
    const uint64_t relaxed = uint64_t(std::floor(1.05 * double(n) / double(parts)));
    return std::max(ceil_avg, relaxed);
}

}  // namespace

Partition partition_vertices(const Graph& g, uint32_t num_parts, uint64_t seed) {
    if (num_parts == 0 || num_parts > g.num_vertices)
        throw std::invalid_argument("partition_vertices: need 1 <= num_parts <= N");
    const uint64_t cap = balance_cap(g.num_vertices, num_parts);
    auto part = grow_regions(g, num_parts, seed, cap);
    refine_once(g, part, num_parts, cap);
    return partition_from_assignment(g, std::move(part));
}

double replication_factor(const Partition& p) {
    double n = 0;
    for (const auto& s : p.inner_sets) n += double(s.size());
    return n == 0 ? 0.0 : double(p.boundary_total()) / n;
}

double expected_boundary(double n, double m, double p) {
    if (m < 1) throw std::invalid_argument("expected_boundary: m >= 1 required");
    if (p < 0 || p > 1) throw std::invalid_argument("expected_boundary: p in [0,1] required");
    const double part = n / m;
    return (n - part) * (1.0 - std::pow(1.0 - p, part));
}

ChunkPlan make_chunks(const Graph& g, uint32_t num_chunks, uint64_t seed) {
    if (num_chunks == 0 || num_chunks > g.num_vertices)
        throw std::invalid_argument("make_chunks: need 1 <= num_chunks <= N");
    auto part = partition_vertices(g, num_chunks, seed);
    ChunkPlan plan;
    plan.num_chunks = num_chunks;
    plan.chunk_of = std::move(part.assignment);
    plan.chunks = std::move(part.inner_sets);
    plan.epoch_order.resize(num_chunks);
    for (uint32_t k = 0; k < num_chunks; ++k) plan.epoch_order[k] = k;
    return plan;
}

ChunkPlan chunk_plan_from_assignment(VertexId n, std::vector<uint32_t> chunk_of) {
    if (chunk_of.size() != n)
        throw std::invalid_argument("chunk_plan_from_assignment: length != N");
    ChunkPlan plan;
    plan.num_chunks = chunk_of.empty() ? 0 : *std::max_element(chunk_of.begin(), chunk_of.end()) + 1;
    plan.chunk_of = std::move(chunk_of);
    plan.chunks.assign(plan.num_chunks, {});
    for (VertexId v = 0; v < n; ++v) plan.chunks[plan.chunk_of[v]].push_back(v);
    plan.epoch_order.resize(plan.num_chunks);
    for (uint32_t k = 0; k < plan.num_chunks; ++k) plan.epoch_order[k] = k;
    return plan;
}

std::vector<uint32_t> shuffle_chunk_order(const ChunkPlan& plan, uint64_t epoch, uint64_t seed) {
    std::vector<uint32_t> order(plan.num_chunks);
    for (uint32_t k = 0; k < plan.num_chunks; ++k) order[k] = k;
    auto eng = make_engine(seed, mix64(0x5348ull, epoch));
    for (uint32_t i = plan.num_chunks; i > 1; --i) {
        const uint32_t j = uint32_t(std::uniform_int_distribution<uint64_t>(0, i - 1)(eng));
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

void save_assignment(const std::string& path, uint32_t num_parts,
                     const std::vector<uint32_t>& assignment) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << num_parts << '\n';
    for (uint32_t a : assignment) out << a << '\n';
}

std::pair<uint32_t, std::vector<uint32_t>> load_assignment(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    uint32_t parts = 0;
    if (!(in >> parts)) throw std::runtime_error("bad assignment file: " + path);
    std::vector<uint32_t> a;
    uint32_t x = 0;
    while (in >> x) a.push_back(x);
    return {parts, std::move(a)};
}

}  // namespace gnnsim
