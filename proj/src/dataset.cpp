#include "gnnsim/dataset.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "gnnsim/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary dataset payloads assume a little-endian host");

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace gnnsim {

std::vector<uint8_t> Dataset::mask(Split s) const {
    std::vector<uint8_t> m(split.size(), 0);
    for (size_t i = 0; i < split.size(); ++i) m[i] = split[i] == uint8_t(s);
    return m;
}

size_t Dataset::mask_count(Split s) const {
    size_t c = 0;
    for (uint8_t v : split) c += v == uint8_t(s);
    return c;
}

void Dataset::validate() const {
    graph.validate();
    const size_t n = graph.num_vertices;
    if (features.rows() != n) throw std::runtime_error("dataset: features row count != N");
    if (labels.size() != n) throw std::runtime_error("dataset: labels length != N");
    if (split.size() != n) throw std::runtime_error("dataset: masks length != N");
    for (uint32_t l : labels)
        if (l >= num_classes) throw std::runtime_error("dataset: label >= num_classes");
    for (uint8_t s : split)
        if (s > 3) throw std::runtime_error("dataset: invalid mask value");
}

namespace {

std::vector<char> read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("missing file: " + p.string());
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return buf;
}

void write_file(const fs::path& p, const void* data, size_t bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + p.string());
    out.write(static_cast<const char*>(data), std::streamsize(bytes));
    if (!out) throw std::runtime_error("write failed: " + p.string());
}

}  // namespace

Dataset load_dataset(const std::string& dir) {
    const fs::path root(dir);
    json meta;
    {
        auto buf = read_file(root / "meta.json");
        meta = json::parse(buf.begin(), buf.end());
    }
    const uint64_t n = meta.at("num_vertices").get<uint64_t>();
    const uint64_t m = meta.at("num_edges").get<uint64_t>();
    const uint64_t f = meta.at("num_features").get<uint64_t>();
    const uint64_t c = meta.at("num_classes").get<uint64_t>();

    std::vector<std::pair<VertexId, VertexId>> edges;
    {
        auto buf = read_file(root / "graph.txt");
        std::istringstream in(std::string(buf.begin(), buf.end()));
        uint64_t hn = 0, hm = 0;
        if (!(in >> hn >> hm)) throw std::runtime_error("graph.txt: bad header");
        if (hn != n || hm != m)
            throw std::runtime_error("graph.txt header disagrees with meta.json");
        edges.reserve(m);
        for (uint64_t i = 0; i < m; ++i) {
            uint64_t u = 0, v = 0;
            if (!(in >> u >> v)) throw std::runtime_error("graph.txt: truncated edge list");
            if (u >= n || v >= n) throw std::runtime_error("graph.txt: vertex id out of range");
            edges.emplace_back(VertexId(u), VertexId(v));
        }
    }

    Dataset d;
    d.graph = build_graph(VertexId(n), std::move(edges));
    if (d.graph.num_edges != m)
        throw std::runtime_error("graph.txt: edge list contains duplicates or self-loops");

    {
        auto buf = read_file(root / "features.f32");
        if (buf.size() != n * f * 4)
            throw std::runtime_error("features.f32: size mismatch with meta.json");
        d.features = MatF(n, f);
        std::memcpy(d.features.data(), buf.data(), buf.size());
    }
    {
        auto buf = read_file(root / "labels.u32");
        if (buf.size() != n * 4) throw std::runtime_error("labels.u32: size mismatch with meta.json");
        d.labels.resize(n);
        std::memcpy(d.labels.data(), buf.data(), buf.size());
    }
    {
        auto buf = read_file(root / "masks.u8");
        if (buf.size() != n) throw std::runtime_error("masks.u8: size mismatch with meta.json");
        d.split.assign(buf.begin(), buf.end());
    }
    d.num_classes = uint32_t(c);
    d.validate();
    return d;
}

void save_dataset(const Dataset& d, const std::string& dir) {
    d.validate();
    const fs::path root(dir);
    fs::create_directories(root);

    json meta = {{"num_vertices", d.graph.num_vertices},
                 {"num_edges", d.graph.num_edges},
                 {"num_features", d.features.cols()},
                 {"num_classes", d.num_classes}};
    const std::string meta_s = meta.dump(2) + "\n";
    write_file(root / "meta.json", meta_s.data(), meta_s.size());

    {
        std::ostringstream out;
        out << d.graph.num_vertices << ' ' << d.graph.num_edges << '\n';
        for (VertexId v = 0; v < d.graph.num_vertices; ++v)
            for (VertexId u : d.graph.neighbors(v))
                if (v < u) out << v << ' ' << u << '\n';
        const std::string s = out.str();
        write_file(root / "graph.txt", s.data(), s.size());
    }
    write_file(root / "features.f32", d.features.data(), d.features.size() * 4);
    write_file(root / "labels.u32", d.labels.data(), d.labels.size() * 4);
    write_file(root / "masks.u8", d.split.data(), d.split.size());
}

Dataset generate_sbm(uint32_t num_blocks, uint32_t block_size, double p_in, double p_out,
                     uint64_t seed) {
    if (p_in < 0 || p_in > 1 || p_out < 0 || p_out > 1)
        throw std::invalid_argument("generate_sbm: probabilities must be in [0,1]");
    if (p_in <= p_out) throw std::invalid_argument("generate_sbm: requires p_in > p_out");
    const VertexId n = num_blocks * block_size;

    std::vector<std::pair<VertexId, VertexId>> edges;
    auto eng = make_engine(seed, /*stream=*/0x53424dull);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto block_of = [block_size](VertexId v) { return v / block_size; };
    for (VertexId u = 0; u + 1 < n; ++u) {
        for (VertexId v = u + 1; v < n; ++v) {
            const double p = block_of(u) == block_of(v) ? p_in : p_out;
            if (unit(eng) < p) edges.emplace_back(u, v);
        }
    }

    Dataset d;
    d.graph = build_graph(n, std::move(edges));
    d.num_classes = num_blocks;
    d.labels.resize(n);
    d.features = MatF(n, num_blocks);
    auto feat_eng = make_engine(seed, /*stream=*/0x46454154ull);
    std::normal_distribution<double> noise(0.0, 0.1);
    for (VertexId v = 0; v < n; ++v) {
        const uint32_t b = block_of(v);
        d.labels[v] = b;
        for (uint32_t j = 0; j < num_blocks; ++j)
            d.features.at(v, j) = float((j == b ? 1.0 : 0.0) + noise(feat_eng));
    }
    // 60/20/20 per block by position: train first, then val, then test.
    d.split.resize(n);
    const uint32_t n_val = block_size / 5;
    const uint32_t n_test = block_size / 5;
    const uint32_t n_train = block_size - n_val - n_test;
    for (VertexId v = 0; v < n; ++v) {
        const uint32_t pos = v % block_size;
        d.split[v] = pos < n_train                ? uint8_t(Split::Train)
                     : pos < n_train + n_val      ? uint8_t(Split::Val)
                                                  : uint8_t(Split::Test);
    }
    d.validate();
    return d;
}

}  // namespace gnnsim
