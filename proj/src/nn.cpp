#include "gnnsim/nn.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

using json = nlohmann::json;

namespace gnnsim {

ModelKind parse_model_kind(const std::string& s) {
    if (s == "gcn") return ModelKind::GCN;
    if (s == "sage") return ModelKind::Sage;
    if (s == "gcnii") return ModelKind::GCNII;
    throw std::invalid_argument("unknown model: " + s);
}

std::string model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::GCN: return "gcn";
        case ModelKind::Sage: return "sage";
        case ModelKind::GCNII: return "gcnii";
    }
    return "?";
}

std::vector<LayerSpec> build_layer_specs(const ModelConfig& cfg, uint32_t in_features,
                                         uint32_t num_classes) {
    if (cfg.layers < 1) throw std::invalid_argument("model needs at least one layer");
    std::vector<LayerSpec> specs;
    auto dims = [&](uint32_t l) {
        const uint32_t in = l == 0 ? in_features : cfg.hidden;
        const uint32_t out = l + 1 == cfg.layers ? num_classes : cfg.hidden;
        return std::make_pair(in, out);
    };
    switch (cfg.kind) {
        case ModelKind::GCN:
        case ModelKind::Sage: {
            const LayerKind k =
                cfg.kind == ModelKind::GCN ? LayerKind::GcnConv : LayerKind::SageConv;
            for (uint32_t l = 0; l < cfg.layers; ++l) {
                auto [in, out] = dims(l);
                specs.push_back({k, in, out, l + 1 < cfg.layers, 0.0, 0.0});
            }
            break;
        }
        case ModelKind::GCNII: {
            if (cfg.layers < 3)
                throw std::invalid_argument("gcnii needs layers >= 3 (dense, convs, dense)");
            if (!(cfg.gcnii_alpha > 0.0 && cfg.gcnii_alpha < 1.0))
                throw std::invalid_argument("gcnii alpha must be in (0,1)");
            specs.push_back({LayerKind::Dense, in_features, cfg.hidden, true, 0.0, 0.0});
            const uint32_t convs = cfg.layers - 2;
            for (uint32_t j = 1; j <= convs; ++j) {
                const double beta = std::log(cfg.gcnii_lambda / double(j) + 1.0);
                specs.push_back(
                    {LayerKind::Gcn2Conv, cfg.hidden, cfg.hidden, true, cfg.gcnii_alpha, beta});
            }
            specs.push_back({LayerKind::Dense, cfg.hidden, num_classes, false, 0.0, 0.0});
            break;
        }
    }
    return specs;
}

bool model_needs_h0(const std::vector<LayerSpec>& specs) {
    for (const auto& s : specs)
        if (s.kind == LayerKind::Gcn2Conv) return true;
    return false;
}

uint64_t param_count(const std::vector<LayerSpec>& specs) {
    uint64_t n = 0;
    for (const auto& s : specs) {
        n += uint64_t(s.k_in()) * s.out_dim;
        if (s.has_bias()) n += s.out_dim;
    }
    return n;
}

void save_checkpoint(const std::string& path, const std::vector<std::string>& names,
                     const std::vector<const float*>& data,
                     const std::vector<std::pair<uint64_t, uint64_t>>& shapes) {
    json header;
    header["tensors"] = json::array();
    for (size_t i = 0; i < names.size(); ++i)
        header["tensors"].push_back(
            {{"name", names[i]}, {"rows", shapes[i].first}, {"cols", shapes[i].second}});
    const std::string hs = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    const uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(hs.data(), std::streamsize(hs.size()));
    for (size_t i = 0; i < data.size(); ++i) {
        const uint64_t count = shapes[i].first * shapes[i].second;
        out.write(reinterpret_cast<const char*>(data[i]), std::streamsize(count * 4));
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<CheckpointTensor> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hs(hlen, '\0');
    in.read(hs.data(), std::streamsize(hlen));
    if (!in) throw std::runtime_error("truncated checkpoint header: " + path);
    json header = json::parse(hs);
    std::vector<CheckpointTensor> out;
    for (const auto& t : header.at("tensors")) {
        CheckpointTensor ct;
        ct.name = t.at("name").get<std::string>();
        ct.rows = t.at("rows").get<uint64_t>();
        ct.cols = t.at("cols").get<uint64_t>();
        ct.data.resize(ct.rows * ct.cols);
        in.read(reinterpret_cast<char*>(ct.data.data()), std::streamsize(ct.data.size() * 4));
        if (!in) throw std::runtime_error("truncated checkpoint data: " + path);
        out.push_back(std::move(ct));
    }
    return out;
}

}  // namespace gnnsim
