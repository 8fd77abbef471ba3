#include "resinsort/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace resinsort {

using json = nlohmann::json;

namespace {

constexpr std::size_t kMagicLength = sizeof(kCheckpointMagic) - 1;

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int b = 7; b >= 0; --b) v = (v << 8) | p[b];
    return v;
}

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::conv: return "conv";
        case LayerKind::pool: return "pool";
        case LayerKind::fc: return "fc";
    }
    return "?";
}

LayerKind parse_layer_kind(const std::string& s) {
    if (s == "conv") return LayerKind::conv;
    if (s == "pool") return LayerKind::pool;
    if (s == "fc") return LayerKind::fc;
    throw CheckpointError("unknown layer kind '" + s + "' in checkpoint header");
}

json trunk_to_json(const TrunkConfig& t) {
    json layers = json::array();
    for (const auto& l : t.layers) {
        layers.push_back({{"kind", layer_kind_name(l.kind)},
                          {"units", l.units},
                          {"kernel", l.kernel},
                          {"stride", l.stride},
                          {"padding", l.padding},
                          {"relu", l.relu}});
    }
    return {{"profile", t.profile},
            {"input", {t.height, t.width, t.channels}},
            {"layers", layers},
            {"embedding_width", t.embedding_width}};
}

TrunkConfig trunk_from_json(const json& j) {
    TrunkConfig t;
    t.profile = j.at("profile").get<std::string>();
    const auto input = j.at("input").get<std::vector<std::size_t>>();
    if (input.size() != 3) throw CheckpointError("checkpoint trunk input must have three extents");
    t.height = input[0];
    t.width = input[1];
    t.channels = input[2];
    for (const auto& l : j.at("layers")) {
        t.layers.push_back({parse_layer_kind(l.at("kind").get<std::string>()), l.at("units").get<std::size_t>(),
                            l.at("kernel").get<std::size_t>(), l.at("stride").get<std::size_t>(),
                            l.at("padding").get<std::size_t>(), l.at("relu").get<bool>()});
    }
    t.embedding_width = j.at("embedding_width").get<std::size_t>();
    return t;
}

json margin_of(const Model& model) {
    if (const auto* t = std::get_if<TripletModel>(&model)) return t->margin();
    return nullptr;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Model& model, const ChannelStats& stats) {
    json header;
    header["kind"] = to_string(kind_of(model));
    header["margin"] = margin_of(model);
    header["trunk"] = trunk_to_json(trunk_of(model).config());
    header["stats"] = {{"mean", stats.mean}, {"var", stats.var}};
    json shapes = json::array();
    const auto params = parameters_of(model);
    for (const Tensor* p : params) shapes.push_back(p->shape());
    header["params"] = shapes;
    const std::string text = header.dump();

    std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + kMagicLength);
    put_u64(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    for (const Tensor* p : params) {
        for (double v : p->values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kMagicLength || std::memcmp(bytes.data(), kCheckpointMagic, kMagicLength) != 0) {
        throw CheckpointError("checkpoint magic mismatch (expected RSRT1)");
    }
    if (bytes.size() < kMagicLength + 8) throw CheckpointError("truncated payload: missing header length");
    const std::uint64_t header_len = get_u64(bytes.data() + kMagicLength);
    const std::size_t header_start = kMagicLength + 8;
    if (header_len > bytes.size() - header_start) throw CheckpointError("truncated payload: header cut short");

    json header;
    try {
        header = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(header_start),
                             bytes.begin() + static_cast<std::ptrdiff_t>(header_start + header_len));
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
    }

    Checkpoint ck;
    std::vector<Shape> shapes;
    try {
        const NetworkKind kind = parse_network_kind(header.at("kind").get<std::string>());
        const double margin = kind == NetworkKind::triplet ? header.at("margin").get<double>() : kDefaultMargin;
        ck.model = make_model(kind, trunk_from_json(header.at("trunk")), margin);
        ck.stats.mean = header.at("stats").at("mean").get<std::array<double, 3>>();
        ck.stats.var = header.at("stats").at("var").get<std::array<double, 3>>();
        shapes = header.at("params").get<std::vector<Shape>>();
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(std::string("invalid checkpoint header: ") + e.what());
    }

    auto params = parameters_of(ck.model);
    if (shapes.size() != params.size()) {
        throw CheckpointError("shape disagreement: header lists " + std::to_string(shapes.size()) +
                              " tensors, architecture has " + std::to_string(params.size()));
    }
    std::size_t offset = header_start + header_len;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        if (shapes[k] != p.shape()) {
            throw CheckpointError("shape disagreement at tensor " + std::to_string(k) + ": header " +
                                  shape_to_string(shapes[k]) + ", architecture " + shape_to_string(p.shape()));
        }
        if ((bytes.size() - offset) / 8 < p.size()) throw CheckpointError("truncated payload");
        for (auto& v : p.values()) {
            v = std::bit_cast<double>(get_u64(bytes.data() + offset));
            offset += 8;
        }
    }
    if (offset != bytes.size()) throw CheckpointError("trailing bytes after checkpoint payload");
    return ck;
}

void save_checkpoint(const Model& model, const ChannelStats& stats, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(model, stats);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot write checkpoint");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError(path.string() + ": checkpoint write failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path.string() + ": cannot open checkpoint");
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes);
}

}  // namespace resinsort
