#include "kraken/error.hpp"
#include "kraken/io.hpp"
#include "kraken/sne.hpp"

#include <json.hpp>

#include <string>

namespace kraken::sne {

namespace {

using nlohmann::json;

std::string_view kind_name(LayerKind k) { return k == LayerKind::Conv3x3 ? "conv3x3" : "linear"; }

LayerKind parse_kind(const std::string& s) {
    if (s == "conv3x3") return LayerKind::Conv3x3;
    if (s == "linear") return LayerKind::Linear;
    throw Error(ErrorCode::ParseError, "unknown layer kind '" + s + "'");
}

json parse_json_file(const std::filesystem::path& path) {
    const auto text = io::read_text_file(path);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
}

}  // namespace

std::vector<std::uint8_t> serialize_weight_blob(std::span<const SneLayerConfig> layers) {
    io::ByteWriter w;
    w.put_magic("KSNW");
    w.put_u16(kWeightBlobVersion);
    w.put_u16(static_cast<std::uint16_t>(layers.size()));
    for (const auto& l : layers) {
        l.validate();
        w.put_u8(l.kind == LayerKind::Conv3x3 ? 0 : 1);
        w.put_u16(static_cast<std::uint16_t>(l.in_channels));
        w.put_u16(static_cast<std::uint16_t>(l.out_channels));
        w.put_u16(static_cast<std::uint16_t>(l.in_width));
        w.put_u16(static_cast<std::uint16_t>(l.in_height));
    }
    for (const auto& l : layers) {
        for (std::size_t i = 0; i < l.weights.size(); i += 2) {
            const auto lo = static_cast<std::uint8_t>(l.weights[i]) & 0x0Fu;
            const auto hi = i + 1 < l.weights.size()
                                ? static_cast<std::uint8_t>(l.weights[i + 1]) & 0x0Fu
                                : 0u;
            w.put_u8(static_cast<std::uint8_t>(lo | (hi << 4)));
        }
    }
    return w.take();
}

void load_weight_blob(std::span<const std::uint8_t> bytes, std::span<SneLayerConfig> layers) {
    io::ByteReader r(bytes);
    r.expect_magic("KSNW");
    const auto version = r.get_u16();
    if (version != kWeightBlobVersion) {
        throw Error(ErrorCode::VersionMismatch, "KSNW version " + std::to_string(version));
    }
    const auto count = r.get_u16();
    if (count != layers.size()) {
        throw Error(ErrorCode::ShapeMismatch, "blob has " + std::to_string(count) +
                                                  " layers, description has " +
                                                  std::to_string(layers.size()));
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto& l = layers[i];
        const auto kind = r.get_u8() == 0 ? LayerKind::Conv3x3 : LayerKind::Linear;
        const std::uint32_t in_c = r.get_u16(), out_c = r.get_u16(), w = r.get_u16(),
                            h = r.get_u16();
        if (kind != l.kind || in_c != l.in_channels || out_c != l.out_channels ||
            w != l.in_width || h != l.in_height) {
            throw Error(ErrorCode::ShapeMismatch,
                        "blob dims of layer " + std::to_string(i) + " differ from description");
        }
    }
    for (auto& l : layers) {
        const auto n = l.weight_count();
        const auto packed = r.get_bytes((n + 1) / 2);
        l.weights.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const unsigned nibble = (packed[i / 2] >> (4 * (i % 2))) & 0x0Fu;
            l.weights[i] = static_cast<std::int8_t>(nibble >= 8 ? int(nibble) - 16 : int(nibble));
        }
    }
    if (!r.done()) throw Error(ErrorCode::MalformedStream, "trailing bytes in KSNW blob");
}

std::vector<SneLayerConfig> read_network_file(const std::filesystem::path& path) {
    const auto doc = parse_json_file(path);
    std::vector<SneLayerConfig> layers;
    std::filesystem::path blob;
    try {
        blob = path.parent_path() / doc.at("weights").get<std::string>();
        for (const auto& jl : doc.at("layers")) {
            SneLayerConfig l;
            l.kind = parse_kind(jl.at("kind").get<std::string>());
            l.in_channels = jl.at("in_channels").get<std::uint32_t>();
            l.out_channels = jl.at("out_channels").get<std::uint32_t>();
            l.in_width = jl.at("in_width").get<std::uint32_t>();
            l.in_height = jl.at("in_height").get<std::uint32_t>();
            l.lif.threshold = jl.at("threshold").get<int>();
            l.lif.decay_tau = jl.at("decay_tau").get<double>();
            l.lif.lut_depth = jl.at("lut_depth").get<std::uint32_t>();
            layers.push_back(std::move(l));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
    load_weight_blob(io::read_file(blob), layers);
    for (const auto& l : layers) l.validate();
    check_chain(layers);
    return layers;
}

void write_network_file(const std::filesystem::path& path, const std::string& blob_name,
                        std::span<const SneLayerConfig> layers) {
    json doc;
    doc["weights"] = blob_name;
    doc["layers"] = json::array();
    for (const auto& l : layers) {
        doc["layers"].push_back({{"kind", kind_name(l.kind)},
                                 {"in_channels", l.in_channels},
                                 {"out_channels", l.out_channels},
                                 {"in_width", l.in_width},
                                 {"in_height", l.in_height},
                                 {"threshold", l.lif.threshold},
                                 {"decay_tau", l.lif.decay_tau},
                                 {"lut_depth", l.lif.lut_depth}});
    }
    io::write_file_atomic(path.parent_path() / blob_name, serialize_weight_blob(layers));
    io::write_file_atomic(path, doc.dump(2) + "\n");
}

HwConfig read_hw_file(const std::filesystem::path& path) {
    const auto doc = parse_json_file(path);
    HwConfig hw;
    try {
        hw.n_slices = doc.value("n_slices", hw.n_slices);
        hw.clusters_per_slice = doc.value("clusters_per_slice", hw.clusters_per_slice);
        hw.neurons_per_cluster = doc.value("neurons_per_cluster", hw.neurons_per_cluster);
        hw.tile_width = doc.value("tile_width", hw.tile_width);
        hw.tile_height = doc.value("tile_height", hw.tile_height);
        hw.cycles_per_event = doc.value("cycles_per_event", hw.cycles_per_event);
        hw.clock_hz = doc.value("clock_hz", hw.clock_hz);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
    hw.validate();
    return hw;
}

}  // namespace kraken::sne
