#include "kraken/cutie.hpp"
#include "kraken/error.hpp"
#include "kraken/io.hpp"

#include <json.hpp>

#include <string>

namespace kraken::cutie {

namespace {

void check_version(io::ByteReader& r, const char* what) {
    const auto version = r.get_u16();
    if (version != kFileVersion) {
        throw Error(ErrorCode::VersionMismatch, std::string(what) + " version " + std::to_string(version));
    }
}

}  // namespace

// KCTW: "KCTW", u16 version, u16 layer count, then per layer
//   u16 in_c, u16 out_c, u8 K, u8 stride, u8 padding, u8 pooling,
//   u16 in_w, u16 in_h, out_c x (i16 lo, i16 hi), u32 payload bytes, payload.
std::vector<std::uint8_t> serialize_weight_blob(std::span<const CutieLayerConfig> layers) {
    io::ByteWriter w;
    w.put_magic("KCTW");
    w.put_u16(kFileVersion);
    w.put_u16(static_cast<std::uint16_t>(layers.size()));
    for (const auto& l : layers) {
        l.validate();
        w.put_u16(static_cast<std::uint16_t>(l.in_channels));
        w.put_u16(static_cast<std::uint16_t>(l.out_channels));
        w.put_u8(static_cast<std::uint8_t>(l.kernel));
        w.put_u8(static_cast<std::uint8_t>(l.stride));
        w.put_u8(static_cast<std::uint8_t>(l.padding));
        w.put_u8(l.pooling == Pooling::Max2x2 ? 1 : 0);
        w.put_u16(static_cast<std::uint16_t>(l.in_width));
        w.put_u16(static_cast<std::uint16_t>(l.in_height));
        for (const auto& th : l.thresholds) {
            w.put_i16(th.lo);
            w.put_i16(th.hi);
        }
        const auto payload = compress_tensor(l.weights);
        w.put_u32(static_cast<std::uint32_t>(payload.size()));
        w.put_bytes(payload);
    }
    return w.take();
}

std::vector<CutieLayerConfig> parse_weight_blob(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    r.expect_magic("KCTW");
    check_version(r, "KCTW");
    const auto count = r.get_u16();
    std::vector<CutieLayerConfig> layers;
    for (std::uint16_t i = 0; i < count; ++i) {
        CutieLayerConfig l;
        l.in_channels = r.get_u16();
        l.out_channels = r.get_u16();
        l.kernel = r.get_u8();
        l.stride = r.get_u8();
        l.padding = r.get_u8();
        const auto pool = r.get_u8();
        if (pool > 1) throw Error(ErrorCode::ParseError, "unknown pooling code " + std::to_string(pool));
        l.pooling = pool == 1 ? Pooling::Max2x2 : Pooling::None;
        l.in_width = r.get_u16();
        l.in_height = r.get_u16();
        for (std::uint32_t c = 0; c < l.out_channels; ++c) {
            const auto lo = r.get_i16();
            const auto hi = r.get_i16();
            l.thresholds.push_back({lo, hi});
        }
        const auto payload = r.get_bytes(r.get_u32());
        l.weights = decompress_tensor(payload, {l.out_channels, l.in_channels, l.kernel, l.kernel});
        l.validate();
        layers.push_back(std::move(l));
    }
    if (!r.done()) throw Error(ErrorCode::MalformedStream, "trailing bytes in KCTW blob");
    return layers;
}

// KCTF: "KCTF", u16 version, u16 C, u16 H, u16 W, ceil(C*H*W/5) packed bytes.
std::vector<std::uint8_t> serialize_fmap(const TritTensor& fmap) {
    if (fmap.dims().size() != 3) throw Error(ErrorCode::ShapeMismatch, "feature map must be [C][H][W]");
    io::ByteWriter w;
    w.put_magic("KCTF");
    w.put_u16(kFileVersion);
    for (auto d : fmap.dims()) w.put_u16(static_cast<std::uint16_t>(d));
    w.put_bytes(compress_tensor(fmap));
    return w.take();
}

TritTensor parse_fmap(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    r.expect_magic("KCTF");
    check_version(r, "KCTF");
    std::vector<std::size_t> dims{r.get_u16(), r.get_u16(), r.get_u16()};
    const auto n = element_count(dims);
    const auto payload = r.get_bytes((n + 4) / 5);
    if (!r.done()) throw Error(ErrorCode::MalformedStream, "trailing bytes in KCTF file");
    return decompress_tensor(payload, std::move(dims));
}

void write_weight_blob(const std::filesystem::path& path, std::span<const CutieLayerConfig> layers) {
    io::write_file_atomic(path, serialize_weight_blob(layers));
}

std::vector<CutieLayerConfig> read_weight_blob(const std::filesystem::path& path) {
    return parse_weight_blob(io::read_file(path));
}

void write_fmap(const std::filesystem::path& path, const TritTensor& fmap) {
    io::write_file_atomic(path, serialize_fmap(fmap));
}

TritTensor read_fmap(const std::filesystem::path& path) { return parse_fmap(io::read_file(path)); }

CutieHwConfig read_hw_file(const std::filesystem::path& path) {
    CutieHwConfig hw;
    try {
        const auto doc = nlohmann::json::parse(io::read_text_file(path));
        hw.n_ocus = doc.value("n_ocus", hw.n_ocus);
        hw.clock_hz = doc.value("clock_hz", hw.clock_hz);
        hw.weight_bytes_per_cycle = doc.value("weight_bytes_per_cycle", hw.weight_bytes_per_cycle);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
    hw.validate();
    return hw;
}

}  // namespace kraken::cutie
