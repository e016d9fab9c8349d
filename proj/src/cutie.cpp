#include "kraken/cutie.hpp"

#include "kraken/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace kraken::cutie {

Trit to_trit(int v) {
    if (v < -1 || v > 1) throw Error(ErrorCode::InvalidConfig, "trit value " + std::to_string(v));
    return static_cast<Trit>(v);
}

std::size_t element_count(std::span<const std::size_t> dims) noexcept {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return dims.empty() ? 0 : n;
}

TritTensor::TritTensor(std::vector<std::size_t> dims)
    : dims_(std::move(dims)), data_(element_count(dims_), Trit::Zero) {}

TritTensor::TritTensor(std::vector<std::size_t> dims, std::vector<Trit> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
    if (data_.size() != element_count(dims_)) {
        throw Error(ErrorCode::DimsMismatch, "tensor data length " + std::to_string(data_.size()) +
                                                 " does not match dims");
    }
}

std::uint8_t pack_trits(const std::array<Trit, 5>& trits) noexcept {
    unsigned byte = 0;
    for (int i = 4; i >= 0; --i) byte = byte * 3 + static_cast<unsigned>(value(trits[i]) + 1);
    return static_cast<std::uint8_t>(byte);
}

std::array<Trit, 5> unpack_trits(std::uint8_t byte) {
    if (byte >= kPackedLimit) {
        throw Error(ErrorCode::InvalidPackedByte, "packed byte " + std::to_string(byte));
    }
    std::array<Trit, 5> out{};
    unsigned rest = byte;
    for (auto& t : out) {
        t = static_cast<Trit>(static_cast<int>(rest % 3) - 1);
        rest /= 3;
    }
    return out;
}

std::vector<std::uint8_t> compress_tensor(const TritTensor& t) {
    const auto data = t.data();
    std::vector<std::uint8_t> packed;
    packed.reserve((data.size() + 4) / 5);
    for (std::size_t i = 0; i < data.size(); i += 5) {
        std::array<Trit, 5> group{Trit::Zero, Trit::Zero, Trit::Zero, Trit::Zero, Trit::Zero};
        for (std::size_t k = 0; k < 5 && i + k < data.size(); ++k) group[k] = data[i + k];
        packed.push_back(pack_trits(group));
    }
    return packed;
}

TritTensor decompress_tensor(std::span<const std::uint8_t> packed, std::vector<std::size_t> dims) {
    const auto n = element_count(dims);
    if (packed.size() != (n + 4) / 5) {
        throw Error(ErrorCode::DimsMismatch, std::to_string(packed.size()) +
                                                 " packed bytes cannot hold " + std::to_string(n) +
                                                 " trits");
    }
    std::vector<Trit> data;
    data.reserve(packed.size() * 5);
    for (auto byte : packed) {
        const auto group = unpack_trits(byte);
        data.insert(data.end(), group.begin(), group.end());
    }
    data.resize(n);
    return TritTensor(std::move(dims), std::move(data));
}

OcuResult ocu_pixel(std::span<const Trit> window, std::span<const Trit> filter, Thresholds th) {
    if (window.size() != filter.size()) {
        throw Error(ErrorCode::ShapeMismatch, "window and filter lengths differ");
    }
    if (window.size() > kKernel * kKernel * kMaxChannels) {
        throw Error(ErrorCode::ShapeMismatch, "window exceeds 3x3x96");
    }
    int acc = 0;
    for (std::size_t i = 0; i < window.size(); ++i) acc += value(window[i]) * value(filter[i]);
    return {static_cast<std::int16_t>(acc), threshold_decide(acc, th)};
}

TileBuffer::TileBuffer(const TritTensor& fmap, std::uint32_t kernel, std::uint32_t stride,
                       std::uint32_t padding)
    : fmap_(fmap), kernel_(kernel), stride_(stride), padding_(padding) {
    if (fmap.dims().size() != 3) throw Error(ErrorCode::ShapeMismatch, "feature map must be [C][H][W]");
    if (kernel < 1 || stride < 1) throw Error(ErrorCode::InvalidConfig, "kernel and stride must be >= 1");
    const auto h = fmap.dims()[1] + 2 * padding;
    const auto w = fmap.dims()[2] + 2 * padding;
    if (h < kernel || w < kernel) {
        throw Error(ErrorCode::ShapeMismatch, "padded feature map smaller than the kernel");
    }
    out_h_ = (h - kernel) / stride + 1;
    out_w_ = (w - kernel) / stride + 1;
}

bool TileBuffer::next(Window& w) {
    if (cursor_ >= window_count()) return false;
    w.y = cursor_ / out_w_;
    w.x = cursor_ % out_w_;
    ++cursor_;
    const auto channels = fmap_.dims()[0];
    const auto height = static_cast<long>(fmap_.dims()[1]);
    const auto width = static_cast<long>(fmap_.dims()[2]);
    w.data.assign(channels * kernel_ * kernel_, Trit::Zero);
    const long y0 = static_cast<long>(w.y * stride_) - padding_;
    const long x0 = static_cast<long>(w.x * stride_) - padding_;
    std::size_t i = 0;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::uint32_t ky = 0; ky < kernel_; ++ky) {
            for (std::uint32_t kx = 0; kx < kernel_; ++kx, ++i) {
                const long y = y0 + ky;
                const long x = x0 + kx;
                if (y >= 0 && y < height && x >= 0 && x < width) w.data[i] = fmap_.at(c, y, x);
            }
        }
    }
    return true;
}

std::vector<Window> tile_windows(const TritTensor& fmap, std::uint32_t kernel,
                                 std::uint32_t stride, std::uint32_t padding) {
    TileBuffer buffer(fmap, kernel, stride, padding);
    std::vector<Window> out;
    out.reserve(buffer.window_count());
    Window w;
    while (buffer.next(w)) out.push_back(w);
    return out;
}

void CutieLayerConfig::validate() const {
    if (in_channels < 1 || out_channels < 1) {
        throw Error(ErrorCode::InvalidConfig, "channel counts must be >= 1");
    }
    if (in_channels > kMaxChannels || out_channels > kMaxChannels) {
        throw Error(ErrorCode::TooManyChannels, "CUTIE layers hold at most 96 channels");
    }
    if (kernel != kKernel) throw Error(ErrorCode::InvalidConfig, "only 3x3 kernels are supported");
    if (stride < 1) throw Error(ErrorCode::InvalidConfig, "stride must be >= 1");
    if (in_width < 1 || in_height < 1 || in_width + 2 * padding < kernel ||
        in_height + 2 * padding < kernel) {
        throw Error(ErrorCode::ShapeMismatch, "input smaller than the kernel");
    }
    if (pooling == Pooling::Max2x2 && (conv_width() < 2 || conv_height() < 2)) {
        throw Error(ErrorCode::ShapeMismatch, "pooling needs at least a 2x2 conv output");
    }
    const std::vector<std::size_t> want{out_channels, in_channels, kernel, kernel};
    if (weights.dims() != want) throw Error(ErrorCode::ShapeMismatch, "weight dims must be [Co][Ci][K][K]");
    if (thresholds.size() != out_channels) {
        throw Error(ErrorCode::ShapeMismatch, "need one threshold pair per output channel");
    }
    for (const auto& th : thresholds) {
        if (th.lo > th.hi) throw Error(ErrorCode::InvalidConfig, "threshold lo exceeds hi");
    }
}

void CutieHwConfig::validate() const {
    if (n_ocus < 1 || weight_bytes_per_cycle < 1 || !(clock_hz > 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "CUTIE hardware parameters must be positive");
    }
}

std::uint64_t weight_load_cycles(const CutieLayerConfig& layer, const CutieHwConfig& hw) {
    const std::uint64_t bytes = (layer.weights.size() + 4) / 5;
    return (bytes + hw.weight_bytes_per_cycle - 1) / hw.weight_bytes_per_cycle;
}

CutieLayerResult run_layer(const CutieLayerConfig& layer, const TritTensor& fmap,
                           const CutieHwConfig& hw) {
    layer.validate();
    hw.validate();
    if (layer.out_channels > hw.n_ocus) {
        throw Error(ErrorCode::TooManyChannels, "layer needs more OCUs than available");
    }
    const std::vector<std::size_t> want{layer.in_channels, layer.in_height, layer.in_width};
    if (fmap.dims() != want) throw Error(ErrorCode::ShapeMismatch, "input feature map dims differ from layer");

    const std::size_t filter_len = std::size_t{layer.in_channels} * layer.kernel * layer.kernel;
    const auto weights = layer.weights.data();
    const std::size_t cw = layer.conv_width(), ch = layer.conv_height();

    CutieLayerResult result;
    TritTensor conv({layer.out_channels, ch, cw});
    result.accumulators.assign(std::size_t{layer.out_channels} * ch * cw, 0);

    TileBuffer buffer(fmap, layer.kernel, layer.stride, layer.padding);
    Window w;
    while (buffer.next(w)) {
        // One modeled cycle: every OCU consumes the broadcast window.
        for (std::uint32_t oc = 0; oc < layer.out_channels; ++oc) {
            const auto r = ocu_pixel(w.data, weights.subspan(oc * filter_len, filter_len),
                                     layer.thresholds[oc]);
            conv.at(oc, w.y, w.x) = r.out;
            result.accumulators[(oc * ch + w.y) * cw + w.x] = r.acc;
            result.stats.max_abs_accumulator =
                std::max<std::uint32_t>(result.stats.max_abs_accumulator, std::abs(int{r.acc}));
        }
        ++result.stats.compute_cycles;
    }
    result.stats.macs_performed = result.stats.compute_cycles * filter_len * layer.out_channels;
    result.stats.load_cycles = weight_load_cycles(layer, hw);
    result.stats.unoverlapped_load_cycles = result.stats.load_cycles;

    if (layer.pooling == Pooling::Max2x2) {
        TritTensor pooled({layer.out_channels, ch / 2, cw / 2});
        for (std::size_t c = 0; c < layer.out_channels; ++c)
            for (std::size_t y = 0; y < ch / 2; ++y)
                for (std::size_t x = 0; x < cw / 2; ++x)
                    pooled.at(c, y, x) = std::max({conv.at(c, 2 * y, 2 * x), conv.at(c, 2 * y, 2 * x + 1),
                                                   conv.at(c, 2 * y + 1, 2 * x),
                                                   conv.at(c, 2 * y + 1, 2 * x + 1)});
        result.output = std::move(pooled);
    } else {
        result.output = std::move(conv);
    }
    return result;
}

namespace {

void add_stats(CutieLayerStats& acc, const CutieLayerStats& s) {
    acc.compute_cycles += s.compute_cycles;
    acc.load_cycles += s.load_cycles;
    acc.unoverlapped_load_cycles += s.unoverlapped_load_cycles;
    acc.overlapped_load_cycles += s.overlapped_load_cycles;
    acc.stall_cycles += s.stall_cycles;
    acc.macs_performed += s.macs_performed;
    acc.max_abs_accumulator = std::max(acc.max_abs_accumulator, s.max_abs_accumulator);
}

}  // namespace

CutieNetworkResult run_network(std::span<const CutieLayerConfig> layers, const TritTensor& input,
                               const CutieHwConfig& hw) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        layers[i].validate();
        if (layers[i].out_channels > hw.n_ocus) {
            throw Error(ErrorCode::TooManyChannels, "layer " + std::to_string(i) + " exceeds OCU count");
        }
        if (i + 1 < layers.size()) {
            const auto& a = layers[i];
            const auto& b = layers[i + 1];
            if (a.out_channels != b.in_channels || a.out_width() != b.in_width ||
                a.out_height() != b.in_height) {
                throw Error(ErrorCode::ShapeMismatch, "layer " + std::to_string(i) +
                                                          " output does not feed layer " +
                                                          std::to_string(i + 1));
            }
        }
    }

    CutieNetworkResult net;
    TritTensor current = input;
    std::uint64_t prev_compute = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto r = run_layer(layers[i], current, hw);
        if (i > 0) {
            r.stats.unoverlapped_load_cycles = 0;
            r.stats.overlapped_load_cycles = std::min(r.stats.load_cycles, prev_compute);
            r.stats.stall_cycles = r.stats.load_cycles - r.stats.overlapped_load_cycles;
        }
        prev_compute = r.stats.compute_cycles;
        add_stats(net.stats.totals, r.stats);
        net.stats.layers.push_back(r.stats);
        current = std::move(r.output);
        if (i + 1 == layers.size()) net.scores = std::move(r.accumulators);
    }
    net.output = std::move(current);
    net.stats.end_of_inference = !layers.empty();
    return net;
}

}  // namespace kraken::cutie
