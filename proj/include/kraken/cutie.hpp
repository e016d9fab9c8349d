#pragma once

// Completely unrolled ternary inference engine: trit codec, output compute
// units (OCUs), tile buffer and layer-overlapped network execution.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace kraken::cutie {

enum class Trit : std::int8_t { Neg = -1, Zero = 0, Pos = 1 };

constexpr int value(Trit t) noexcept { return static_cast<int>(t); }
/// Throws InvalidConfig for values outside {-1, 0, 1}.
Trit to_trit(int v);

inline constexpr std::uint32_t kMaxChannels = 96;
inline constexpr std::uint32_t kKernel = 3;
inline constexpr std::uint8_t kPackedLimit = 243;  // 3^5

class TritTensor {
public:
    TritTensor() = default;
    explicit TritTensor(std::vector<std::size_t> dims);
    /// Throws DimsMismatch unless data.size() equals the product of dims.
    TritTensor(std::vector<std::size_t> dims, std::vector<Trit> data);

    const std::vector<std::size_t>& dims() const noexcept { return dims_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::span<const Trit> data() const noexcept { return data_; }
    std::span<Trit> data() noexcept { return data_; }

    // [C][H][W] feature-map accessors.
    Trit at(std::size_t c, std::size_t y, std::size_t x) const {
        return data_[(c * dims_[1] + y) * dims_[2] + x];
    }
    Trit& at(std::size_t c, std::size_t y, std::size_t x) {
        return data_[(c * dims_[1] + y) * dims_[2] + x];
    }

    friend bool operator==(const TritTensor&, const TritTensor&) = default;

private:
    std::vector<std::size_t> dims_;
    std::vector<Trit> data_;
};

std::size_t element_count(std::span<const std::size_t> dims) noexcept;

/// Base-3, little-endian digits, with -1 -> 0, 0 -> 1, +1 -> 2.
std::uint8_t pack_trits(const std::array<Trit, 5>& trits) noexcept;
/// Throws InvalidPackedByte for byte >= 243.
std::array<Trit, 5> unpack_trits(std::uint8_t byte);

/// ceil(n/5) bytes; the last group is padded with zero trits.
std::vector<std::uint8_t> compress_tensor(const TritTensor& t);
/// Throws DimsMismatch if the byte count is not ceil(n/5), InvalidPackedByte
/// if any byte is >= 243.
TritTensor decompress_tensor(std::span<const std::uint8_t> packed, std::vector<std::size_t> dims);

struct Thresholds {
    std::int16_t lo = 0;
    std::int16_t hi = 0;

    friend bool operator==(const Thresholds&, const Thresholds&) = default;
};

/// +1 if acc > hi, -1 if acc < lo, else 0.
constexpr Trit threshold_decide(int acc, Thresholds th) noexcept {
    return acc > th.hi ? Trit::Pos : (acc < th.lo ? Trit::Neg : Trit::Zero);
}

struct OcuResult {
    std::int16_t acc = 0;
    Trit out = Trit::Zero;
};

/// Ternary MAC over one K*K*C window ([C][K][K] order) and threshold decide.
/// Throws ShapeMismatch if the spans differ in length or exceed 9*96.
OcuResult ocu_pixel(std::span<const Trit> window, std::span<const Trit> filter, Thresholds th);

struct Window {
    std::size_t x = 0;
    std::size_t y = 0;
    std::vector<Trit> data;  // [C][K][K]
};

/// Sliding-window tile buffer over a [C][H][W] map: emits every output
/// coordinate's zero-padded window in row-major order.
class TileBuffer {
public:
    TileBuffer(const TritTensor& fmap, std::uint32_t kernel, std::uint32_t stride,
               std::uint32_t padding);

    std::size_t out_width() const noexcept { return out_w_; }
    std::size_t out_height() const noexcept { return out_h_; }
    std::size_t window_count() const noexcept { return out_w_ * out_h_; }

    /// Fills `w` with the next window; false once every window was emitted.
    bool next(Window& w);

private:
    const TritTensor& fmap_;
    std::uint32_t kernel_;
    std::uint32_t stride_;
    std::uint32_t padding_;
    std::size_t out_w_ = 0;
    std::size_t out_h_ = 0;
    std::size_t cursor_ = 0;
};

std::vector<Window> tile_windows(const TritTensor& fmap, std::uint32_t kernel,
                                 std::uint32_t stride, std::uint32_t padding);

enum class Pooling { None, Max2x2 };

struct CutieLayerConfig {
    std::uint32_t in_channels = 1;
    std::uint32_t out_channels = 1;
    std::uint32_t kernel = kKernel;
    std::uint32_t stride = 1;
    std::uint32_t padding = 1;
    std::uint32_t in_width = 1;
    std::uint32_t in_height = 1;
    TritTensor weights;  // [Co][Ci][K][K]
    std::vector<Thresholds> thresholds;  // one pair per output channel
    Pooling pooling = Pooling::None;

    /// Throws ShapeMismatch, InvalidConfig or TooManyChannels.
    void validate() const;

    std::uint32_t conv_width() const noexcept { return (in_width + 2 * padding - kernel) / stride + 1; }
    std::uint32_t conv_height() const noexcept { return (in_height + 2 * padding - kernel) / stride + 1; }
    std::uint32_t out_width() const noexcept {
        return pooling == Pooling::Max2x2 ? conv_width() / 2 : conv_width();
    }
    std::uint32_t out_height() const noexcept {
        return pooling == Pooling::Max2x2 ? conv_height() / 2 : conv_height();
    }
};

struct CutieHwConfig {
    std::uint32_t n_ocus = kMaxChannels;
    double clock_hz = 330e6;
    /// Compressed weight bytes the loader moves per cycle.
    std::uint32_t weight_bytes_per_cycle = 16;

    void validate() const;
};

std::uint64_t weight_load_cycles(const CutieLayerConfig& layer, const CutieHwConfig& hw);

struct CutieLayerStats {
    std::uint64_t compute_cycles = 0;
    std::uint64_t load_cycles = 0;             // full weight-load latency
    std::uint64_t unoverlapped_load_cycles = 0;  // exposed load (first layer)
    std::uint64_t overlapped_load_cycles = 0;  // hidden behind the previous layer
    std::uint64_t stall_cycles = 0;
    std::uint64_t macs_performed = 0;
    std::uint32_t max_abs_accumulator = 0;

    std::uint64_t total_cycles() const noexcept {
        return compute_cycles + unoverlapped_load_cycles + stall_cycles;
    }
    friend bool operator==(const CutieLayerStats&, const CutieLayerStats&) = default;
};

struct CutieLayerResult {
    TritTensor output;
    std::vector<std::int16_t> accumulators;  // [Co][H_conv][W_conv], pre-threshold
    CutieLayerStats stats;
};

/// All output channels of a pixel finish in one cycle; compute_cycles is
/// the pre-pooling window count. Throws ShapeMismatch.
CutieLayerResult run_layer(const CutieLayerConfig& layer, const TritTensor& fmap,
                           const CutieHwConfig& hw);

struct CutieRunStats {
    std::vector<CutieLayerStats> layers;
    CutieLayerStats totals;
    bool end_of_inference = false;

    std::uint64_t total_cycles() const noexcept { return totals.total_cycles(); }
};

struct CutieNetworkResult {
    TritTensor output;
    /// Last layer accumulators; the class scores for a 1x1 classifier head.
    std::vector<std::int16_t> scores;
    CutieRunStats stats;
};

/// Layer i+1's weights load while layer i computes; only the excess over
/// layer i's compute time stalls. Throws ShapeMismatch, TooManyChannels.
CutieNetworkResult run_network(std::span<const CutieLayerConfig> layers, const TritTensor& input,
                               const CutieHwConfig& hw);

// KCTW weight blob and KCTF feature-map files.
inline constexpr std::uint16_t kFileVersion = 1;

std::vector<std::uint8_t> serialize_weight_blob(std::span<const CutieLayerConfig> layers);
std::vector<CutieLayerConfig> parse_weight_blob(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_fmap(const TritTensor& fmap);
TritTensor parse_fmap(std::span<const std::uint8_t> bytes);

void write_weight_blob(const std::filesystem::path& path, std::span<const CutieLayerConfig> layers);
std::vector<CutieLayerConfig> read_weight_blob(const std::filesystem::path& path);
void write_fmap(const std::filesystem::path& path, const TritTensor& fmap);
TritTensor read_fmap(const std::filesystem::path& path);

CutieHwConfig read_hw_file(const std::filesystem::path& path);

}  // namespace kraken::cutie
