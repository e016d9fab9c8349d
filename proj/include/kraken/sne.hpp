#pragma once

// Event-driven model of the Sparse Neural Engine.
//
// Hierarchy: slices -> clusters -> 64 LIF neurons sharing one TDM datapath.
// A cluster owns an 8x8 spatial block of one output channel (conv layers)
// or a chunk of 64 consecutive neurons (linear layers). Decay is deferred:
// each neuron keeps the timestep of its last update and the cumulative
// decay since then is looked up in a LUT the next time a spike reaches it.

#include "kraken/events.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace kraken::sne {

using events::Event;
using events::SpikeEvent;

inline constexpr int kWeightMin = -8;
inline constexpr int kWeightMax = 7;
inline constexpr std::uint32_t kMaxConvInChannels = 256;
inline constexpr std::uint32_t kMaxLinearInputs = 2304;

struct LifParams {
    int threshold = 16;  // 1..127, membrane units
    double decay_tau = 8.0;  // timesteps
    std::uint32_t lut_depth = 16;

    void validate() const;
};

/// coeffs[k] ~ 256 * exp(-k / tau), saturated to 255. Index 0 is stored for
/// completeness but applied as an exact identity; k >= depth flushes to 0.
struct DecayLut {
    std::vector<std::uint8_t> coeffs;

    std::uint32_t depth() const noexcept { return static_cast<std::uint32_t>(coeffs.size()); }
    std::uint8_t coefficient(std::uint32_t elapsed) const noexcept {
        return elapsed < coeffs.size() ? coeffs[elapsed] : std::uint8_t{0};
    }
};

DecayLut build_decay_lut(const LifParams& params);

/// (v * coeff) >> 8 on the magnitude, sign restored (truncates toward zero).
std::int8_t apply_decay(std::int8_t v, std::uint32_t elapsed, const DecayLut& lut);

struct LifNeuronState {
    std::int8_t v = 0;
    std::uint32_t last_update = 0;

    friend bool operator==(const LifNeuronState&, const LifNeuronState&) = default;
};

struct FusedResult {
    LifNeuronState state;
    bool fired = false;
};

/// Decay to `now`, integrate `weight`, saturate to int8, fire and reset to 0
/// when v >= threshold. Throws TimeRegression if now < state.last_update.
FusedResult fused_update(const LifNeuronState& state, int weight, std::uint32_t now,
                         const DecayLut& lut, const LifParams& params);

enum class LayerKind { Conv3x3, Linear };

struct SneLayerConfig {
    LayerKind kind = LayerKind::Conv3x3;
    std::uint32_t in_channels = 1;
    std::uint32_t out_channels = 1;
    std::uint32_t in_width = 1;
    std::uint32_t in_height = 1;
    /// conv: [out_c][in_c][3][3]; linear: [out_n][in_n] with
    /// in_n = (c * in_height + y) * in_width + x.
    std::vector<std::int8_t> weights;
    LifParams lif;

    void validate() const;

    std::uint32_t input_size() const noexcept { return in_channels * in_height * in_width; }
    std::size_t weight_count() const noexcept;
    /// Conv layers keep the spatial size (zero padding); linear layers emit
    /// neuron j as the spike (0, 0, j).
    std::uint32_t out_width() const noexcept { return kind == LayerKind::Conv3x3 ? in_width : 1; }
    std::uint32_t out_height() const noexcept { return kind == LayerKind::Conv3x3 ? in_height : 1; }
    std::size_t neuron_count() const noexcept {
        return std::size_t{out_channels} * out_width() * out_height();
    }

    int conv_weight(std::uint32_t oc, std::uint32_t ic, int ky, int kx) const {
        return weights[((std::size_t{oc} * in_channels + ic) * 3 + ky) * 3 + kx];
    }
    int linear_weight(std::uint32_t j, std::uint32_t n) const {
        return weights[std::size_t{j} * input_size() + n];
    }
};

struct HwConfig {
    std::uint32_t n_slices = 8;
    std::uint32_t clusters_per_slice = 16;
    std::uint32_t neurons_per_cluster = 64;
    std::uint32_t tile_width = 8;
    std::uint32_t tile_height = 8;
    std::uint32_t cycles_per_event = 12;
    double clock_hz = 220e6;

    void validate() const;
    std::uint32_t clusters_per_pass() const noexcept { return n_slices * clusters_per_slice; }
};

/// One cluster's share of the output space. For linear layers `channel` is 0,
/// `block_y` is 0 and `block_x` is the 64-neuron chunk index.
struct TileUnit {
    std::uint32_t channel = 0;
    std::uint32_t block_x = 0;
    std::uint32_t block_y = 0;
    std::uint32_t slice = 0;
    std::uint32_t cluster = 0;

    std::uint32_t cluster_index(const HwConfig& hw) const noexcept {
        return slice * hw.clusters_per_slice + cluster;
    }
};

struct TilePass {
    std::vector<TileUnit> units;
};

struct TilingPlan {
    std::uint32_t blocks_x = 0;
    std::uint32_t blocks_y = 0;
    std::vector<TilePass> passes;

    std::size_t unit_count() const noexcept;
};

TilingPlan plan_tiling(const SneLayerConfig& layer, const HwConfig& hw);

struct ClusterSpike {
    std::uint32_t neuron = 0;  // local index, row-major inside the tile
    SpikeEvent spike;
};

struct ClusterResult {
    std::vector<ClusterSpike> outputs;
    std::uint32_t state_writes = 0;
};

/// Membrane storage and TDM datapath of one cluster for the unit it holds.
class Cluster {
public:
    Cluster(const SneLayerConfig& layer, const HwConfig& hw, const TileUnit& unit);

    const TileUnit& unit() const noexcept { return unit_; }
    std::uint32_t now() const noexcept { return now_; }

    /// Time events only advance the cluster clock; spike events update the
    /// (<= 9 for conv) neurons of the tile inside the receptive field.
    /// Throws GeometryMismatch for spikes outside the layer input.
    ClusterResult process(const Event& event, const SneLayerConfig& layer, const DecayLut& lut);

    /// Whether a spike at (x, y) reaches any neuron of this tile.
    bool responds_to(const SpikeEvent& s) const noexcept;

    std::span<const LifNeuronState> states() const noexcept { return states_; }
    /// Edge tiles may be partial; neurons past the layer edge never update.
    bool neuron_active(std::uint32_t local) const noexcept;
    std::size_t global_index(std::uint32_t local) const noexcept;

private:
    TileUnit unit_;
    std::uint32_t tile_w_;
    std::uint32_t tile_h_;
    std::uint32_t origin_x_ = 0;
    std::uint32_t origin_y_ = 0;
    std::uint32_t first_neuron_ = 0;  // linear
    std::uint32_t active_ = 0;        // linear: neurons in the chunk
    std::uint32_t layer_w_;
    std::uint32_t layer_h_;
    bool linear_;
    std::uint32_t now_ = 0;
    std::vector<LifNeuronState> states_;
};

/// Buffers the spikes fired during one input event and releases them in
/// ascending (cluster index, neuron index) order, merging the per-slice
/// streams the same way the slice collectors and the top-level merge do.
class Collector {
public:
    void push(std::uint32_t cluster_index, const ClusterSpike& spike);
    std::vector<SpikeEvent> drain();
    bool empty() const noexcept { return pending_.empty(); }

private:
    struct Entry {
        std::uint32_t cluster_index;
        ClusterSpike spike;
    };
    std::vector<Entry> pending_;
};

enum class Dataflow { InputBroadcast, InternalRedirection, OutputStreaming };

std::string_view to_string(Dataflow d) noexcept;

struct SneLayerStats {
    std::uint64_t input_events = 0;     // spike events entering the layer
    std::uint64_t time_events = 0;
    std::uint64_t replayed_events = 0;  // input_events * passes
    std::uint64_t output_events = 0;
    std::uint64_t cycles = 0;
    std::uint64_t neuron_state_writes = 0;
    std::uint64_t tiles_executed = 0;
    Dataflow source = Dataflow::InputBroadcast;
    Dataflow sink = Dataflow::OutputStreaming;

    SneLayerStats& operator+=(const SneLayerStats& other);
    friend bool operator==(const SneLayerStats&, const SneLayerStats&) = default;
};

struct SneLayerResult {
    /// Flattened: one time event per input frame, then that frame's output
    /// spikes in raster order.
    std::vector<Event> output;
    SneLayerStats stats;
    /// Final membranes indexed like the output space ([oc][y][x] or [j]).
    std::vector<LifNeuronState> final_states;
};

/// Replays the full input stream once per tile pass (input broadcast).
/// Spikes before the first time event belong to an implicit frame at t=0;
/// repeated equal timestamps continue the current frame; a smaller
/// timestamp throws TimeRegression.
SneLayerResult run_layer(const SneLayerConfig& layer, std::span<const Event> input,
                         const HwConfig& hw);

struct SneNetworkResult {
    events::EventStream output_frames;
    std::vector<SneLayerStats> layers;
    SneLayerStats totals;
    std::vector<std::vector<LifNeuronState>> final_states;
};

/// Layer-wise execution; layer i output feeds layer i+1 (internal
/// redirection). Throws ShapeMismatch on incompatible neighbours.
SneNetworkResult run_network(std::span<const SneLayerConfig> layers, std::span<const Event> input,
                             const HwConfig& hw);

/// Throws ShapeMismatch if layer i's output space is not layer i+1's input.
void check_chain(std::span<const SneLayerConfig> layers);

// Files. Network description (JSON) lists the layers and names a KSNW blob
// holding the 4-bit weights, two per byte, low nibble first.
inline constexpr std::uint16_t kWeightBlobVersion = 1;

std::vector<std::uint8_t> serialize_weight_blob(std::span<const SneLayerConfig> layers);
/// Fills weights of `layers` (dims must match the blob) from the blob bytes.
void load_weight_blob(std::span<const std::uint8_t> bytes, std::span<SneLayerConfig> layers);

std::vector<SneLayerConfig> read_network_file(const std::filesystem::path& path);
/// Writes the JSON description and its blob (blob path relative to the JSON).
void write_network_file(const std::filesystem::path& path, const std::string& blob_name,
                        std::span<const SneLayerConfig> layers);

HwConfig read_hw_file(const std::filesystem::path& path);

}  // namespace kraken::sne
