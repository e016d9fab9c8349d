#include "kraken/sne.hpp"

#include "kraken/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <variant>

namespace kraken::sne {

using events::TimeEvent;

namespace {

constexpr std::uint32_t kMaxLutDepth = 1u << 16;

std::int8_t saturate8(int v) {
    return static_cast<std::int8_t>(std::clamp(v, -128, 127));
}

std::uint32_t div_ceil(std::uint32_t a, std::uint32_t b) { return (a + b - 1) / b; }

}  // namespace

void LifParams::validate() const {
    if (threshold < 1 || threshold > 127) {
        throw Error(ErrorCode::InvalidConfig, "LIF threshold must be in 1..127");
    }
    if (!(decay_tau > 0.0)) throw Error(ErrorCode::InvalidConfig, "decay_tau must be > 0");
    if (lut_depth < 1 || lut_depth > kMaxLutDepth) {
        throw Error(ErrorCode::InvalidConfig, "lut_depth must be in 1..65536");
    }
}

DecayLut build_decay_lut(const LifParams& params) {
    params.validate();
    DecayLut lut;
    lut.coeffs.resize(params.lut_depth);
    for (std::uint32_t k = 0; k < params.lut_depth; ++k) {
        const double scaled = 256.0 * std::exp(-static_cast<double>(k) / params.decay_tau);
        lut.coeffs[k] = static_cast<std::uint8_t>(std::min<long long>(255, std::llround(scaled)));
    }
    return lut;
}

std::int8_t apply_decay(std::int8_t v, std::uint32_t elapsed, const DecayLut& lut) {
    if (elapsed == 0) return v;
    const int magnitude = (std::abs(int{v}) * lut.coefficient(elapsed)) >> 8;
    return static_cast<std::int8_t>(v < 0 ? -magnitude : magnitude);
}

FusedResult fused_update(const LifNeuronState& state, int weight, std::uint32_t now,
                         const DecayLut& lut, const LifParams& params) {
    if (now < state.last_update) {
        throw Error(ErrorCode::TimeRegression, "update at t=" + std::to_string(now) +
                                                   " before last update t=" +
                                                   std::to_string(state.last_update));
    }
    const auto decayed = apply_decay(state.v, now - state.last_update, lut);
    FusedResult r{{saturate8(int{decayed} + weight), now}, false};
    if (r.state.v >= params.threshold) {
        r.fired = true;
        r.state.v = 0;
    }
    return r;
}

void SneLayerConfig::validate() const {
    lif.validate();
    if (in_channels < 1 || out_channels < 1 || in_width < 1 || in_height < 1) {
        throw Error(ErrorCode::InvalidConfig, "layer dimensions must be >= 1");
    }
    if (in_width > 256 || in_height > 256) {
        throw Error(ErrorCode::InvalidConfig, "layer input exceeds 256x256 event coordinates");
    }
    if (out_channels > 256) {
        throw Error(ErrorCode::InvalidConfig, "output channels exceed the 8-bit channel field");
    }
    if (kind == LayerKind::Conv3x3 && in_channels > kMaxConvInChannels) {
        throw Error(ErrorCode::InvalidConfig, "conv layers support at most 256 input channels");
    }
    if (kind == LayerKind::Linear && input_size() > kMaxLinearInputs) {
        throw Error(ErrorCode::InvalidConfig, "linear layers support at most 2304 inputs");
    }
    if (weights.size() != weight_count()) {
        throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(weight_count()) +
                                                  " weights, got " +
                                                  std::to_string(weights.size()));
    }
    for (auto w : weights) {
        if (w < kWeightMin || w > kWeightMax) {
            throw Error(ErrorCode::InvalidConfig, "weight outside the signed 4-bit range");
        }
    }
}

std::size_t SneLayerConfig::weight_count() const noexcept {
    return kind == LayerKind::Conv3x3 ? std::size_t{out_channels} * in_channels * 9
                                      : std::size_t{out_channels} * input_size();
}

void HwConfig::validate() const {
    if (n_slices < 1 || clusters_per_slice < 1 || neurons_per_cluster < 1 || tile_width < 1 ||
        tile_height < 1 || cycles_per_event < 1) {
        throw Error(ErrorCode::InvalidConfig, "hardware counts must be >= 1");
    }
    if (tile_width * tile_height != neurons_per_cluster) {
        throw Error(ErrorCode::InvalidConfig, "cluster tile area must equal neurons_per_cluster");
    }
    if (!(clock_hz > 0.0)) throw Error(ErrorCode::InvalidConfig, "clock_hz must be > 0");
}

std::size_t TilingPlan::unit_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : passes) n += p.units.size();
    return n;
}

TilingPlan plan_tiling(const SneLayerConfig& layer, const HwConfig& hw) {
    hw.validate();
    TilingPlan plan;
    std::vector<TileUnit> units;
    if (layer.kind == LayerKind::Conv3x3) {
        plan.blocks_x = div_ceil(layer.out_width(), hw.tile_width);
        plan.blocks_y = div_ceil(layer.out_height(), hw.tile_height);
        for (std::uint32_t oc = 0; oc < layer.out_channels; ++oc)
            for (std::uint32_t by = 0; by < plan.blocks_y; ++by)
                for (std::uint32_t bx = 0; bx < plan.blocks_x; ++bx)
                    units.push_back(TileUnit{oc, bx, by, 0, 0});
    } else {
        plan.blocks_x = div_ceil(layer.out_channels, hw.neurons_per_cluster);
        plan.blocks_y = 1;
        for (std::uint32_t chunk = 0; chunk < plan.blocks_x; ++chunk)
            units.push_back(TileUnit{0, chunk, 0, 0, 0});
    }

    const auto per_pass = hw.clusters_per_pass();
    for (std::size_t i = 0; i < units.size(); ++i) {
        const auto slot = static_cast<std::uint32_t>(i % per_pass);
        if (slot == 0) plan.passes.emplace_back();
        units[i].slice = slot / hw.clusters_per_slice;
        units[i].cluster = slot % hw.clusters_per_slice;
        plan.passes.back().units.push_back(units[i]);
    }
    return plan;
}

Cluster::Cluster(const SneLayerConfig& layer, const HwConfig& hw, const TileUnit& unit)
    : unit_(unit),
      tile_w_(hw.tile_width),
      tile_h_(hw.tile_height),
      layer_w_(layer.out_width()),
      layer_h_(layer.out_height()),
      linear_(layer.kind == LayerKind::Linear),
      states_(hw.neurons_per_cluster) {
    if (linear_) {
        first_neuron_ = unit.block_x * hw.neurons_per_cluster;
        active_ = std::min(hw.neurons_per_cluster, layer.out_channels - first_neuron_);
    } else {
        origin_x_ = unit.block_x * tile_w_;
        origin_y_ = unit.block_y * tile_h_;
    }
}

bool Cluster::neuron_active(std::uint32_t local) const noexcept {
    if (linear_) return local < active_;
    return origin_x_ + local % tile_w_ < layer_w_ && origin_y_ + local / tile_w_ < layer_h_;
}

std::size_t Cluster::global_index(std::uint32_t local) const noexcept {
    if (linear_) return first_neuron_ + local;
    const std::size_t ox = origin_x_ + local % tile_w_;
    const std::size_t oy = origin_y_ + local / tile_w_;
    return (std::size_t{unit_.channel} * layer_h_ + oy) * layer_w_ + ox;
}

bool Cluster::responds_to(const SpikeEvent& s) const noexcept {
    if (linear_) return active_ > 0;
    // Output neurons reached by a 3x3 window centred on the input pixel.
    const int x_lo = std::max<int>({int{s.x} - 1, int(origin_x_), 0});
    const int x_hi = std::min<int>({int{s.x} + 1, int(origin_x_ + tile_w_) - 1, int(layer_w_) - 1});
    const int y_lo = std::max<int>({int{s.y} - 1, int(origin_y_), 0});
    const int y_hi = std::min<int>({int{s.y} + 1, int(origin_y_ + tile_h_) - 1, int(layer_h_) - 1});
    return x_lo <= x_hi && y_lo <= y_hi;
}

ClusterResult Cluster::process(const Event& event, const SneLayerConfig& layer,
                               const DecayLut& lut) {
    ClusterResult result;
    if (const auto* t = std::get_if<TimeEvent>(&event)) {
        if (t->timestamp < now_) {
            throw Error(ErrorCode::TimeRegression, "time event moves the cluster clock back");
        }
        now_ = t->timestamp;
        return result;
    }
    const auto& s = std::get<SpikeEvent>(event);
    if (s.x >= layer.in_width || s.y >= layer.in_height || s.c >= layer.in_channels) {
        throw Error(ErrorCode::GeometryMismatch, "spike outside the layer input");
    }

    if (linear_) {
        const std::uint32_t n = (std::uint32_t{s.c} * layer.in_height + s.y) * layer.in_width + s.x;
        for (std::uint32_t local = 0; local < active_; ++local) {
            const auto j = first_neuron_ + local;
            auto r = fused_update(states_[local], layer.linear_weight(j, n), now_, lut, layer.lif);
            states_[local] = r.state;
            ++result.state_writes;
            if (r.fired) {
                result.outputs.push_back({local, SpikeEvent{0, 0, static_cast<std::uint16_t>(j)}});
            }
        }
        return result;
    }

    if (!responds_to(s)) return result;
    const int x_lo = std::max<int>({int{s.x} - 1, int(origin_x_), 0});
    const int x_hi = std::min<int>({int{s.x} + 1, int(origin_x_ + tile_w_) - 1, int(layer_w_) - 1});
    const int y_lo = std::max<int>({int{s.y} - 1, int(origin_y_), 0});
    const int y_hi = std::min<int>({int{s.y} + 1, int(origin_y_ + tile_h_) - 1, int(layer_h_) - 1});
    for (int oy = y_lo; oy <= y_hi; ++oy) {
        for (int ox = x_lo; ox <= x_hi; ++ox) {
            const int ky = int{s.y} - oy + 1;
            const int kx = int{s.x} - ox + 1;
            const auto local = static_cast<std::uint32_t>((oy - int(origin_y_)) * int(tile_w_) +
                                                          (ox - int(origin_x_)));
            auto r = fused_update(states_[local], layer.conv_weight(unit_.channel, s.c, ky, kx),
                                  now_, lut, layer.lif);
            states_[local] = r.state;
            ++result.state_writes;
            if (r.fired) {
                result.outputs.push_back(
                    {local, SpikeEvent{static_cast<std::uint16_t>(ox), static_cast<std::uint16_t>(oy),
                                       static_cast<std::uint16_t>(unit_.channel)}});
            }
        }
    }
    return result;
}

void Collector::push(std::uint32_t cluster_index, const ClusterSpike& spike) {
    pending_.push_back({cluster_index, spike});
}

std::vector<SpikeEvent> Collector::drain() {
    std::stable_sort(pending_.begin(), pending_.end(), [](const Entry& a, const Entry& b) {
        if (a.cluster_index != b.cluster_index) return a.cluster_index < b.cluster_index;
        return a.spike.neuron < b.spike.neuron;
    });
    std::vector<SpikeEvent> out;
    out.reserve(pending_.size());
    for (const auto& e : pending_) out.push_back(e.spike.spike);
    pending_.clear();
    return out;
}

std::string_view to_string(Dataflow d) noexcept {
    switch (d) {
        case Dataflow::InputBroadcast: return "input_broadcast";
        case Dataflow::InternalRedirection: return "internal_redirection";
        case Dataflow::OutputStreaming: return "output_streaming";
    }
    return "unknown";
}

SneLayerStats& SneLayerStats::operator+=(const SneLayerStats& other) {
    input_events += other.input_events;
    time_events += other.time_events;
    replayed_events += other.replayed_events;
    output_events += other.output_events;
    cycles += other.cycles;
    neuron_state_writes += other.neuron_state_writes;
    tiles_executed += other.tiles_executed;
    return *this;
}

namespace {

struct FrameIndex {
    std::vector<std::uint32_t> timestamps;
    std::vector<std::uint32_t> of_event;  // frame index per input event
};

// Validates ordering and geometry up front so a bad stream fails before
// any pass runs.
FrameIndex index_frames(const SneLayerConfig& layer, std::span<const Event> input) {
    FrameIndex idx;
    idx.of_event.reserve(input.size());
    for (const auto& e : input) {
        if (const auto* t = std::get_if<TimeEvent>(&e)) {
            if (!idx.timestamps.empty() && t->timestamp < idx.timestamps.back()) {
                throw Error(ErrorCode::TimeRegression,
                            "time event " + std::to_string(t->timestamp) + " after " +
                                std::to_string(idx.timestamps.back()));
            }
            if (idx.timestamps.empty() || t->timestamp != idx.timestamps.back()) {
                idx.timestamps.push_back(t->timestamp);
            }
        } else {
            const auto& s = std::get<SpikeEvent>(e);
            if (s.x >= layer.in_width || s.y >= layer.in_height || s.c >= layer.in_channels) {
                throw Error(ErrorCode::GeometryMismatch,
                            "spike (" + std::to_string(s.x) + "," + std::to_string(s.y) + "," +
                                std::to_string(s.c) + ") outside layer input");
            }
            if (idx.timestamps.empty()) idx.timestamps.push_back(0);
        }
        idx.of_event.push_back(static_cast<std::uint32_t>(idx.timestamps.size() - 1));
    }
    return idx;
}

}  // namespace

SneLayerResult run_layer(const SneLayerConfig& layer, std::span<const Event> input,
                         const HwConfig& hw) {
    layer.validate();
    hw.validate();
    const auto frames = index_frames(layer, input);
    const auto plan = plan_tiling(layer, hw);
    const auto lut = build_decay_lut(layer.lif);

    SneLayerResult result;
    result.final_states.resize(layer.neuron_count());
    std::vector<std::vector<SpikeEvent>> per_frame(frames.timestamps.size());

    std::uint64_t spikes_in = 0;
    for (const auto& e : input) spikes_in += std::holds_alternative<SpikeEvent>(e) ? 1 : 0;

    for (const auto& pass : plan.passes) {
        std::vector<Cluster> clusters;
        clusters.reserve(pass.units.size());
        for (const auto& u : pass.units) clusters.emplace_back(layer, hw, u);

        // (channel, block) -> position in `clusters`, conv layers only.
        std::vector<int> lookup;
        std::uint32_t oc_lo = layer.out_channels, oc_hi = 0;  // channels present in this pass
        if (layer.kind == LayerKind::Conv3x3) {
            lookup.assign(std::size_t{layer.out_channels} * plan.blocks_x * plan.blocks_y, -1);
            for (std::size_t i = 0; i < pass.units.size(); ++i) {
                const auto& u = pass.units[i];
                lookup[(std::size_t{u.channel} * plan.blocks_y + u.block_y) * plan.blocks_x +
                       u.block_x] = static_cast<int>(i);
                oc_lo = std::min(oc_lo, u.channel);
                oc_hi = std::max(oc_hi, u.channel);
            }
        }

        Collector collector;
        auto run_cluster = [&](Cluster& cl, const Event& e) {
            auto r = cl.process(e, layer, lut);
            result.stats.neuron_state_writes += r.state_writes;
            for (const auto& out : r.outputs) collector.push(cl.unit().cluster_index(hw), out);
        };

        for (std::size_t i = 0; i < input.size(); ++i) {
            const auto& e = input[i];
            if (std::holds_alternative<TimeEvent>(e)) {
                for (auto& cl : clusters) cl.process(e, layer, lut);
                continue;
            }
            const auto& s = std::get<SpikeEvent>(e);
            if (layer.kind == LayerKind::Linear) {
                for (auto& cl : clusters) run_cluster(cl, e);
            } else {
                const auto bx_lo = static_cast<std::uint32_t>(std::max(0, int{s.x} - 1)) / hw.tile_width;
                const auto bx_hi = std::min<std::uint32_t>(s.x + 1u, layer.out_width() - 1) / hw.tile_width;
                const auto by_lo = static_cast<std::uint32_t>(std::max(0, int{s.y} - 1)) / hw.tile_height;
                const auto by_hi = std::min<std::uint32_t>(s.y + 1u, layer.out_height() - 1) / hw.tile_height;
                for (std::uint32_t oc = oc_lo; oc <= oc_hi; ++oc) {
                    for (auto by = by_lo; by <= by_hi; ++by) {
                        for (auto bx = bx_lo; bx <= bx_hi; ++bx) {
                            const int pos = lookup[(std::size_t{oc} * plan.blocks_y + by) *
                                                       plan.blocks_x + bx];
                            if (pos >= 0) run_cluster(clusters[pos], e);
                        }
                    }
                }
            }
            // Clusters run in lockstep: the sequencer spends the full TDM
            // slot whether or not a given cluster responds.
            result.stats.cycles += hw.cycles_per_event;
            ++result.stats.replayed_events;
            if (!collector.empty()) {
                auto fired = collector.drain();
                auto& dst = per_frame[frames.of_event[i]];
                dst.insert(dst.end(), fired.begin(), fired.end());
            }
        }

        for (const auto& cl : clusters) {
            for (std::uint32_t local = 0; local < hw.neurons_per_cluster; ++local) {
                if (cl.neuron_active(local)) {
                    result.final_states[cl.global_index(local)] = cl.states()[local];
                }
            }
        }
    }

    for (std::size_t f = 0; f < per_frame.size(); ++f) {
        result.output.emplace_back(TimeEvent{frames.timestamps[f]});
        auto& spikes = per_frame[f];
        std::stable_sort(spikes.begin(), spikes.end(), events::raster_less);
        for (const auto& s : spikes) result.output.emplace_back(s);
        result.stats.output_events += spikes.size();
    }
    result.stats.input_events = spikes_in;
    result.stats.time_events = input.size() - spikes_in;
    result.stats.tiles_executed = plan.passes.size();
    return result;
}

void check_chain(std::span<const SneLayerConfig> layers) {
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
        const auto& a = layers[i];
        const auto& b = layers[i + 1];
        if (a.out_channels != b.in_channels || a.out_width() != b.in_width ||
            a.out_height() != b.in_height) {
            throw Error(ErrorCode::ShapeMismatch,
                        "layer " + std::to_string(i) + " output does not match layer " +
                            std::to_string(i + 1) + " input");
        }
    }
}

SneNetworkResult run_network(std::span<const SneLayerConfig> layers, std::span<const Event> input,
                             const HwConfig& hw) {
    check_chain(layers);
    SneNetworkResult net;
    std::vector<Event> current(input.begin(), input.end());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto r = run_layer(layers[i], current, hw);
        r.stats.source = i == 0 ? Dataflow::InputBroadcast : Dataflow::InternalRedirection;
        r.stats.sink = i + 1 == layers.size() ? Dataflow::OutputStreaming
                                              : Dataflow::InternalRedirection;
        net.totals += r.stats;
        net.layers.push_back(r.stats);
        net.final_states.push_back(std::move(r.final_states));
        current = std::move(r.output);
    }
    net.output_frames = events::group_frames(current);
    return net;
}

}  // namespace kraken::sne
