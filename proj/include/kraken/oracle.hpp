#pragma once

// Brute-force references for the engines. They share only the decay LUT
// construction with the engines; state layout, iteration order and the
// arithmetic are written out independently here.
//
// Dense LIF contract: at every timestep every neuron is visited and its
// full receptive window scanned in raster order (y, x, c). Each active
// input integrates after applying the cumulative decay since the neuron's
// previous integration, i.e. coeffs[t - t_last] once, never coeffs[1]
// repeatedly.

#include "kraken/cutie.hpp"
#include "kraken/events.hpp"
#include "kraken/sne.hpp"

#include <cstdint>
#include <vector>

namespace kraken::oracle {

struct DenseGrid {
    std::uint32_t timestamp = 0;
    std::uint32_t channels = 0;
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::vector<std::uint8_t> occupancy;  // [C][H][W], 0 or 1

    bool active(std::uint32_t c, std::uint32_t y, std::uint32_t x) const {
        return occupancy[(std::size_t{c} * height + y) * width + x] != 0;
    }
};

/// Throws ShapeMismatch for spikes outside (channels, height, width).
std::vector<DenseGrid> to_dense_grids(const events::EventStream& stream, std::uint32_t channels,
                                      std::uint32_t height, std::uint32_t width);

struct DenseNeuron {
    int v = 0;
    std::uint32_t last = 0;
};

struct DenseLifResult {
    /// Per timestep, fired neurons as spikes in raster order.
    std::vector<std::vector<events::SpikeEvent>> spikes;
    /// [oc][y][x] for conv, [j] for linear.
    std::vector<DenseNeuron> final_states;
};

DenseLifResult dense_lif_sim(const sne::SneLayerConfig& layer, const std::vector<DenseGrid>& grids);

struct DenseConvOptions {
    std::uint32_t stride = 1;
    std::uint32_t padding = 1;
    bool max_pool_2x2 = false;
};

struct DenseConvResult {
    cutie::TritTensor output;
    std::vector<int> accumulators;  // [Co][H][W] before pooling
};

/// Naive nested-loop ternary convolution and dual-threshold activation.
DenseConvResult dense_ternary_conv(const cutie::TritTensor& fmap, const cutie::TritTensor& weights,
                                   const std::vector<cutie::Thresholds>& thresholds,
                                   const DenseConvOptions& options = {});

}  // namespace kraken::oracle
