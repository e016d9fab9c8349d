#include "kraken/oracle.hpp"

#include "kraken/error.hpp"

#include <algorithm>

namespace kraken::oracle {

using events::SpikeEvent;

std::vector<DenseGrid> to_dense_grids(const events::EventStream& stream, std::uint32_t channels,
                                      std::uint32_t height, std::uint32_t width) {
    std::vector<DenseGrid> grids;
    grids.reserve(stream.size());
    for (const auto& frame : stream) {
        DenseGrid g{frame.timestamp, channels, height, width,
                    std::vector<std::uint8_t>(std::size_t{channels} * height * width, 0)};
        for (const auto& s : frame.spikes) {
            if (s.c >= channels || s.y >= height || s.x >= width) {
                throw Error(ErrorCode::ShapeMismatch, "spike outside dense grid");
            }
            g.occupancy[(std::size_t{s.c} * height + s.y) * width + s.x] = 1;
        }
        grids.push_back(std::move(g));
    }
    return grids;
}

namespace {

int decayed(int v, std::uint32_t elapsed, const sne::DecayLut& lut) {
    if (elapsed == 0) return v;
    const int coeff = elapsed < lut.coeffs.size() ? lut.coeffs[elapsed] : 0;
    const int mag = ((v < 0 ? -v : v) * coeff) / 256;
    return v < 0 ? -mag : mag;
}

void integrate(DenseNeuron& n, int weight, std::uint32_t t, const sne::DecayLut& lut,
               int threshold, bool& fired) {
    int v = decayed(n.v, t - n.last, lut) + weight;
    if (v > 127) v = 127;
    if (v < -128) v = -128;
    n.last = t;
    if (v >= threshold) {
        fired = true;
        v = 0;
    }
    n.v = v;
}

}  // namespace

DenseLifResult dense_lif_sim(const sne::SneLayerConfig& layer, const std::vector<DenseGrid>& grids) {
    const auto C = layer.in_channels, H = layer.in_height, W = layer.in_width;
    const bool linear = layer.kind == sne::LayerKind::Linear;
    const auto lut = sne::build_decay_lut(layer.lif);
    const int threshold = layer.lif.threshold;

    DenseLifResult out;
    const std::size_t n_neurons =
        linear ? layer.out_channels : std::size_t{layer.out_channels} * H * W;
    out.final_states.resize(n_neurons);

    std::uint32_t prev_t = 0;
    for (const auto& g : grids) {
        if (g.channels != C || g.height != H || g.width != W) {
            throw Error(ErrorCode::ShapeMismatch, "grid dims differ from layer input");
        }
        if (!out.spikes.empty() && g.timestamp < prev_t) {
            throw Error(ErrorCode::TimeRegression, "grid timestamps decrease");
        }
        prev_t = g.timestamp;
        const auto t = g.timestamp;
        std::vector<SpikeEvent> fired_list;

        if (linear) {
            for (std::uint32_t j = 0; j < layer.out_channels; ++j) {
                auto& n = out.final_states[j];
                for (std::uint32_t y = 0; y < H; ++y)
                    for (std::uint32_t x = 0; x < W; ++x)
                        for (std::uint32_t c = 0; c < C; ++c) {
                            if (!g.active(c, y, x)) continue;
                            const auto idx = (c * H + y) * W + x;
                            bool fired = false;
                            integrate(n, layer.weights[std::size_t{j} * C * H * W + idx], t, lut,
                                      threshold, fired);
                            if (fired) fired_list.push_back({0, 0, static_cast<std::uint16_t>(j)});
                        }
            }
        } else {
            for (std::uint32_t oc = 0; oc < layer.out_channels; ++oc) {
                for (std::uint32_t oy = 0; oy < H; ++oy) {
                    for (std::uint32_t ox = 0; ox < W; ++ox) {
                        auto& n = out.final_states[(std::size_t{oc} * H + oy) * W + ox];
                        for (int ky = 0; ky < 3; ++ky) {
                            const int iy = int(oy) + ky - 1;
                            if (iy < 0 || iy >= int(H)) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int ix = int(ox) + kx - 1;
                                if (ix < 0 || ix >= int(W)) continue;
                                for (std::uint32_t ic = 0; ic < C; ++ic) {
                                    if (!g.active(ic, iy, ix)) continue;
                                    const auto w = layer.weights[((std::size_t{oc} * C + ic) * 3 + ky) * 3 + kx];
                                    bool fired = false;
                                    integrate(n, w, t, lut, threshold, fired);
                                    if (fired) {
                                        fired_list.push_back({static_cast<std::uint16_t>(ox),
                                                              static_cast<std::uint16_t>(oy),
                                                              static_cast<std::uint16_t>(oc)});
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        std::stable_sort(fired_list.begin(), fired_list.end(), events::raster_less);
        out.spikes.push_back(std::move(fired_list));
    }
    return out;
}

DenseConvResult dense_ternary_conv(const cutie::TritTensor& fmap, const cutie::TritTensor& weights,
                                   const std::vector<cutie::Thresholds>& thresholds,
                                   const DenseConvOptions& options) {
    if (fmap.dims().size() != 3 || weights.dims().size() != 4) {
        throw Error(ErrorCode::ShapeMismatch, "expected [C][H][W] input and [Co][Ci][K][K] weights");
    }
    const long C = long(fmap.dims()[0]), H = long(fmap.dims()[1]), W = long(fmap.dims()[2]);
    const long Co = long(weights.dims()[0]), K = long(weights.dims()[2]);
    if (long(weights.dims()[1]) != C || long(weights.dims()[3]) != K || long(thresholds.size()) != Co) {
        throw Error(ErrorCode::ShapeMismatch, "weights/thresholds do not match the input");
    }
    const long S = options.stride, P = options.padding;
    const long Ho = (H + 2 * P - K) / S + 1, Wo = (W + 2 * P - K) / S + 1;

    const auto in = fmap.data();
    const auto wt = weights.data();
    DenseConvResult r;
    r.accumulators.assign(std::size_t(Co * Ho * Wo), 0);
    std::vector<int> act(std::size_t(Co * Ho * Wo), 0);
    for (long o = 0; o < Co; ++o) {
        for (long y = 0; y < Ho; ++y) {
            for (long x = 0; x < Wo; ++x) {
                int acc = 0;
                for (long c = 0; c < C; ++c)
                    for (long ky = 0; ky < K; ++ky)
                        for (long kx = 0; kx < K; ++kx) {
                            const long iy = y * S + ky - P, ix = x * S + kx - P;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            acc += static_cast<int>(in[(c * H + iy) * W + ix]) *
                                   static_cast<int>(wt[((o * C + c) * K + ky) * K + kx]);
                        }
                const std::size_t idx = std::size_t((o * Ho + y) * Wo + x);
                r.accumulators[idx] = acc;
                const auto th = thresholds[std::size_t(o)];
                act[idx] = acc > th.hi ? 1 : (acc < th.lo ? -1 : 0);
            }
        }
    }

    long Hp = Ho, Wp = Wo;
    std::vector<int> result = act;
    if (options.max_pool_2x2) {
        Hp = Ho / 2;
        Wp = Wo / 2;
        result.assign(std::size_t(Co * Hp * Wp), -1);
        for (long o = 0; o < Co; ++o)
            for (long y = 0; y < Hp; ++y)
                for (long x = 0; x < Wp; ++x) {
                    int m = -1;
                    for (long dy = 0; dy < 2; ++dy)
                        for (long dx = 0; dx < 2; ++dx)
                            m = std::max(m, act[std::size_t((o * Ho + 2 * y + dy) * Wo + 2 * x + dx)]);
                    result[std::size_t((o * Hp + y) * Wp + x)] = m;
                }
    }
    std::vector<cutie::Trit> data;
    data.reserve(result.size());
    for (int v : result) data.push_back(static_cast<cutie::Trit>(v));
    r.output = cutie::TritTensor({std::size_t(Co), std::size_t(Hp), std::size_t(Wp)}, std::move(data));
    return r;
}

}  // namespace kraken::oracle
