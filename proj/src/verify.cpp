#include "kraken/verify.hpp"

#include "kraken/error.hpp"
#include "kraken/oracle.hpp"

#include <algorithm>
#include <sstream>

namespace kraken::verify {

using cutie::Trit;

cutie::TritTensor random_trits(Rng& rng, std::vector<std::size_t> dims, double zero_fraction) {
    cutie::TritTensor t(std::move(dims));
    for (auto& v : t.data()) {
        if (uniform_unit(rng) < zero_fraction) {
            v = Trit::Zero;
        } else {
            v = (rng() & 1u) ? Trit::Pos : Trit::Neg;
        }
    }
    return t;
}

SneCase random_sne_case(Rng& rng) {
    SneCase c;
    auto& l = c.layer;
    l.kind = uniform_below(rng, 4) == 0 ? sne::LayerKind::Linear : sne::LayerKind::Conv3x3;
    l.in_channels = static_cast<std::uint32_t>(uniform_int(rng, 1, 2));
    l.out_channels = static_cast<std::uint32_t>(uniform_int(rng, 1, 2));
    l.in_width = static_cast<std::uint32_t>(uniform_int(rng, 1, 8));
    l.in_height = static_cast<std::uint32_t>(uniform_int(rng, 1, 8));
    l.lif.threshold = static_cast<int>(uniform_int(rng, 1, 24));
    l.lif.decay_tau = 0.5 + 20.0 * uniform_unit(rng);
    l.lif.lut_depth = static_cast<std::uint32_t>(uniform_int(rng, 1, 16));
    l.weights.resize(l.weight_count());
    for (auto& w : l.weights) w = static_cast<std::int8_t>(uniform_int(rng, sne::kWeightMin, sne::kWeightMax));

    if (uniform_below(rng, 2) == 0) {
        static constexpr std::uint32_t tiles[][2] = {{1, 1}, {2, 2}, {4, 2}, {2, 4}, {3, 3}, {8, 8}};
        const auto& t = tiles[uniform_below(rng, std::size(tiles))];
        c.hw.tile_width = t[0];
        c.hw.tile_height = t[1];
        c.hw.neurons_per_cluster = t[0] * t[1];
        c.hw.n_slices = static_cast<std::uint32_t>(uniform_int(rng, 1, 3));
        c.hw.clusters_per_slice = static_cast<std::uint32_t>(uniform_int(rng, 1, 4));
    }

    const auto n_frames = uniform_int(rng, 1, 12);
    std::uint32_t t = static_cast<std::uint32_t>(uniform_int(rng, 0, 3));
    const double density = uniform_unit(rng) * 0.6;
    for (std::int64_t f = 0; f < n_frames; ++f) {
        events::EventFrame frame{t, {}};
        for (std::uint32_t y = 0; y < l.in_height; ++y)
            for (std::uint32_t x = 0; x < l.in_width; ++x)
                for (std::uint32_t ch = 0; ch < l.in_channels; ++ch)
                    if (uniform_unit(rng) < density) {
                        frame.spikes.push_back({static_cast<std::uint16_t>(x),
                                                static_cast<std::uint16_t>(y),
                                                static_cast<std::uint16_t>(ch)});
                    }
        c.stream.push_back(std::move(frame));
        t += static_cast<std::uint32_t>(uniform_int(rng, 1, 6));
    }
    return c;
}

CutieCase random_cutie_case(Rng& rng) {
    CutieCase c;
    auto& l = c.layer;
    l.in_channels = static_cast<std::uint32_t>(uniform_int(rng, 1, 4));
    l.out_channels = static_cast<std::uint32_t>(uniform_int(rng, 1, 4));
    l.padding = static_cast<std::uint32_t>(uniform_int(rng, 0, 1));
    l.stride = static_cast<std::uint32_t>(uniform_int(rng, 1, 2));
    const std::int64_t min_side = 3 - 2 * std::int64_t{l.padding};
    l.in_width = static_cast<std::uint32_t>(uniform_int(rng, std::max<std::int64_t>(1, min_side), 8));
    l.in_height = static_cast<std::uint32_t>(uniform_int(rng, std::max<std::int64_t>(1, min_side), 8));
    l.pooling = (uniform_below(rng, 3) == 0 && l.conv_width() >= 2 && l.conv_height() >= 2)
                    ? cutie::Pooling::Max2x2
                    : cutie::Pooling::None;
    const double zeros = uniform_unit(rng);
    l.weights = random_trits(rng, {l.out_channels, l.in_channels, 3, 3}, zeros);
    const int span = 9 * static_cast<int>(l.in_channels);
    for (std::uint32_t oc = 0; oc < l.out_channels; ++oc) {
        auto a = static_cast<std::int16_t>(uniform_int(rng, -span / 2, span / 2));
        auto b = static_cast<std::int16_t>(uniform_int(rng, -span / 2, span / 2));
        l.thresholds.push_back({std::min(a, b), std::max(a, b)});
    }
    c.input = random_trits(rng, {l.in_channels, l.in_height, l.in_width}, uniform_unit(rng));
    return c;
}

CaseOutcome check_sne_case(const SneCase& c, bool inject_fault) {
    auto engine_layer = c.layer;
    if (inject_fault) {
        engine_layer.lif.threshold = engine_layer.lif.threshold == 1 ? 2 : engine_layer.lif.threshold - 1;
    }
    const auto flat = events::flatten(c.stream);
    const auto r = sne::run_layer(engine_layer, flat, c.hw);
    const auto got = events::group_frames(r.output);

    const auto grids = oracle::to_dense_grids(c.stream, c.layer.in_channels, c.layer.in_height,
                                              c.layer.in_width);
    const auto want = oracle::dense_lif_sim(c.layer, grids);

    CaseOutcome out;
    if (got.size() != want.spikes.size()) {
        out.equal = false;
        out.detail = "frame count differs";
        return out;
    }
    for (std::size_t f = 0; f < got.size(); ++f) {
        if (got[f].spikes != want.spikes[f]) {
            out.equal = false;
            out.detail = "spikes differ in frame " + std::to_string(f);
            return out;
        }
    }
    for (std::size_t i = 0; i < want.final_states.size(); ++i) {
        const auto& e = r.final_states[i];
        const auto& o = want.final_states[i];
        if (int{e.v} != o.v || e.last_update != o.last) {
            out.equal = false;
            out.detail = "membrane state differs at neuron " + std::to_string(i);
            return out;
        }
    }
    return out;
}

CaseOutcome check_cutie_case(const CutieCase& c, bool inject_fault) {
    auto engine_layer = c.layer;
    if (inject_fault) {
        auto& th = engine_layer.thresholds[0];
        th = {static_cast<std::int16_t>(-th.hi - 1), static_cast<std::int16_t>(-th.lo + 1)};
    }
    const auto r = cutie::run_layer(engine_layer, c.input, cutie::CutieHwConfig{});
    const auto want = oracle::dense_ternary_conv(
        c.input, c.layer.weights, c.layer.thresholds,
        {c.layer.stride, c.layer.padding, c.layer.pooling == cutie::Pooling::Max2x2});

    CaseOutcome out;
    if (!(r.output == want.output)) {
        out.equal = false;
        out.detail = "output trits differ";
        return out;
    }
    for (std::size_t i = 0; i < want.accumulators.size(); ++i) {
        if (r.accumulators[i] != want.accumulators[i]) {
            out.equal = false;
            out.detail = "accumulator differs at " + std::to_string(i);
            return out;
        }
    }
    const auto bound = 9u * c.layer.in_channels;
    if (r.stats.max_abs_accumulator > bound) {
        out.equal = false;
        out.detail = "accumulator exceeds 9*in_channels";
    }
    return out;
}

Scope parse_scope(const std::string& s) {
    if (s == "all") return Scope::All;
    if (s == "codec") return Scope::Codec;
    if (s == "sne") return Scope::Sne;
    if (s == "cutie") return Scope::Cutie;
    throw Error(ErrorCode::InvalidConfig, "unknown verify scope '" + s + "'");
}

namespace {

CheckResult codec_exhaustive() {
    CheckResult res{"codec: 243-byte exhaustive round trip", true, ""};
    for (unsigned b = 0; b < cutie::kPackedLimit; ++b) {
        const auto byte = static_cast<std::uint8_t>(b);
        if (cutie::pack_trits(cutie::unpack_trits(byte)) != byte) {
            res.passed = false;
            res.detail = "byte " + std::to_string(b) + " does not round-trip";
            return res;
        }
    }
    for (unsigned b = cutie::kPackedLimit; b < 256; ++b) {
        try {
            cutie::unpack_trits(static_cast<std::uint8_t>(b));
            res.passed = false;
            res.detail = "byte " + std::to_string(b) + " was accepted";
            return res;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::InvalidPackedByte) throw;
        }
    }
    res.detail = "243 valid bytes, 13 rejected";
    return res;
}

template <typename Gen, typename Check>
CheckResult equivalence(std::string name, std::size_t n, std::uint64_t seed, Gen gen, Check check) {
    CheckResult res{std::move(name), true, ""};
    Rng rng(seed);
    std::size_t failures = 0;
    std::string first;
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = gen(rng);
        const auto o = check(c);
        if (!o.equal) {
            if (failures++ == 0) first = "case " + std::to_string(i) + ": " + o.detail;
        }
    }
    res.passed = failures == 0;
    std::ostringstream detail;
    detail << n - failures << "/" << n << " cases equal";
    if (failures) detail << "; first failure " << first;
    res.detail = detail.str();
    return res;
}

CheckResult cutie_max_pixel(bool inject_fault) {
    // One output pixel of a 3x3x96 -> 96 layer on an unpadded 3x3 input.
    Rng rng(96);
    CutieCase c;
    auto& l = c.layer;
    l.in_channels = l.out_channels = cutie::kMaxChannels;
    l.in_width = l.in_height = 3;
    l.padding = 0;
    l.weights = random_trits(rng, {96, 96, 3, 3});
    for (std::uint32_t oc = 0; oc < 96; ++oc) {
        const auto a = static_cast<std::int16_t>(uniform_int(rng, -40, 40));
        l.thresholds.push_back({a, static_cast<std::int16_t>(a + uniform_int(rng, 0, 40))});
    }
    c.input = random_trits(rng, {96, 3, 3});
    const auto o = check_cutie_case(c, inject_fault);
    return {"cutie: maximal 3x3x96 pixel", o.equal, o.equal ? "96 channels equal" : o.detail};
}

}  // namespace

std::vector<CheckResult> run(const Options& options) {
    std::vector<CheckResult> results;
    const bool all = options.scope == Scope::All;
    if (all || options.scope == Scope::Codec) results.push_back(codec_exhaustive());
    if (all || options.scope == Scope::Cutie) {
        results.push_back(equivalence("cutie: run_layer vs dense convolution", options.cutie_cases,
                                      options.seed, random_cutie_case,
                                      [&](const CutieCase& c) { return check_cutie_case(c, options.inject_fault); }));
        results.push_back(cutie_max_pixel(options.inject_fault));
    }
    if (all || options.scope == Scope::Sne) {
        results.push_back(equivalence("sne: event-driven vs dense LIF", options.sne_cases,
                                      options.seed + 1, random_sne_case,
                                      [&](const SneCase& c) { return check_sne_case(c, options.inject_fault); }));
    }
    return results;
}

}  // namespace kraken::verify
