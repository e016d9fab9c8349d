// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure.
#include "cli.hpp"

#include "kraken/cutie.hpp"
#include "kraken/error.hpp"
#include "kraken/events.hpp"
#include "kraken/io.hpp"
#include "kraken/oracle.hpp"
#include "kraken/perf.hpp"
#include "kraken/random.hpp"
#include "kraken/sne.hpp"
#include "kraken/verify.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace kraken;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;
    void require(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

struct Criterion {
    int id;
    std::string title;
    double limit_s;  // 0: no limit
    std::function<Outcome()> body;
};

std::string str(double v) {
    std::ostringstream s;
    s << v;
    return s.str();
}

// -- 1 ----------------------------------------------------------------------
Outcome codec() {
    Outcome o;
    for (int b = 0; b < 243; ++b) {
        const auto t = cutie::unpack_trits(static_cast<std::uint8_t>(b));
        o.require(cutie::pack_trits(t) == b, "byte " + std::to_string(b) + " does not round-trip");
    }
    for (int b = 243; b < 256; ++b) {
        bool threw = false;
        try {
            cutie::unpack_trits(static_cast<std::uint8_t>(b));
        } catch (const Error& e) {
            threw = e.code() == ErrorCode::InvalidPackedByte;
        }
        o.require(threw, "byte " + std::to_string(b) + " accepted");
    }
    Rng rng(1);
    std::vector<std::size_t> sizes{0, 1, 2, 3, 4, 5, 6, 9, 10, 11, 243, 1000, 65537, 999999, 1000000};
    for (int i = 0; i < 20; ++i) sizes.push_back(uniform_int(rng, 1, 1000000));
    for (auto n : sizes) {
        const auto t = verify::random_trits(rng, {n});
        const auto packed = cutie::compress_tensor(t);
        o.require(packed.size() == (n + 4) / 5, "size mismatch at n=" + std::to_string(n));
        if (n % 5 == 0 && n > 0) {
            o.require(8.0 * packed.size() / n == 1.6, "not 1.6 bits/trit at n=" + std::to_string(n));
        }
        o.require(cutie::decompress_tensor(packed, {n}) == t, "round-trip failed at n=" + std::to_string(n));
    }
    if (o.ok) o.detail = "243 bytes exhaustive, " + std::to_string(sizes.size()) + " tensors up to 1e6 trits";
    return o;
}

// -- 2 ----------------------------------------------------------------------
cutie::CutieLayerConfig full_layer(std::uint32_t w, std::uint32_t h) {
    cutie::CutieLayerConfig l;
    l.in_channels = 96;
    l.out_channels = 96;
    l.in_width = w;
    l.in_height = h;
    l.padding = 1;
    l.weights = cutie::TritTensor({96, 96, 3, 3});
    for (auto& t : l.weights.data()) t = cutie::Trit::Pos;
    l.thresholds.assign(96, {0, 0});
    return l;
}

Outcome peak_rate() {
    Outcome o;
    Rng rng(2);
    auto l = full_layer(32, 32);
    l.weights = verify::random_trits(rng, {96, 96, 3, 3});
    const auto in = verify::random_trits(rng, {96, 32, 32});
    const std::vector<cutie::CutieLayerConfig> net{l};
    const auto r = cutie::run_network(net, in, cutie::CutieHwConfig{});
    const auto& s = r.stats.layers.at(0);
    o.require(s.compute_cycles == 1024, "compute cycles " + std::to_string(s.compute_cycles));
    o.require(s.macs_performed == 1024ull * 82944, "macs " + std::to_string(s.macs_performed));
    o.require(s.macs_performed % s.compute_cycles == 0 && s.macs_performed / s.compute_cycles == 82944,
              "MACs per cycle differ from 82944");
    if (o.ok) o.detail = std::to_string(s.macs_performed / s.compute_cycles) + " MACs/cycle over 1024 cycles";
    return o;
}

// -- 3 / 7 ------------------------------------------------------------------
std::uint32_t g_max_abs_acc = 0;

Outcome cutie_equivalence() {
    Outcome o;
    Rng rng(3);
    const std::size_t n = 1000;
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = verify::random_cutie_case(rng);
        const auto r = verify::check_cutie_case(c);
        o.require(r.equal, "case " + std::to_string(i) + ": " + r.detail);
        const auto eng = cutie::run_layer(c.layer, c.input, cutie::CutieHwConfig{});
        g_max_abs_acc = std::max(g_max_abs_acc, eng.stats.max_abs_accumulator);
    }
    // Maximal-shape pixel: 3x3x96 window, 96 filters.
    auto l = full_layer(3, 3);
    l.padding = 0;
    l.weights = verify::random_trits(rng, {96, 96, 3, 3});
    for (std::size_t k = 0; k < 96 * 9; ++k) l.weights.data()[k] = cutie::Trit::Pos;  // filter 0 all +1
    l.thresholds[0] = {-900, 863};
    cutie::TritTensor in({96, 3, 3});
    for (auto& t : in.data()) t = cutie::Trit::Pos;
    const auto eng = cutie::run_layer(l, in, cutie::CutieHwConfig{});
    const auto ref = oracle::dense_ternary_conv(in, l.weights, l.thresholds, {1, 0, false});
    o.require(eng.output == ref.output, "maximal pixel output differs");
    o.require(eng.accumulators.at(0) == 864 && ref.accumulators.at(0) == 864, "maximal pixel accumulator");
    o.require(eng.output.at(0, 0, 0) == cutie::Trit::Pos, "acc 864 above hi 863 should give +1");
    g_max_abs_acc = std::max(g_max_abs_acc, eng.stats.max_abs_accumulator);
    if (o.ok) o.detail = std::to_string(n) + " random cases + 3x3x96 pixel (acc 864)";
    return o;
}

Outcome accumulator_bound() {
    Outcome o;
    // Also the peak-rate layer with all-ones data, the extreme case.
    auto l = full_layer(32, 32);
    cutie::TritTensor in({96, 32, 32});
    for (auto& t : in.data()) t = cutie::Trit::Neg;
    const auto r = cutie::run_layer(l, in, cutie::CutieHwConfig{});
    g_max_abs_acc = std::max(g_max_abs_acc, r.stats.max_abs_accumulator);
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        const auto c = verify::random_cutie_case(rng);
        const auto e = cutie::run_layer(c.layer, c.input, cutie::CutieHwConfig{});
        g_max_abs_acc = std::max(g_max_abs_acc, e.stats.max_abs_accumulator);
        for (auto a : e.accumulators) {
            o.require(std::abs(int{a}) <= 9 * int(c.layer.in_channels), "accumulator beyond 9*Ci");
        }
    }
    o.require(g_max_abs_acc <= 864, "max |acc| = " + std::to_string(g_max_abs_acc));
    o.require(r.stats.max_abs_accumulator == 864, "all-(-1) input should reach -864");
    if (o.ok) o.detail = "max |acc| = " + std::to_string(g_max_abs_acc) + " <= 864";
    return o;
}

// -- 4 / 5 ------------------------------------------------------------------
Outcome sne_equivalence() {
    Outcome o;
    Rng rng(4);
    const std::size_t n = 500;
    std::size_t firing = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = verify::random_sne_case(rng);
        const auto r = verify::check_sne_case(c);
        o.require(r.equal, "case " + std::to_string(i) + ": " + r.detail);
        if (sne::run_layer(c.layer, events::flatten(c.stream), c.hw).stats.output_events > 0) ++firing;
    }
    o.require(firing * 10 >= n, "too few cases produce output spikes: " + std::to_string(firing));
    if (o.ok) {
        o.detail = std::to_string(n) + " random layers/streams equal (" + std::to_string(firing) + " with output spikes)";
    }
    return o;
}

sne::SneLayerConfig sne_conv(std::uint32_t c, std::uint32_t o, std::uint32_t w, std::uint32_t h, Rng& rng) {
    sne::SneLayerConfig l;
    l.in_channels = c;
    l.out_channels = o;
    l.in_width = w;
    l.in_height = h;
    l.lif = {6, 4.0, 8};
    l.weights.resize(l.weight_count());
    for (auto& v : l.weights) v = static_cast<std::int8_t>(uniform_int(rng, -3, 5));
    return l;
}

Outcome sne_cost_rule() {
    Outcome o;
    Rng rng(5);
    std::size_t runs = 0;
    for (int i = 0; i < 500; ++i) {
        const auto c = verify::random_sne_case(rng);
        const auto r = sne::run_layer(c.layer, events::flatten(c.stream), c.hw);
        const auto passes = sne::plan_tiling(c.layer, c.hw).passes.size();
        o.require(r.stats.cycles == 12 * r.stats.replayed_events, "cycles != 12 x replayed events");
        o.require(r.stats.replayed_events == r.stats.input_events * passes, "replayed != events x passes");
        ++runs;
    }
    // Multi-pass layers on DVS-sized input.
    for (std::uint32_t oc : {1u, 8u, 16u, 24u}) {
        const auto l = sne_conv(2, oc, 132, 104, rng);
        const auto s = events::synth_dvs_stream(events::SensorConfig{}, 0.05, 3.0 / 300, oc);
        const auto r = sne::run_layer(l, events::flatten(s), sne::HwConfig{});
        o.require(r.stats.cycles == 12 * r.stats.replayed_events, "cycles rule on 132x104 layer");
        ++runs;
    }
    // Interior events: one cluster per output channel responds, 9 writes each.
    for (std::uint32_t oc : {1u, 16u}) {
        const auto l = sne_conv(2, oc, 32, 32, rng);
        events::EventStream s;
        std::uint64_t n = 0;
        for (std::uint32_t t = 0; t < 5; ++t) {
            events::EventFrame f{t, {}};
            for (std::uint16_t y = 0; y < 32; ++y)
                for (std::uint16_t x = 0; x < 32; ++x) {
                    if (x % 8 == 0 || x % 8 == 7 || y % 8 == 0 || y % 8 == 7) continue;
                    if (uniform_unit(rng) < 0.3) {
                        f.spikes.push_back({x, y, static_cast<std::uint16_t>(rng() & 1u)});
                        ++n;
                    }
                }
            s.push_back(f);
        }
        const auto r = sne::run_layer(l, events::flatten(s), sne::HwConfig{});
        o.require(r.stats.neuron_state_writes == 9 * n * oc,
                  "interior writes " + std::to_string(r.stats.neuron_state_writes) + " vs " +
                      std::to_string(9 * n * oc));
        for (int probe = 0; probe < 50; ++probe) {
            const auto& sp = s[0].spikes[probe % s[0].spikes.size()];
            sne::Cluster cl(l, sne::HwConfig{}, {0, sp.x / 8u, sp.y / 8u, 0, 0});
            const auto lut = sne::build_decay_lut(l.lif);
            o.require(cl.process(sp, l, lut).state_writes == 9, "single cluster interior write count");
        }
    }
    if (o.ok) o.detail = std::to_string(runs) + " fuzz/DVS runs obey cycles = 12 x replayed; interior = 9 writes";
    return o;
}

// -- 6 ----------------------------------------------------------------------
Outcome energy_proportionality() {
    Outcome o;
    const auto cal = perf::default_sne_calibration();
    const double nref = perf::reference_events_per_activity();
    const double e1 = cal.e0 + cal.e_event * 0.01 * nref;
    const double e20 = cal.e0 + cal.e_event * 0.20 * nref;
    o.require(std::abs(e1 - 7.5e-6) <= 7.5e-6 * 1e-12, "1% point " + str(e1));
    o.require(std::abs(e20 - 18e-6) <= 18e-6 * 1e-12, "20% point " + str(e20));

    // Same single-layer network, one event frame at 1% and at 20% activity.
    Rng rng(6);
    const std::vector<sne::SneLayerConfig> net{sne_conv(2, 16, 132, 104, rng)};
    auto rate = [&](double activity) {
        const auto s = events::synth_dvs_stream(events::SensorConfig{}, activity, 1.0 / 300, 6);
        const auto r = sne::run_network(net, events::flatten(s), sne::HwConfig{});
        return perf::sne_report(r.layers, cal).inferences_per_second;
    };
    const double ratio = rate(0.01) / rate(0.20);
    const double target = perf::kSneLowActivityRate / perf::kSneHighActivityRate;
    o.require(std::abs(ratio - target) <= 0.05 * target, "rate ratio " + str(ratio) + " vs " + str(target));
    if (o.ok) {
        o.detail = "fit exact (7.5 uJ, 18 uJ); rate ratio " + str(ratio) + " vs " + str(target) + " (" +
                   str(100 * (ratio - target) / target) + "%)";
    }
    return o;
}

// -- 8 ----------------------------------------------------------------------
Outcome determinism_and_formats() {
    Outcome o;
    const events::SensorConfig sensor;
    for (double d : {1.0, 2.0, 0.7}) {
        const auto s = events::synth_dvs_stream(sensor, 0.1, d, 1);
        o.require(s.size() == static_cast<std::size_t>(std::llround(300 * d)),
                  "frames for " + str(d) + " s: " + std::to_string(s.size()));
    }
    const auto a = events::synth_dvs_stream(sensor, 0.2, 0.5, 42);
    const auto b = events::synth_dvs_stream(sensor, 0.2, 0.5, 42);
    const auto bytes = events::serialize_event_file({sensor.width, sensor.height, a});
    o.require(bytes == events::serialize_event_file({sensor.width, sensor.height, b}), "synth not deterministic");
    const auto parsed = events::parse_event_file(bytes);
    o.require(parsed.stream == a, "event file does not round-trip");
    o.require(events::serialize_event_file(parsed) == bytes, "event file re-serialization differs");

    Rng rng(8);
    std::vector<sne::SneLayerConfig> snet{sne_conv(2, 4, 132, 104, rng), sne_conv(4, 2, 132, 104, rng)};
    const auto blob = sne::serialize_weight_blob(snet);
    auto snet2 = snet;
    for (auto& l : snet2) l.weights.clear();
    sne::load_weight_blob(blob, snet2);
    o.require(sne::serialize_weight_blob(snet2) == blob && snet2[1].weights == snet[1].weights,
              "KSNW round-trip");

    std::vector<cutie::CutieLayerConfig> cnet;
    for (int i = 0; i < 4; ++i) cnet.push_back(verify::random_cutie_case(rng).layer);
    const auto cblob = cutie::serialize_weight_blob(cnet);
    o.require(cutie::serialize_weight_blob(cutie::parse_weight_blob(cblob)) == cblob, "KCTW round-trip");
    const auto fmap = verify::random_trits(rng, {5, 9, 7});
    o.require(cutie::parse_fmap(cutie::serialize_fmap(fmap)) == fmap, "KCTF round-trip");

    // Repeated simulation runs give byte-identical reports and outputs.
    const auto flat = events::flatten(events::synth_dvs_stream(sensor, 0.1, 0.03, 3));
    const auto r1 = sne::run_network(snet, flat, sne::HwConfig{});
    const auto r2 = sne::run_network(snet, flat, sne::HwConfig{});
    const auto cal = perf::default_sne_calibration();
    o.require(perf::render_csv(perf::sne_report(r1.layers, cal)) == perf::render_csv(perf::sne_report(r2.layers, cal)),
              "SNE report differs across runs");
    o.require(events::serialize_event_file({132, 104, r1.output_frames}) ==
                  events::serialize_event_file({132, 104, r2.output_frames}),
              "SNE output differs across runs");
    const auto c = verify::random_cutie_case(rng);
    const std::vector<cutie::CutieLayerConfig> one{c.layer};
    const auto c1 = cutie::run_network(one, c.input, {});
    const auto c2 = cutie::run_network(one, c.input, {});
    o.require(cutie::serialize_fmap(c1.output) == cutie::serialize_fmap(c2.output) &&
                  perf::render_csv(perf::cutie_report(c1.stats, {})) ==
                      perf::render_csv(perf::cutie_report(c2.stats, {})),
              "CUTIE run differs across runs");

    // The CLI path end to end.
    const auto dir = fs::temp_directory_path() / "kraken_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ostringstream out, err;
    for (const char* name : {"x.kevt", "y.kevt"}) {
        const int rc = cli::run({"gen-events", "--out", (dir / name).string(), "--seed", "5"}, out, err);
        o.require(rc == 0, "gen-events failed: " + err.str());
    }
    o.require(io::read_file(dir / "x.kevt") == io::read_file(dir / "y.kevt"), "gen-events not byte-identical");
    o.require(events::read_event_file(dir / "x.kevt").stream.size() == 300, "gen-events default frames");
    fs::remove_all(dir);

    if (o.ok) o.detail = "300 frames/s, seeded runs byte-identical, KEVT/KSNW/KCTW/KCTF round-trip";
    return o;
}

// -- 9 ----------------------------------------------------------------------
Outcome latency_sweep() {
    Outcome o;
    const auto dir = fs::temp_directory_path() / "kraken_acceptance_sweep";
    fs::create_directories(dir);
    const auto csv = dir / "sweep.csv";
    const double c0 = 10e-6, c1 = 100e-9;
    std::ostringstream out, err;
    const int rc = cli::run({"latency-sweep", "--out", csv.string(), "--c0", str(c0), "--c1", str(c1)}, out, err);
    o.require(rc == 0, "latency-sweep failed: " + err.str());
    std::istringstream in(io::read_text_file(csv));
    fs::remove_all(dir);
    std::string line;
    std::getline(in, line);
    o.require(line == "events,latency_s", "header");
    std::vector<double> n, t;
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        n.push_back(std::stod(line.substr(0, comma)));
        t.push_back(std::stod(line.substr(comma + 1)));
    }
    o.require(n.size() == 3432 && n.front() == 1 && n.back() == 3432, "span is not 1..3432");
    for (std::size_t i = 1; i < t.size(); ++i) o.require(t[i] > t[i - 1], "not monotone");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n.size(); ++i) {
        mx += n[i];
        my += t[i];
    }
    mx /= double(n.size());
    my /= double(n.size());
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n.size(); ++i) {
        sxx += (n[i] - mx) * (n[i] - mx);
        sxy += (n[i] - mx) * (t[i] - my);
    }
    const double f1 = sxy / sxx, f0 = my - f1 * mx;
    const double r0 = std::abs(f0 - c0) / c0, r1 = std::abs(f1 - c1) / c1;
    o.require(r0 <= 1e-9 && r1 <= 1e-9, "regression error c0 " + str(r0) + ", c1 " + str(r1));
    if (o.ok) o.detail = "1..3432 monotone; relative error c0 " + str(r0) + ", c1 " + str(r1);
    return o;
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "trit codec", 1.0, codec},
        {2, "CUTIE peak MAC rate", 10.0, peak_rate},
        {3, "CUTIE functional equivalence", 60.0, cutie_equivalence},
        {4, "SNE oracle equivalence", 120.0, sne_equivalence},
        {5, "SNE cycle and write counters", 0.0, sne_cost_rule},
        {6, "SNE energy proportionality", 10.0, energy_proportionality},
        {7, "CUTIE accumulator bound", 0.0, accumulator_bound},
        {8, "determinism and file formats", 0.0, determinism_and_formats},
        {9, "latency sweep", 0.0, latency_sweep},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.body();
        } catch (const std::exception& e) {
            o.ok = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.limit_s > 0 && dt > c.limit_s && o.ok) {
            o.ok = false;
            o.detail = "took " + str(dt) + " s, limit " + str(c.limit_s) + " s";
        }
        if (!o.ok) ++failed;
        std::cout << (o.ok ? "PASS" : "FAIL") << " [" << c.id << "] " << c.title << ": " << o.detail << " ("
                  << str(dt) << " s)\n";
    }
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << '\n';
    return failed == 0 ? 0 : 1;
}
