#include "cli.hpp"

#include "kraken/cutie.hpp"
#include "kraken/error.hpp"
#include "kraken/events.hpp"
#include "kraken/io.hpp"
#include "kraken/perf.hpp"
#include "kraken/sne.hpp"
#include "kraken/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <thread>

namespace kraken::cli {

namespace fs = std::filesystem;
using nlohmann::json;

unsigned batch_threads() {
    if (const char* env = std::getenv("KRAKEN_SIM_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n > 0) return static_cast<unsigned>(n);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

// Results land at their input index, so output order never depends on
// which worker finishes first.
template <typename Result>
std::vector<Result> run_batch(std::size_t n, const std::function<Result(std::size_t)>& job) {
    std::vector<std::optional<Result>> slots(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (auto i = next++; i < n; i = next++) {
            try {
                slots[i] = job(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const auto n_threads = std::min<std::size_t>(batch_threads(), n);
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    std::vector<Result> out;
    for (std::size_t i = 0; i < n; ++i) {
        if (errors[i]) std::rethrow_exception(errors[i]);
        out.push_back(std::move(*slots[i]));
    }
    return out;
}

std::string batch_csv(const std::vector<perf::EnergyReport>& reports) {
    if (reports.size() == 1) return perf::render_csv(reports.front());
    std::string out(perf::kCsvHeader);
    out += '\n';
    for (std::size_t i = 0; i < reports.size(); ++i) {
        out += perf::render_csv_rows(reports[i], "in" + std::to_string(i) + "/");
    }
    return out;
}

perf::Calibration load_calibration(const std::string& path) {
    return path.empty() ? perf::Calibration{} : perf::read_calibration_file(path);
}

void print_summary(std::ostream& out, const perf::EnergyReport& rep, std::size_t index, std::size_t n) {
    if (n > 1) out << "input " << index << ": ";
    out << "cycles=" << rep.total.cycles << " seconds=" << perf::format_double(rep.total.seconds)
        << " inf/s=" << perf::format_double(rep.inferences_per_second)
        << " joules=" << perf::format_double(rep.total.joules);
    if (rep.measured_joules_per_inference) {
        out << " measured_joules=" << perf::format_double(*rep.measured_joules_per_inference);
        if (rep.model_gap) out << " (model-vs-measurement gap)";
    }
    out << '\n';
}

// --- gen-events -----------------------------------------------------------

struct GenEventsArgs {
    std::string out;
    events::SensorConfig sensor;
    double activity = 0.2;
    double duration = 1.0;
    std::uint64_t seed = 1;
};

void add_sensor_flags(CLI::App* cmd, events::SensorConfig& s) {
    cmd->add_option("--sensor-width", s.width, "Sensor width in pixels")->capture_default_str();
    cmd->add_option("--sensor-height", s.height, "Sensor height in pixels")->capture_default_str();
    cmd->add_option("--fps", s.frame_request_rate_hz, "Event-frame request rate")->capture_default_str();
    cmd->add_option("--max-events", s.max_events_per_frame, "Events per frame at activity 1")
        ->capture_default_str();
    cmd->add_option("--timestamp-units", s.timestamp_units_per_second, "Timestamp units per second")
        ->capture_default_str();
}

int cmd_gen_events(const GenEventsArgs& a, std::ostream& out) {
    auto stream = events::synth_dvs_stream(a.sensor, a.activity, a.duration, a.seed);
    std::size_t spikes = 0;
    for (const auto& f : stream) spikes += f.spikes.size();
    events::write_event_file(a.out, {a.sensor.width, a.sensor.height, std::move(stream)});
    out << "wrote " << a.out << ": " << static_cast<std::size_t>(std::floor(a.duration * a.sensor.frame_request_rate_hz + 1e-9))
        << " frames, " << spikes << " spikes\n";
    return 0;
}

// --- sne run ----------------------------------------------------------------

struct SneRunArgs {
    std::string net;
    std::vector<std::string> events;
    std::string hw;
    std::string stats;
    std::string calibration;
    std::string out;
};

int cmd_sne_run(const SneRunArgs& a, std::ostream& out) {
    const auto layers = sne::read_network_file(a.net);
    const auto hw = a.hw.empty() ? sne::HwConfig{} : sne::read_hw_file(a.hw);
    const auto cal = load_calibration(a.calibration);
    if (!a.out.empty() && a.events.size() != 1) {
        throw Error(ErrorCode::InvalidConfig, "--out needs exactly one --events input");
    }
    struct Outcome {
        sne::SneNetworkResult result;
        perf::EnergyReport report;
    };
    auto outcomes = run_batch<Outcome>(a.events.size(), [&](std::size_t i) {
        const auto file = events::read_event_file(a.events[i]);
        auto result = sne::run_network(layers, events::flatten(file.stream), hw);
        auto report = perf::sne_report(result.layers, cal.sne);
        return Outcome{std::move(result), std::move(report)};
    });

    std::vector<perf::EnergyReport> reports;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        print_summary(out, outcomes[i].report, i, outcomes.size());
        reports.push_back(outcomes[i].report);
    }
    if (!a.stats.empty()) io::write_file_atomic(a.stats, batch_csv(reports));
    if (!a.out.empty()) {
        const auto& last = layers.back();
        events::write_event_file(a.out, {static_cast<std::uint16_t>(last.out_width()),
                                         static_cast<std::uint16_t>(last.out_height()),
                                         outcomes.front().result.output_frames});
    }
    return 0;
}

// --- cutie run --------------------------------------------------------------

struct CutieRunArgs {
    std::string net;
    std::vector<std::string> inputs;
    std::string hw;
    std::string stats;
    std::string calibration;
    std::string out;
};

int cmd_cutie_run(const CutieRunArgs& a, std::ostream& out) {
    const auto layers = cutie::read_weight_blob(a.net);
    const auto hw = a.hw.empty() ? cutie::CutieHwConfig{} : cutie::read_hw_file(a.hw);
    const auto cal = load_calibration(a.calibration);
    if (!a.out.empty() && a.inputs.size() != 1) {
        throw Error(ErrorCode::InvalidConfig, "--out needs exactly one --input");
    }
    struct Outcome {
        cutie::CutieNetworkResult result;
        perf::EnergyReport report;
    };
    auto outcomes = run_batch<Outcome>(a.inputs.size(), [&](std::size_t i) {
        auto result = cutie::run_network(layers, cutie::read_fmap(a.inputs[i]), hw);
        auto report = perf::cutie_report(result.stats, cal.cutie);
        return Outcome{std::move(result), std::move(report)};
    });
    std::vector<perf::EnergyReport> reports;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        print_summary(out, outcomes[i].report, i, outcomes.size());
        reports.push_back(outcomes[i].report);
    }
    if (!a.stats.empty()) io::write_file_atomic(a.stats, batch_csv(reports));
    if (!a.out.empty()) cutie::write_fmap(a.out, outcomes.front().result.output);
    return 0;
}

// --- verify -----------------------------------------------------------------

struct VerifyArgs {
    std::string scope = "all";
    std::uint64_t seed = 1;
    std::size_t sne_cases = 500;
    std::size_t cutie_cases = 1000;
    bool inject_fault = false;
};

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
    verify::Options opt;
    opt.scope = verify::parse_scope(a.scope);
    opt.seed = a.seed;
    opt.sne_cases = a.sne_cases;
    opt.cutie_cases = a.cutie_cases;
    opt.inject_fault = a.inject_fault;
    bool ok = true;
    for (const auto& r : verify::run(opt)) {
        out << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")\n";
        ok = ok && r.passed;
    }
    out << (ok ? "all checks passed\n" : "verification FAILED\n");
    return ok ? 0 : 1;
}

// --- latency-sweep ----------------------------------------------------------

struct SweepArgs {
    std::string out;
    events::LatencyModel model;
    std::uint32_t max_events = 132 * 104 / 4;
};

int cmd_latency_sweep(const SweepArgs& a, std::ostream& out) {
    a.model.validate();
    if (a.max_events < 1) throw Error(ErrorCode::InvalidConfig, "--max-events must be >= 1");
    std::string csv = "events,latency_s\n";
    for (std::uint32_t n = 1; n <= a.max_events; ++n) {
        csv += std::to_string(n);
        csv += ',';
        csv += perf::format_double(events::frame_latency(a.model, n));
        csv += '\n';
    }
    io::write_file_atomic(a.out, csv);
    out << "wrote " << a.out << ": " << a.max_events << " points\n";
    return 0;
}

// --- pack-weights -----------------------------------------------------------

struct PackArgs {
    std::string engine;
    std::string in;
    std::string out;
};

json parse_json(const std::string& path) {
    try {
        return json::parse(io::read_text_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, path + ": " + e.what());
    }
}

// Input: the network description with an inline "weights" array per layer.
// Output: the KSNW blob at --out and, next to it, a description that
// references the blob (`<out>.json`).
void pack_sne(const json& doc, const std::string& out_path) {
    std::vector<sne::SneLayerConfig> layers;
    for (const auto& jl : doc.at("layers")) {
        sne::SneLayerConfig l;
        const auto kind = jl.at("kind").get<std::string>();
        if (kind != "conv3x3" && kind != "linear") throw Error(ErrorCode::ParseError, "unknown layer kind '" + kind + "'");
        l.kind = kind == "linear" ? sne::LayerKind::Linear : sne::LayerKind::Conv3x3;
        l.in_channels = jl.at("in_channels").get<std::uint32_t>();
        l.out_channels = jl.at("out_channels").get<std::uint32_t>();
        l.in_width = jl.at("in_width").get<std::uint32_t>();
        l.in_height = jl.at("in_height").get<std::uint32_t>();
        l.lif.threshold = jl.at("threshold").get<int>();
        l.lif.decay_tau = jl.at("decay_tau").get<double>();
        l.lif.lut_depth = jl.at("lut_depth").get<std::uint32_t>();
        for (int w : jl.at("weights").get<std::vector<int>>()) {
            if (w < sne::kWeightMin || w > sne::kWeightMax) {
                throw Error(ErrorCode::InvalidConfig, "weight " + std::to_string(w) + " outside [-8, 7]");
            }
            l.weights.push_back(static_cast<std::int8_t>(w));
        }
        l.validate();
        layers.push_back(std::move(l));
    }
    sne::check_chain(layers);
    const fs::path out(out_path);
    auto json_path = out;
    json_path += ".json";
    sne::write_network_file(json_path, out.filename().string(), layers);
}

void pack_cutie(const json& doc, const std::string& out_path) {
    std::vector<cutie::CutieLayerConfig> layers;
    for (const auto& jl : doc.at("layers")) {
        cutie::CutieLayerConfig l;
        l.in_channels = jl.at("in_channels").get<std::uint32_t>();
        l.out_channels = jl.at("out_channels").get<std::uint32_t>();
        l.in_width = jl.at("in_width").get<std::uint32_t>();
        l.in_height = jl.at("in_height").get<std::uint32_t>();
        l.stride = jl.value("stride", 1u);
        l.padding = jl.value("padding", 1u);
        const auto pool = jl.value("pooling", std::string("none"));
        if (pool != "none" && pool != "max2x2") throw Error(ErrorCode::ParseError, "unknown pooling '" + pool + "'");
        l.pooling = pool == "max2x2" ? cutie::Pooling::Max2x2 : cutie::Pooling::None;
        for (const auto& th : jl.at("thresholds")) {
            l.thresholds.push_back({th.at(0).get<std::int16_t>(), th.at(1).get<std::int16_t>()});
        }
        std::vector<cutie::Trit> trits;
        for (int v : jl.at("weights").get<std::vector<int>>()) trits.push_back(cutie::to_trit(v));
        l.weights = cutie::TritTensor({l.out_channels, l.in_channels, 3, 3}, std::move(trits));
        l.validate();
        layers.push_back(std::move(l));
    }
    cutie::write_weight_blob(out_path, layers);
}

int cmd_pack_weights(const PackArgs& a, std::ostream& out) {
    const auto doc = parse_json(a.in);
    try {
        if (a.engine == "sne") {
            pack_sne(doc, a.out);
        } else {
            pack_cutie(doc, a.out);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, a.in + ": " + e.what());
    }
    out << "wrote " << a.out << '\n';
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Kraken SNE/CUTIE functional and performance simulator", "kraken-sim"};
    app.require_subcommand(1);

    GenEventsArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-events", "Write a synthetic DVS event stream");
    gen_cmd->add_option("--out", gen.out, "Output event file")->required();
    add_sensor_flags(gen_cmd, gen.sensor);
    gen_cmd->add_option("--activity", gen.activity, "Fraction of max events per frame")->capture_default_str();
    gen_cmd->add_option("--duration", gen.duration, "Simulated seconds")->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed, "RNG seed")->capture_default_str();

    SneRunArgs sne_args;
    auto* sne_cmd = app.add_subcommand("sne", "Sparse neural engine");
    sne_cmd->require_subcommand(1);
    auto* sne_run = sne_cmd->add_subcommand("run", "Run a spiking network on event files");
    sne_run->add_option("--net", sne_args.net, "Network description (JSON)")->required();
    sne_run->add_option("--events", sne_args.events, "Event file(s); several form a batch")->required();
    sne_run->add_option("--hw", sne_args.hw, "Hardware config (JSON)");
    sne_run->add_option("--stats", sne_args.stats, "Per-layer CSV report");
    sne_run->add_option("--calibration", sne_args.calibration, "Calibration file (JSON)");
    sne_run->add_option("--out", sne_args.out, "Output spikes as an event file");

    CutieRunArgs cutie_args;
    auto* cutie_cmd = app.add_subcommand("cutie", "Ternary inference engine");
    cutie_cmd->require_subcommand(1);
    auto* cutie_run = cutie_cmd->add_subcommand("run", "Run a ternary network on feature maps");
    cutie_run->add_option("--net", cutie_args.net, "KCTW weight blob")->required();
    cutie_run->add_option("--input", cutie_args.inputs, "KCTF feature map(s); several form a batch")->required();
    cutie_run->add_option("--hw", cutie_args.hw, "Hardware config (JSON)");
    cutie_run->add_option("--stats", cutie_args.stats, "Per-layer CSV report");
    cutie_run->add_option("--calibration", cutie_args.calibration, "Calibration file (JSON)");
    cutie_run->add_option("--out", cutie_args.out, "Final feature map (KCTF)");

    VerifyArgs ver;
    auto* ver_cmd = app.add_subcommand("verify", "Engine-vs-oracle and codec checks");
    ver_cmd->add_option("--scope", ver.scope, "all | codec | sne | cutie")->capture_default_str();
    ver_cmd->add_option("--seed", ver.seed)->capture_default_str();
    ver_cmd->add_option("--sne-cases", ver.sne_cases)->capture_default_str();
    ver_cmd->add_option("--cutie-cases", ver.cutie_cases)->capture_default_str();
    ver_cmd->add_flag("--inject-fault", ver.inject_fault, "Perturb one threshold on the engine side");

    SweepArgs sweep;
    auto* sweep_cmd = app.add_subcommand("latency-sweep", "Modeled acquisition latency vs event count");
    sweep_cmd->add_option("--out", sweep.out, "Output CSV")->required();
    sweep_cmd->add_option("--c0", sweep.model.c0, "Fixed overhead (s)")->capture_default_str();
    sweep_cmd->add_option("--c1", sweep.model.c1, "Per-event cost (s)")->capture_default_str();
    sweep_cmd->add_option("--max-events", sweep.max_events, "Largest event count")->capture_default_str();

    PackArgs pack;
    auto* pack_cmd = app.add_subcommand("pack-weights", "Pack a JSON weight description into a binary blob");
    pack_cmd->add_option("--engine", pack.engine)->required()->check(CLI::IsMember({"sne", "cutie"}));
    pack_cmd->add_option("--in", pack.in, "JSON with inline weights")->required();
    pack_cmd->add_option("--out", pack.out, "Output blob")->required();

    std::vector<const char*> argv{"kraken-sim"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (*gen_cmd) return cmd_gen_events(gen, out);
        if (*sne_run) return cmd_sne_run(sne_args, out);
        if (*cutie_run) return cmd_cutie_run(cutie_args, out);
        if (*ver_cmd) return cmd_verify(ver, out);
        if (*sweep_cmd) return cmd_latency_sweep(sweep, out);
        if (*pack_cmd) return cmd_pack_weights(pack, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

}  // namespace kraken::cli
