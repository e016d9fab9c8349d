#include "kraken/perf.hpp"

#include "kraken/error.hpp"
#include "kraken/io.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

namespace kraken::perf {

void SneCalibration::validate() const {
    if (!(clock_hz > 0.0) || !(e0 >= 0.0) || !(e_event >= 0.0) || !(p_active >= 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "SNE calibration constants must be non-negative");
    }
}

void CutieCalibration::validate() const {
    if (!(clock_hz > 0.0) || !(p_active >= 0.0) || !(e_inf >= 0.0) || !(gap_tolerance >= 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "CUTIE calibration constants must be non-negative");
    }
}

SneFit calibrate_sne(std::span<const CalibrationPoint> points, double events_per_activity,
                     const SneCalibration& base) {
    if (points.size() < 2) throw Error(ErrorCode::DegenerateFit, "need at least two points");
    if (!(events_per_activity > 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "events_per_activity must be > 0");
    }
    const double n = static_cast<double>(points.size());
    double mean_x = 0.0, mean_y = 0.0;
    for (const auto& p : points) {
        mean_x += p.activity * events_per_activity;
        mean_y += p.energy_j;
    }
    mean_x /= n;
    mean_y /= n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& p : points) {
        const double dx = p.activity * events_per_activity - mean_x;
        sxx += dx * dx;
        sxy += dx * (p.energy_j - mean_y);
    }
    if (!(sxx > 0.0)) throw Error(ErrorCode::DegenerateFit, "calibration activities coincide");

    SneFit fit;
    fit.calibration = base;
    fit.calibration.e_event = sxy / sxx;
    fit.calibration.e0 = mean_y - fit.calibration.e_event * mean_x;
    double ss = 0.0;
    for (const auto& p : points) {
        const double r = fit.calibration.e0 +
                         fit.calibration.e_event * p.activity * events_per_activity - p.energy_j;
        ss += r * r;
    }
    fit.rms_residual_j = std::sqrt(ss / n);
    return fit;
}

double reference_events_per_activity(double clock_hz, std::uint32_t cycles_per_event) {
    return clock_hz / (cycles_per_event * kSneLowActivityRate * kSneLowActivity);
}

SneCalibration default_sne_calibration() {
    const CalibrationPoint points[] = {{kSneLowActivity, kSneLowActivityEnergyJ},
                                       {kSneHighActivity, kSneHighActivityEnergyJ}};
    return calibrate_sne(points, reference_events_per_activity()).calibration;
}

namespace {

double rate_of(double seconds) {
    return seconds > 0.0 ? 1.0 / seconds : std::numeric_limits<double>::infinity();
}

}  // namespace

EnergyReport sne_report(std::span<const sne::SneLayerStats> layers, const SneCalibration& cal) {
    cal.validate();
    EnergyReport rep;
    rep.total.layer = "total";
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& s = layers[i];
        ReportRow row;
        row.layer = "layer" + std::to_string(i);
        row.cycles = s.cycles;
        row.seconds = static_cast<double>(s.cycles) / cal.clock_hz;
        row.events_or_macs = s.input_events;
        row.joules = cal.e_event * static_cast<double>(s.input_events);
        row.joules_power_time = cal.p_active * row.seconds;
        rep.total.cycles += row.cycles;
        rep.total.events_or_macs += row.events_or_macs;
        rep.layers.push_back(std::move(row));
    }
    rep.total.seconds = static_cast<double>(rep.total.cycles) / cal.clock_hz;
    rep.total.joules = cal.e0 + cal.e_event * static_cast<double>(rep.total.events_or_macs);
    rep.total.joules_power_time = cal.p_active * rep.total.seconds;
    rep.inferences_per_second = rate_of(rep.total.seconds);
    rep.joules_per_inference = rep.total.joules;
    return rep;
}

EnergyReport cutie_report(const cutie::CutieRunStats& stats, const CutieCalibration& cal) {
    cal.validate();
    EnergyReport rep;
    rep.total.layer = "total";
    for (std::size_t i = 0; i < stats.layers.size(); ++i) {
        const auto& s = stats.layers[i];
        ReportRow row;
        row.layer = "layer" + std::to_string(i);
        row.cycles = s.total_cycles();
        row.seconds = static_cast<double>(row.cycles) / cal.clock_hz;
        row.events_or_macs = s.macs_performed;
        row.joules = cal.p_active * row.seconds;
        row.joules_power_time = row.joules;
        rep.total.cycles += row.cycles;
        rep.total.events_or_macs += row.events_or_macs;
        rep.layers.push_back(std::move(row));
    }
    rep.total.seconds = static_cast<double>(rep.total.cycles) / cal.clock_hz;
    rep.total.joules = cal.p_active * rep.total.seconds;
    rep.total.joules_power_time = rep.total.joules;
    rep.inferences_per_second = rate_of(rep.total.seconds);
    rep.joules_per_inference = rep.total.joules;
    rep.measured_joules_per_inference = cal.e_inf;
    if (cal.e_inf > 0.0 && rep.total.cycles > 0) {
        rep.model_gap = std::abs(rep.total.joules - cal.e_inf) / cal.e_inf > cal.gap_tolerance;
    }
    return rep;
}

std::string format_double(double v) {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

namespace {

void append_row(std::string& out, const ReportRow& r, std::string_view prefix) {
    out.append(prefix);
    out.append(r.layer);
    out += ',';
    out += std::to_string(r.cycles);
    out += ',';
    out += format_double(r.seconds);
    out += ',';
    out += std::to_string(r.events_or_macs);
    out += ',';
    out += format_double(r.joules);
    out += ',';
    out += format_double(r.joules_power_time);
    out += '\n';
}

template <typename T>
T parse_number(std::string_view field, std::size_t line) {
    T v{};
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size()) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": bad number '" +
                                               std::string(field) + "'");
    }
    return v;
}

}  // namespace

std::string render_csv_rows(const EnergyReport& report, std::string_view prefix) {
    std::string out;
    if (report.layers.empty()) return out;
    for (const auto& r : report.layers) append_row(out, r, prefix);
    append_row(out, report.total, prefix);
    return out;
}

std::string render_csv(const EnergyReport& report) {
    std::string out(kCsvHeader);
    out += '\n';
    out += render_csv_rows(report, "");
    return out;
}

void emit_csv(const std::filesystem::path& path, const EnergyReport& report) {
    io::write_file_atomic(path, render_csv(report));
}

std::vector<ReportRow> parse_csv(std::string_view text) {
    std::vector<ReportRow> rows;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1) {
            if (line != kCsvHeader) throw Error(ErrorCode::ParseError, "unexpected CSV header");
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string_view> f;
        std::string_view rest(line);
        for (auto pos = rest.find(','); pos != std::string_view::npos; pos = rest.find(',')) {
            f.push_back(rest.substr(0, pos));
            rest.remove_prefix(pos + 1);
        }
        f.push_back(rest);
        if (f.size() != 6) {
            throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": expected 6 fields");
        }
        rows.push_back(ReportRow{std::string(f[0]), parse_number<std::uint64_t>(f[1], lineno),
                                 parse_number<double>(f[2], lineno),
                                 parse_number<std::uint64_t>(f[3], lineno),
                                 parse_number<double>(f[4], lineno),
                                 parse_number<double>(f[5], lineno)});
    }
    if (lineno == 0) throw Error(ErrorCode::ParseError, "empty CSV");
    return rows;
}

Calibration read_calibration_file(const std::filesystem::path& path) {
    using nlohmann::json;
    Calibration cal;
    try {
        const auto doc = json::parse(io::read_text_file(path));
        if (doc.contains("sne")) {
            const auto& s = doc.at("sne");
            SneCalibration base;
            base.clock_hz = s.value("clock_hz", base.clock_hz);
            base.p_active = s.value("p_active", base.p_active);
            if (s.contains("points")) {
                std::vector<CalibrationPoint> points;
                for (const auto& p : s.at("points")) {
                    points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
                }
                const double epa = s.value("events_per_activity",
                                           reference_events_per_activity(base.clock_hz));
                cal.sne = calibrate_sne(points, epa, base).calibration;
            } else {
                base.e0 = s.value("e0", cal.sne.e0);
                base.e_event = s.value("e_event", cal.sne.e_event);
                cal.sne = base;
            }
        }
        if (doc.contains("cutie")) {
            const auto& c = doc.at("cutie");
            cal.cutie.clock_hz = c.value("clock_hz", cal.cutie.clock_hz);
            cal.cutie.p_active = c.value("p_active", cal.cutie.p_active);
            cal.cutie.e_inf = c.value("e_inf", cal.cutie.e_inf);
            cal.cutie.gap_tolerance = c.value("gap_tolerance", cal.cutie.gap_tolerance);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
    cal.sne.validate();
    cal.cutie.validate();
    return cal;
}

}  // namespace kraken::perf
