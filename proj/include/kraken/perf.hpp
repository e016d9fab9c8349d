#pragma once

// Latency / throughput / energy models over the engines' run counters.
//
// SNE energy is affine in processed input events (e0 + e_event * n); the
// active-power x time product is carried alongside as a second column.
// CUTIE energy is active power x time, compared against a measured
// per-inference constant.

#include "kraken/cutie.hpp"
#include "kraken/sne.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kraken::perf {

// Measured operating points the default calibrations reproduce.
inline constexpr double kSneClockHz = 220e6;
inline constexpr double kSneActivePowerW = 98e-3;
inline constexpr double kSneLowActivity = 0.01;
inline constexpr double kSneHighActivity = 0.20;
inline constexpr double kSneLowActivityEnergyJ = 7.5e-6;
inline constexpr double kSneHighActivityEnergyJ = 18e-6;
inline constexpr double kSneLowActivityRate = 20.8e3;  // inf/s
inline constexpr double kSneHighActivityRate = 1.02e3;
inline constexpr double kCutieClockHz = 330e6;
inline constexpr double kCutieActivePowerW = 110e-3;
inline constexpr double kCutieEnergyPerInferenceJ = 6e-6;

struct SneCalibration {
    double clock_hz = kSneClockHz;
    double e0 = 0.0;       // J per inference
    double e_event = 0.0;  // J per input event
    double p_active = kSneActivePowerW;

    void validate() const;
};

struct CutieCalibration {
    double clock_hz = kCutieClockHz;
    double p_active = kCutieActivePowerW;
    double e_inf = kCutieEnergyPerInferenceJ;
    /// Relative |power*time - e_inf| / e_inf above which a report is flagged.
    double gap_tolerance = 0.25;

    void validate() const;
};

struct CalibrationPoint {
    double activity = 0.0;  // fraction of the reference event count
    double energy_j = 0.0;
};

struct SneFit {
    SneCalibration calibration;
    double rms_residual_j = 0.0;
};

/// Least-squares E(n) = e0 + e_event * n with n = activity * events_per_activity.
/// Throws DegenerateFit with fewer than two distinct activities.
SneFit calibrate_sne(std::span<const CalibrationPoint> points, double events_per_activity,
                     const SneCalibration& base = {});

/// Input events of one inference at 100 % activity implied by the 1 %
/// throughput point under the 12-cycle event cost: f / (12 * rate * 0.01).
double reference_events_per_activity(double clock_hz = kSneClockHz,
                                     std::uint32_t cycles_per_event = 12);

/// Fit through the two measured SNE energy points.
SneCalibration default_sne_calibration();

struct ReportRow {
    std::string layer;
    std::uint64_t cycles = 0;
    double seconds = 0.0;
    std::uint64_t events_or_macs = 0;
    double joules = 0.0;
    double joules_power_time = 0.0;

    friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct EnergyReport {
    std::vector<ReportRow> layers;
    ReportRow total;
    double inferences_per_second = 0.0;
    double joules_per_inference = 0.0;
    std::optional<double> measured_joules_per_inference;
    bool model_gap = false;
};

/// seconds = cycles / f; energy = e0 + e_event * input events.
EnergyReport sne_report(std::span<const sne::SneLayerStats> layers, const SneCalibration& cal);
/// seconds = (stall + exposed load + compute) / f; energy = p_active * seconds.
EnergyReport cutie_report(const cutie::CutieRunStats& stats, const CutieCalibration& cal);

inline constexpr std::string_view kCsvHeader =
    "layer,cycles,seconds,events_or_macs,joules,joules_power_time";

/// Header, one line per layer, then the total line (omitted when there are
/// no layers). Doubles print in shortest round-trip form.
std::string render_csv(const EnergyReport& report);
/// Prefixes `layer` names with `prefix` when concatenating batch reports.
std::string render_csv_rows(const EnergyReport& report, std::string_view prefix);
void emit_csv(const std::filesystem::path& path, const EnergyReport& report);
/// Parses rendered CSV back into rows (total included). Throws ParseError.
std::vector<ReportRow> parse_csv(std::string_view text);

struct Calibration {
    SneCalibration sne = default_sne_calibration();
    CutieCalibration cutie;
};

/// JSON with optional "sne" and "cutie" objects. The "sne" object either
/// lists e0/e_event directly or gives "points" plus "events_per_activity".
Calibration read_calibration_file(const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace kraken::perf
