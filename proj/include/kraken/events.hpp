#pragma once

// Event data model for the spiking engine: COO spike events, 28-bit time
// events, event frames, the synthetic DVS132S source and the acquisition
// latency model.
//
// Word layout (one 32-bit word per event):
//   spike: bit31=0, bits[30:24]=0, bits[23:16]=c, bits[15:8]=y, bits[7:0]=x
//   time:  bit31=1, bits[30:28]=0, bits[27:0]=timestamp

#include <compare>
#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

namespace kraken::events {

inline constexpr std::uint32_t kMaxCoordinate = 255;
inline constexpr std::uint32_t kTimestampLimit = 1u << 28;

struct SpikeEvent {
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    std::uint16_t c = 0;

    friend bool operator==(const SpikeEvent&, const SpikeEvent&) = default;
};

/// Raster order (y, then x, then channel). Streams handed to the engine and
/// the dense reference list the spikes of each frame in this order.
inline bool raster_less(const SpikeEvent& a, const SpikeEvent& b) {
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.c < b.c;
}

struct TimeEvent {
    std::uint32_t timestamp = 0;

    friend bool operator==(const TimeEvent&, const TimeEvent&) = default;
};

using Event = std::variant<SpikeEvent, TimeEvent>;

struct EventFrame {
    std::uint32_t timestamp = 0;
    std::vector<SpikeEvent> spikes;

    friend bool operator==(const EventFrame&, const EventFrame&) = default;
};

using EventStream = std::vector<EventFrame>;

struct SensorConfig {
    std::uint16_t width = 132;
    std::uint16_t height = 104;
    double frame_request_rate_hz = 300.0;
    std::uint32_t max_events_per_frame = 132 * 104 / 4;
    /// One SNN timestep per frame at the default request rate.
    std::uint32_t timestamp_units_per_second = 300;

    /// Throws InvalidConfig.
    void validate() const;
};

struct LatencyModel {
    double c0 = 10e-6;   // fixed overhead, seconds
    double c1 = 100e-9;  // per-event cost, seconds/event

    void validate() const;
};

std::uint32_t encode_event(const Event& event);
Event decode_event(std::uint32_t word);

/// Each frame becomes its TimeEvent followed by its spikes.
std::vector<Event> flatten(const EventStream& stream);

/// Inverse of flatten. Throws MalformedStream if a spike precedes the first
/// time event, NonMonotoneTimestamp if frame times do not strictly increase.
EventStream group_frames(std::span<const Event> events);

/// Throws NonMonotoneTimestamp, FieldOverflow.
void check_stream(const EventStream& stream);

EventStream synth_dvs_stream(const SensorConfig& cfg, double activity, double duration_s,
                             std::uint64_t seed);

double frame_latency(const LatencyModel& model, const EventFrame& frame);
double frame_latency(const LatencyModel& model, std::size_t event_count);

// KEVT file: "KEVT", u16 version=1, u16 width, u16 height, u32 reserved=0,
// then the flattened event words, all little-endian.
inline constexpr std::uint16_t kEventFileVersion = 1;

struct EventFile {
    std::uint16_t width = 0;
    std::uint16_t height = 0;
    EventStream stream;
};

std::vector<std::uint8_t> serialize_event_file(const EventFile& file);
EventFile parse_event_file(std::span<const std::uint8_t> bytes);

void write_event_file(const std::filesystem::path& path, const EventFile& file);
EventFile read_event_file(const std::filesystem::path& path);

}  // namespace kraken::events
