#include "kraken/events.hpp"

#include "kraken/error.hpp"
#include "kraken/io.hpp"
#include "kraken/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace kraken::events {

namespace {

constexpr std::uint32_t kTimeBit = 1u << 31;
constexpr std::uint32_t kSpikeReservedMask = 0x7Fu << 24;
constexpr std::uint32_t kTimeReservedMask = 0x7u << 28;
constexpr std::uint32_t kTimestampMask = kTimestampLimit - 1;

void check_spike_fields(const SpikeEvent& s) {
    if (s.x > kMaxCoordinate || s.y > kMaxCoordinate || s.c > kMaxCoordinate) {
        throw Error(ErrorCode::FieldOverflow,
                    "spike (" + std::to_string(s.x) + "," + std::to_string(s.y) + "," +
                        std::to_string(s.c) + ") exceeds 8-bit fields");
    }
}

void check_timestamp(std::uint32_t ts) {
    if (ts >= kTimestampLimit) {
        throw Error(ErrorCode::FieldOverflow,
                    "timestamp " + std::to_string(ts) + " does not fit 28 bits");
    }
}

}  // namespace

void SensorConfig::validate() const {
    if (width == 0 || height == 0 || width > kMaxCoordinate + 1 || height > kMaxCoordinate + 1) {
        throw Error(ErrorCode::InvalidConfig, "sensor dimensions must be in 1..256");
    }
    if (max_events_per_frame < 1 ||
        max_events_per_frame > static_cast<std::uint32_t>(width) * height) {
        throw Error(ErrorCode::InvalidConfig, "max_events_per_frame must be in 1..width*height");
    }
    if (!(frame_request_rate_hz > 0.0) || !std::isfinite(frame_request_rate_hz)) {
        throw Error(ErrorCode::InvalidConfig, "frame_request_rate_hz must be positive");
    }
    // Frame boundaries must land on distinct timestamps.
    if (timestamp_units_per_second < frame_request_rate_hz) {
        throw Error(ErrorCode::InvalidConfig,
                    "timestamp_units_per_second must be >= frame_request_rate_hz");
    }
}

void LatencyModel::validate() const {
    if (!(c0 >= 0.0) || !(c1 > 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "latency model needs c0 >= 0 and c1 > 0");
    }
}

std::uint32_t encode_event(const Event& event) {
    if (const auto* s = std::get_if<SpikeEvent>(&event)) {
        check_spike_fields(*s);
        return (std::uint32_t{s->c} << 16) | (std::uint32_t{s->y} << 8) | std::uint32_t{s->x};
    }
    const auto& t = std::get<TimeEvent>(event);
    check_timestamp(t.timestamp);
    return kTimeBit | t.timestamp;
}

Event decode_event(std::uint32_t word) {
    if (word & kTimeBit) {
        if (word & kTimeReservedMask) {
            throw Error(ErrorCode::ReservedBitsSet, "time word has bits[30:28] set");
        }
        return TimeEvent{word & kTimestampMask};
    }
    if (word & kSpikeReservedMask) {
        throw Error(ErrorCode::ReservedBitsSet, "spike word has bits[30:24] set");
    }
    return SpikeEvent{static_cast<std::uint16_t>(word & 0xFFu),
                      static_cast<std::uint16_t>((word >> 8) & 0xFFu),
                      static_cast<std::uint16_t>((word >> 16) & 0xFFu)};
}

std::vector<Event> flatten(const EventStream& stream) {
    std::vector<Event> out;
    std::size_t total = stream.size();
    for (const auto& f : stream) total += f.spikes.size();
    out.reserve(total);
    for (const auto& f : stream) {
        out.emplace_back(TimeEvent{f.timestamp});
        for (const auto& s : f.spikes) out.emplace_back(s);
    }
    return out;
}

EventStream group_frames(std::span<const Event> events) {
    EventStream stream;
    for (const auto& e : events) {
        if (const auto* t = std::get_if<TimeEvent>(&e)) {
            if (!stream.empty() && t->timestamp <= stream.back().timestamp) {
                throw Error(ErrorCode::NonMonotoneTimestamp,
                            "timestamp " + std::to_string(t->timestamp) + " after " +
                                std::to_string(stream.back().timestamp));
            }
            stream.push_back(EventFrame{t->timestamp, {}});
        } else {
            if (stream.empty()) {
                throw Error(ErrorCode::MalformedStream, "spike event before first time event");
            }
            stream.back().spikes.push_back(std::get<SpikeEvent>(e));
        }
    }
    return stream;
}

void check_stream(const EventStream& stream) {
    for (std::size_t i = 0; i < stream.size(); ++i) {
        check_timestamp(stream[i].timestamp);
        if (i > 0 && stream[i].timestamp <= stream[i - 1].timestamp) {
            throw Error(ErrorCode::NonMonotoneTimestamp,
                        "frame " + std::to_string(i) + " timestamp does not increase");
        }
        for (const auto& s : stream[i].spikes) check_spike_fields(s);
    }
}

EventStream synth_dvs_stream(const SensorConfig& cfg, double activity, double duration_s,
                             std::uint64_t seed) {
    if (!(activity >= 0.0 && activity <= 1.0)) {
        throw Error(ErrorCode::InvalidActivity, "activity must be within [0, 1]");
    }
    cfg.validate();
    if (!(duration_s >= 0.0)) throw Error(ErrorCode::InvalidConfig, "duration must be >= 0");

    // The epsilon keeps e.g. 0.7 s * 300 Hz from flooring to 209.
    const auto n_frames =
        static_cast<std::size_t>(std::floor(duration_s * cfg.frame_request_rate_hz + 1e-9));
    const auto n_spikes = static_cast<std::size_t>(
        std::lround(activity * static_cast<double>(cfg.max_events_per_frame)));
    const std::uint32_t n_pixels = std::uint32_t{cfg.width} * cfg.height;

    Rng rng(seed);
    std::vector<std::uint32_t> pixels(n_pixels);
    EventStream stream;
    stream.reserve(n_frames);
    for (std::size_t i = 0; i < n_frames; ++i) {
        const long double ts = std::floor(static_cast<long double>(i) *
                                          cfg.timestamp_units_per_second /
                                          cfg.frame_request_rate_hz + 1e-9L);
        if (ts >= kTimestampLimit) {
            throw Error(ErrorCode::FieldOverflow, "stream duration overflows 28-bit timestamps");
        }
        EventFrame frame{static_cast<std::uint32_t>(ts), {}};

        // Partial Fisher-Yates: sampling pixels without replacement.
        std::iota(pixels.begin(), pixels.end(), 0u);
        for (std::size_t k = 0; k < n_spikes; ++k) {
            const auto j = k + uniform_below(rng, n_pixels - k);
            std::swap(pixels[k], pixels[j]);
        }
        std::vector<std::uint32_t> chosen(pixels.begin(), pixels.begin() + n_spikes);
        std::vector<std::uint16_t> polarity(n_spikes);
        for (auto& p : polarity) p = static_cast<std::uint16_t>(rng() & 1u);
        std::sort(chosen.begin(), chosen.end());

        frame.spikes.reserve(n_spikes);
        for (std::size_t k = 0; k < n_spikes; ++k) {
            frame.spikes.push_back(SpikeEvent{static_cast<std::uint16_t>(chosen[k] % cfg.width),
                                              static_cast<std::uint16_t>(chosen[k] / cfg.width),
                                              polarity[k]});
        }
        stream.push_back(std::move(frame));
    }
    return stream;
}

double frame_latency(const LatencyModel& model, std::size_t event_count) {
    return model.c0 + model.c1 * static_cast<double>(event_count);
}

double frame_latency(const LatencyModel& model, const EventFrame& frame) {
    return frame_latency(model, frame.spikes.size());
}

std::vector<std::uint8_t> serialize_event_file(const EventFile& file) {
    check_stream(file.stream);
    io::ByteWriter w;
    w.put_magic("KEVT");
    w.put_u16(kEventFileVersion);
    w.put_u16(file.width);
    w.put_u16(file.height);
    w.put_u32(0);
    for (const auto& e : flatten(file.stream)) w.put_u32(encode_event(e));
    return w.take();
}

EventFile parse_event_file(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    r.expect_magic("KEVT");
    const auto version = r.get_u16();
    if (version != kEventFileVersion) {
        throw Error(ErrorCode::VersionMismatch, "KEVT version " + std::to_string(version));
    }
    EventFile file;
    file.width = r.get_u16();
    file.height = r.get_u16();
    if (r.get_u32() != 0) throw Error(ErrorCode::ReservedBitsSet, "KEVT reserved header field");
    if (r.remaining() % 4 != 0) {
        throw Error(ErrorCode::TruncatedRecord, "event payload is not a whole number of words");
    }
    std::vector<Event> events;
    events.reserve(r.remaining() / 4);
    while (!r.done()) {
        auto e = decode_event(r.get_u32());
        if (const auto* s = std::get_if<SpikeEvent>(&e)) {
            if (s->x >= file.width || s->y >= file.height) {
                throw Error(ErrorCode::GeometryMismatch, "spike outside sensor bounds");
            }
        }
        events.push_back(e);
    }
    file.stream = group_frames(events);
    return file;
}

void write_event_file(const std::filesystem::path& path, const EventFile& file) {
    io::write_file_atomic(path, serialize_event_file(file));
}

EventFile read_event_file(const std::filesystem::path& path) {
    return parse_event_file(io::read_file(path));
}

}  // namespace kraken::events
