#include "kraken/error.hpp"
#include "kraken/events.hpp"
#include "kraken/random.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

namespace kraken::events {
namespace {

template <typename F>
ErrorCode error_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no kraken::Error thrown";
    return ErrorCode::IoFailure;
}

TEST(EventWord, EncodesKnownWords) {
    EXPECT_EQ(encode_event(SpikeEvent{0, 0, 0}), 0x00000000u);
    EXPECT_EQ(encode_event(TimeEvent{kTimestampLimit - 1}), 0x8FFFFFFFu);
    // (1 << 16) | (103 << 8) | 131
    EXPECT_EQ(encode_event(SpikeEvent{131, 103, 1}), 0x00016783u);
}

TEST(EventWord, RejectsOverflowingFields) {
    EXPECT_EQ(error_of([] { encode_event(SpikeEvent{256, 0, 0}); }), ErrorCode::FieldOverflow);
    EXPECT_EQ(error_of([] { encode_event(SpikeEvent{0, 0, 300}); }), ErrorCode::FieldOverflow);
    EXPECT_EQ(error_of([] { encode_event(TimeEvent{kTimestampLimit}); }), ErrorCode::FieldOverflow);
}

TEST(EventWord, DecodeRejectsReservedBits) {
    EXPECT_EQ(std::get<SpikeEvent>(decode_event(0)), (SpikeEvent{0, 0, 0}));
    EXPECT_EQ(error_of([] { decode_event(0x40000000u); }), ErrorCode::ReservedBitsSet);
    EXPECT_EQ(error_of([] { decode_event(0x01000000u); }), ErrorCode::ReservedBitsSet);
    EXPECT_EQ(error_of([] { decode_event(0x90000000u); }), ErrorCode::ReservedBitsSet);
}

TEST(EventWord, RoundTripsRandomEvents) {
    Rng rng(7);
    for (int i = 0; i < 100000; ++i) {
        Event e;
        if (rng() & 1u) {
            e = TimeEvent{static_cast<std::uint32_t>(uniform_below(rng, kTimestampLimit))};
        } else {
            e = SpikeEvent{static_cast<std::uint16_t>(uniform_below(rng, 256)),
                           static_cast<std::uint16_t>(uniform_below(rng, 256)),
                           static_cast<std::uint16_t>(uniform_below(rng, 256))};
        }
        ASSERT_EQ(decode_event(encode_event(e)), e);
    }
}

TEST(EventWord, EveryValidSpikeWordRoundTrips) {
    for (std::uint32_t w = 0; w < (1u << 24); w += 37) {
        ASSERT_EQ(encode_event(decode_event(w)), w);
        ASSERT_EQ(encode_event(decode_event(w | 0x80000000u)), w | 0x80000000u);
    }
}

TEST(SynthStream, FrameCountFollowsRequestRate) {
    SensorConfig cfg;
    EXPECT_EQ(synth_dvs_stream(cfg, 0.1, 1.0, 3).size(), 300u);
    EXPECT_EQ(synth_dvs_stream(cfg, 0.1, 0.7, 3).size(), 210u);
    EXPECT_EQ(synth_dvs_stream(cfg, 0.1, 0.0, 3).size(), 0u);
}

TEST(SynthStream, ZeroActivityGivesEmptyFrames) {
    for (const auto& f : synth_dvs_stream(SensorConfig{}, 0.0, 0.1, 1)) EXPECT_TRUE(f.spikes.empty());
}

TEST(SynthStream, FullActivityFramesHaveDistinctPixels) {
    SensorConfig cfg;
    ASSERT_EQ(cfg.max_events_per_frame, 3432u);
    const auto stream = synth_dvs_stream(cfg, 1.0, 0.02, 11);
    ASSERT_EQ(stream.size(), 6u);
    for (const auto& f : stream) {
        ASSERT_EQ(f.spikes.size(), 3432u);
        std::set<std::pair<int, int>> seen;
        for (const auto& s : f.spikes) {
            EXPECT_LT(s.x, cfg.width);
            EXPECT_LT(s.y, cfg.height);
            EXPECT_LE(s.c, 1);
            seen.insert({s.x, s.y});
        }
        EXPECT_EQ(seen.size(), 3432u);
        EXPECT_TRUE(std::is_sorted(f.spikes.begin(), f.spikes.end(), raster_less));
    }
}

TEST(SynthStream, TimestampsStepByUnitsPerFrame) {
    SensorConfig cfg;
    cfg.timestamp_units_per_second = 3000;
    const auto stream = synth_dvs_stream(cfg, 0.01, 0.1, 2);
    ASSERT_EQ(stream.size(), 30u);
    for (std::size_t i = 0; i < stream.size(); ++i) EXPECT_EQ(stream[i].timestamp, 10 * i);
}

TEST(SynthStream, DeterministicForSeed) {
    SensorConfig cfg;
    EXPECT_EQ(synth_dvs_stream(cfg, 0.2, 0.05, 42), synth_dvs_stream(cfg, 0.2, 0.05, 42));
    EXPECT_NE(synth_dvs_stream(cfg, 0.2, 0.05, 42), synth_dvs_stream(cfg, 0.2, 0.05, 43));
}

TEST(SynthStream, RejectsBadActivityAndConfig) {
    EXPECT_EQ(error_of([] { synth_dvs_stream(SensorConfig{}, 1.5, 1, 0); }), ErrorCode::InvalidActivity);
    EXPECT_EQ(error_of([] { synth_dvs_stream(SensorConfig{}, -0.1, 1, 0); }), ErrorCode::InvalidActivity);
    SensorConfig cfg;
    cfg.max_events_per_frame = 132 * 104 + 1;
    EXPECT_EQ(error_of([&] { synth_dvs_stream(cfg, 0.5, 1, 0); }), ErrorCode::InvalidConfig);
}

TEST(Latency, AffineInEventCount) {
    LatencyModel m;
    EventFrame empty;
    EXPECT_DOUBLE_EQ(frame_latency(m, empty), m.c0);
    LatencyModel unit{0.0, 1e-6};
    EXPECT_DOUBLE_EQ(frame_latency(unit, 1000), 1e-3);

    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const auto n1 = uniform_below(rng, 3432);
        const auto n2 = n1 + 1 + uniform_below(rng, 100);
        EXPECT_GT(frame_latency(m, n2), frame_latency(m, n1));
    }
}

TEST(Flatten, TimeEventPrecedesEachFrame) {
    EventStream s{{0, {{1, 2, 0}}}, {5, {}}, {9, {{3, 3, 1}, {4, 3, 0}}}};
    const auto flat = flatten(s);
    ASSERT_EQ(flat.size(), 6u);
    EXPECT_EQ(std::get<TimeEvent>(flat[0]).timestamp, 0u);
    EXPECT_EQ(std::get<TimeEvent>(flat[2]).timestamp, 5u);
    EXPECT_EQ(group_frames(flat), s);
}

TEST(Flatten, GroupRejectsLeadingSpikeAndRegression) {
    std::vector<Event> lead{SpikeEvent{0, 0, 0}};
    EXPECT_EQ(error_of([&] { group_frames(lead); }), ErrorCode::MalformedStream);
    std::vector<Event> back{TimeEvent{4}, TimeEvent{4}};
    EXPECT_EQ(error_of([&] { group_frames(back); }), ErrorCode::NonMonotoneTimestamp);
}

class EventFileTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = std::filesystem::temp_directory_path() /
               ("kevt_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        std::filesystem::create_directories(dir_);
    }
    void TearDown() override { std::filesystem::remove_all(dir_); }

    std::filesystem::path dir_;
};

TEST_F(EventFileTest, RoundTripsSynthStream) {
    SensorConfig cfg;
    EventFile f{cfg.width, cfg.height, synth_dvs_stream(cfg, 0.2, 0.1, 9)};
    write_event_file(dir_ / "a.kevt", f);
    EXPECT_EQ(read_event_file(dir_ / "a.kevt").stream, f.stream);
    EXPECT_FALSE(std::filesystem::exists(dir_ / "a.kevt.tmp"));
}

TEST_F(EventFileTest, EmptyStreamIsHeaderOnly) {
    write_event_file(dir_ / "e.kevt", {132, 104, {}});
    EXPECT_EQ(std::filesystem::file_size(dir_ / "e.kevt"), 14u);
    const auto back = read_event_file(dir_ / "e.kevt");
    EXPECT_TRUE(back.stream.empty());
    EXPECT_EQ(back.width, 132);
    EXPECT_EQ(back.height, 104);
}

TEST(EventFile, HeaderLayoutIsLittleEndian) {
    const auto bytes = serialize_event_file({132, 104, {{7, {{1, 2, 1}}}}});
    const std::vector<std::uint8_t> want{'K', 'E', 'V', 'T', 1, 0, 132, 0, 104, 0, 0, 0, 0, 0,
                                         7, 0, 0, 0x80, 1, 2, 1, 0};
    EXPECT_EQ(bytes, want);
}

TEST(EventFile, ParseErrors) {
    auto good = serialize_event_file({132, 104, {{1, {{1, 1, 0}}}, {2, {}}}});

    auto bad_magic = good;
    bad_magic[0] = 'X';
    EXPECT_EQ(error_of([&] { parse_event_file(bad_magic); }), ErrorCode::BadMagic);

    auto bad_version = good;
    bad_version[4] = 2;
    EXPECT_EQ(error_of([&] { parse_event_file(bad_version); }), ErrorCode::VersionMismatch);

    auto truncated = good;
    truncated.pop_back();
    EXPECT_EQ(error_of([&] { parse_event_file(truncated); }), ErrorCode::TruncatedRecord);
    EXPECT_EQ(error_of([&] { parse_event_file(std::span(good).first(10)); }), ErrorCode::TruncatedRecord);

    // Second time word (offset 22) rewritten to t=0 < 1.
    auto decreasing = good;
    decreasing[22] = 0;
    EXPECT_EQ(error_of([&] { parse_event_file(decreasing); }), ErrorCode::NonMonotoneTimestamp);

    EXPECT_EQ(error_of([] { serialize_event_file({132, 104, {{5, {}}, {3, {}}}}); }),
              ErrorCode::NonMonotoneTimestamp);
}

TEST(EventFile, RejectsSpikesOutsideSensor) {
    const auto bytes = serialize_event_file({4, 4, {{0, {{5, 0, 0}}}}});
    EXPECT_EQ(error_of([&] { parse_event_file(bytes); }), ErrorCode::GeometryMismatch);
}

}  // namespace
}  // namespace kraken::events
