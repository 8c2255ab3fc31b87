#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "wits/events.hpp"

using namespace wits;

namespace {

ContextEvent ev(Timestamp ts, std::string entity, std::string attr, Value v,
                EventKind kind = EventKind::location) {
    return ContextEvent{ts, kind, std::move(entity), std::move(attr), std::move(v)};
}

// Linear scans over a plain vector.
std::optional<Value> scan_state(const std::vector<ContextEvent>& es, const std::string& e, const std::string& a,
                                Timestamp t) {
    std::optional<Value> out;
    for (const auto& x : es)
        if (x.ts <= t && x.entity == e && x.attribute == a) out = x.value;
    return out;
}

std::optional<Timestamp> scan_held(const std::vector<ContextEvent>& es, const std::string& e, const std::string& a,
                                   const Value& v, Timestamp t) {
    std::optional<Timestamp> run;
    for (const auto& x : es) {
        if (x.ts > t || x.entity != e || x.attribute != a) continue;
        if (x.value == v) {
            if (!run) run = x.ts;
        } else {
            run.reset();
        }
    }
    if (!run) return std::nullopt;
    return t - *run;
}

std::vector<ContextEvent> random_trace(std::uint64_t seed, int n) {
    std::mt19937_64 rng(seed);
    const char* entities[] = {"Toilet", "Kitchen", "TV", "Couch"};
    const char* attrs[] = {"Occupied", "Presence", "ON"};
    std::uniform_int_distribution<int> pick_e(0, 3), pick_a(0, 2), step(0, 3), pick_v(0, 2);
    std::vector<ContextEvent> out;
    Timestamp t = 0;
    for (int i = 0; i < n; ++i) {
        t += step(rng) * 1000;
        const int v = pick_v(rng);
        Value val = v == 0 ? Value(true) : v == 1 ? Value(false) : Value(std::string("idle"));
        out.push_back(ev(t, entities[pick_e(rng)], attrs[pick_a(rng)], val));
    }
    return out;
}

}  // namespace

TEST(Timeline, IngestAppendsInOrder) {
    EventTimeline tl;
    EXPECT_TRUE(tl.empty());
    tl.ingest(ev(5, "Kitchen", "Presence", true));
    ASSERT_EQ(tl.size(), 1u);
    tl.ingest(ev(5, "Kitchen", "Presence", false));
    tl.ingest(ev(5, "TV", "ON", true));
    ASSERT_EQ(tl.size(), 3u);
    EXPECT_EQ(std::get<bool>(tl.events()[1].value), false);
    EXPECT_EQ(std::get<bool>(*tl.state_at("Kitchen", "Presence", 5)), false);
}

TEST(Timeline, OutOfOrderRejected) {
    EventTimeline tl;
    tl.ingest(ev(10, "TV", "ON", true));
    try {
        tl.ingest(ev(9, "TV", "ON", false));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::out_of_order);
    }
    EXPECT_THROW(tl.ingest(ev(11, "", "ON", true)), Error);
}

TEST(Timeline, ReorderBuffer) {
    EventTimeline tl(TimelineOptions{1000});
    tl.ingest(ev(500, "A", "x", 1.0));
    tl.ingest(ev(100, "A", "x", 2.0));
    EXPECT_EQ(tl.size(), 0u);
    tl.ingest(ev(1200, "A", "x", 3.0));  // commits everything at ts <= 200
    ASSERT_EQ(tl.size(), 1u);
    EXPECT_EQ(tl.events()[0].ts, 100);
    tl.ingest(ev(2000, "A", "x", 4.0));  // commits ts <= 1000
    EXPECT_EQ(tl.size(), 2u);
    EXPECT_THROW(tl.ingest(ev(300, "A", "x", 5.0)), Error);
    tl.flush();
    ASSERT_EQ(tl.size(), 4u);
    for (std::size_t i = 1; i < tl.size(); ++i) EXPECT_LE(tl.events()[i - 1].ts, tl.events()[i].ts);
}

TEST(StateAt, UnknownAndExact) {
    EventTimeline tl;
    EXPECT_FALSE(tl.state_at("Toilet", "Occupied", 0));
    tl.ingest(ev(1000, "Toilet", "Occupied", true));
    EXPECT_FALSE(tl.state_at("Toilet", "Occupied", 999));
    EXPECT_EQ(std::get<bool>(*tl.state_at("Toilet", "Occupied", 1000)), true);
}

TEST(HeldSince, Basics) {
    const Timestamp ten = 10 * 3600 * 1000;
    EventTimeline tl;
    tl.ingest(ev(ten, "Toilet", "Occupied", true));
    EXPECT_EQ(*tl.held_since("Toilet", "Occupied", true, ten + 31 * 60000), 31 * 60000);
    EXPECT_FALSE(tl.held_since("Toilet", "Occupied", false, ten + 60000));
    // Repeated level records do not restart the run; a change does.
    tl.ingest(ev(ten + 5 * 60000, "Toilet", "Occupied", true));
    EXPECT_EQ(*tl.held_since("Toilet", "Occupied", true, ten + 20 * 60000), 20 * 60000);
    tl.ingest(ev(ten + 15 * 60000, "Toilet", "Occupied", false));
    tl.ingest(ev(ten + 16 * 60000, "Toilet", "Occupied", true));
    EXPECT_EQ(*tl.held_since("Toilet", "Occupied", true, ten + 31 * 60000), 15 * 60000);
    EXPECT_FALSE(tl.held_since("Kitchen", "Presence", true, ten));
}

TEST(Timeline, MatchesLinearScanOracle) {
    const auto trace = random_trace(17, 10000);
    EventTimeline tl;
    for (const auto& e : trace) tl.ingest(e);
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<Timestamp> when(-1000, trace.back().ts + 5000);
    const char* entities[] = {"Toilet", "Kitchen", "TV", "Couch", "Porch"};
    const char* attrs[] = {"Occupied", "Presence", "ON"};
    // The oracle scans are O(n); a few hundred queries keep this quick.
    for (int q = 0; q < 300; ++q) {
        const Timestamp t = when(rng);
        const std::string e = entities[q % 5], a = attrs[(q / 5) % 3];
        EXPECT_EQ(tl.state_at(e, a, t), scan_state(trace, e, a, t));
        EXPECT_EQ(tl.held_since(e, a, true, t), scan_held(trace, e, a, true, t));
        EXPECT_EQ(tl.held_since(e, a, std::string("idle"), t), scan_held(trace, e, a, std::string("idle"), t));
    }
}

TEST(Timeline, IngestIsAppendOnlyForEarlierQueries) {
    const auto trace = random_trace(23, 400);
    EventTimeline tl;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const Timestamp before = trace[i].ts - 1;
        const auto s0 = tl.state_at("TV", "ON", before);
        const auto h0 = tl.held_since("TV", "ON", true, before);
        tl.ingest(trace[i]);
        EXPECT_EQ(tl.state_at("TV", "ON", before), s0);
        EXPECT_EQ(tl.held_since("TV", "ON", true, before), h0);
    }
}

TEST(EventsJson, RoundTripIsBitExact) {
    std::vector<ContextEvent> es{
        ev(0, "Activity", "Sleeping", true, EventKind::activity),
        ev(1, "Kitchen", "Presence", false),
        ev(2, "Thermo", "Temp", 0.1 + 0.2, EventKind::object_use),
        ev(3, "Lights", "State", std::string("dim \"warm\""), EventKind::actuation),
        ev(4, "X", "y", -1.0e-300),
    };
    std::ostringstream out;
    write_events_jsonl(out, es);
    std::istringstream in(out.str());
    const auto back = read_events_jsonl(in);
    EXPECT_EQ(back, es);
    std::ostringstream again;
    write_events_jsonl(again, back);
    EXPECT_EQ(again.str(), out.str());
}

TEST(EventsJson, Errors) {
    std::istringstream bad_kind(R"({"ts":1,"kind":"weather","entity":"a","attribute":"b","value":true})");
    EXPECT_THROW(read_events_jsonl(bad_kind), Error);
    std::istringstream bad_json("{\"ts\":1,");
    EXPECT_THROW(read_events_jsonl(bad_json), Error);
    std::istringstream bad_value(R"({"ts":1,"kind":"location","entity":"a","attribute":"b","value":[1]})");
    EXPECT_THROW(read_events_jsonl(bad_value), Error);
}
