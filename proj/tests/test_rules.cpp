#include <gtest/gtest.h>

#include <random>

#include "rule_gen.hpp"
#include "rule_oracle.hpp"
#include "table2_traces.hpp"
#include "wits/rules.hpp"

using namespace wits;
using namespace wits::rules;
using golden::at;
using golden::kHour;
using golden::kMin;

TEST(Parse, Table2File) {
    const auto rs = golden::table2_rules();
    ASSERT_EQ(rs.rules.size(), 6u);
    const Rule& r3 = rs.rules[2];
    EXPECT_EQ(r3.name, "toilet_alarm");
    ASSERT_EQ(r3.trigger.kind, NodeKind::conjunction);
    ASSERT_EQ(r3.trigger.children.size(), 2u);
    const Expr& p = r3.trigger.children[0];
    EXPECT_EQ(p.kind, NodeKind::predicate);
    EXPECT_EQ(p.entity, "Toilet");
    EXPECT_EQ(p.attribute, "Occupied");
    EXPECT_EQ(p.cmp, Cmp::eq);
    EXPECT_EQ(p.literal, Value(true));
    EXPECT_EQ(r3.trigger.children[1].kind, NodeKind::duration);
    EXPECT_EQ(r3.trigger.children[1].duration, 30 * kMin);
    ASSERT_EQ(r3.actions.size(), 1u);
    EXPECT_EQ(r3.actions[0].type, ActionType::send_alert);

    const Expr& sleeping = rs.rules[1].trigger;
    EXPECT_EQ(sleeping.entity, "Activity");
    EXPECT_EQ(sleeping.attribute, "Sleeping");

    const Expr& window = rs.rules[4].trigger.children[1];
    EXPECT_EQ(window.kind, NodeKind::time_window);
    EXPECT_EQ(window.window_start, 20 * 60);
    EXPECT_EQ(window.window_end, 8 * 60);
}

TEST(Parse, SymbolicNotation) {
    const auto a = parse_expression("Toilet.Occupied=true \xE2\x88\xA7 Duration\xE2\x89\xA5 30mins");
    const auto b = parse_expression("Toilet.Occupied == True AND Duration >= 30 min");
    EXPECT_EQ(a, b);
    const auto c = parse_expression("Porch.Presence == True \xE2\x88\xA7 Time is [8:00pm 8:00am]");
    EXPECT_EQ(c.children[1].window_start, 1200);
    EXPECT_EQ(parse_expression("\xC2\xAC A.b == 1 \xE2\x88\xA8 C.d != \"x\"").kind, NodeKind::disjunction);
}

TEST(Parse, ConstantTrueAlwaysFires) {
    const auto rs = parse_rules("RULE always: WHEN True THEN send_alert(\"tick\")");
    ASSERT_EQ(rs.rules[0].trigger.kind, NodeKind::constant);
    EXPECT_TRUE(rs.rules[0].trigger.constant);
    EventTimeline tl;
    EXPECT_TRUE(evaluate(rs.rules[0].trigger, tl, 0));
    const auto log = run(rs, {at(5, "A", "b", true)});
    ASSERT_EQ(log.size(), 1u);
    EXPECT_EQ(log[0].ts, 5);
}

TEST(Parse, Precedence) {
    const auto e = parse_expression("NOT A.x == True AND B.y == True OR C.z == True");
    ASSERT_EQ(e.kind, NodeKind::disjunction);
    ASSERT_EQ(e.children[0].kind, NodeKind::conjunction);
    EXPECT_EQ(e.children[0].children[0].kind, NodeKind::negation);
}

TEST(Parse, Clocks) {
    auto window = [](const std::string& w) { return parse_expression("A.b == 1 AND Time in " + w).children[1]; };
    EXPECT_EQ(window("[12:00am 12:30pm]").window_start, 0);
    EXPECT_EQ(window("[12:00am 12:30pm]").window_end, 750);
    EXPECT_EQ(window("[20:00, 08:00]").window_start, 1200);
    EXPECT_EQ(window("[7pm 23:59]").window_start, 19 * 60);
    EXPECT_THROW(window("[24:00 01:00]"), ParseError);
    EXPECT_THROW(window("[13:00pm 01:00]"), ParseError);
    EXPECT_THROW(window("[10:7 11:00]"), ParseError);
}

TEST(Parse, Errors) {
    try {
        parse_rules("RULE a: WHEN A.b == True\nTHEN send_alert(\"x\")\nRULE b WHEN True THEN send_alert(\"y\")");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3);
        EXPECT_EQ(e.column(), 8);
        EXPECT_EQ(e.kind(), ErrorKind::parse);
    }
    EXPECT_THROW(parse_rules("RULE a: WHEN True THEN send_alert(\"x\")\nRULE a: WHEN False THEN send_alert(\"y\")"),
                 ParseError);
    EXPECT_THROW(parse_rules(""), ParseError);
    EXPECT_THROW(parse_rules("RULE a: WHEN True THEN"), ParseError);
    EXPECT_THROW(parse_rules("RULE a: WHEN True THEN launch(\"x\")"), ParseError);
    EXPECT_THROW(parse_expression("Duration >= 30min"), ParseError);
    EXPECT_THROW(parse_expression("A.b == 1 OR Duration >= 30min"), ParseError);
    EXPECT_THROW(parse_expression("NOT Duration >= 30min AND A.b == 1"), ParseError);
    EXPECT_THROW(parse_expression("Time in [1:00 2:00] AND Duration >= 5s"), ParseError);
    EXPECT_THROW(parse_expression("A.b == 1 AND Duration >= 30"), ParseError);
    EXPECT_THROW(parse_expression("A.b == 1 AND Duration >= 30 days"), ParseError);
    EXPECT_THROW(parse_expression("A.b == \"open"), ParseError);
    EXPECT_THROW(parse_expression("A.b == 1 $"), ParseError);
    EXPECT_THROW(parse_expression("(A.b == 1"), ParseError);
}

TEST(Print, RandomTreesRoundTrip) {
    std::mt19937_64 rng(2718);
    for (int i = 0; i < 2000; ++i) {
        const Expr e = gen::random_expr(rng, 4);
        const std::string text = print(e);
        Expr back;
        ASSERT_NO_THROW(back = parse_expression(text)) << text;
        EXPECT_EQ(back, e) << text;
        EXPECT_EQ(print(back), text);
    }
}

TEST(Print, RuleSetsRoundTrip) {
    const auto rs = golden::table2_rules();
    EXPECT_EQ(parse_rules(print(rs)), rs);
    std::mt19937_64 rng(31);
    for (int i = 0; i < 50; ++i) {
        const auto r = gen::random_ruleset(rng, 5, 3);
        EXPECT_EQ(parse_rules(print(r)), r);
    }
}

TEST(Evaluate, Rule3DurationBoundary) {
    const auto r3 = golden::table2_rules().rules[2].trigger;
    EventTimeline tl;
    const Timestamp t0 = 10 * kHour;
    tl.ingest(at(t0, "Toilet", "Occupied", true));
    EXPECT_TRUE(evaluate(r3, tl, t0 + 30 * kMin));
    EXPECT_FALSE(evaluate(r3, tl, t0 + 29 * kMin));
    EXPECT_FALSE(evaluate(r3, tl, t0 + 30 * kMin - 1));
}

TEST(Evaluate, Rule5Window) {
    const auto r5 = golden::table2_rules().rules[4].trigger;
    EventTimeline tl;
    tl.ingest(at(0, "Porch", "Presence", true));
    EXPECT_TRUE(evaluate(r5, tl, 21 * kHour));
    EXPECT_FALSE(evaluate(r5, tl, 12 * kHour));
    EXPECT_TRUE(evaluate(r5, tl, 3 * kHour));
    EXPECT_TRUE(evaluate(r5, tl, 20 * kHour));
    EXPECT_FALSE(evaluate(r5, tl, 8 * kHour));
    // A +2 h offset shifts the local clock.
    EXPECT_TRUE(evaluate(r5, tl, 19 * kHour, 2 * kHour));
}

TEST(Evaluate, UnknownStates) {
    EventTimeline tl;
    const auto p = parse_expression("Kitchen.Presence == True");
    EXPECT_FALSE(evaluate(p, tl, 0));
    EXPECT_TRUE(evaluate(parse_expression("NOT Kitchen.Presence == True"), tl, 0));
    EXPECT_FALSE(evaluate(parse_expression("Kitchen.Presence != True"), tl, 0));
}

TEST(Evaluate, MixedTypesAndOrdering) {
    EventTimeline tl;
    tl.ingest(at(0, "Room", "Temp", 21.5));
    tl.ingest(at(0, "Room", "Mode", std::string("eco")));
    EXPECT_TRUE(evaluate(parse_expression("Room.Temp > 20"), tl, 0));
    EXPECT_TRUE(evaluate(parse_expression("Room.Temp <= 21.5"), tl, 0));
    EXPECT_FALSE(evaluate(parse_expression("Room.Temp == True"), tl, 0));
    EXPECT_TRUE(evaluate(parse_expression("Room.Temp != True"), tl, 0));
    EXPECT_TRUE(evaluate(parse_expression("Room.Mode == eco"), tl, 0));
    EXPECT_TRUE(evaluate(parse_expression("Room.Temp >= -3"), tl, 0));
}

TEST(Evaluate, DurationCoversAllPredicateSiblings) {
    const auto e = parse_expression("A.x == True AND B.y == True AND Duration >= 10min");
    EventTimeline tl;
    tl.ingest(at(0, "A", "x", true));
    tl.ingest(at(5 * kMin, "B", "y", true));
    EXPECT_FALSE(evaluate(e, tl, 10 * kMin));
    EXPECT_TRUE(evaluate(e, tl, 15 * kMin));
}

TEST(Engine, GoldenTable2Traces) {
    const auto rs = golden::table2_rules();
    for (const auto& trace : golden::table2_traces()) {
        const auto log = run(rs, trace.events, {}, trace.until);
        EXPECT_EQ(golden::firings(log), trace.expected) << trace.name;
    }
}

TEST(Engine, FiresOncePerRisingEdge) {
    const auto rs = parse_rules("RULE on: WHEN Lamp.ON == True THEN send_alert(\"on\")");
    std::vector<ContextEvent> es;
    for (int i = 0; i < 100; ++i) es.push_back(at(i * 1000, "Lamp", "ON", true));
    EXPECT_EQ(run(rs, es).size(), 1u);
    es.push_back(at(200'000, "Lamp", "ON", false));
    es.push_back(at(201'000, "Lamp", "ON", true));
    EXPECT_EQ(run(rs, es).size(), 2u);
    EXPECT_TRUE(run(rs, {}).empty());
}

TEST(Engine, EmissionsAreVisibleToEarlierRules) {
    const auto rs = parse_rules(R"(
        RULE chained: WHEN Activity.MakingSandwich == True THEN send_alert("lunch")
        RULE detect: WHEN Kitchen.Presence == True THEN emit_event(Activity.MakingSandwich = True)
    )");
    Engine engine(rs);
    const auto fired = engine.step(at(1000, "Kitchen", "Presence", true));
    ASSERT_EQ(fired.size(), 2u);
    EXPECT_EQ(fired[0].rule, "detect");
    EXPECT_EQ(fired[1].rule, "chained");
    EXPECT_EQ(fired[1].ts, 1000);
    ASSERT_EQ(engine.timeline().size(), 2u);
    EXPECT_EQ(engine.timeline().events()[1].kind, EventKind::activity);
}

TEST(Engine, EmissionCapStopsCycles) {
    const auto rs = parse_rules(R"(
        RULE d: WHEN T.z == True THEN emit_event(T.x = True), emit_event(T.y = False), emit_event(T.z = False)
        RULE c: WHEN T.y == True THEN emit_event(T.z = True)
        RULE b: WHEN T.x == False THEN emit_event(T.y = True)
        RULE a: WHEN T.x == True THEN emit_event(T.x = False)
    )");
    Engine engine(rs);
    try {
        engine.step(at(0, "T", "x", true));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::emission_overflow);
        EXPECT_NE(std::string(e.what()).find("a"), std::string::npos);
    }
}

TEST(Engine, RejectsEventsBehindEngineTime) {
    Engine engine(golden::table2_rules());
    engine.step(at(1000, "Kitchen", "Presence", true));
    engine.advance_to(5000);
    EXPECT_THROW(engine.step(at(2000, "Kitchen", "Presence", true)), Error);
}

TEST(Engine, TimerFiresAtExactInstant) {
    const auto rs = golden::table2_rules();
    Engine engine(rs);
    engine.step(at(0, "Toilet", "Occupied", true));
    EXPECT_TRUE(engine.advance_to(30 * kMin - 1).empty());
    const auto f = engine.advance_to(30 * kMin);
    ASSERT_EQ(f.size(), 1u);
    EXPECT_EQ(f[0].ts, 30 * kMin);
    // An event at the threshold instant: the timer is handled first.
    Engine other(rs);
    other.step(at(0, "Toilet", "Occupied", true));
    const auto g = other.step(at(30 * kMin, "Toilet", "Occupied", false));
    ASSERT_EQ(g.size(), 1u);
    EXPECT_EQ(g[0].ts, 30 * kMin);
}

TEST(Engine, MatchesNaiveOracleOnTable2) {
    const auto rs = golden::table2_rules();
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 3; ++trial) {
        auto events = gen::random_stream(rng, 3000);
        // Feed the table's keys.
        const char* keys[][2] = {{"Kitchen", "Presence"}, {"Cooktop", "ON"},     {"Choptable", "Use"},
                                 {"Toilet", "Occupied"},  {"Porch", "Presence"}, {"Couch", "Occupied"},
                                 {"TV", "ON"},            {"Activity", "Sleeping"}, {"Activity", "Falling"}};
        std::uniform_int_distribution<int> pick(0, 8);
        for (auto& e : events) {
            const int k = pick(rng);
            e.entity = keys[k][0];
            e.attribute = keys[k][1];
            if (!std::holds_alternative<bool>(e.value)) e.value = true;
        }
        const Timestamp until = events.back().ts + 3 * kHour;
        const auto expected = oracle::naive_run(rs, events, until);
        ASSERT_FALSE(expected.overflow);
        EXPECT_EQ(run(rs, events, {}, until), expected.log) << "trial " << trial;
    }
}

TEST(Engine, MatchesNaiveOracleOnRandomRules) {
    std::mt19937_64 rng(11);
    int compared = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto rs = gen::random_ruleset(rng, 6, 3);
        const auto events = gen::random_stream(rng, 1500);
        const Timestamp tz = (trial % 3) * kHour;
        const auto expected = oracle::naive_run(rs, events, events.back().ts + kHour, tz);
        EngineOptions opts;
        opts.tz_offset = tz;
        if (expected.overflow) {
            EXPECT_THROW(run(rs, events, opts, events.back().ts + kHour), Error);
            continue;
        }
        const auto log = run(rs, events, opts, events.back().ts + kHour);
        EXPECT_EQ(log, expected.log) << "trial " << trial << "\n" << print(rs);
        ++compared;
    }
    EXPECT_GE(compared, 15);
}

TEST(Engine, DeterministicLog) {
    std::mt19937_64 rng(99);
    const auto rs = gen::random_ruleset(rng, 6, 3);
    const auto events = gen::random_stream(rng, 2000);
    EXPECT_EQ(run(rs, events), run(rs, events));
}

TEST(ActionsJson, Format) {
    FiredAction f{42, "toilet_alarm", Action{ActionType::send_alert, "msg", "", "", true}};
    EXPECT_EQ(to_json(f).dump(),
              R"({"ts":42,"rule":"toilet_alarm","action_type":"send_alert","payload":{"message":"msg"}})");
    FiredAction g{7, "x", Action{ActionType::set_entity, "", "Lights", "ON", false}};
    EXPECT_EQ(to_json(g).dump(),
              R"({"ts":7,"rule":"x","action_type":"set_entity","payload":{"entity":"Lights","attribute":"ON","value":false}})");
}
