#pragma once

// Atomic context events on a totally ordered timeline.
//
// Events are change records: an event sets (entity, attribute) to a value
// from its timestamp on, until the next event for the same key.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "wits/error.hpp"
#include "wits/signal.hpp"

namespace wits {

enum class EventKind { activity, location, object_use, actuation };

inline const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::activity: return "activity";
        case EventKind::location: return "location";
        case EventKind::object_use: return "object_use";
        case EventKind::actuation: return "actuation";
    }
    return "?";
}

inline EventKind parse_event_kind(const std::string& s) {
    if (s == "activity") return EventKind::activity;
    if (s == "location") return EventKind::location;
    if (s == "object_use") return EventKind::object_use;
    if (s == "actuation") return EventKind::actuation;
    throw Error(ErrorKind::parse, "unknown event kind '" + s + "'");
}

using Value = std::variant<bool, double, std::string>;

inline std::string to_string(const Value& v) {
    if (const auto* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
    if (const auto* d = std::get_if<double>(&v)) return nlohmann::json(*d).dump();
    return std::get<std::string>(v);
}

struct ContextEvent {
    Timestamp ts = 0;
    EventKind kind = EventKind::activity;
    std::string entity;
    std::string attribute;
    Value value = true;

    bool operator==(const ContextEvent&) const = default;
};

inline void validate(const ContextEvent& e) {
    if (e.entity.empty() || e.attribute.empty()) throw invalid_input("event entity and attribute must be nonempty");
}

using EventKey = std::pair<std::string, std::string>;

struct TimelineOptions {
    // 0: events must arrive in timestamp order. Otherwise events are held
    // back until they are older than the newest seen timestamp by this many
    // ms, and reordered within that window.
    Timestamp reorder_delay = 0;
};

class EventTimeline {
public:
    explicit EventTimeline(TimelineOptions opts = {}) : opts_(opts) {}

    /// Appends (or buffers) an event. Throws ErrorKind::out_of_order if it is
    /// older than what was already committed.
    void ingest(ContextEvent e) {
        validate(e);
        if (!events_.empty() && e.ts < events_.back().ts)
            throw Error(ErrorKind::out_of_order, "event at " + std::to_string(e.ts) + " is older than committed event at " +
                                                     std::to_string(events_.back().ts));
        if (opts_.reorder_delay <= 0) {
            commit(std::move(e));
            return;
        }
        newest_ = std::max(newest_.value_or(e.ts), e.ts);
        // Stable: equal timestamps keep arrival order.
        auto at = std::upper_bound(pending_.begin(), pending_.end(), e.ts,
                                   [](Timestamp t, const ContextEvent& p) { return t < p.ts; });
        pending_.insert(at, std::move(e));
        while (!pending_.empty() && pending_.front().ts <= *newest_ - opts_.reorder_delay) {
            commit(std::move(pending_.front()));
            pending_.erase(pending_.begin());
        }
    }

    /// Commits every buffered event.
    void flush() {
        for (auto& e : pending_) commit(std::move(e));
        pending_.clear();
    }

    const std::vector<ContextEvent>& events() const { return events_; }
    std::size_t size() const { return events_.size(); }
    bool empty() const { return events_.empty(); }
    std::size_t pending() const { return pending_.size(); }

    /// Value of the latest committed event for the key at ts <= t.
    std::optional<Value> state_at(const std::string& entity, const std::string& attribute, Timestamp t) const {
        const auto* pos = last_at(entity, attribute, t);
        if (!pos) return std::nullopt;
        return events_[*pos].value;
    }

    /// Start of the unbroken trailing run, at time t, of values satisfying
    /// `holds`; nullopt when the key is unknown or the current value fails.
    std::optional<Timestamp> run_start_while(const std::string& entity, const std::string& attribute, Timestamp t,
                                             const std::function<bool(const Value&)>& holds) const {
        const auto it = index_.find(EventKey{entity, attribute});
        if (it == index_.end()) return std::nullopt;
        const auto& positions = it->second;
        auto up = std::upper_bound(positions.begin(), positions.end(), t,
                                   [&](Timestamp v, std::size_t p) { return v < events_[p].ts; });
        if (up == positions.begin()) return std::nullopt;
        auto cur = std::prev(up);
        if (!holds(events_[*cur].value)) return std::nullopt;
        while (cur != positions.begin() && holds(events_[*std::prev(cur)].value)) --cur;
        return events_[*cur].ts;
    }

    /// How long the key has continuously equalled `value` at time t.
    std::optional<Timestamp> held_since(const std::string& entity, const std::string& attribute, const Value& value,
                                        Timestamp t) const {
        const auto start = run_start_while(entity, attribute, t, [&](const Value& v) { return v == value; });
        if (!start) return std::nullopt;
        return t - *start;
    }

private:
    void commit(ContextEvent e) {
        index_[EventKey{e.entity, e.attribute}].push_back(events_.size());
        events_.push_back(std::move(e));
    }

    const std::size_t* last_at(const std::string& entity, const std::string& attribute, Timestamp t) const {
        const auto it = index_.find(EventKey{entity, attribute});
        if (it == index_.end()) return nullptr;
        const auto& positions = it->second;
        auto up = std::upper_bound(positions.begin(), positions.end(), t,
                                   [&](Timestamp v, std::size_t p) { return v < events_[p].ts; });
        if (up == positions.begin()) return nullptr;
        return &*std::prev(up);
    }

    TimelineOptions opts_;
    std::vector<ContextEvent> events_;
    std::map<EventKey, std::vector<std::size_t>> index_;
    std::vector<ContextEvent> pending_;
    std::optional<Timestamp> newest_;
};

// ---------------------------------------------------------------------------
// JSON lines
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json value_to_json(const Value& v) {
    if (const auto* b = std::get_if<bool>(&v)) return *b;
    if (const auto* d = std::get_if<double>(&v)) return *d;
    return std::get<std::string>(v);
}

inline Value value_from_json(const nlohmann::ordered_json& j) {
    if (j.is_boolean()) return j.get<bool>();
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) return j.get<std::string>();
    throw Error(ErrorKind::parse, "event value must be a boolean, number or string");
}

inline nlohmann::ordered_json to_json(const ContextEvent& e) {
    nlohmann::ordered_json j;
    j["ts"] = e.ts;
    j["kind"] = to_string(e.kind);
    j["entity"] = e.entity;
    j["attribute"] = e.attribute;
    j["value"] = value_to_json(e.value);
    return j;
}

inline ContextEvent event_from_json(const nlohmann::ordered_json& j) {
    try {
        ContextEvent e;
        e.ts = j.at("ts").get<Timestamp>();
        e.kind = parse_event_kind(j.at("kind").get<std::string>());
        e.entity = j.at("entity").get<std::string>();
        e.attribute = j.at("attribute").get<std::string>();
        e.value = value_from_json(j.at("value"));
        validate(e);
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorKind::parse, std::string("malformed event: ") + ex.what());
    }
}

inline std::vector<ContextEvent> read_events_jsonl(std::istream& in) {
    std::vector<ContextEvent> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(event_from_json(nlohmann::ordered_json::parse(line)));
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorKind::parse, "line " + std::to_string(lineno) + ": " + ex.what());
        } catch (const Error& ex) {
            throw Error(ex.kind(), "line " + std::to_string(lineno) + ": " + ex.what());
        }
    }
    return out;
}

inline void write_events_jsonl(std::ostream& out, const std::vector<ContextEvent>& events) {
    for (const auto& e : events) out << to_json(e).dump() << '\n';
}

}  // namespace wits
