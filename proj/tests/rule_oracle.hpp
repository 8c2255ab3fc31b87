#pragma once

// Brute-force rule evaluation: a plain event vector, linear scans for every
// lookup, and a full re-evaluation of every rule at every candidate instant.
// Candidate instants are every event time, every event time plus every
// Duration threshold in the rule set, and every window boundary.

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "wits/rules.hpp"

namespace wits::oracle {

struct NaiveResult {
    std::vector<rules::FiredAction> log;
    bool overflow = false;
};

class NaiveRules {
public:
    NaiveRules(const rules::RuleSet& rs, Timestamp tz, int cap) : rs_(rs), tz_(tz), cap_(cap) {
        for (const auto& r : rs_.rules) collect(r.trigger);
        last_.assign(rs_.rules.size(), false);
    }

    NaiveResult run(const std::vector<ContextEvent>& input, std::optional<Timestamp> until) {
        NaiveResult res;
        try {
            for (const auto& e : input) {
                if (started_) drain(e.ts, res.log);
                add(e);
                eval_all(e.ts, res.log);
                started_ = true;
                last_time_ = e.ts;
            }
            if (until && started_) drain(*until, res.log);
        } catch (const Error&) {
            res.overflow = true;
        }
        return res;
    }

private:
    void collect(const rules::Expr& e) {
        if (e.kind == rules::NodeKind::duration) durations_.insert(e.duration);
        if (e.kind == rules::NodeKind::time_window) {
            boundaries_.insert(e.window_start);
            boundaries_.insert(e.window_end);
        }
        for (const auto& c : e.children) collect(c);
    }

    void add(const ContextEvent& e) {
        events_.push_back(e);
        for (Timestamp d : durations_) candidates_.insert(e.ts + d);
    }

    // Smallest window boundary instant strictly after t.
    std::optional<Timestamp> next_boundary(Timestamp t) const {
        std::optional<Timestamp> best;
        const Timestamp day = 86'400'000;
        Timestamp base = (t + tz_) / day - 2;
        for (Timestamp k = base; k < base + 5; ++k)
            for (int m : boundaries_) {
                const Timestamp inst = k * day + Timestamp{m} * 60'000 - tz_;
                if (inst > t && (!best || inst < *best)) best = inst;
            }
        return best;
    }

    void drain(Timestamp upto, std::vector<rules::FiredAction>& log) {
        for (;;) {
            std::optional<Timestamp> tau;
            auto it = candidates_.upper_bound(last_time_);
            if (it != candidates_.end() && *it <= upto) tau = *it;
            if (auto b = next_boundary(last_time_); b && *b <= upto && (!tau || *b < *tau)) tau = *b;
            if (!tau) return;
            eval_all(*tau, log);
            last_time_ = *tau;
        }
    }

    std::optional<Value> state(const std::string& e, const std::string& a, Timestamp t) const {
        for (auto i = events_.size(); i-- > 0;)
            if (events_[i].ts <= t && events_[i].entity == e && events_[i].attribute == a) return events_[i].value;
        return std::nullopt;
    }

    std::optional<Timestamp> run_start(const rules::Expr& p, Timestamp t) const {
        std::optional<Timestamp> start;
        for (auto i = events_.size(); i-- > 0;) {
            const auto& x = events_[i];
            if (x.ts > t || x.entity != p.entity || x.attribute != p.attribute) continue;
            if (!rules::compare(x.value, p.cmp, p.literal)) break;
            start = x.ts;
        }
        return start;
    }

    bool eval(const rules::Expr& e, Timestamp t) const {
        using rules::NodeKind;
        switch (e.kind) {
            case NodeKind::constant: return e.constant;
            case NodeKind::predicate: {
                const auto v = state(e.entity, e.attribute, t);
                return v && rules::compare(*v, e.cmp, e.literal);
            }
            case NodeKind::duration: return false;
            case NodeKind::time_window: {
                Timestamp c = ((t + tz_) % 86'400'000 + 86'400'000) % 86'400'000;
                const Timestamp s = Timestamp{e.window_start} * 60'000, f = Timestamp{e.window_end} * 60'000;
                if (s == f) return false;
                return s < f ? (s <= c && c < f) : (c >= s || c < f);
            }
            case NodeKind::negation: return !eval(e.children[0], t);
            case NodeKind::disjunction: {
                bool any = false;
                for (const auto& c : e.children) any = any || eval(c, t);
                return any;
            }
            case NodeKind::conjunction: {
                bool all = true;
                for (const auto& c : e.children) {
                    if (c.kind != NodeKind::duration) {
                        all = all && eval(c, t);
                        continue;
                    }
                    Timestamp latest = std::numeric_limits<Timestamp>::min();
                    bool ok = true;
                    for (const auto& p : e.children) {
                        if (p.kind != NodeKind::predicate) continue;
                        const auto s = run_start(p, t);
                        if (!s) ok = false;
                        else latest = std::max(latest, *s);
                    }
                    all = all && ok && t - latest >= c.duration;
                }
                return all;
            }
        }
        return false;
    }

    void eval_all(Timestamp t, std::vector<rules::FiredAction>& log) {
        int emitted = 0;
        bool again = true;
        while (again) {
            again = false;
            for (std::size_t i = 0; i < rs_.rules.size(); ++i) {
                const bool v = eval(rs_.rules[i].trigger, t);
                const bool fire = v && !last_[i];
                last_[i] = v;
                if (!fire) continue;
                for (const auto& a : rs_.rules[i].actions) {
                    log.push_back({t, rs_.rules[i].name, a});
                    if (a.type == rules::ActionType::send_alert) continue;
                    if (++emitted > cap_) throw Error(ErrorKind::emission_overflow, "cap");
                    add(ContextEvent{t,
                                     a.type == rules::ActionType::emit_event ? EventKind::activity
                                                                             : EventKind::actuation,
                                     a.entity, a.attribute, a.value});
                    again = true;
                }
            }
        }
    }

    const rules::RuleSet& rs_;
    Timestamp tz_;
    int cap_;
    std::vector<ContextEvent> events_;
    std::set<Timestamp> durations_;
    std::set<int> boundaries_;
    std::set<Timestamp> candidates_;
    std::vector<bool> last_;
    bool started_ = false;
    Timestamp last_time_ = 0;
};

inline NaiveResult naive_run(const rules::RuleSet& rs, const std::vector<ContextEvent>& events,
                             std::optional<Timestamp> until = std::nullopt, Timestamp tz = 0, int cap = 100) {
    return NaiveRules(rs, tz, cap).run(events, until);
}

}  // namespace wits::oracle
