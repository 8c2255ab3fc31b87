#pragma once

// Trigger-action rules.
//
//   RULE name: WHEN <expr> THEN action (, action)*
//
// Triggers combine predicates over the event timeline with AND / OR / NOT,
// `Duration >= 30min` (inside an AND group) and `Time in [8:00pm 8:00am]`.
// Actions fire on the false -> true edge of their trigger.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "wits/error.hpp"
#include "wits/events.hpp"

namespace wits::rules {

enum class Cmp { eq, ne, ge, le, gt, lt };

inline const char* to_string(Cmp c) {
    switch (c) {
        case Cmp::eq: return "==";
        case Cmp::ne: return "!=";
        case Cmp::ge: return ">=";
        case Cmp::le: return "<=";
        case Cmp::gt: return ">";
        case Cmp::lt: return "<";
    }
    return "?";
}

enum class NodeKind { constant, predicate, duration, time_window, negation, conjunction, disjunction };

struct Expr {
    NodeKind kind = NodeKind::constant;
    bool constant = false;
    // predicate
    std::string entity, attribute;
    Cmp cmp = Cmp::eq;
    Value literal = true;
    // duration, in ms
    Timestamp duration = 0;
    // time window, minutes after midnight
    int window_start = 0, window_end = 0;
    std::vector<Expr> children;
    // Source position; not part of equality.
    int line = 0, column = 0;

    bool operator==(const Expr& o) const {
        if (kind != o.kind) return false;
        switch (kind) {
            case NodeKind::constant: return constant == o.constant;
            case NodeKind::predicate:
                return entity == o.entity && attribute == o.attribute && cmp == o.cmp && literal == o.literal;
            case NodeKind::duration: return duration == o.duration;
            case NodeKind::time_window: return window_start == o.window_start && window_end == o.window_end;
            default: return children == o.children;
        }
    }
};

enum class ActionType { emit_event, send_alert, set_entity };

inline const char* to_string(ActionType t) {
    switch (t) {
        case ActionType::emit_event: return "emit_event";
        case ActionType::send_alert: return "send_alert";
        case ActionType::set_entity: return "set_entity";
    }
    return "?";
}

struct Action {
    ActionType type = ActionType::send_alert;
    std::string message;  // send_alert
    std::string entity, attribute;
    Value value = true;

    bool operator==(const Action& o) const {
        if (type != o.type) return false;
        if (type == ActionType::send_alert) return message == o.message;
        return entity == o.entity && attribute == o.attribute && value == o.value;
    }
};

struct Rule {
    std::string name;
    Expr trigger;
    std::vector<Action> actions;

    bool operator==(const Rule& o) const {
        return name == o.name && trigger == o.trigger && actions == o.actions;
    }
};

struct RuleSet {
    std::vector<Rule> rules;
    bool operator==(const RuleSet&) const = default;
};

class ParseError : public Error {
public:
    ParseError(int line, int column, const std::string& msg)
        : Error(ErrorKind::parse, "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + msg),
          line_(line),
          column_(column) {}
    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_, column_;
};

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

namespace detail {

enum class Tok { ident, number, string, symbol, end };

struct Token {
    Tok kind = Tok::end;
    std::string text;
    int line = 1, column = 1;
};

inline bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
inline bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

inline std::vector<Token> lex(std::string_view src) {
    std::vector<Token> out;
    std::size_t i = 0;
    int line = 1, col = 1;
    auto advance = [&](std::size_t n) {
        for (std::size_t k = 0; k < n && i < src.size(); ++k, ++i) {
            const auto c = static_cast<unsigned char>(src[i]);
            if (c == '\n') {
                ++line;
                col = 1;
            } else if ((c & 0xC0) != 0x80) {
                ++col;  // count code points, not continuation bytes
            }
        }
    };
    auto starts = [&](std::string_view s) { return src.substr(i, s.size()) == s; };

    // Multi-character spellings, longest first.
    static const std::pair<std::string_view, Token> spellings[] = {
        {"\xE2\x88\xA7", {Tok::ident, "AND"}},   // logical and
        {"\xE2\x88\xA8", {Tok::ident, "OR"}},    // logical or
        {"\xC2\xAC", {Tok::ident, "NOT"}},       // not sign
        {"\xE2\x89\xA5", {Tok::symbol, ">="}},   // greater-than or equal
        {"\xE2\x89\xA4", {Tok::symbol, "<="}},   // less-than or equal
        {"\xE2\x89\xA0", {Tok::symbol, "!="}},   // not equal
        {"&&", {Tok::ident, "AND"}},
        {"||", {Tok::ident, "OR"}},
        {"==", {Tok::symbol, "=="}},
        {"!=", {Tok::symbol, "!="}},
        {">=", {Tok::symbol, ">="}},
        {"<=", {Tok::symbol, "<="}},
        {"!", {Tok::ident, "NOT"}},
        {"=", {Tok::symbol, "="}},
        {">", {Tok::symbol, ">"}},
        {"<", {Tok::symbol, "<"}},
        {":", {Tok::symbol, ":"}},
        {",", {Tok::symbol, ","}},
        {"(", {Tok::symbol, "("}},
        {")", {Tok::symbol, ")"}},
        {"[", {Tok::symbol, "["}},
        {"]", {Tok::symbol, "]"}},
        {".", {Tok::symbol, "."}},
        {"-", {Tok::symbol, "-"}},
    };

    while (i < src.size()) {
        const char c = src[i];
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            advance(1);
            continue;
        }
        if (c == '#') {
            while (i < src.size() && src[i] != '\n') advance(1);
            continue;
        }
        Token t;
        t.line = line;
        t.column = col;
        if (is_ident_start(c)) {
            std::size_t j = i;
            while (j < src.size() && is_ident_char(src[j])) ++j;
            t.kind = Tok::ident;
            t.text = std::string(src.substr(i, j - i));
            advance(j - i);
        } else if (is_digit(c)) {
            std::size_t j = i;
            while (j < src.size() && is_digit(src[j])) ++j;
            if (j + 1 < src.size() && src[j] == '.' && is_digit(src[j + 1])) {
                ++j;
                while (j < src.size() && is_digit(src[j])) ++j;
            }
            if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
                if (k < src.size() && is_digit(src[k])) {
                    while (k < src.size() && is_digit(src[k])) ++k;
                    j = k;
                }
            }
            t.kind = Tok::number;
            t.text = std::string(src.substr(i, j - i));
            advance(j - i);
        } else if (c == '"') {
            std::string s;
            advance(1);
            bool closed = false;
            while (i < src.size()) {
                const char d = src[i];
                if (d == '"') {
                    advance(1);
                    closed = true;
                    break;
                }
                if (d == '\n') break;
                if (d == '\\' && i + 1 < src.size()) {
                    const char e = src[i + 1];
                    s += e == 'n' ? '\n' : e == 't' ? '\t' : e;
                    advance(2);
                    continue;
                }
                s += d;
                advance(1);
            }
            if (!closed) throw ParseError(t.line, t.column, "unterminated string");
            t.kind = Tok::string;
            t.text = std::move(s);
        } else {
            bool matched = false;
            for (const auto& [spelling, tok] : spellings) {
                if (starts(spelling)) {
                    t.kind = tok.kind;
                    t.text = tok.text;
                    advance(spelling.size());
                    matched = true;
                    break;
                }
            }
            if (!matched) throw ParseError(line, col, std::string("unexpected character '") + c + "'");
        }
        out.push_back(std::move(t));
    }
    Token end;
    end.line = line;
    end.column = col;
    out.push_back(end);
    return out;
}

inline double parse_number(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw invalid_input("bad number '" + s + "'");
    return v;
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

class Parser {
public:
    explicit Parser(std::string_view src) : toks_(lex(src)) {}

    RuleSet ruleset() {
        RuleSet rs;
        std::set<std::string> names;
        if (peek().kind == Tok::end) fail(peek(), "expected at least one RULE");
        while (peek().kind != Tok::end) {
            const Token& start = peek();
            Rule r = rule();
            if (!names.insert(r.name).second) fail(start, "duplicate rule name '" + r.name + "'");
            rs.rules.push_back(std::move(r));
        }
        return rs;
    }

    Expr expression_only() {
        Expr e = expr();
        if (peek().kind != Tok::end) fail(peek(), "unexpected '" + peek().text + "' after expression");
        check_duration_scope(e, false);
        return e;
    }

private:
    [[noreturn]] void fail(const Token& t, const std::string& msg) const { throw ParseError(t.line, t.column, msg); }

    const Token& peek(std::size_t ahead = 0) const { return toks_[std::min(pos_ + ahead, toks_.size() - 1)]; }
    const Token& next() { return toks_[std::min(pos_++, toks_.size() - 1)]; }

    bool is_ident(const Token& t, std::string_view s) const { return t.kind == Tok::ident && t.text == s; }
    bool is_symbol(const Token& t, std::string_view s) const { return t.kind == Tok::symbol && t.text == s; }

    void expect_ident(std::string_view s) {
        if (!is_ident(peek(), s)) fail(peek(), "expected '" + std::string(s) + "'");
        next();
    }
    void expect_symbol(std::string_view s) {
        if (!is_symbol(peek(), s)) fail(peek(), "expected '" + std::string(s) + "'");
        next();
    }
    std::string identifier(const char* what) {
        if (peek().kind != Tok::ident || is_keyword(peek().text)) fail(peek(), std::string("expected ") + what);
        return next().text;
    }
    static bool is_keyword(const std::string& s) {
        return s == "RULE" || s == "WHEN" || s == "THEN" || s == "AND" || s == "OR" || s == "NOT";
    }

    Rule rule() {
        expect_ident("RULE");
        Rule r;
        if (peek().kind == Tok::string)
            r.name = next().text;
        else
            r.name = identifier("rule name");
        if (r.name.empty()) fail(peek(), "rule name must be nonempty");
        expect_symbol(":");
        expect_ident("WHEN");
        r.trigger = expr();
        check_duration_scope(r.trigger, false);
        expect_ident("THEN");
        r.actions.push_back(action());
        while (is_symbol(peek(), ",")) {
            next();
            r.actions.push_back(action());
        }
        return r;
    }

    Expr expr() {
        const Token& start = peek();
        Expr first = and_expr();
        if (!is_ident(peek(), "OR")) return first;
        Expr e;
        e.kind = NodeKind::disjunction;
        e.line = start.line;
        e.column = start.column;
        e.children.push_back(std::move(first));
        while (is_ident(peek(), "OR")) {
            next();
            e.children.push_back(and_expr());
        }
        return e;
    }

    Expr and_expr() {
        const Token& start = peek();
        Expr first = unary();
        if (!is_ident(peek(), "AND")) return first;
        Expr e;
        e.kind = NodeKind::conjunction;
        e.line = start.line;
        e.column = start.column;
        e.children.push_back(std::move(first));
        while (is_ident(peek(), "AND")) {
            next();
            e.children.push_back(unary());
        }
        return e;
    }

    Expr unary() {
        const Token& t = peek();
        if (is_ident(t, "NOT")) {
            next();
            Expr e;
            e.kind = NodeKind::negation;
            e.line = t.line;
            e.column = t.column;
            e.children.push_back(unary());
            return e;
        }
        if (is_symbol(t, "(")) {
            next();
            Expr e = expr();
            expect_symbol(")");
            return e;
        }
        return atom();
    }

    static std::optional<Cmp> comparator(const Token& t) {
        if (t.kind != Tok::symbol) return std::nullopt;
        if (t.text == "==" || t.text == "=") return Cmp::eq;
        if (t.text == "!=") return Cmp::ne;
        if (t.text == ">=") return Cmp::ge;
        if (t.text == "<=") return Cmp::le;
        if (t.text == ">") return Cmp::gt;
        if (t.text == "<") return Cmp::lt;
        return std::nullopt;
    }

    static std::optional<bool> boolean_word(const std::string& s) {
        if (s == "True" || s == "true" || s == "TRUE") return true;
        if (s == "False" || s == "false" || s == "FALSE") return false;
        return std::nullopt;
    }

    Expr atom() {
        const Token& t = peek();
        Expr e;
        e.line = t.line;
        e.column = t.column;
        if (t.kind != Tok::ident || is_keyword(t.text)) fail(t, "expected a condition");

        if (t.text == "Duration" && comparator(peek(1))) {
            next();
            if (!is_symbol(peek(), ">=")) fail(peek(), "Duration only supports '>='");
            next();
            e.kind = NodeKind::duration;
            e.duration = duration_literal();
            return e;
        }
        if (t.text == "Time" && (is_ident(peek(1), "in") || is_ident(peek(1), "is"))) {
            next();
            next();
            expect_symbol("[");
            e.kind = NodeKind::time_window;
            e.window_start = clock();
            if (is_symbol(peek(), ",")) next();
            e.window_end = clock();
            expect_symbol("]");
            return e;
        }
        if (auto b = boolean_word(t.text); b && !is_symbol(peek(1), ".") && !comparator(peek(1))) {
            next();
            e.kind = NodeKind::constant;
            e.constant = *b;
            return e;
        }

        e.kind = NodeKind::predicate;
        std::string first = identifier("entity or attribute");
        if (is_symbol(peek(), ".")) {
            next();
            e.entity = std::move(first);
            e.attribute = identifier("attribute");
        } else {
            e.entity = "Activity";
            e.attribute = std::move(first);
        }
        const auto cmp = comparator(peek());
        if (!cmp) fail(peek(), "expected a comparison operator");
        next();
        e.cmp = *cmp;
        e.literal = literal();
        return e;
    }

    Value literal() {
        const Token& t = peek();
        if (is_symbol(t, "-")) {
            next();
            if (peek().kind != Tok::number) fail(peek(), "expected a number after '-'");
            return -parse_number(next().text);
        }
        if (t.kind == Tok::number) return parse_number(next().text);
        if (t.kind == Tok::string) return next().text;
        if (t.kind == Tok::ident && !is_keyword(t.text)) {
            if (auto b = boolean_word(t.text)) {
                next();
                return *b;
            }
            return next().text;
        }
        fail(t, "expected a literal");
    }

    Timestamp duration_literal() {
        const Token& t = peek();
        if (t.kind != Tok::number) fail(t, "expected a duration such as 30min");
        const double amount = parse_number(next().text);
        const Token& u = peek();
        if (u.kind != Tok::ident) fail(u, "duration needs a unit (s, min or h)");
        double scale = 0.0;
        const std::string& unit = u.text;
        if (unit == "s" || unit == "sec" || unit == "secs" || unit == "second" || unit == "seconds")
            scale = 1000.0;
        else if (unit == "min" || unit == "mins" || unit == "minute" || unit == "minutes")
            scale = 60'000.0;
        else if (unit == "h" || unit == "hr" || unit == "hrs" || unit == "hour" || unit == "hours")
            scale = 3'600'000.0;
        else
            fail(u, "unknown duration unit '" + unit + "'");
        next();
        return static_cast<Timestamp>(std::llround(amount * scale));
    }

    // "20:00", "8:00pm", "8pm"; returns minutes after midnight.
    int clock() {
        const Token& t = peek();
        if (t.kind != Tok::number || t.text.find_first_not_of("0123456789") != std::string::npos)
            fail(t, "expected a clock time such as 20:00 or 8:00pm");
        int hour = std::stoi(next().text);
        int minute = 0;
        if (is_symbol(peek(), ":")) {
            next();
            const Token& m = peek();
            if (m.kind != Tok::number || m.text.size() != 2 || m.text.find_first_not_of("0123456789") != std::string::npos)
                fail(m, "expected two-digit minutes");
            minute = std::stoi(next().text);
        }
        if (peek().kind == Tok::ident && (peek().text == "am" || peek().text == "pm" || peek().text == "AM" ||
                                          peek().text == "PM")) {
            const bool pm = peek().text == "pm" || peek().text == "PM";
            if (hour < 1 || hour > 12) fail(peek(), "12-hour clock needs an hour in 1..12");
            next();
            hour = hour % 12 + (pm ? 12 : 0);
        }
        if (hour > 23 || minute > 59) fail(t, "clock time must lie in [00:00, 24:00)");
        return hour * 60 + minute;
    }

    Action action() {
        const Token& t = peek();
        const std::string name = identifier("an action");
        Action a;
        if (name == "send_alert") {
            a.type = ActionType::send_alert;
        } else if (name == "emit_event") {
            a.type = ActionType::emit_event;
        } else if (name == "set_entity") {
            a.type = ActionType::set_entity;
        } else {
            fail(t, "unknown action '" + name + "'");
        }
        expect_symbol("(");
        if (a.type == ActionType::send_alert) {
            if (peek().kind != Tok::string) fail(peek(), "send_alert expects a quoted message");
            a.message = next().text;
        } else {
            std::string first = identifier("entity");
            if (is_symbol(peek(), ".")) {
                next();
                a.entity = std::move(first);
                a.attribute = identifier("attribute");
            } else {
                a.entity = "Activity";
                a.attribute = std::move(first);
            }
            if (is_symbol(peek(), "=") || is_symbol(peek(), "==")) {
                next();
                a.value = literal();
            }
        }
        expect_symbol(")");
        return a;
    }

    // A Duration must sit directly in an AND group with at least one predicate.
    void check_duration_scope(const Expr& e, bool allowed) const {
        if (e.kind == NodeKind::duration && !allowed) {
            Token t;
            t.line = e.line;
            t.column = e.column;
            fail(t, "Duration must be part of an AND group with at least one predicate");
        }
        bool has_predicate = false;
        if (e.kind == NodeKind::conjunction)
            for (const auto& c : e.children) has_predicate = has_predicate || c.kind == NodeKind::predicate;
        for (const auto& c : e.children) check_duration_scope(c, e.kind == NodeKind::conjunction && has_predicate);
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline RuleSet parse_rules(std::string_view text) { return detail::Parser(text).ruleset(); }

inline Expr parse_expression(std::string_view text) { return detail::Parser(text).expression_only(); }

// ---------------------------------------------------------------------------
// Printer
// ---------------------------------------------------------------------------

inline std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        if (c == '\t') {
            out += "\\t";
            continue;
        }
        out += c;
    }
    return out + "\"";
}

inline std::string print_literal(const Value& v) {
    if (const auto* b = std::get_if<bool>(&v)) return *b ? "True" : "False";
    if (const auto* d = std::get_if<double>(&v)) return format_number(*d);
    return quote(std::get<std::string>(v));
}

inline std::string print_duration(Timestamp ms) {
    if (ms % 3'600'000 == 0 && ms != 0) return std::to_string(ms / 3'600'000) + "h";
    if (ms % 60'000 == 0 && ms != 0) return std::to_string(ms / 60'000) + "min";
    if (ms % 1000 == 0) return std::to_string(ms / 1000) + "s";
    return format_number(static_cast<double>(ms) / 1000.0) + "s";
}

inline std::string print_clock(int minutes) {
    std::ostringstream o;
    o << std::setw(2) << std::setfill('0') << minutes / 60 << ':' << std::setw(2) << std::setfill('0') << minutes % 60;
    return o.str();
}

inline std::string print(const Expr& e) {
    auto child = [](const Expr& c) {
        const bool group = c.kind == NodeKind::conjunction || c.kind == NodeKind::disjunction;
        return group ? "(" + print(c) + ")" : print(c);
    };
    switch (e.kind) {
        case NodeKind::constant: return e.constant ? "True" : "False";
        case NodeKind::predicate:
            return e.entity + "." + e.attribute + " " + to_string(e.cmp) + " " + print_literal(e.literal);
        case NodeKind::duration: return "Duration >= " + print_duration(e.duration);
        case NodeKind::time_window:
            return "Time in [" + print_clock(e.window_start) + " " + print_clock(e.window_end) + "]";
        case NodeKind::negation: return "NOT " + child(e.children.at(0));
        case NodeKind::conjunction:
        case NodeKind::disjunction: {
            const char* op = e.kind == NodeKind::conjunction ? " AND " : " OR ";
            std::string out;
            for (std::size_t i = 0; i < e.children.size(); ++i) {
                if (i) out += op;
                const auto& c = e.children[i];
                // AND binds tighter than OR, so an AND inside an OR needs no parentheses.
                out += (e.kind == NodeKind::disjunction && c.kind == NodeKind::conjunction) ? print(c) : child(c);
            }
            return out;
        }
    }
    return "";
}

inline std::string print(const Action& a) {
    if (a.type == ActionType::send_alert) return "send_alert(" + quote(a.message) + ")";
    return std::string(to_string(a.type)) + "(" + a.entity + "." + a.attribute + " = " + print_literal(a.value) + ")";
}

inline std::string print(const Rule& r) {
    std::string out = "RULE " + r.name + ": WHEN " + print(r.trigger) + " THEN ";
    for (std::size_t i = 0; i < r.actions.size(); ++i) {
        if (i) out += ", ";
        out += print(r.actions[i]);
    }
    return out;
}

inline std::string print(const RuleSet& rs) {
    std::string out;
    for (const auto& r : rs.rules) out += print(r) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

constexpr Timestamp kDayMs = 86'400'000;

/// Comparison of an event value with a literal. Values of different types
/// are unequal; ordering is defined for numbers and strings only.
inline bool compare(const Value& v, Cmp cmp, const Value& lit) {
    if (v.index() != lit.index()) return cmp == Cmp::ne;
    if (cmp == Cmp::eq) return v == lit;
    if (cmp == Cmp::ne) return v != lit;
    if (std::holds_alternative<bool>(v)) return false;
    switch (cmp) {
        case Cmp::ge: return v >= lit;
        case Cmp::le: return v <= lit;
        case Cmp::gt: return v > lit;
        case Cmp::lt: return v < lit;
        default: return false;
    }
}

inline Timestamp clock_of(Timestamp t, Timestamp tz_offset) {
    Timestamp c = (t + tz_offset) % kDayMs;
    return c < 0 ? c + kDayMs : c;
}

inline bool in_window(const Expr& w, Timestamp now, Timestamp tz_offset) {
    const Timestamp c = clock_of(now, tz_offset);
    const Timestamp s = Timestamp{w.window_start} * 60'000, e = Timestamp{w.window_end} * 60'000;
    if (s < e) return c >= s && c < e;
    if (s > e) return c >= s || c < e;
    return false;
}

inline bool predicate_holds(const Expr& p, const EventTimeline& tl, Timestamp now) {
    const auto v = tl.state_at(p.entity, p.attribute, now);
    return v && compare(*v, p.cmp, p.literal);
}

/// Start of the interval during which every predicate child of an AND group
/// has held without interruption; nullopt when one of them fails now.
inline std::optional<Timestamp> group_run_start(const Expr& group, const EventTimeline& tl, Timestamp now) {
    std::optional<Timestamp> start;
    for (const auto& c : group.children) {
        if (c.kind != NodeKind::predicate) continue;
        const auto s = tl.run_start_while(c.entity, c.attribute, now,
                                          [&](const Value& v) { return compare(v, c.cmp, c.literal); });
        if (!s) return std::nullopt;
        start = std::max(start.value_or(*s), *s);
    }
    return start;
}

struct EvalContext {
    const EventTimeline& timeline;
    Timestamp now;
    Timestamp tz_offset = 0;
};

inline bool evaluate(const Expr& e, const EvalContext& ctx) {
    switch (e.kind) {
        case NodeKind::constant: return e.constant;
        case NodeKind::predicate: return predicate_holds(e, ctx.timeline, ctx.now);
        case NodeKind::duration: return false;  // only meaningful inside an AND group
        case NodeKind::time_window: return in_window(e, ctx.now, ctx.tz_offset);
        case NodeKind::negation: return !evaluate(e.children.at(0), ctx);
        case NodeKind::disjunction:
            for (const auto& c : e.children)
                if (evaluate(c, ctx)) return true;
            return false;
        case NodeKind::conjunction: {
            std::optional<std::optional<Timestamp>> run;  // computed lazily
            for (const auto& c : e.children) {
                if (c.kind == NodeKind::duration) {
                    if (!run) run = group_run_start(e, ctx.timeline, ctx.now);
                    if (!*run || ctx.now - **run < c.duration) return false;
                } else if (!evaluate(c, ctx)) {
                    return false;
                }
            }
            return true;
        }
    }
    return false;
}

inline bool evaluate(const Expr& e, const EventTimeline& tl, Timestamp now, Timestamp tz_offset = 0) {
    return evaluate(e, EvalContext{tl, now, tz_offset});
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

struct FiredAction {
    Timestamp ts = 0;
    std::string rule;
    Action action;

    bool operator==(const FiredAction& o) const { return ts == o.ts && rule == o.rule && action == o.action; }
};

struct EngineOptions {
    Timestamp tz_offset = 0;   // added to timestamps before reading the clock
    int emission_cap = 100;    // events emitted per evaluation instant
};

/// Edge-triggered rule evaluation over an event stream, in event time.
///
/// Triggers are re-evaluated after every ingested event and at the instants
/// where a Duration threshold is reached or a time window opens or closes.
/// Emitted events join the timeline at the current instant and rules are
/// re-evaluated until no rule emits anything more.
class Engine {
public:
    explicit Engine(RuleSet rules, EngineOptions opts = {}) : rules_(std::move(rules)), opts_(opts) {
        last_.assign(rules_.rules.size(), false);
        for (const auto& r : rules_.rules) collect_temporal(r.trigger);
    }
    // Holds pointers into its own rule trees.
    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    /// Processes timers up to the event's timestamp, then the event itself.
    std::vector<FiredAction> step(const ContextEvent& e) {
        if (now_ && e.ts < *now_)
            throw Error(ErrorKind::out_of_order, "event at " + std::to_string(e.ts) +
                                                     " arrives after the engine reached " + std::to_string(*now_));
        std::vector<FiredAction> fired = advance_to(e.ts);
        timeline_.ingest(e);
        evaluate_at(e.ts, fired);
        return fired;
    }

    /// Processes every pending timer at or before t.
    std::vector<FiredAction> advance_to(Timestamp t) {
        std::vector<FiredAction> fired;
        while (!timers_.empty() && *timers_.begin() <= t) {
            const Timestamp tau = *timers_.begin();
            timers_.erase(timers_.begin());
            if (now_ && tau <= *now_) continue;
            evaluate_at(tau, fired);
        }
        if (!now_ || *now_ < t) now_ = t;
        return fired;
    }

    const EventTimeline& timeline() const { return timeline_; }
    const RuleSet& rules() const { return rules_; }
    std::optional<Timestamp> now() const { return now_; }

private:
    void collect_temporal(const Expr& e) {
        if (e.kind == NodeKind::conjunction) {
            for (const auto& c : e.children)
                if (c.kind == NodeKind::duration) {
                    duration_groups_.push_back(&e);
                    break;
                }
        }
        if (e.kind == NodeKind::time_window) windows_.push_back(&e);
        for (const auto& c : e.children) collect_temporal(c);
    }

    void evaluate_at(Timestamp now, std::vector<FiredAction>& fired) {
        now_ = now;
        int emitted = 0;
        std::vector<std::string> emitters;
        for (bool again = true; again;) {
            again = false;
            for (std::size_t i = 0; i < rules_.rules.size(); ++i) {
                const Rule& r = rules_.rules[i];
                const bool v = evaluate(r.trigger, timeline_, now, opts_.tz_offset);
                const bool edge = v && !last_[i];
                last_[i] = v;
                if (!edge) continue;
                for (const auto& a : r.actions) {
                    fired.push_back(FiredAction{now, r.name, a});
                    if (a.type == ActionType::send_alert) continue;
                    if (++emitted > opts_.emission_cap) {
                        std::string cycle;
                        for (const auto& n : emitters) cycle += (cycle.empty() ? "" : " -> ") + n;
                        throw Error(ErrorKind::emission_overflow,
                                    "more than " + std::to_string(opts_.emission_cap) + " events emitted at " +
                                        std::to_string(now) + "; rules involved: " + cycle);
                    }
                    if (std::find(emitters.begin(), emitters.end(), r.name) == emitters.end())
                        emitters.push_back(r.name);
                    const EventKind kind =
                        a.type == ActionType::emit_event ? EventKind::activity : EventKind::actuation;
                    timeline_.ingest(ContextEvent{now, kind, a.entity, a.attribute, a.value});
                    again = true;
                }
            }
        }
        schedule(now);
    }

    void schedule(Timestamp now) {
        for (const Expr* g : duration_groups_) {
            const auto start = group_run_start(*g, timeline_, now);
            if (!start) continue;
            for (const auto& c : g->children)
                if (c.kind == NodeKind::duration && *start + c.duration > now) timers_.insert(*start + c.duration);
        }
        for (const Expr* w : windows_) {
            const Timestamp c = clock_of(now, opts_.tz_offset);
            for (int minutes : {w->window_start, w->window_end}) {
                Timestamp delta = Timestamp{minutes} * 60'000 - c;
                if (delta <= 0) delta += kDayMs;
                timers_.insert(now + delta);
            }
        }
    }

    RuleSet rules_;
    EngineOptions opts_;
    EventTimeline timeline_;
    std::vector<bool> last_;
    std::set<Timestamp> timers_;
    std::optional<Timestamp> now_;
    std::vector<const Expr*> duration_groups_;
    std::vector<const Expr*> windows_;
};

/// Folds step over the stream; with `until`, timers are processed up to it.
inline std::vector<FiredAction> run(const RuleSet& rules, const std::vector<ContextEvent>& events,
                                    EngineOptions opts = {}, std::optional<Timestamp> until = std::nullopt) {
    Engine engine(rules, opts);
    std::vector<FiredAction> log;
    for (const auto& e : events) {
        auto f = engine.step(e);
        log.insert(log.end(), f.begin(), f.end());
    }
    if (until) {
        auto f = engine.advance_to(*until);
        log.insert(log.end(), f.begin(), f.end());
    }
    return log;
}

inline nlohmann::ordered_json to_json(const FiredAction& f) {
    nlohmann::ordered_json j;
    j["ts"] = f.ts;
    j["rule"] = f.rule;
    j["action_type"] = to_string(f.action.type);
    nlohmann::ordered_json payload;
    if (f.action.type == ActionType::send_alert) {
        payload["message"] = f.action.message;
    } else {
        payload["entity"] = f.action.entity;
        payload["attribute"] = f.action.attribute;
        payload["value"] = value_to_json(f.action.value);
    }
    j["payload"] = std::move(payload);
    return j;
}

inline void write_actions_jsonl(std::ostream& out, const std::vector<FiredAction>& log) {
    for (const auto& f : log) out << to_json(f).dump() << '\n';
}

}  // namespace wits::rules
