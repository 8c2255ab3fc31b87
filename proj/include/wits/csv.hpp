#pragma once

// CSV formats: long-form sensor readings, per-segment feature tables and
// segment labels. Numbers are written in shortest round-trip form.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "wits/error.hpp"
#include "wits/signal.hpp"

namespace wits::io {

inline std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

namespace detail {

inline std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    for (;;) {
        const auto comma = line.find(',', pos);
        auto field = line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) field.remove_suffix(1);
        out.push_back(field);
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return out;
}

inline Error row_error(std::size_t line, const std::string& what) {
    return invalid_input("line " + std::to_string(line) + ": " + what);
}

inline double parse_double(std::string_view s, std::size_t line) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw row_error(line, "'" + std::string(s) + "' is not a number");
    return v;
}

inline Timestamp parse_int(std::string_view s, std::size_t line) {
    Timestamp v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw row_error(line, "'" + std::string(s) + "' is not an integer timestamp");
    return v;
}

inline bool blank(std::string_view s) { return s.find_first_not_of(" \t\r") == std::string_view::npos; }

// Reads the header, returning the line number it was found on.
inline std::vector<std::string> header(std::istream& in, std::size_t& lineno) {
    std::string line;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        std::vector<std::string> out;
        for (auto f : split(line)) out.emplace_back(f);
        return out;
    }
    throw invalid_input("empty CSV file");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sensor readings: timestamp_ms,channel_id,value
// ---------------------------------------------------------------------------

/// Pivots long-form readings into frames. Channels keep their order of first
/// appearance; every timestamp must carry each channel exactly once. The
/// sample period is the most common step between frames.
inline SignalStream read_sensor_csv(std::istream& in, Timestamp default_period = 500) {
    std::size_t lineno = 0;
    const auto head = detail::header(in, lineno);
    if (head != std::vector<std::string>{"timestamp_ms", "channel_id", "value"})
        throw invalid_input("sensor CSV header must be timestamp_ms,channel_id,value");

    SignalStream s;
    std::map<std::string, std::size_t> channel_index;
    struct Reading { Timestamp ts; std::size_t ch; double v; std::size_t line; };
    std::vector<Reading> readings;
    std::string line;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::blank(line)) continue;
        const auto f = detail::split(line);
        if (f.size() != 3) throw detail::row_error(lineno, "expected 3 fields");
        const Timestamp ts = detail::parse_int(f[0], lineno);
        if (!readings.empty() && ts < readings.back().ts) throw detail::row_error(lineno, "timestamps must be sorted");
        const std::string ch(f[1]);
        if (ch.empty()) throw detail::row_error(lineno, "empty channel id");
        auto [it, added] = channel_index.emplace(ch, s.channels.size());
        if (added) s.channels.push_back(ch);
        const double v = detail::parse_double(f[2], lineno);
        if (!std::isfinite(v)) throw detail::row_error(lineno, "value is NaN/Inf");
        readings.push_back({ts, it->second, v, lineno});
    }

    std::size_t i = 0;
    while (i < readings.size()) {
        Frame fr;
        fr.ts = readings[i].ts;
        std::vector<bool> seen(s.channels.size(), false);
        fr.values.assign(s.channels.size(), 0.0);
        std::size_t j = i;
        for (; j < readings.size() && readings[j].ts == fr.ts; ++j) {
            if (seen[readings[j].ch]) throw detail::row_error(readings[j].line, "duplicate reading for channel " + s.channels[readings[j].ch]);
            seen[readings[j].ch] = true;
            fr.values[readings[j].ch] = readings[j].v;
        }
        if (std::find(seen.begin(), seen.end(), false) != seen.end())
            throw detail::row_error(readings[i].line, "timestamp " + std::to_string(fr.ts) + " lacks a reading for some channel");
        s.frames.push_back(std::move(fr));
        i = j;
    }

    std::map<Timestamp, int> steps;
    for (std::size_t k = 1; k < s.frames.size(); ++k) ++steps[s.frames[k].ts - s.frames[k - 1].ts];
    s.sample_period = default_period;
    int best = 0;
    for (const auto& [step, count] : steps)
        if (count > best) s.sample_period = step, best = count;
    s.validate();
    return s;
}

inline void write_sensor_csv(std::ostream& out, const SignalStream& s) {
    out << "timestamp_ms,channel_id,value\n";
    for (const auto& f : s.frames)
        for (std::size_t c = 0; c < s.channels.size(); ++c)
            out << f.ts << ',' << s.channels[c] << ',' << format_double(f.values[c]) << '\n';
}

// ---------------------------------------------------------------------------
// Feature tables: start_ms,end_ms,<channel>_<stat>...
// ---------------------------------------------------------------------------

struct FeatureTable {
    std::vector<std::string> names;
    std::vector<std::pair<Timestamp, Timestamp>> spans;
    Eigen::MatrixXd x;
};

inline void write_features_csv(std::ostream& out, const FeatureTable& t) {
    out << "start_ms,end_ms";
    for (const auto& n : t.names) out << ',' << n;
    out << '\n';
    for (Eigen::Index i = 0; i < t.x.rows(); ++i) {
        out << t.spans[static_cast<std::size_t>(i)].first << ',' << t.spans[static_cast<std::size_t>(i)].second;
        for (Eigen::Index j = 0; j < t.x.cols(); ++j) out << ',' << format_double(t.x(i, j));
        out << '\n';
    }
}

inline FeatureTable read_features_csv(std::istream& in) {
    std::size_t lineno = 0;
    const auto head = detail::header(in, lineno);
    if (head.size() < 3 || head[0] != "start_ms" || head[1] != "end_ms")
        throw invalid_input("feature CSV header must start with start_ms,end_ms and name at least one feature");
    FeatureTable t;
    t.names.assign(head.begin() + 2, head.end());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::blank(line)) continue;
        const auto f = detail::split(line);
        if (f.size() != head.size()) throw detail::row_error(lineno, "expected " + std::to_string(head.size()) + " fields");
        const Timestamp s = detail::parse_int(f[0], lineno), e = detail::parse_int(f[1], lineno);
        if (e <= s) throw detail::row_error(lineno, "end_ms must exceed start_ms");
        t.spans.emplace_back(s, e);
        std::vector<double> row;
        for (std::size_t k = 2; k < f.size(); ++k) {
            const double v = detail::parse_double(f[k], lineno);
            if (!std::isfinite(v)) throw detail::row_error(lineno, "feature is NaN/Inf");
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    t.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) t.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return t;
}

inline FeatureTable feature_table(const FeaturizedStream& f, const std::vector<std::string>& channels) {
    return FeatureTable{feature_names(channels), f.spans, f.features};
}

// ---------------------------------------------------------------------------
// Labels: start_ms,end_ms,label[,outlier]
// ---------------------------------------------------------------------------

struct LabelRow {
    Timestamp start = 0, end = 0;
    std::string label;
    bool outlier = false;
};

inline void write_labels_csv(std::ostream& out, const std::vector<LabelRow>& rows) {
    out << "start_ms,end_ms,label,outlier\n";
    for (const auto& r : rows) out << r.start << ',' << r.end << ',' << r.label << ',' << (r.outlier ? 1 : 0) << '\n';
}

inline std::vector<LabelRow> read_labels_csv(std::istream& in) {
    std::size_t lineno = 0;
    const auto head = detail::header(in, lineno);
    const bool has_outlier = head.size() == 4 && head[3] == "outlier";
    if (head.size() < 3 || head[0] != "start_ms" || head[1] != "end_ms" || head[2] != "label" ||
        (head.size() == 4 && !has_outlier) || head.size() > 4)
        throw invalid_input("label CSV header must be start_ms,end_ms,label[,outlier]");
    std::vector<LabelRow> out;
    std::string line;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::blank(line)) continue;
        const auto f = detail::split(line);
        if (f.size() != head.size()) throw detail::row_error(lineno, "expected " + std::to_string(head.size()) + " fields");
        LabelRow r;
        r.start = detail::parse_int(f[0], lineno);
        r.end = detail::parse_int(f[1], lineno);
        if (r.end <= r.start) throw detail::row_error(lineno, "end_ms must exceed start_ms");
        r.label = std::string(f[2]);
        if (r.label.empty()) throw detail::row_error(lineno, "empty label");
        if (has_outlier) {
            if (f[3] != "0" && f[3] != "1") throw detail::row_error(lineno, "outlier must be 0 or 1");
            r.outlier = f[3] == "1";
        }
        out.push_back(std::move(r));
    }
    return out;
}

/// The label row whose [start, end) covers the whole segment, per segment.
/// Label rows may be per segment or per activity span.
inline std::vector<const LabelRow*> match_labels(const std::vector<std::pair<Timestamp, Timestamp>>& spans,
                                                 const std::vector<LabelRow>& labels) {
    std::vector<const LabelRow*> sorted;
    for (const auto& l : labels) sorted.push_back(&l);
    std::stable_sort(sorted.begin(), sorted.end(), [](const LabelRow* a, const LabelRow* b) { return a->start < b->start; });
    std::vector<const LabelRow*> out;
    for (const auto& [s, e] : spans) {
        auto it = std::upper_bound(sorted.begin(), sorted.end(), s,
                                   [](Timestamp t, const LabelRow* l) { return t < l->start; });
        const LabelRow* hit = nullptr;
        if (it != sorted.begin()) {
            const LabelRow* cand = *std::prev(it);
            if (cand->start <= s && e <= cand->end) hit = cand;
        }
        if (!hit)
            throw invalid_input("no label covers segment [" + std::to_string(s) + ", " + std::to_string(e) + ")");
        out.push_back(hit);
    }
    return out;
}

}  // namespace wits::io
