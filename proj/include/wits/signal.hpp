#pragma once

// Signal preprocessing: Hodrick-Prescott detrending, fixed-length
// segmentation and the per-channel statistical featurizer.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "wits/error.hpp"

namespace wits {

using Timestamp = std::int64_t;  // milliseconds
using FeatureMatrix = Eigen::MatrixXd;

struct Frame {
    Timestamp ts = 0;
    std::vector<double> values;  // one per channel
};

struct SignalStream {
    std::vector<std::string> channels;
    std::vector<Frame> frames;
    Timestamp sample_period = 500;

    std::size_t channel_count() const { return channels.size(); }

    /// Throws invalid-input when an invariant is broken.
    void validate() const {
        if (sample_period <= 0) throw invalid_input("sample_period must be positive");
        for (std::size_t i = 0; i < frames.size(); ++i) {
            if (frames[i].values.size() != channels.size())
                throw invalid_input("frame " + std::to_string(i) + " has " +
                                    std::to_string(frames[i].values.size()) +
                                    " values, expected " + std::to_string(channels.size()));
            if (i > 0 && frames[i].ts <= frames[i - 1].ts)
                throw invalid_input("timestamps must be strictly increasing (frame " +
                                    std::to_string(i) + ")");
        }
    }

    std::vector<double> channel_values(std::size_t ch) const {
        std::vector<double> out;
        out.reserve(frames.size());
        for (const auto& f : frames) out.push_back(f.values[ch]);
        return out;
    }
};

// ---------------------------------------------------------------------------
// Hodrick-Prescott filter
// ---------------------------------------------------------------------------

struct TrendDecomposition {
    std::vector<double> growth;
    std::vector<double> cyclical;
    double lambda = 0.0;
};

namespace detail {

// Second differences (D2 y), length T-2.
inline std::vector<double> second_differences(std::span<const double> y) {
    std::vector<double> s(y.size() >= 2 ? y.size() - 2 : 0);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = y[i] - 2.0 * y[i + 1] + y[i + 2];
    return s;
}

// Solves (I + lambda * D2' D2) x = b with a banded LDL' factorization.
// The matrix is symmetric positive definite with half-bandwidth 2.
inline std::vector<double> solve_hp_system(std::span<const double> b, double lambda) {
    const std::size_t n = b.size();
    std::vector<double> a0(n, 1.0), a1(n, 0.0), a2(n, 0.0);
    // Accumulate lambda * r r' for every second-difference row r = [1 -2 1].
    constexpr std::array<double, 3> r{1.0, -2.0, 1.0};
    for (std::size_t i = 0; i + 2 < n; ++i) {
        for (std::size_t p = 0; p < 3; ++p) {
            a0[i + p] += lambda * r[p] * r[p];
            if (p + 1 < 3) a1[i + p] += lambda * r[p] * r[p + 1];
            if (p + 2 < 3) a2[i + p] += lambda * r[p] * r[p + 2];
        }
    }

    std::vector<double> d(n), l1(n, 0.0), l2(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double dj = a0[j];
        if (j >= 1) dj -= l1[j - 1] * l1[j - 1] * d[j - 1];
        if (j >= 2) dj -= l2[j - 2] * l2[j - 2] * d[j - 2];
        d[j] = dj;
        if (j + 1 < n) {
            double v = a1[j];
            if (j >= 1) v -= l2[j - 1] * l1[j - 1] * d[j - 1];
            l1[j] = v / dj;
        }
        if (j + 2 < n) l2[j] = a2[j] / dj;
    }

    std::vector<double> x(b.begin(), b.end());
    for (std::size_t i = 0; i < n; ++i) {
        if (i >= 1) x[i] -= l1[i - 1] * x[i - 1];
        if (i >= 2) x[i] -= l2[i - 2] * x[i - 2];
    }
    for (std::size_t i = 0; i < n; ++i) x[i] /= d[i];
    for (std::size_t k = n; k-- > 0;) {
        if (k + 1 < n) x[k] -= l1[k] * x[k + 1];
        if (k + 2 < n) x[k] -= l2[k] * x[k + 2];
    }
    return x;
}

// Growth component without input validation; series shorter than three
// samples have no curvature term, so the series is its own trend.
inline TrendDecomposition hp_decompose(std::span<const double> y, double lambda) {
    TrendDecomposition out;
    out.lambda = lambda;
    const std::size_t n = y.size();
    out.growth.assign(y.begin(), y.end());
    out.cyclical.assign(n, 0.0);
    if (n < 3 || lambda == 0.0) return out;

    // Solve for the cyclical part c = (I + lambda P)^-1 lambda P y, P = D2'D2.
    // A series with vanishing second differences yields c == 0 exactly.
    const auto s = second_differences(y);
    std::vector<double> rhs(n, 0.0);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double v = lambda * s[i];
        rhs[i] += v;
        rhs[i + 1] -= 2.0 * v;
        rhs[i + 2] += v;
    }
    out.cyclical = solve_hp_system(rhs, lambda);
    for (std::size_t i = 0; i < n; ++i) out.growth[i] = y[i] - out.cyclical[i];
    return out;
}

}  // namespace detail

/// Trend/cycle split minimizing sum(c_t^2) + lambda * sum((g_{t+1}-g_t)-(g_t-g_{t-1}))^2.
inline TrendDecomposition hp_filter(std::span<const double> series, double lambda) {
    if (series.size() < 3) throw invalid_input("hp_filter needs at least 3 samples");
    if (!std::isfinite(lambda) || lambda < 0.0)
        throw invalid_input("hp_filter lambda must be finite and nonnegative");
    for (double v : series)
        if (!std::isfinite(v)) throw invalid_input("hp_filter input contains NaN/Inf");
    return detail::hp_decompose(series, lambda);
}

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

struct Segment {
    Timestamp start_ts = 0;
    Timestamp end_ts = 0;
    Timestamp window = 10'000;
    std::vector<Frame> frames;
};

struct SegmentOptions {
    Timestamp window = 10'000;
    Timestamp stride = 0;  // 0 means stride == window (non-overlapping)
};

/// Index ranges [begin, end) of gap-free runs. A gap is a step larger than
/// twice the sample period.
inline std::vector<std::pair<std::size_t, std::size_t>> contiguous_runs(const SignalStream& stream) {
    std::vector<std::pair<std::size_t, std::size_t>> runs;
    const auto& f = stream.frames;
    std::size_t begin = 0;
    for (std::size_t i = 1; i <= f.size(); ++i) {
        if (i == f.size() || f[i].ts - f[i - 1].ts > 2 * stream.sample_period) {
            if (i > begin) runs.emplace_back(begin, i);
            begin = i;
        }
    }
    return runs;
}

inline std::vector<Segment> segment(const SignalStream& stream, const SegmentOptions& opts = {}) {
    stream.validate();
    if (opts.window < 2 * stream.sample_period)
        throw invalid_input("window must span at least two samples");
    if (opts.stride < 0) throw invalid_input("stride must be nonnegative");
    const Timestamp stride = opts.stride == 0 ? opts.window : opts.stride;
    const auto per_window = static_cast<std::size_t>(opts.window / stream.sample_period);
    const auto per_stride = std::max<std::size_t>(1, static_cast<std::size_t>(stride / stream.sample_period));

    std::vector<Segment> out;
    for (auto [begin, end] : contiguous_runs(stream)) {
        for (std::size_t s = begin; s + per_window <= end; s += per_stride) {
            Segment seg;
            seg.start_ts = stream.frames[s].ts;
            seg.end_ts = seg.start_ts + opts.window;
            seg.window = opts.window;
            seg.frames.assign(stream.frames.begin() + static_cast<std::ptrdiff_t>(s),
                              stream.frames.begin() + static_cast<std::ptrdiff_t>(s + per_window));
            out.push_back(std::move(seg));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Statistical features
// ---------------------------------------------------------------------------

enum class Stat : int {
    min, max, mean, rms, variance, stddev, kurtosis, skewness,
    entropy, median, zero_crossings, mean_crossings,
};

inline constexpr std::size_t kStatCount = 12;

inline constexpr std::array<std::string_view, kStatCount> kStatNames{
    "min", "max", "mean", "rms", "variance", "stddev", "kurtosis", "skewness",
    "entropy", "median", "zcr", "mcr",
};

struct FeatureOptions {
    int entropy_bins = 16;
};

namespace detail {

inline std::size_t sign_changes(std::span<const double> v, double level) {
    std::size_t count = 0;
    int prev = 0;
    for (double x : v) {
        const double d = x - level;
        const int s = d > 0.0 ? 1 : (d < 0.0 ? -1 : 0);
        if (s == 0) continue;
        if (prev != 0 && s != prev) ++count;
        prev = s;
    }
    return count;
}

}  // namespace detail

/// The 12 statistics of one channel, in Stat order.
inline std::array<double, kStatCount> channel_stats(std::span<const double> v,
                                                    const FeatureOptions& opts = {}) {
    if (v.empty()) throw invalid_input("cannot featurize an empty channel");
    const double n = static_cast<double>(v.size());
    std::array<double, kStatCount> s{};

    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double mn = *lo, mx = *hi;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double sq = 0.0, m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double x : v) {
        sq += x * x;
        const double d = x - mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;

    std::vector<double> sorted(v.begin(), v.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t mid = sorted.size() / 2;
    const double median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);

    double entropy = 0.0;
    if (mx > mn) {
        const int bins = std::max(1, opts.entropy_bins);
        std::vector<std::size_t> hist(static_cast<std::size_t>(bins), 0);
        const double width = (mx - mn) / bins;
        for (double x : v) {
            auto b = static_cast<int>((x - mn) / width);
            hist[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))]++;
        }
        for (std::size_t c : hist) {
            if (c == 0) continue;
            const double p = static_cast<double>(c) / n;
            entropy -= p * std::log(p);
        }
    }

    s[static_cast<int>(Stat::min)] = mn;
    s[static_cast<int>(Stat::max)] = mx;
    s[static_cast<int>(Stat::mean)] = mean;
    s[static_cast<int>(Stat::rms)] = std::sqrt(sq / n);
    s[static_cast<int>(Stat::variance)] = m2;
    s[static_cast<int>(Stat::stddev)] = std::sqrt(m2);
    s[static_cast<int>(Stat::kurtosis)] = m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;
    s[static_cast<int>(Stat::skewness)] = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
    s[static_cast<int>(Stat::entropy)] = entropy;
    s[static_cast<int>(Stat::median)] = median;
    s[static_cast<int>(Stat::zero_crossings)] = static_cast<double>(detail::sign_changes(v, 0.0));
    s[static_cast<int>(Stat::mean_crossings)] = static_cast<double>(detail::sign_changes(v, mean));
    return s;
}

/// Feature vector of length 12 * channels: channel blocks, stats in Stat order.
inline Eigen::VectorXd extract_features(const Segment& seg, const FeatureOptions& opts = {}) {
    if (seg.frames.empty()) throw invalid_input("cannot featurize an empty segment");
    const std::size_t channels = seg.frames.front().values.size();
    Eigen::VectorXd out(static_cast<Eigen::Index>(channels * kStatCount));
    std::vector<double> buf(seg.frames.size());
    for (std::size_t ch = 0; ch < channels; ++ch) {
        for (std::size_t i = 0; i < seg.frames.size(); ++i) buf[i] = seg.frames[i].values[ch];
        const auto stats = channel_stats(buf, opts);
        for (std::size_t k = 0; k < kStatCount; ++k)
            out(static_cast<Eigen::Index>(ch * kStatCount + k)) = stats[k];
    }
    return out;
}

inline std::vector<std::string> feature_names(const std::vector<std::string>& channels) {
    std::vector<std::string> names;
    names.reserve(channels.size() * kStatCount);
    for (const auto& ch : channels)
        for (auto stat : kStatNames) names.push_back(ch + "_" + std::string(stat));
    return names;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

struct PipelineOptions {
    double lambda = 100.0;
    SegmentOptions segmenting{};
    FeatureOptions features{};
    bool use_growth = true;  // false featurizes the raw series
};

/// Replaces every channel with its HP growth component. Each gap-free run is
/// filtered independently.
inline SignalStream smooth(const SignalStream& stream, double lambda) {
    stream.validate();
    if (!std::isfinite(lambda) || lambda < 0.0) throw invalid_input("lambda must be finite and nonnegative");
    for (const auto& f : stream.frames)
        for (double v : f.values)
            if (!std::isfinite(v)) throw invalid_input("signal contains NaN/Inf");

    SignalStream out = stream;
    std::vector<double> buf;
    for (auto [begin, end] : contiguous_runs(stream)) {
        for (std::size_t ch = 0; ch < stream.channel_count(); ++ch) {
            buf.clear();
            for (std::size_t i = begin; i < end; ++i) buf.push_back(stream.frames[i].values[ch]);
            const auto dec = detail::hp_decompose(buf, lambda);
            for (std::size_t i = begin; i < end; ++i) out.frames[i].values[ch] = dec.growth[i - begin];
        }
    }
    return out;
}

struct FeaturizedStream {
    FeatureMatrix features;  // one row per segment
    std::vector<std::pair<Timestamp, Timestamp>> spans;
};

inline FeaturizedStream featurize_stream(const SignalStream& stream, const PipelineOptions& opts = {}) {
    const SignalStream prepared = opts.use_growth ? smooth(stream, opts.lambda) : stream;
    const auto segments = segment(prepared, opts.segmenting);
    FeaturizedStream out;
    out.features.resize(static_cast<Eigen::Index>(segments.size()),
                        static_cast<Eigen::Index>(stream.channel_count() * kStatCount));
    for (std::size_t i = 0; i < segments.size(); ++i) {
        out.features.row(static_cast<Eigen::Index>(i)) = extract_features(segments[i], opts.features).transpose();
        out.spans.emplace_back(segments[i].start_ts, segments[i].end_ts);
    }
    return out;
}

}  // namespace wits
