#pragma once

// Synthetic smart-home data with planted dictionary structure.
//
// Feature rows are generated directly: x = (c D_k*) M_p + noise, where c is a
// sparse code, D_k* the planted dictionary of the activity and M_p an
// orthogonal person-specific mixing close to the identity. Rows are embedded
// into a raw multi-channel stream through a fixed linear lift with
// orthonormal rows, so `unlift` recovers them exactly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "wits/error.hpp"
#include "wits/events.hpp"
#include "wits/signal.hpp"

namespace wits::sim {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Eigen::Index;

struct PlantedModel {
    Matrix shared_dict;              // d x sd
    std::vector<Matrix> task_dicts;  // d x m each
    Matrix projection;               // m x sd, orthonormal columns
};

namespace detail {

inline Matrix gaussian(std::mt19937_64& rng, Index rows, Index cols) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Matrix out(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) out(i, j) = nd(rng);
    return out;
}

// Orthonormal columns via QR with signs fixed so R has a positive diagonal.
inline Matrix orthonormalize(const Matrix& a) {
    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
    const Matrix r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
    for (Index j = 0; j < a.cols(); ++j)
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    return q;
}

inline void normalize_rows(Matrix& m) {
    for (Index i = 0; i < m.rows(); ++i) {
        const double n = m.row(i).norm();
        if (n > 0.0) m.row(i) /= n;
    }
}

}  // namespace detail

/// Seeded ground truth. Every task atom is sqrt(a) d_i Q' + sqrt(1-a) e_ki,
/// with d_i a unit shared atom and e_ki a unit vector orthogonal to span(Q),
/// so atoms have unit norm and D_k Q = sqrt(a) D for every k.
inline PlantedModel plant_model(std::uint64_t seed, int K, int d, int m, int sd, double shared_fraction = 0.3) {
    if (K < 1 || d < 1 || sd < 1 || sd >= m) throw invalid_input("plant_model needs K, d >= 1 and 1 <= sd < m");
    if (!(shared_fraction >= 0.0 && shared_fraction <= 1.0)) throw invalid_input("shared_fraction must lie in [0, 1]");
    std::mt19937_64 rng(seed);
    PlantedModel pm;
    pm.projection = detail::orthonormalize(detail::gaussian(rng, m, sd));
    Matrix shared = detail::gaussian(rng, d, sd);
    detail::normalize_rows(shared);
    const double a = std::sqrt(shared_fraction), b = std::sqrt(1.0 - shared_fraction);
    const Matrix perp = Matrix::Identity(m, m) - pm.projection * pm.projection.transpose();
    for (int k = 0; k < K; ++k) {
        Matrix unique = detail::gaussian(rng, d, m) * perp;
        detail::normalize_rows(unique);
        pm.task_dicts.push_back(a * shared * pm.projection.transpose() + b * unique);
    }
    pm.shared_dict = a * shared;
    return pm;
}

// ---------------------------------------------------------------------------
// Scenario scripts
// ---------------------------------------------------------------------------

struct ActivitySpan {
    std::string label;
    Timestamp start = 0;
    Timestamp duration = 0;
};

struct ContextSpec {
    EventKind kind = EventKind::location;
    std::string entity;
    std::string attribute;
};

struct ScenarioScript {
    std::uint64_t seed = 0;
    std::vector<std::string> classes;  // task order; every span label must be listed
    std::vector<ActivitySpan> activities;
    int residents = 1;
    int channels = 4;
    Timestamp sample_period = 500;
    Timestamp window = 10'000;
    double noise_sigma = 0.0;
    double snr_db = -1.0;              // when >= 0, overrides noise_sigma
    double person_variation = 0.0;     // in [0, 1]
    int persons = 0;                   // population size each span picks from; 0 draws a new person per span
    std::uint64_t persons_seed = 0;
    double outlier_rate = 0.0;
    double outlier_energy = 10.0;      // outlier perturbation energy / the row's residual energy
    double amplitude_spread = 1.0;     // per-row gain, log-uniform in [1/spread, spread]
    // Planted model.
    std::uint64_t model_seed = 0;
    int atoms = 16;
    int subspace_dim = 5;
    int support = 0;                   // nonzeros per code; 0 means atoms / 4
    double shared_fraction = 0.3;
    std::map<std::string, std::vector<ContextSpec>> context;  // label -> facts true during its spans

    int feature_dim() const { return 12 * channels; }
    Index frames_per_window() const { return window / sample_period; }

    void validate() const {
        if (residents != 1) throw invalid_input("only a single resident is supported");
        if (channels < 1) throw invalid_input("channels must be positive");
        if (sample_period <= 0 || window <= 0 || window % sample_period != 0)
            throw invalid_input("window must be a positive multiple of the sample period");
        if (frames_per_window() < 12) throw invalid_input("a window needs at least 12 frames to hold a feature row");
        if (classes.empty()) throw invalid_input("script needs at least one class");
        if (!(noise_sigma >= 0.0)) throw invalid_input("noise_sigma must be nonnegative");
        if (!(person_variation >= 0.0 && person_variation <= 1.0))
            throw invalid_input("person_variation must lie in [0, 1]");
        if (persons < 0) throw invalid_input("persons must be nonnegative");
        if (!(outlier_rate >= 0.0 && outlier_rate <= 1.0)) throw invalid_input("outlier_rate must lie in [0, 1]");
        if (!(amplitude_spread >= 1.0)) throw invalid_input("amplitude_spread must be at least 1");
        if (atoms < 1 || atoms > feature_dim()) throw invalid_input("atoms must lie in [1, 12 * channels]");
        if (subspace_dim < 1 || subspace_dim >= feature_dim()) throw invalid_input("subspace_dim out of range");
        if (support < 0 || support > atoms) throw invalid_input("support must lie in [0, atoms]");
        for (std::size_t i = 0; i < activities.size(); ++i) {
            const auto& a = activities[i];
            if (std::find(classes.begin(), classes.end(), a.label) == classes.end())
                throw invalid_input("activity label '" + a.label + "' is not a declared class");
            if (a.duration <= 0) throw invalid_input("activity durations must be positive");
            if (a.start % window != 0 || a.duration % window != 0)
                throw invalid_input("activity spans must start and last whole windows");
            if (i > 0 && a.start < activities[i - 1].start + activities[i - 1].duration)
                throw invalid_input("activity spans overlap or are out of order");
        }
    }
};

struct LabeledSegment {
    Timestamp start = 0, end = 0;
    int label = 0;  // 1-based index into classes
    int person = 0;  // population index, or span index when every span has its own person
    bool outlier = false;
};

struct Generated {
    SignalStream stream;
    Matrix features;  // one row per segment
    std::vector<LabeledSegment> segments;
    std::vector<ContextEvent> events;
    double noise_sigma = 0.0;
};

constexpr double kBaselineDbm = -60.0;
constexpr std::uint64_t kLiftSeed = 0x5eed'11f7;

/// Fixed m x (frames * channels) matrix with orthonormal rows.
inline Matrix lift_matrix(int channels, Index frames) {
    const Index m = 12 * channels, width = frames * channels;
    std::mt19937_64 rng(kLiftSeed + static_cast<std::uint64_t>(channels) * 1000 + static_cast<std::uint64_t>(frames));
    return detail::orthonormalize(detail::gaussian(rng, width, m)).transpose();
}

/// Orthogonal person mixing near the identity.
inline Matrix person_mixing(std::uint64_t persons_seed, int person, Index m, double variation) {
    if (variation == 0.0) return Matrix::Identity(m, m);
    std::mt19937_64 rng(persons_seed * 7919 + static_cast<std::uint64_t>(person) + 1);
    const Matrix g = detail::gaussian(rng, m, m) / std::sqrt(static_cast<double>(m));
    return detail::orthonormalize(Matrix::Identity(m, m) + variation * g);
}

/// Mean squared norm of g c D over the code and gain distribution, estimated
/// on a fixed sample so that SNR-based noise levels are deterministic.
inline double mean_signal_energy(const PlantedModel& pm, int support, double amplitude_spread = 1.0) {
    std::mt19937_64 rng(12345);
    const Index d = pm.task_dicts.front().rows();
    std::uniform_real_distribution<double> mag(0.5, 1.5);
    std::bernoulli_distribution sign(0.5);
    std::vector<Index> idx(static_cast<std::size_t>(d));
    double total = 0.0;
    const int samples = 4000;
    for (int s = 0; s < samples; ++s) {
        const auto& dict = pm.task_dicts[static_cast<std::size_t>(s) % pm.task_dicts.size()];
        for (Index i = 0; i < d; ++i) idx[static_cast<std::size_t>(i)] = i;
        std::shuffle(idx.begin(), idx.end(), rng);
        Eigen::RowVectorXd x = Eigen::RowVectorXd::Zero(dict.cols());
        for (int j = 0; j < support; ++j) x += (sign(rng) ? 1.0 : -1.0) * mag(rng) * dict.row(idx[static_cast<std::size_t>(j)]);
        total += x.squaredNorm();
    }
    // E[g^2] for g = exp(u), u uniform on [-L, L].
    const double l = std::log(amplitude_spread);
    const double gain2 = l > 0.0 ? std::sinh(2.0 * l) / (2.0 * l) : 1.0;
    return gain2 * total / samples;
}

inline PlantedModel planted_for(const ScenarioScript& s) {
    return plant_model(s.model_seed, static_cast<int>(s.classes.size()), s.atoms, s.feature_dim(), s.subspace_dim,
                       s.shared_fraction);
}

inline Generated generate(const ScenarioScript& script, const PlantedModel& pm) {
    script.validate();
    const Index m = script.feature_dim();
    const Index d = script.atoms;
    if (pm.task_dicts.size() != script.classes.size() || pm.task_dicts.front().rows() != d ||
        pm.task_dicts.front().cols() != m)
        throw invalid_input("planted model does not match the script");
    const int support = script.support > 0 ? script.support : std::max(1, script.atoms / 4);

    Generated out;
    out.noise_sigma = script.noise_sigma;
    if (script.snr_db >= 0.0)
        out.noise_sigma = std::sqrt(mean_signal_energy(pm, support, script.amplitude_spread) / (static_cast<double>(m) * std::pow(10.0, script.snr_db / 10.0)));

    std::vector<Matrix> mixing;
    for (int p = 0; p < script.persons; ++p)
        mixing.push_back(person_mixing(script.persons_seed, p, m, script.person_variation));

    std::mt19937_64 rng(script.seed);
    std::mt19937_64 person_rng(script.seed ^ 0x9e37'79b9'7f4a'7c15ULL);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> mag(0.5, 1.5);
    std::bernoulli_distribution sign(0.5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double log_spread = std::log(script.amplitude_spread);
    std::uniform_real_distribution<double> log_gain(-log_spread, log_spread);
    std::uniform_int_distribution<int> pick_person(0, std::max(0, script.persons - 1));

    const Index frames = script.frames_per_window();
    const Matrix lift = lift_matrix(script.channels, frames);
    auto& stream = out.stream;
    stream.sample_period = script.sample_period;
    for (int c = 0; c < script.channels; ++c) stream.channels.push_back("tag" + std::to_string(c + 1));

    std::vector<Eigen::RowVectorXd> rows;
    std::vector<Index> idx(static_cast<std::size_t>(d));
    std::string previous_label;
    Timestamp previous_end = 0;
    auto close_span = [&](Timestamp t) {
        if (previous_label.empty()) return;
        out.events.push_back(ContextEvent{t, EventKind::activity, "Activity", previous_label, false});
        if (auto it = script.context.find(previous_label); it != script.context.end())
            for (const auto& c : it->second) out.events.push_back(ContextEvent{t, c.kind, c.entity, c.attribute, false});
    };

    for (const auto& span : script.activities) {
        const int k = static_cast<int>(std::find(script.classes.begin(), script.classes.end(), span.label) -
                                       script.classes.begin());
        int person = 0;
        Matrix fresh;
        if (script.persons > 0) {
            person = pick_person(rng);
        } else {
            person = static_cast<int>(&span - script.activities.data());
            fresh = person_mixing(person_rng(), 0, m, script.person_variation);
        }
        const Matrix& mix = script.persons > 0 ? mixing[static_cast<std::size_t>(person)] : fresh;
        close_span(previous_end);
        out.events.push_back(ContextEvent{span.start, EventKind::activity, "Activity", span.label, true});
        if (auto it = script.context.find(span.label); it != script.context.end())
            for (const auto& c : it->second) out.events.push_back(ContextEvent{span.start, c.kind, c.entity, c.attribute, true});

        for (Timestamp t = span.start; t < span.start + span.duration; t += script.window) {
            for (Index i = 0; i < d; ++i) idx[static_cast<std::size_t>(i)] = i;
            std::shuffle(idx.begin(), idx.end(), rng);
            Eigen::RowVectorXd clean = Eigen::RowVectorXd::Zero(m);
            for (int j = 0; j < support; ++j)
                clean += (sign(rng) ? 1.0 : -1.0) * mag(rng) * pm.task_dicts[static_cast<std::size_t>(k)].row(idx[static_cast<std::size_t>(j)]);
            if (log_spread > 0.0) clean *= std::exp(log_gain(rng));
            Eigen::RowVectorXd x = clean * mix;
            for (Index j = 0; j < m; ++j) x(j) += out.noise_sigma * noise(rng);
            const bool outlier = unit(rng) < script.outlier_rate;
            if (outlier) {
                // Residual w.r.t. the planted reconstruction: person deviation plus noise.
                const double energy = script.outlier_energy * (x - clean).squaredNorm();
                Eigen::RowVectorXd dir(m);
                for (Index j = 0; j < m; ++j) dir(j) = noise(rng);
                x += std::sqrt(energy) * dir / dir.norm();
            }
            rows.push_back(x);
            out.segments.push_back(LabeledSegment{t, t + script.window, k + 1, person, outlier});

            const Eigen::RowVectorXd raw = x * lift;  // frames * channels, frame-major
            for (Index f = 0; f < frames; ++f) {
                Frame fr;
                fr.ts = t + f * script.sample_period;
                for (int c = 0; c < script.channels; ++c) fr.values.push_back(kBaselineDbm + raw(f * script.channels + c));
                stream.frames.push_back(std::move(fr));
            }
        }
        previous_label = span.label;
        previous_end = span.start + span.duration;
    }
    close_span(previous_end);

    out.features.resize(static_cast<Index>(rows.size()), m);
    for (std::size_t i = 0; i < rows.size(); ++i) out.features.row(static_cast<Index>(i)) = rows[i];
    // Equal timestamps: the closing events of a span precede the opening ones.
    std::stable_sort(out.events.begin(), out.events.end(),
                     [](const ContextEvent& a, const ContextEvent& b) { return a.ts < b.ts; });
    return out;
}

/// Recovers the feature row of every whole window of a lifted stream.
inline Matrix unlift(const SignalStream& stream, Timestamp window) {
    SegmentOptions so;
    so.window = window;
    const auto segs = segment(stream, so);
    const int channels = static_cast<int>(stream.channels.size());
    const Index frames = window / stream.sample_period;
    const Matrix lift = lift_matrix(channels, frames);
    Matrix out(static_cast<Index>(segs.size()), 12 * channels);
    for (std::size_t s = 0; s < segs.size(); ++s) {
        Eigen::RowVectorXd raw(frames * channels);
        for (Index f = 0; f < frames; ++f)
            for (int c = 0; c < channels; ++c)
                raw(f * channels + c) = segs[s].frames[static_cast<std::size_t>(f)].values[static_cast<std::size_t>(c)] - kBaselineDbm;
        out.row(static_cast<Index>(s)) = raw * lift.transpose();
    }
    return out;
}

/// Spans of `span_windows` windows, shuffled so every class gets
/// `windows_per_class` windows in total; contiguous from t = 0.
inline std::vector<ActivitySpan> balanced_timeline(const std::vector<std::string>& classes, int windows_per_class,
                                                   int span_windows, Timestamp window, std::uint64_t seed) {
    if (span_windows < 1 || windows_per_class < 1) throw invalid_input("span and class sizes must be positive");
    std::vector<std::pair<std::string, int>> spans;
    for (const auto& c : classes)
        for (int left = windows_per_class; left > 0; left -= span_windows) spans.emplace_back(c, std::min(left, span_windows));
    std::mt19937_64 rng(seed);
    std::shuffle(spans.begin(), spans.end(), rng);
    std::vector<ActivitySpan> out;
    Timestamp t = 0;
    for (const auto& [label, n] : spans) {
        out.push_back(ActivitySpan{label, t, n * window});
        t += n * window;
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

/// Reads a script. Besides explicit `activities`, a `balanced` block
/// {windows_per_class, span_windows, seed, start_ms} builds a shuffled timeline.
inline ScenarioScript script_from_json(const nlohmann::json& j) {
    try {
        ScenarioScript s;
        s.seed = j.value("seed", s.seed);
        s.classes = j.at("classes").get<std::vector<std::string>>();
        s.residents = j.value("residents", s.residents);
        s.channels = j.value("channels", s.channels);
        s.sample_period = j.value("sample_period_ms", s.sample_period);
        s.window = j.value("window_ms", s.window);
        s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
        s.snr_db = j.value("snr_db", s.snr_db);
        s.person_variation = j.value("person_variation", s.person_variation);
        s.persons = j.value("persons", s.persons);
        s.persons_seed = j.value("persons_seed", s.persons_seed);
        s.outlier_rate = j.value("outlier_rate", s.outlier_rate);
        s.outlier_energy = j.value("outlier_energy", s.outlier_energy);
        s.amplitude_spread = j.value("amplitude_spread", s.amplitude_spread);
        s.model_seed = j.value("model_seed", s.model_seed);
        s.atoms = j.value("atoms", s.atoms);
        s.subspace_dim = j.value("subspace_dim", s.subspace_dim);
        s.support = j.value("support", s.support);
        s.shared_fraction = j.value("shared_fraction", s.shared_fraction);
        if (j.contains("activities")) {
            for (const auto& a : j.at("activities"))
                s.activities.push_back(ActivitySpan{a.at("label").get<std::string>(), a.at("start_ms").get<Timestamp>(),
                                                    a.at("duration_ms").get<Timestamp>()});
        } else if (j.contains("balanced")) {
            const auto& b = j.at("balanced");
            s.activities = balanced_timeline(s.classes, b.at("windows_per_class").get<int>(),
                                             b.value("span_windows", 5), s.window, b.value("seed", s.seed));
            const Timestamp offset = b.value("start_ms", Timestamp{0});
            for (auto& a : s.activities) a.start += offset;
        } else {
            throw invalid_input("script needs 'activities' or 'balanced'");
        }
        if (j.contains("context")) {
            for (const auto& [label, facts] : j.at("context").items()) {
                for (const auto& f : facts)
                    s.context[label].push_back(ContextSpec{parse_event_kind(f.value("kind", std::string("location"))),
                                                           f.at("entity").get<std::string>(),
                                                           f.at("attribute").get<std::string>()});
            }
        }
        return s;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorKind::parse, std::string("malformed scenario script: ") + ex.what());
    }
}

}  // namespace wits::sim
