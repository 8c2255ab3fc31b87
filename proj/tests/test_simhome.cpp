#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "wits/benchmark.hpp"
#include "wits/simhome.hpp"

using namespace wits;
using Eigen::MatrixXd;

namespace {

sim::ScenarioScript small_script(std::uint64_t seed, int per_class, double noise, double outliers) {
    sim::ScenarioScript s;
    s.classes = {"Cooking", "Sleeping", "Walking"};
    s.seed = seed;
    s.model_seed = 11;
    s.channels = 4;
    s.atoms = 16;
    s.support = 4;
    s.noise_sigma = noise;
    s.outlier_rate = outliers;
    s.activities = sim::balanced_timeline(s.classes, per_class, 4, s.window, seed);
    s.context["Cooking"].push_back({EventKind::location, "Kitchen", "Presence"});
    s.context["Sleeping"].push_back({EventKind::object_use, "Bed", "Occupied"});
    return s;
}

}  // namespace

TEST(PlantModel, FeasibleAndDeterministic) {
    const auto a = sim::plant_model(3, 4, 12, 48, 5);
    const auto b = sim::plant_model(3, 4, 12, 48, 5);
    EXPECT_EQ(a.projection, b.projection);
    EXPECT_EQ(a.shared_dict, b.shared_dict);
    ASSERT_EQ(a.task_dicts.size(), 4u);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(a.task_dicts[k], b.task_dicts[k]);

    EXPECT_LE((a.projection.transpose() * a.projection - MatrixXd::Identity(5, 5)).norm(), 1e-12);
    for (const auto& dk : a.task_dicts) {
        EXPECT_EQ(dk.rows(), 12);
        EXPECT_EQ(dk.cols(), 48);
        for (Eigen::Index i = 0; i < dk.rows(); ++i) EXPECT_LE(dk.row(i).norm(), 1.0 + 1e-12);
        // Shared structure: every task dictionary projects onto the same D.
        EXPECT_LE((dk * a.projection - a.shared_dict).norm(), 1e-10);
    }
    for (Eigen::Index i = 0; i < a.shared_dict.rows(); ++i) EXPECT_LE(a.shared_dict.row(i).norm(), 1.0 + 1e-12);

    const auto c = sim::plant_model(4, 4, 12, 48, 5);
    EXPECT_NE(a.projection, c.projection);
}

TEST(PlantModel, RejectsBadShapes) {
    EXPECT_THROW(sim::plant_model(0, 0, 4, 12, 2), Error);
    EXPECT_THROW(sim::plant_model(0, 2, 4, 12, 12), Error);
    EXPECT_THROW(sim::plant_model(0, 2, 4, 12, 2, 1.5), Error);
}

TEST(PersonMixing, OrthogonalAndNearIdentity) {
    const auto m = sim::person_mixing(5, 2, 24, 0.3);
    EXPECT_LE((m.transpose() * m - MatrixXd::Identity(24, 24)).norm(), 1e-10);
    EXPECT_GT((m - MatrixXd::Identity(24, 24)).norm(), 0.05);
    EXPECT_LT((m - MatrixXd::Identity(24, 24)).norm(), 0.3 * std::sqrt(24.0) * 1.5);
    EXPECT_EQ(sim::person_mixing(5, 2, 24, 0.0), MatrixXd::Identity(24, 24));
}

TEST(Generate, DeterministicUnderSeed) {
    const auto s = small_script(5, 20, 0.05, 0.1);
    const auto pm = sim::planted_for(s);
    const auto a = sim::generate(s, pm);
    const auto b = sim::generate(s, pm);
    EXPECT_EQ(a.features, b.features);
    EXPECT_EQ(a.events, b.events);
    ASSERT_EQ(a.stream.frames.size(), b.stream.frames.size());
    for (std::size_t i = 0; i < a.stream.frames.size(); ++i) {
        EXPECT_EQ(a.stream.frames[i].ts, b.stream.frames[i].ts);
        EXPECT_EQ(a.stream.frames[i].values, b.stream.frames[i].values);
    }
    std::ostringstream ja, jb;
    write_events_jsonl(ja, a.events);
    write_events_jsonl(jb, b.events);
    EXPECT_EQ(ja.str(), jb.str());

    const auto c = sim::generate(small_script(6, 20, 0.05, 0.1), pm);
    EXPECT_NE(a.features, c.features);
}

TEST(Generate, LabelsAlignWithScriptSpans) {
    const auto s = small_script(8, 12, 0.01, 0.0);
    const auto g = sim::generate(s, sim::planted_for(s));
    std::size_t row = 0;
    for (const auto& span : s.activities) {
        const auto k = static_cast<int>(std::find(s.classes.begin(), s.classes.end(), span.label) - s.classes.begin()) + 1;
        for (Timestamp t = span.start; t < span.start + span.duration; t += s.window, ++row) {
            ASSERT_LT(row, g.segments.size());
            EXPECT_EQ(g.segments[row].start, t);
            EXPECT_EQ(g.segments[row].end, t + s.window);
            EXPECT_EQ(g.segments[row].label, k);
        }
    }
    EXPECT_EQ(row, g.segments.size());
    EXPECT_EQ(g.features.rows(), static_cast<Eigen::Index>(row));
    EXPECT_EQ(g.features.cols(), 48);

    // Segmentation of the raw stream lands on the same windows.
    const auto segs = segment(g.stream, SegmentOptions{s.window, 0});
    ASSERT_EQ(segs.size(), g.segments.size());
    for (std::size_t i = 0; i < segs.size(); ++i) EXPECT_EQ(segs[i].start_ts, g.segments[i].start);
}

TEST(Generate, UnliftReproducesFeatureRows) {
    const auto s = small_script(9, 8, 0.2, 0.2);
    const auto g = sim::generate(s, sim::planted_for(s));
    g.stream.validate();
    const MatrixXd back = sim::unlift(g.stream, s.window);
    ASSERT_EQ(back.rows(), g.features.rows());
    EXPECT_LE((back - g.features).cwiseAbs().maxCoeff(), 1e-9);

    const auto lift = sim::lift_matrix(4, 20);
    EXPECT_LE((lift * lift.transpose() - MatrixXd::Identity(48, 48)).norm(), 1e-12);
}

TEST(Generate, ContextEventsFollowSpans) {
    const auto s = small_script(10, 8, 0.0, 0.0);
    const auto g = sim::generate(s, sim::planted_for(s));
    EventTimeline tl;
    for (const auto& e : g.events) tl.ingest(e);
    for (const auto& span : s.activities) {
        const Timestamp mid = span.start + span.duration / 2;
        for (const auto& c : s.classes) {
            const auto v = tl.state_at("Activity", c, mid);
            const bool active = v && std::get<bool>(*v);
            EXPECT_EQ(active, c == span.label) << c;
        }
        const auto kitchen = tl.state_at("Kitchen", "Presence", mid);
        EXPECT_EQ(kitchen && std::get<bool>(*kitchen), span.label == "Cooking");
    }
    const Timestamp end = s.activities.back().start + s.activities.back().duration;
    EXPECT_EQ(std::get<bool>(*tl.state_at("Activity", s.activities.back().label, end)), false);
}

TEST(Generate, SnrSetsNoiseLevel) {
    auto s = small_script(12, 100, 0.0, 0.0);
    s.snr_db = 20.0;
    const auto pm = sim::planted_for(s);
    const auto g = sim::generate(s, pm);
    const double signal = sim::mean_signal_energy(pm, 4);
    EXPECT_NEAR(g.noise_sigma * g.noise_sigma * 48.0, signal / 100.0, 1e-12);
    // Total row energy is signal plus noise.
    const double mean_energy = g.features.rowwise().squaredNorm().mean();
    EXPECT_NEAR(mean_energy / (signal * 1.01), 1.0, 0.1);
}

TEST(Generate, OutliersPlantedAtRate) {
    const auto s = small_script(13, 400, 0.05, 0.05);
    const auto g = sim::generate(s, sim::planted_for(s));
    int outliers = 0;
    for (const auto& seg : g.segments) outliers += seg.outlier;
    const double n = static_cast<double>(g.segments.size());
    EXPECT_NEAR(outliers / n, 0.05, 4.0 * std::sqrt(0.05 * 0.95 / n));
}

TEST(Generate, InfeasibleScriptsRejected) {
    const auto base = small_script(1, 4, 0.0, 0.0);
    const auto pm = sim::planted_for(base);
    auto expect_invalid = [&](sim::ScenarioScript s) {
        try {
            sim::generate(s, pm);
            ADD_FAILURE() << "accepted an infeasible script";
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::invalid_input);
        }
    };
    auto s = base;
    s.activities[1].start = s.activities[0].start + s.window;  // overlaps the first span
    expect_invalid(s);
    s = base;
    s.activities[0].duration = 0;
    expect_invalid(s);
    s = base;
    s.activities[0].label = "Dancing";
    expect_invalid(s);
    s = base;
    s.activities[0].duration += 1;
    expect_invalid(s);
    s = base;
    s.residents = 2;
    expect_invalid(s);
    s = base;
    s.support = 40;
    expect_invalid(s);
    s = base;
    s.window = 5000;  // 10 frames cannot carry 12 features per channel
    expect_invalid(s);
}

TEST(Generate, NoiselessDataIsPerfectlyRecognized) {
    const auto train_s = small_script(21, 40, 0.0, 0.0);
    const auto test_s = small_script(22, 20, 0.0, 0.0);
    const auto pm = sim::planted_for(train_s);
    const auto train = sim::generate(train_s, pm);
    const auto test = sim::generate(test_s, pm);

    mtdl::Hyperparams h;
    h.atoms = 16;
    h.subspace_dim = 5;
    h.lambda1 = 0.01;
    h.max_sweeps = 15;
    h.tol_rel_J = 1e-4;
    FitOptions fo;
    fo.calibration_folds = 0;
    const auto fit = fit_model(labeled_rows(train, train_s.classes), h, fo);
    int hits = 0;
    for (std::size_t i = 0; i < test.segments.size(); ++i) {
        const auto r = classify(Eigen::RowVectorXd(test.features.row(static_cast<Eigen::Index>(i))), fit.model);
        hits += r.label.name == test_s.classes[static_cast<std::size_t>(test.segments[i].label - 1)];
    }
    EXPECT_EQ(hits, static_cast<int>(test.segments.size()));
}

TEST(Generate, QuantileThresholdFlagsAtMostOnePercentOfCleanData) {
    auto s = small_script(31, 80, 0.0, 0.0);
    s.snr_db = 20.0;
    const auto g = sim::generate(s, sim::planted_for(s));
    mtdl::Hyperparams h;
    h.atoms = 16;
    h.lambda1 = 0.05;
    h.max_sweeps = 10;
    h.tol_rel_J = 1e-3;
    FitOptions fo;
    fo.calibration_folds = 0;
    const auto fit = fit_model(labeled_rows(g, s.classes), h, fo);
    const double eps = calibrate_threshold(fit.model.train_scores, 0.99);
    int flagged = 0;
    for (Eigen::Index i = 0; i < g.features.rows(); ++i)
        flagged += detect_abnormal(Eigen::RowVectorXd(g.features.row(i)), fit.model, eps);
    EXPECT_LE(flagged, static_cast<int>(0.01 * static_cast<double>(g.features.rows())));
}

TEST(ScriptJson, BalancedAndExplicitTimelines) {
    const auto j = nlohmann::json::parse(R"({
        "seed": 4, "classes": ["A", "B"], "channels": 2, "snr_db": 15,
        "balanced": {"windows_per_class": 6, "span_windows": 3},
        "context": {"A": [{"kind": "location", "entity": "Kitchen", "attribute": "Presence"}]}
    })");
    const auto s = sim::script_from_json(j);
    EXPECT_EQ(s.channels, 2);
    EXPECT_EQ(s.activities.size(), 4u);
    EXPECT_EQ(s.context.at("A").front().entity, "Kitchen");
    EXPECT_NO_THROW(s.validate());

    const auto e = sim::script_from_json(nlohmann::json::parse(
        R"({"classes": ["A"], "activities": [{"label": "A", "start_ms": 0, "duration_ms": 20000}]})"));
    EXPECT_EQ(e.activities.front().duration, 20000);
    EXPECT_THROW(sim::script_from_json(nlohmann::json::parse(R"({"classes": ["A"]})")), Error);
    EXPECT_THROW(sim::script_from_json(nlohmann::json::parse(R"({"activities": []})")), Error);
}

TEST(Benchmark, HeldOutScoresCoverEveryRow) {
    auto s = small_script(41, 30, 0.0, 0.0);
    s.snr_db = 20.0;
    const auto g = sim::generate(s, sim::planted_for(s));
    mtdl::Hyperparams h;
    h.atoms = 16;
    h.max_sweeps = 5;
    h.tol_rel_J = 1e-3;
    FitOptions fo;
    fo.calibration_folds = 3;
    const auto fit = fit_model(labeled_rows(g, s.classes), h, fo);
    ASSERT_EQ(fit.model.train_scores.size(), static_cast<std::size_t>(g.features.rows()));
    for (double v : fit.model.train_scores) EXPECT_GT(v, 0.0);

    fo.calibration_folds = 0;
    const auto in_sample = fit_model(labeled_rows(g, s.classes), h, fo);
    double held = 0.0, seen = 0.0;
    for (std::size_t i = 0; i < fit.model.train_scores.size(); ++i) {
        held += fit.model.train_scores[i];
        seen += in_sample.model.train_scores[i];
    }
    EXPECT_GE(held, seen);
}
