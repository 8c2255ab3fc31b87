#pragma once

// Model fitting from labeled rows, evaluation metrics and the synthetic
// recognition / abnormality benchmark built on simhome.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wits/mtdl.hpp"
#include "wits/recognizer.hpp"
#include "wits/simhome.hpp"

namespace wits {

/// Per-feature centering and unit-variance scaling; constant columns keep scale 1.
inline mtdl::FeatureScaler fit_scaler(const Eigen::MatrixXd& x) {
    mtdl::FeatureScaler s;
    const auto n = static_cast<double>(x.rows());
    s.mean = x.colwise().mean().transpose();
    s.scale.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double var = (x.col(j).array() - s.mean(j)).square().sum() / std::max(1.0, n - 1.0);
        s.scale(j) = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    return s;
}

struct LabeledRows {
    Eigen::MatrixXd x;
    std::vector<std::string> labels;  // one per row
};

/// Groups rows by label in order of first appearance.
inline mtdl::TaskDataset group_by_label(const LabeledRows& rows, std::vector<std::string>& names) {
    if (static_cast<Eigen::Index>(rows.labels.size()) != rows.x.rows())
        throw invalid_input("one label per feature row required");
    names.clear();
    std::map<std::string, std::vector<Eigen::Index>> members;
    for (Eigen::Index i = 0; i < rows.x.rows(); ++i) {
        const auto& l = rows.labels[static_cast<std::size_t>(i)];
        if (!members.count(l)) names.push_back(l);
        members[l].push_back(i);
    }
    mtdl::TaskDataset data;
    for (const auto& n : names) {
        const auto& idx = members[n];
        Eigen::MatrixXd xk(static_cast<Eigen::Index>(idx.size()), rows.x.cols());
        for (std::size_t r = 0; r < idx.size(); ++r) xk.row(static_cast<Eigen::Index>(r)) = rows.x.row(idx[r]);
        data.tasks.push_back(std::move(xk));
    }
    return data;
}

struct FitOptions {
    bool standardize = true;
    ScoringMode score_mode = ScoringMode::full;
    // Training scores come from models that did not see the row: each class is
    // cut into this many contiguous blocks, one held out per refit. 0 or 1
    // scores the rows with the final model instead.
    int calibration_folds = 5;
};

struct FitResult {
    mtdl::Model model;
    int sweeps = 0;
    int stalled_code_solves = 0;
};

/// Out-of-fold normality of every training row, in task order.
inline std::vector<double> held_out_scores(const mtdl::TaskDataset& raw, const mtdl::TaskDataset& scaled,
                                           const mtdl::Model& full, const mtdl::Hyperparams& hyper,
                                           const FitOptions& opts) {
    const int folds = opts.calibration_folds;
    for (const auto& x : raw.tasks)
        if (x.rows() < 2 * folds) throw invalid_input("every class needs at least two rows per calibration fold");
    auto block = [&](Eigen::Index n, int f) {
        return std::pair<Eigen::Index, Eigen::Index>{n * f / folds, n * (f + 1) / folds};
    };
    std::vector<std::vector<double>> per_task(raw.task_count());
    for (std::size_t k = 0; k < raw.task_count(); ++k)
        per_task[k].assign(static_cast<std::size_t>(raw.tasks[k].rows()), 0.0);
    RecognizerOptions ro;
    ro.mode = opts.score_mode;
    for (int f = 0; f < folds; ++f) {
        mtdl::TaskDataset kept;
        for (const auto& x : scaled.tasks) {
            const auto [lo, hi] = block(x.rows(), f);
            Eigen::MatrixXd rest(x.rows() - (hi - lo), x.cols());
            rest << x.topRows(lo), x.bottomRows(x.rows() - hi);
            kept.tasks.push_back(std::move(rest));
        }
        auto model = mtdl::train(kept, hyper).model;
        model.labels = full.labels;
        model.scaler = full.scaler;
        for (std::size_t k = 0; k < raw.task_count(); ++k) {
            const auto [lo, hi] = block(raw.tasks[k].rows(), f);
            for (Eigen::Index i = lo; i < hi; ++i)
                per_task[k][static_cast<std::size_t>(i)] =
                    classify(Eigen::RowVectorXd(raw.tasks[k].row(i)), model, ro).normality;
        }
    }
    std::vector<double> out;
    for (const auto& s : per_task) out.insert(out.end(), s.begin(), s.end());
    return out;
}

/// Trains on raw rows; the model carries label names, the scaler and the
/// normality of every training row for threshold calibration.
inline FitResult fit_model(const LabeledRows& rows, const mtdl::Hyperparams& hyper, const FitOptions& opts = {}) {
    std::vector<std::string> names;
    const mtdl::TaskDataset raw = group_by_label(rows, names);
    raw.validate();
    mtdl::FeatureScaler scaler;
    if (opts.standardize) scaler = fit_scaler(rows.x);
    mtdl::TaskDataset scaled;
    for (const auto& x : raw.tasks) scaled.tasks.push_back(scaler.apply(x));
    auto trained = mtdl::train(scaled, hyper);
    FitResult out;
    out.model = std::move(trained.model);
    out.model.labels = names;
    out.model.scaler = scaler;
    if (opts.calibration_folds > 1) {
        out.model.train_scores = held_out_scores(raw, scaled, out.model, hyper, opts);
    } else {
        out.model.train_scores = training_scores(raw, out.model, opts.score_mode);
    }
    out.sweeps = trained.sweeps;
    out.stalled_code_solves = trained.stalled_code_solves;
    return out;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct Confusion {
    std::vector<std::string> labels;
    std::vector<std::vector<int>> counts;  // [truth][predicted]

    explicit Confusion(std::vector<std::string> names = {})
        : labels(std::move(names)), counts(labels.size(), std::vector<int>(labels.size(), 0)) {}

    void add(std::size_t truth, std::size_t predicted) { ++counts.at(truth).at(predicted); }
    int total() const {
        int n = 0;
        for (const auto& r : counts)
            for (int c : r) n += c;
        return n;
    }
    double accuracy() const {
        int hit = 0;
        for (std::size_t i = 0; i < counts.size(); ++i) hit += counts[i][i];
        const int n = total();
        return n ? static_cast<double>(hit) / n : 0.0;
    }
};

struct DetectionStats {
    int true_positive = 0, false_negative = 0, false_positive = 0, true_negative = 0;

    void add(bool planted, bool flagged) {
        if (planted) (flagged ? true_positive : false_negative)++;
        else (flagged ? false_positive : true_negative)++;
    }
    double recall() const {
        const int p = true_positive + false_negative;
        return p ? static_cast<double>(true_positive) / p : 0.0;
    }
    double precision() const {
        const int f = true_positive + false_positive;
        return f ? static_cast<double>(true_positive) / f : 0.0;
    }
    double false_positive_rate() const {
        const int n = false_positive + true_negative;
        return n ? static_cast<double>(false_positive) / n : 0.0;
    }
};

// ---------------------------------------------------------------------------
// Synthetic benchmark
// ---------------------------------------------------------------------------

struct BenchmarkConfig {
    int classes = 5;
    int train_per_class = 200;
    int test_per_class = 100;
    int span_windows = 5;
    int channels = 4;
    int planted_atoms = 24;
    int planted_subspace = 5;
    int support = 6;  // 0 means planted_atoms / 4
    double shared_fraction = 0.6;
    double person_variation = 0.3;
    int persons = 0;
    double snr_db = 20.0;
    double outlier_rate = 0.05;  // for the abnormality test set only
    double amplitude_spread = 1.0;
    double quantile = 0.99;
    int knn_k = 5;
    std::uint64_t seed = 7;
    mtdl::Hyperparams hyper = default_hyper();
    FitOptions fit;

    static mtdl::Hyperparams default_hyper() {
        mtdl::Hyperparams h;
        h.atoms = 24;
        h.subspace_dim = 5;
        h.lambda1 = 0.05;
        h.lambda2 = 0.01;
        h.lambda3 = 1.0;
        h.max_sweeps = 30;
        h.tol_rel_J = 1e-4;
        h.code_tol = 1e-6;
        return h;
    }
};

struct BenchmarkData {
    sim::ScenarioScript train_script, test_script, outlier_script;
    sim::Generated train, test, outliers;
};

inline sim::ScenarioScript benchmark_script(const BenchmarkConfig& cfg, int per_class, std::uint64_t seed,
                                            double outlier_rate) {
    sim::ScenarioScript s;
    for (int k = 1; k <= cfg.classes; ++k) s.classes.push_back("activity" + std::to_string(k));
    s.seed = seed;
    s.channels = cfg.channels;
    s.atoms = cfg.planted_atoms;
    s.subspace_dim = cfg.planted_subspace;
    s.support = cfg.support;
    s.shared_fraction = cfg.shared_fraction;
    s.person_variation = cfg.person_variation;
    s.persons = cfg.persons;
    s.persons_seed = cfg.seed;
    s.model_seed = cfg.seed;
    s.snr_db = cfg.snr_db;
    s.outlier_rate = outlier_rate;
    s.amplitude_spread = cfg.amplitude_spread;
    s.activities = sim::balanced_timeline(s.classes, per_class, cfg.span_windows, s.window, seed);
    return s;
}

/// Train, clean test and outlier test sets share the planted model and the
/// person population but use independent seeds.
inline BenchmarkData benchmark_data(const BenchmarkConfig& cfg) {
    BenchmarkData d;
    d.train_script = benchmark_script(cfg, cfg.train_per_class, cfg.seed * 3 + 1, 0.0);
    d.test_script = benchmark_script(cfg, cfg.test_per_class, cfg.seed * 3 + 2, 0.0);
    d.outlier_script = benchmark_script(cfg, cfg.test_per_class, cfg.seed * 3 + 3, cfg.outlier_rate);
    const auto planted = sim::planted_for(d.train_script);
    d.train = sim::generate(d.train_script, planted);
    d.test = sim::generate(d.test_script, planted);
    d.outliers = sim::generate(d.outlier_script, planted);
    return d;
}

inline LabeledRows labeled_rows(const sim::Generated& g, const std::vector<std::string>& classes) {
    LabeledRows rows{g.features, {}};
    for (const auto& s : g.segments) rows.labels.push_back(classes[static_cast<std::size_t>(s.label - 1)]);
    return rows;
}

struct BenchmarkResult {
    Confusion ours, knn;
    DetectionStats detection;
    DetectionStats clean_detection;  // flags on the outlier-free test set
    double epsilon = 0.0;
    int sweeps = 0;
    double seconds_train = 0.0, seconds_eval = 0.0;
};

inline BenchmarkResult run_benchmark(const BenchmarkConfig& cfg) {
    using clock = std::chrono::steady_clock;
    const auto data = benchmark_data(cfg);
    const auto& classes = data.train_script.classes;
    BenchmarkResult res;

    const auto t0 = clock::now();
    auto fit = fit_model(labeled_rows(data.train, classes), cfg.hyper, cfg.fit);
    const auto t1 = clock::now();
    res.sweeps = fit.sweeps;
    const auto& model = fit.model;
    res.epsilon = calibrate_threshold(model.train_scores, cfg.quantile);

    // Task order follows first appearance in training; map generator labels onto it.
    std::vector<std::size_t> task_of(classes.size());
    for (std::size_t c = 0; c < classes.size(); ++c)
        task_of[c] = static_cast<std::size_t>(
            std::find(model.labels.begin(), model.labels.end(), classes[c]) - model.labels.begin());

    res.ours = Confusion(classes);
    res.knn = Confusion(classes);
    RecognizerOptions ro;
    ro.mode = cfg.fit.score_mode;
    ro.epsilon = res.epsilon;
    std::vector<std::size_t> class_of_task(classes.size());
    for (std::size_t c = 0; c < classes.size(); ++c) class_of_task[task_of[c]] = c;
    for (std::size_t i = 0; i < data.test.segments.size(); ++i) {
        const auto r = classify(Eigen::RowVectorXd(data.test.features.row(static_cast<Eigen::Index>(i))), model, ro);
        res.ours.add(static_cast<std::size_t>(data.test.segments[i].label - 1),
                     class_of_task[static_cast<std::size_t>(r.label.id - 1)]);
        res.clean_detection.add(false, r.abnormal);
    }
    std::vector<int> train_labels;
    for (const auto& s : data.train.segments) train_labels.push_back(s.label);
    const auto knn = knn_baseline(data.train.features, train_labels, data.test.features, cfg.knn_k);
    for (std::size_t i = 0; i < knn.size(); ++i)
        res.knn.add(static_cast<std::size_t>(data.test.segments[i].label - 1), static_cast<std::size_t>(knn[i] - 1));

    for (std::size_t i = 0; i < data.outliers.segments.size(); ++i) {
        const auto r = classify(Eigen::RowVectorXd(data.outliers.features.row(static_cast<Eigen::Index>(i))), model, ro);
        res.detection.add(data.outliers.segments[i].outlier, r.abnormal);
    }
    const auto t2 = clock::now();
    res.seconds_train = std::chrono::duration<double>(t1 - t0).count();
    res.seconds_eval = std::chrono::duration<double>(t2 - t1).count();
    return res;
}

}  // namespace wits
