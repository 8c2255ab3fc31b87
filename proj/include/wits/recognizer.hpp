#pragma once

// Reconstruction-error classification and abnormality scoring on top of a
// trained mtdl::Model.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wits/error.hpp"
#include "wits/mtdl.hpp"

namespace wits {

enum class ScoringMode {
    full,          // reconstruction + lambda1 |c|_1 + lambda3 shared term
    no_shared,     // shared term dropped from both coding and scoring
    raw_residual,  // coded with the full objective, scored by |x - c D_k|^2 only
};

inline const char* to_string(ScoringMode m) {
    switch (m) {
        case ScoringMode::full: return "full";
        case ScoringMode::no_shared: return "no_shared";
        case ScoringMode::raw_residual: return "raw_residual";
    }
    return "?";
}

inline ScoringMode parse_scoring_mode(const std::string& s) {
    if (s == "full") return ScoringMode::full;
    if (s == "no_shared") return ScoringMode::no_shared;
    if (s == "raw_residual") return ScoringMode::raw_residual;
    throw invalid_input("unknown scoring mode '" + s + "'");
}

struct ActivityLabel {
    int id = 0;  // 1-based task index
    std::string name;
};

struct RecognitionResult {
    ActivityLabel label;
    std::vector<double> scores;  // one per class
    double normality = 0.0;      // score of the assigned class
    bool abnormal = false;
    double epsilon = std::numeric_limits<double>::infinity();
    bool dense_support = false;  // set only when the support heuristic is enabled
};

struct RecognizerOptions {
    ScoringMode mode = ScoringMode::full;
    double epsilon = std::numeric_limits<double>::infinity();
    // Support-density heuristic: when in (0,1), a sample whose assigned code
    // uses more than this fraction of atoms is also flagged abnormal.
    double max_support_fraction = 1.0;
};

struct ClassScore {
    double score = 0.0;
    Eigen::VectorXd code;
};

namespace detail {

inline Eigen::MatrixXd scaled_row(const Eigen::RowVectorXd& x, const mtdl::Model& model) {
    if (x.size() != model.feature_dim())
        throw invalid_input("feature dimension " + std::to_string(x.size()) + " does not match model dimension " +
                            std::to_string(model.feature_dim()));
    if (!x.allFinite()) throw invalid_input("feature vector contains NaN/Inf");
    return model.scaler.apply(Eigen::MatrixXd(x));
}

// Scores an already-scaled single row against class k.
inline ClassScore score_scaled(const Eigen::MatrixXd& x, std::size_t k, const mtdl::Model& model, ScoringMode mode) {
    const bool shared = mode != ScoringMode::no_shared;
    const Eigen::MatrixXd none;
    const auto problem = mtdl::coding_problem(x, k, model, none, shared);
    auto solved = mtdl::solve_codes(problem, Eigen::MatrixXd::Zero(1, model.hyper.atoms), model.hyper.code_tol);
    if (!solved.converged) {
        // A single-row lasso; retry with a larger pass budget before giving up.
        solved = mtdl::solve_codes(problem, solved.codes, model.hyper.code_tol, 20000);
        if (!solved.converged) throw mtdl::CodeConvergenceError(std::move(solved));
    }
    ClassScore out;
    out.code = solved.codes.row(0).transpose();
    const Eigen::MatrixXd& c = solved.codes;
    out.score = (x - c * model.task_dicts[k]).squaredNorm();
    if (mode != ScoringMode::raw_residual) {
        out.score += model.hyper.lambda1 * c.lpNorm<1>();
        if (shared && model.hyper.lambda3 != 0.0)
            out.score += model.hyper.lambda3 * (x * model.projection - c * model.shared_dict).squaredNorm();
    }
    return out;
}

}  // namespace detail

/// Score of sample x (raw features) against class k with its optimal code.
inline double score_normality(const Eigen::RowVectorXd& x, std::size_t k, const mtdl::Model& model,
                              ScoringMode mode = ScoringMode::full) {
    if (k >= model.task_count()) throw invalid_input("class index out of range");
    return detail::score_scaled(detail::scaled_row(x, model), k, model, mode).score;
}

inline RecognitionResult classify(const Eigen::RowVectorXd& x, const mtdl::Model& model,
                                  const RecognizerOptions& opts = {}) {
    if (model.task_count() == 0) throw invalid_input("model has no classes");
    const Eigen::MatrixXd xs = detail::scaled_row(x, model);
    RecognitionResult r;
    r.epsilon = opts.epsilon;
    std::size_t best = 0;
    Eigen::VectorXd best_code;
    for (std::size_t k = 0; k < model.task_count(); ++k) {
        auto s = detail::score_scaled(xs, k, model, opts.mode);
        r.scores.push_back(s.score);
        if (k == 0 || s.score < r.scores[best]) {
            best = k;
            best_code = std::move(s.code);
        }
    }
    r.label.id = static_cast<int>(best) + 1;
    r.label.name = best < model.labels.size() ? model.labels[best] : std::to_string(best + 1);
    r.normality = r.scores[best];
    r.abnormal = r.normality > opts.epsilon;
    if (opts.max_support_fraction > 0.0 && opts.max_support_fraction < 1.0) {
        const double used = static_cast<double>((best_code.array() != 0.0).count());
        r.dense_support = used > opts.max_support_fraction * static_cast<double>(best_code.size());
        r.abnormal = r.abnormal || r.dense_support;
    }
    return r;
}

/// Rows are classified independently of each other.
inline std::vector<RecognitionResult> classify_rows(const Eigen::MatrixXd& x, const mtdl::Model& model,
                                                    const RecognizerOptions& opts = {}) {
    std::vector<RecognitionResult> out;
    out.reserve(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) out.push_back(classify(Eigen::RowVectorXd(x.row(i)), model, opts));
    return out;
}

inline bool detect_abnormal(const Eigen::RowVectorXd& x, const mtdl::Model& model, double epsilon,
                            ScoringMode mode = ScoringMode::full) {
    RecognizerOptions opts;
    opts.mode = mode;
    opts.epsilon = epsilon;
    return classify(x, model, opts).abnormal;
}

/// Nearest-rank empirical quantile: the ceil(q n)-th smallest score.
inline double calibrate_threshold(std::vector<double> scores, double quantile = 0.99) {
    if (scores.empty()) throw invalid_input("cannot calibrate a threshold from no scores");
    if (!(quantile > 0.0 && quantile <= 1.0)) throw invalid_input("quantile must lie in (0, 1]");
    const auto n = scores.size();
    auto rank = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(n) - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, n);
    std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(rank - 1), scores.end());
    return scores[rank - 1];
}

/// Normality of each training row under classify, used to calibrate epsilon.
inline std::vector<double> training_scores(const mtdl::TaskDataset& raw, const mtdl::Model& model,
                                           ScoringMode mode = ScoringMode::full) {
    RecognizerOptions opts;
    opts.mode = mode;
    std::vector<double> out;
    for (const auto& x : raw.tasks)
        for (Eigen::Index i = 0; i < x.rows(); ++i) out.push_back(classify(Eigen::RowVectorXd(x.row(i)), model, opts).normality);
    return out;
}

/// Euclidean k-nearest-neighbor majority vote. Distance ties are broken by
/// training order, vote ties by the smallest label.
inline std::vector<int> knn_baseline(const Eigen::MatrixXd& train, const std::vector<int>& train_labels,
                                     const Eigen::MatrixXd& test, int k) {
    const auto n = static_cast<std::size_t>(train.rows());
    if (n == 0) throw invalid_input("knn needs a nonempty training set");
    if (train_labels.size() != n) throw invalid_input("one training label per row required");
    if (k < 1 || static_cast<std::size_t>(k) > n) throw invalid_input("k must lie in [1, training size]");
    if (test.cols() != train.cols()) throw invalid_input("feature dimension mismatch");

    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(test.rows()));
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (Eigen::Index q = 0; q < test.rows(); ++q) {
        for (std::size_t i = 0; i < n; ++i)
            dist[i] = {(train.row(static_cast<Eigen::Index>(i)) - test.row(q)).squaredNorm(), i};
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        std::map<int, int> votes;
        for (int j = 0; j < k; ++j) ++votes[train_labels[dist[static_cast<std::size_t>(j)].second]];
        int label = votes.begin()->first, count = votes.begin()->second;
        for (const auto& [l, c] : votes)
            if (c > count) label = l, count = c;
        out.push_back(label);
    }
    return out;
}

}  // namespace wits
