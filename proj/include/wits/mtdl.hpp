#pragma once

// Multi-task shared-structure dictionary learning.
//
// For K tasks with samples X_k (n_k x m) the learner minimizes
//
//   J = sum_k |X_k - C_k D_k|_F^2                       (task reconstruction)
//     + lambda1 sum_k |C_k|_1                           (sparsity)
//     + lambda2 sum_k sum_{a,b} W_ab |C_k(a,:) - C_k(b,:)|^2   (graph smoothness)
//     + lambda3 sum_k |X_k Q - C_k D|_F^2                (shared subspace)
//
// subject to Q'Q = I and every dictionary row inside the unit ball, by
// alternating over C_k, D_k, D and Q.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wits/error.hpp"
#include "wits/feature_sign.hpp"

namespace wits::mtdl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Eigen::Index;

struct TaskDataset {
    std::vector<Matrix> tasks;  // X_k, n_k x m

    std::size_t task_count() const { return tasks.size(); }
    Index feature_dim() const { return tasks.empty() ? 0 : tasks.front().cols(); }
    Index total_samples() const {
        Index n = 0;
        for (const auto& x : tasks) n += x.rows();
        return n;
    }

    void validate() const {
        if (tasks.empty()) throw invalid_input("dataset needs at least one task");
        const Index m = feature_dim();
        for (std::size_t k = 0; k < tasks.size(); ++k) {
            if (tasks[k].rows() < 1) throw invalid_input("task " + std::to_string(k) + " has no samples");
            if (tasks[k].cols() != m) throw invalid_input("task " + std::to_string(k) + " has mismatched feature dimension");
            if (!tasks[k].allFinite()) throw invalid_input("task " + std::to_string(k) + " contains NaN/Inf");
        }
    }
};

struct Hyperparams {
    double lambda1 = 0.1;
    double lambda2 = 0.01;
    double lambda3 = 1.0;
    int atoms = 20;         // d, rows of every dictionary and columns of every code matrix
    int subspace_dim = 5;   // sd
    int max_sweeps = 50;
    double tol_rel_J = 1e-5;
    double code_tol = 1e-6;
    std::uint64_t seed = 0;
    // Graph weights: negative cosine affinities are clamped to zero so the
    // smoothness term stays a PSD quadratic.
    bool clamp_negative_affinity = true;
    // Experimental: rebuild W from the current codes at the start of every sweep.
    bool affinity_from_codes = false;

    void validate(Index m) const {
        if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !(lambda3 >= 0.0))
            throw invalid_input("lambda1..3 must be nonnegative");
        if (atoms < 1) throw invalid_input("atoms must be positive");
        if (subspace_dim < 1) throw invalid_input("subspace_dim must be positive");
        if (m > 0 && subspace_dim >= m) throw invalid_input("subspace_dim must be smaller than the feature dimension");
        if (m > 0 && atoms > m) throw invalid_input("atoms must not exceed the feature dimension");
        if (max_sweeps < 0) throw invalid_input("max_sweeps must be nonnegative");
        if (!(tol_rel_J > 0.0) || !(code_tol > 0.0)) throw invalid_input("tolerances must be positive");
    }
};

struct FeatureScaler {
    Vector mean;
    Vector scale;

    bool empty() const { return mean.size() == 0; }
    Matrix apply(const Matrix& x) const {
        if (empty()) return x;
        return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
    }
};

struct Model {
    Matrix shared_dict;              // D, d x sd
    std::vector<Matrix> task_dicts;  // D_k, d x m
    Matrix projection;               // Q, m x sd
    Hyperparams hyper;
    std::vector<double> j_trace;

    // Carried alongside the learned factors for inference.
    std::vector<std::string> labels;  // one name per task
    FeatureScaler scaler;             // empty when features are used as-is
    std::vector<double> train_scores; // normality scores of the training rows

    std::size_t task_count() const { return task_dicts.size(); }
    Index feature_dim() const { return projection.rows(); }
};

struct SparseCodes {
    std::vector<Matrix> codes;     // C_k, n_k x d
    std::vector<Matrix> affinity;  // W_k, n_k x n_k
};

// ---------------------------------------------------------------------------
// Affinity and objective
// ---------------------------------------------------------------------------

/// Cosine similarity between rows. Zero rows: 0 to everything, 1 to self.
inline Matrix build_affinity(const Matrix& x) {
    const Index n = x.rows();
    const Vector norms = x.rowwise().norm();
    Matrix w = x * x.transpose();
    for (Index a = 0; a < n; ++a) {
        for (Index b = 0; b < n; ++b) {
            if (a == b) {
                w(a, b) = 1.0;
            } else if (norms(a) == 0.0 || norms(b) == 0.0) {
                w(a, b) = 0.0;
            } else {
                w(a, b) = std::clamp(w(a, b) / (norms(a) * norms(b)), -1.0, 1.0);
            }
        }
    }
    // Enforce exact symmetry.
    return 0.5 * (w + w.transpose());
}

/// Weights used by the smoothness term.
inline Matrix graph_weights(const Matrix& x, const Hyperparams& hyper) {
    Matrix w = build_affinity(x);
    if (hyper.clamp_negative_affinity) w = w.cwiseMax(0.0);
    return w;
}

inline Matrix laplacian(const Matrix& w) {
    Matrix l = -w;
    l.diagonal() += w.rowwise().sum();
    return l;
}

struct ObjectiveTerms {
    double reconstruction = 0.0;
    double sparsity = 0.0;
    double smoothness = 0.0;
    double shared = 0.0;

    double total() const { return reconstruction + sparsity + smoothness + shared; }
};

namespace detail {

inline void check_shapes(const TaskDataset& data, const SparseCodes& codes, const Model& model) {
    const auto K = data.task_count();
    if (codes.codes.size() != K || model.task_dicts.size() != K)
        throw invalid_input("task count mismatch between data, codes and model");
    if (!codes.affinity.empty() && codes.affinity.size() != K)
        throw invalid_input("affinity count mismatch");
    const Index m = data.feature_dim();
    const Index d = model.shared_dict.rows();
    const Index sd = model.shared_dict.cols();
    if (model.projection.rows() != m || model.projection.cols() != sd)
        throw invalid_input("projection shape mismatch");
    for (std::size_t k = 0; k < K; ++k) {
        const auto& x = data.tasks[k];
        if (x.cols() != m) throw invalid_input("feature dimension mismatch");
        if (codes.codes[k].rows() != x.rows() || codes.codes[k].cols() != d)
            throw invalid_input("code shape mismatch for task " + std::to_string(k));
        if (model.task_dicts[k].rows() != d || model.task_dicts[k].cols() != m)
            throw invalid_input("task dictionary shape mismatch for task " + std::to_string(k));
        if (!codes.affinity.empty() &&
            (codes.affinity[k].rows() != x.rows() || codes.affinity[k].cols() != x.rows()))
            throw invalid_input("affinity shape mismatch for task " + std::to_string(k));
    }
}

}  // namespace detail

/// Per-term breakdown; the smoothness term uses 2 tr(C' L C).
inline ObjectiveTerms objective_terms(const TaskDataset& data, const SparseCodes& codes, const Model& model) {
    detail::check_shapes(data, codes, model);
    const auto& h = model.hyper;
    ObjectiveTerms t;
    for (std::size_t k = 0; k < data.task_count(); ++k) {
        const Matrix& x = data.tasks[k];
        const Matrix& c = codes.codes[k];
        t.reconstruction += (x - c * model.task_dicts[k]).squaredNorm();
        t.sparsity += h.lambda1 * c.lpNorm<1>();
        if (h.lambda2 != 0.0 && !codes.affinity.empty()) {
            const Matrix l = laplacian(codes.affinity[k]);
            t.smoothness += h.lambda2 * 2.0 * (c.array() * (l * c).array()).sum();
        }
        t.shared += h.lambda3 * (x * model.projection - c * model.shared_dict).squaredNorm();
    }
    return t;
}

inline double objective(const TaskDataset& data, const SparseCodes& codes, const Model& model) {
    return objective_terms(data, codes, model).total();
}

// ---------------------------------------------------------------------------
// Dictionary updates
// ---------------------------------------------------------------------------

struct DictionaryFit {
    Matrix dict;
    bool degenerate = false;  // all codes zero, dictionary returned unchanged
    int passes = 0;
};

inline void project_rows_to_unit_ball(Matrix& dict) {
    for (Index j = 0; j < dict.rows(); ++j) {
        const double nrm = dict.row(j).norm();
        if (nrm > 1.0) dict.row(j) /= nrm;
    }
}

/// min_D |Y - C D|_F^2  s.t. |D(j,:)| <= 1, by block coordinate descent over
/// rows (each row update is the exact constrained minimizer given the rest).
/// Rows whose code column is all zero are left unchanged.
inline DictionaryFit fit_dictionary(const Matrix& target, const Matrix& codes, Matrix dict,
                                    int max_passes = 20000, double tol = 1e-13) {
    if (codes.rows() != target.rows() || dict.rows() != codes.cols() || dict.cols() != target.cols())
        throw invalid_input("fit_dictionary shape mismatch");
    DictionaryFit out;
    if (codes.isZero(0.0)) {
        out.dict = std::move(dict);
        out.degenerate = true;
        return out;
    }
    const Matrix gram = codes.transpose() * codes;   // d x d
    const Matrix cross = codes.transpose() * target; // d x p
    const double floor = 1e-14 * std::max(1.0, gram.diagonal().maxCoeff());

    for (out.passes = 0; out.passes < max_passes;) {
        ++out.passes;
        double change = 0.0;
        for (Index j = 0; j < dict.rows(); ++j) {
            const double ajj = gram(j, j);
            if (ajj <= floor) continue;
            Eigen::RowVectorXd u = dict.row(j) + (cross.row(j) - gram.row(j) * dict) / ajj;
            const double nrm = u.norm();
            if (nrm > 1.0) u /= nrm;
            change = std::max(change, (u - dict.row(j)).cwiseAbs().maxCoeff());
            dict.row(j) = u;
        }
        if (change <= tol) break;
    }
    out.dict = std::move(dict);
    return out;
}

/// Shared dictionary D for the stacked problem sum_k |X_k Q - C_k D|_F^2.
inline DictionaryFit update_shared_dictionary(const TaskDataset& data, const SparseCodes& codes,
                                              const Matrix& projection, Matrix current) {
    const Index n = data.total_samples();
    Matrix target(n, projection.cols()), stacked(n, current.rows());
    Index row = 0;
    for (std::size_t k = 0; k < data.task_count(); ++k) {
        const Index nk = data.tasks[k].rows();
        target.middleRows(row, nk) = data.tasks[k] * projection;
        stacked.middleRows(row, nk) = codes.codes[k];
        row += nk;
    }
    return fit_dictionary(target, stacked, std::move(current));
}

/// Task dictionary D_k for |X_k - C_k D_k|_F^2.
inline DictionaryFit update_task_dictionary(const Matrix& x, const Matrix& codes, Matrix current) {
    return fit_dictionary(x, codes, std::move(current));
}

// ---------------------------------------------------------------------------
// Projection update
// ---------------------------------------------------------------------------

/// Flips each column so that its largest-magnitude entry is positive.
inline void canonical_column_signs(Matrix& m) {
    for (Index j = 0; j < m.cols(); ++j) {
        Index arg = 0;
        m.col(j).cwiseAbs().maxCoeff(&arg);
        if (m(arg, j) < 0.0) m.col(j) = -m.col(j);
    }
}

/// M = sum_k X_k' (I - C_k (C_k'C_k + ridge I)^-1 C_k') X_k.
inline Matrix projection_matrix(const TaskDataset& data, const SparseCodes& codes, double ridge = 1e-8) {
    const Index m = data.feature_dim();
    Matrix acc = Matrix::Zero(m, m);
    for (std::size_t k = 0; k < data.task_count(); ++k) {
        const Matrix& x = data.tasks[k];
        const Matrix& c = codes.codes[k];
        Matrix gram = c.transpose() * c;
        gram.diagonal().array() += ridge;
        const Matrix ctx = c.transpose() * x;  // d x m
        acc += x.transpose() * x - ctx.transpose() * gram.ldlt().solve(ctx);
    }
    return 0.5 * (acc + acc.transpose());
}

/// Q spanned by eigenvectors of the sd smallest eigenvalues of projection_matrix.
inline Matrix update_projection(const TaskDataset& data, const SparseCodes& codes, int subspace_dim,
                                double ridge = 1e-8) {
    const Index m = data.feature_dim();
    if (subspace_dim < 1 || subspace_dim >= m)
        throw invalid_input("subspace_dim must satisfy 1 <= sd < m");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(projection_matrix(data, codes, ridge));
    if (eig.info() != Eigen::Success) throw Error(ErrorKind::numerical, "eigendecomposition failed");
    Matrix q = eig.eigenvectors().leftCols(subspace_dim);
    canonical_column_signs(q);
    return q;
}

/// Rotates an orthonormal basis within its span to best match the current
/// shared dictionary (orthogonal Procrustes on sum_k |X_k U R - C_k D|).
inline Matrix align_projection(const TaskDataset& data, const SparseCodes& codes, const Matrix& basis,
                               const Matrix& shared_dict) {
    Matrix z = Matrix::Zero(basis.cols(), basis.cols());
    for (std::size_t k = 0; k < data.task_count(); ++k)
        z += basis.transpose() * (data.tasks[k].transpose() * (codes.codes[k] * shared_dict));
    Eigen::JacobiSVD<Matrix> svd(z, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return basis * (svd.matrixU() * svd.matrixV().transpose());
}

// ---------------------------------------------------------------------------
// Code update
// ---------------------------------------------------------------------------

struct CodeSolve {
    Matrix codes;
    double residual = 0.0;  // stationarity residual, see stationarity_residual
    int passes = 0;
    bool converged = false;
};

class CodeConvergenceError : public Error {
public:
    CodeConvergenceError(CodeSolve best)
        : Error(ErrorKind::numerical, "sparse coding did not converge (residual " +
                                          std::to_string(best.residual) + ")"),
          best_(std::move(best)) {}

    const CodeSolve& best() const { return best_; }

private:
    CodeSolve best_;
};

/// Inputs of the per-task coding problem
///   |X - C Dk|^2 + lambda1 |C|_1 + 2 lambda2 tr(C'LC) + lambda3 |XQ - C D|^2.
struct CodingProblem {
    const Matrix& x;
    const Matrix& task_dict;
    const Matrix& shared_dict;
    const Matrix& projection;
    const Matrix& affinity;  // n x n; may be empty when lambda2 == 0 or n == 1
    double lambda1;
    double lambda2;
    double lambda3;
};

namespace detail {

struct CodingTerms {
    Matrix gram;    // Dk Dk' + lambda3 D D'
    Matrix linear;  // X Dk' + lambda3 X Q D'
    Matrix lap;     // Laplacian (empty when unused)
};

inline CodingTerms coding_terms(const CodingProblem& p) {
    CodingTerms t;
    t.gram = p.task_dict * p.task_dict.transpose();
    t.linear = p.x * p.task_dict.transpose();
    if (p.lambda3 != 0.0) {
        t.gram += p.lambda3 * p.shared_dict * p.shared_dict.transpose();
        t.linear += p.lambda3 * (p.x * p.projection) * p.shared_dict.transpose();
    }
    if (p.lambda2 != 0.0 && p.affinity.size() > 0 && p.x.rows() > 1) t.lap = laplacian(p.affinity);
    return t;
}

inline Matrix smooth_gradient(const CodingTerms& t, const Matrix& c, double lambda2) {
    Matrix g = 2.0 * (c * t.gram - t.linear);
    if (t.lap.size() > 0) g += 4.0 * lambda2 * (t.lap * c);
    return g;
}

inline double subgradient_residual(const Matrix& grad, const Matrix& c, double lambda1) {
    double r = 0.0;
    for (Index i = 0; i < c.rows(); ++i) {
        for (Index j = 0; j < c.cols(); ++j) {
            const double v = c(i, j);
            const double g = grad(i, j);
            const double e = v > 0.0   ? std::abs(g + lambda1)
                             : v < 0.0 ? std::abs(g - lambda1)
                                       : std::max(0.0, std::abs(g) - lambda1);
            r = std::max(r, e);
        }
    }
    return r;
}

}  // namespace detail

/// Largest violation of the L1 optimality conditions at `c`.
inline double stationarity_residual(const CodingProblem& p, const Matrix& c) {
    const auto t = detail::coding_terms(p);
    return detail::subgradient_residual(detail::smooth_gradient(t, c, p.lambda2), c, p.lambda1);
}

inline double coding_objective(const CodingProblem& p, const Matrix& c) {
    double f = (p.x - c * p.task_dict).squaredNorm() + p.lambda1 * c.lpNorm<1>();
    if (p.lambda3 != 0.0) f += p.lambda3 * (p.x * p.projection - c * p.shared_dict).squaredNorm();
    if (p.lambda2 != 0.0 && p.affinity.size() > 0 && p.x.rows() > 1)
        f += 2.0 * p.lambda2 * (c.array() * (laplacian(p.affinity) * c).array()).sum();
    return f;
}

/// Block coordinate descent over rows of C; each row subproblem is solved
/// exactly by feature-sign search with the other rows fixed. Never throws on
/// stalls; `converged` reports whether the residual reached `tol`.
inline CodeSolve solve_codes(const CodingProblem& p, Matrix start, double tol, int max_passes = 2000) {
    const Index n = p.x.rows();
    const Index d = p.task_dict.rows();
    if (start.rows() != n || start.cols() != d) start = Matrix::Zero(n, d);
    const auto t = detail::coding_terms(p);
    const bool graph = t.lap.size() > 0;

    CodeSolve out;
    out.codes = std::move(start);
    Matrix& c = out.codes;
    Matrix lc = graph ? Matrix(t.lap * c) : Matrix();
    Eigen::MatrixXd a_row = t.gram;
    Vector b(d), x(d);

    out.residual = detail::subgradient_residual(detail::smooth_gradient(t, c, p.lambda2), c, p.lambda1);
    for (out.passes = 0; out.passes < max_passes && out.residual > tol; ++out.passes) {
        for (Index i = 0; i < n; ++i) {
            b = t.linear.row(i).transpose();
            a_row = t.gram;
            if (graph) {
                const double lii = t.lap(i, i);
                a_row.diagonal().array() += 2.0 * p.lambda2 * lii;
                b -= 2.0 * p.lambda2 * (lc.row(i).transpose() - lii * c.row(i).transpose());
            }
            x = c.row(i).transpose();
            feature_sign_search(a_row, b, p.lambda1, x);
            if (graph) {
                const Vector delta = x - c.row(i).transpose();
                if (!delta.isZero(0.0)) lc += t.lap.col(i) * delta.transpose();
            }
            c.row(i) = x.transpose();
        }
        if (graph) lc = t.lap * c;  // drop accumulated rounding
        if (!c.allFinite()) throw Error(ErrorKind::numerical, "non-finite sparse code");
        out.residual = detail::subgradient_residual(detail::smooth_gradient(t, c, p.lambda2), c, p.lambda1);
    }
    out.converged = out.residual <= tol;
    return out;
}

/// Coding subproblem for one task; throws CodeConvergenceError (with the best
/// iterate) if the stationarity residual does not reach `tol`.
inline Matrix update_codes(const CodingProblem& p, Matrix start, double tol, int max_passes = 2000) {
    auto res = solve_codes(p, std::move(start), tol, max_passes);
    if (!res.converged) throw CodeConvergenceError(std::move(res));
    return std::move(res.codes);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class Stage { init, codes, task_dict, shared_dict, projection, sweep_end };

inline const char* to_string(Stage s) {
    switch (s) {
        case Stage::init: return "init";
        case Stage::codes: return "codes";
        case Stage::task_dict: return "task_dict";
        case Stage::shared_dict: return "shared_dict";
        case Stage::projection: return "projection";
        case Stage::sweep_end: return "sweep_end";
    }
    return "?";
}

/// Called after every subproblem update; `task` is -1 for global updates.
using TrainObserver = std::function<void(Stage, int sweep, int task, const Model&, const SparseCodes&)>;

struct TrainResult {
    Model model;
    SparseCodes codes;
    int sweeps = 0;
    int stalled_code_solves = 0;
    int rejected_projection_steps = 0;
};

struct ProjectionStep {
    Matrix projection;
    Matrix shared_dict;
    bool accepted = false;
};

inline double shared_term(const TaskDataset& data, const SparseCodes& codes, const Matrix& q, const Matrix& dict) {
    double s = 0.0;
    for (std::size_t k = 0; k < data.task_count(); ++k)
        s += (data.tasks[k] * q - codes.codes[k] * dict).squaredNorm();
    return s;
}

/// The Q update as used in training: eigenvector subspace, rotated to the
/// current D, then D refit for the new Q. Accepted only when the shared term
/// does not increase; otherwise the previous pair is kept.
inline ProjectionStep projection_step(const TaskDataset& data, const SparseCodes& codes, const Model& model) {
    ProjectionStep step{model.projection, model.shared_dict, false};
    const Matrix basis = update_projection(data, codes, static_cast<int>(model.projection.cols()));
    const Matrix q = align_projection(data, codes, basis, model.shared_dict);
    Matrix dict = update_shared_dictionary(data, codes, q, model.shared_dict).dict;
    const double before = shared_term(data, codes, model.projection, model.shared_dict);
    const double after = shared_term(data, codes, q, dict);
    if (after <= before) {
        step.projection = q;
        step.shared_dict = std::move(dict);
        step.accepted = true;
    }
    return step;
}

inline CodingProblem coding_problem(const Matrix& x, std::size_t k, const Model& model, const Matrix& affinity,
                                    bool include_shared = true) {
    return CodingProblem{x, model.task_dicts[k], model.shared_dict, model.projection, affinity,
                         model.hyper.lambda1, model.hyper.lambda2, include_shared ? model.hyper.lambda3 : 0.0};
}

/// Deterministic initialization: dictionaries uniform(-1,1) projected onto
/// the unit ball, Q the sd leading right singular directions of stacked X.
inline Model initialize_model(const TaskDataset& data, const Hyperparams& hyper) {
    const Index m = data.feature_dim();
    const Index d = hyper.atoms;
    Model model;
    model.hyper = hyper;
    std::mt19937_64 rng(hyper.seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    auto random_dict = [&](Index rows, Index cols) {
        Matrix out(rows, cols);
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) out(i, j) = unif(rng);
        project_rows_to_unit_ball(out);
        return out;
    };
    for (std::size_t k = 0; k < data.task_count(); ++k) model.task_dicts.push_back(random_dict(d, m));
    model.shared_dict = random_dict(d, hyper.subspace_dim);

    Matrix gram = Matrix::Zero(m, m);
    for (const auto& x : data.tasks) gram += x.transpose() * x;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    model.projection = eig.eigenvectors().rightCols(hyper.subspace_dim).rowwise().reverse();
    canonical_column_signs(model.projection);
    for (std::size_t k = 0; k < data.task_count(); ++k) model.labels.push_back(std::to_string(k + 1));
    return model;
}

inline TrainResult train(const TaskDataset& data, const Hyperparams& hyper, const TrainObserver& observer = {}) {
    data.validate();
    hyper.validate(data.feature_dim());
    const auto K = data.task_count();

    TrainResult res;
    Model& model = res.model;
    SparseCodes& codes = res.codes;
    model = initialize_model(data, hyper);
    for (const auto& x : data.tasks) {
        codes.codes.push_back(Matrix::Zero(x.rows(), hyper.atoms));
        codes.affinity.push_back(graph_weights(x, hyper));
    }
    auto notify = [&](Stage s, int sweep, int task) {
        if (observer) observer(s, sweep, task, model, codes);
    };

    double j = objective(data, codes, model);
    model.j_trace.push_back(j);
    notify(Stage::init, 0, -1);

    for (int sweep = 1; sweep <= hyper.max_sweeps; ++sweep) {
        if (hyper.affinity_from_codes && sweep > 1) {
            for (std::size_t k = 0; k < K; ++k) codes.affinity[k] = graph_weights(codes.codes[k], hyper);
        }
        for (std::size_t k = 0; k < K; ++k) {
            auto solved = solve_codes(coding_problem(data.tasks[k], k, model, codes.affinity[k]),
                                      codes.codes[k], hyper.code_tol);
            if (!solved.converged) ++res.stalled_code_solves;
            codes.codes[k] = std::move(solved.codes);
            notify(Stage::codes, sweep, static_cast<int>(k));
        }
        for (std::size_t k = 0; k < K; ++k) {
            model.task_dicts[k] = update_task_dictionary(data.tasks[k], codes.codes[k], model.task_dicts[k]).dict;
            notify(Stage::task_dict, sweep, static_cast<int>(k));
        }
        model.shared_dict = update_shared_dictionary(data, codes, model.projection, model.shared_dict).dict;
        notify(Stage::shared_dict, sweep, -1);

        auto step = projection_step(data, codes, model);
        if (step.accepted) {
            model.projection = std::move(step.projection);
            model.shared_dict = std::move(step.shared_dict);
        } else {
            ++res.rejected_projection_steps;
        }
        notify(Stage::projection, sweep, -1);

        const double next = objective(data, codes, model);
        if (!std::isfinite(next))
            throw Error(ErrorKind::numerical, "objective became non-finite in sweep " + std::to_string(sweep));
        model.j_trace.push_back(next);
        res.sweeps = sweep;
        notify(Stage::sweep_end, sweep, -1);
        const double rel = std::abs(j - next) / std::max(std::abs(j), std::numeric_limits<double>::min());
        j = next;
        if (rel < hyper.tol_rel_J) break;
    }
    return res;
}

/// Codes for new samples against task k; W is built over the rows of x_new.
inline Matrix code_for_samples(const Matrix& x_new, std::size_t k, const Model& model, bool include_shared = true) {
    if (k >= model.task_count()) throw invalid_input("task index out of range");
    if (x_new.cols() != model.feature_dim()) throw invalid_input("feature dimension mismatch");
    const Matrix w = x_new.rows() > 1 ? graph_weights(x_new, model.hyper) : Matrix();
    return update_codes(coding_problem(x_new, k, model, w, include_shared),
                        Matrix::Zero(x_new.rows(), model.hyper.atoms), model.hyper.code_tol);
}

}  // namespace wits::mtdl
