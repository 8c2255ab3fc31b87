#pragma once

// Versioned JSON for trained models and training configuration. Matrices are
// row-major nested arrays; doubles are written in shortest round-trip form so
// reading a written model reproduces every value exactly.

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "json.hpp"
#include "wits/benchmark.hpp"
#include "wits/mtdl.hpp"

namespace wits::io {

using json = nlohmann::ordered_json;

constexpr int kModelVersion = 1;

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what) {
    if (!j.is_array()) throw Error(ErrorKind::parse, what + " must be an array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows ? static_cast<Eigen::Index>(j.front().size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw Error(ErrorKind::parse, what + " has ragged rows");
        for (Eigen::Index c = 0; c < cols; ++c) {
            const auto& v = row[static_cast<std::size_t>(c)];
            if (!v.is_number()) throw Error(ErrorKind::parse, what + " holds a non-number");
            m(i, c) = v.get<double>();
        }
    }
    return m;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline Eigen::VectorXd vector_from_json(const json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

inline json hyper_to_json(const mtdl::Hyperparams& h) {
    json j;
    j["lambda1"] = h.lambda1;
    j["lambda2"] = h.lambda2;
    j["lambda3"] = h.lambda3;
    j["atoms"] = h.atoms;
    j["subspace_dim"] = h.subspace_dim;
    j["max_sweeps"] = h.max_sweeps;
    j["tol_rel_J"] = h.tol_rel_J;
    j["code_tol"] = h.code_tol;
    j["seed"] = h.seed;
    j["clamp_negative_affinity"] = h.clamp_negative_affinity;
    j["affinity_from_codes"] = h.affinity_from_codes;
    return j;
}

/// Missing keys keep the values of `base`.
inline mtdl::Hyperparams hyper_from_json(const json& j, mtdl::Hyperparams base = {}) {
    if (!j.is_object()) throw Error(ErrorKind::parse, "hyperparameters must be an object");
    base.lambda1 = j.value("lambda1", base.lambda1);
    base.lambda2 = j.value("lambda2", base.lambda2);
    base.lambda3 = j.value("lambda3", base.lambda3);
    base.atoms = j.value("atoms", base.atoms);
    base.subspace_dim = j.value("subspace_dim", base.subspace_dim);
    base.max_sweeps = j.value("max_sweeps", base.max_sweeps);
    base.tol_rel_J = j.value("tol_rel_J", base.tol_rel_J);
    base.code_tol = j.value("code_tol", base.code_tol);
    base.seed = j.value("seed", base.seed);
    base.clamp_negative_affinity = j.value("clamp_negative_affinity", base.clamp_negative_affinity);
    base.affinity_from_codes = j.value("affinity_from_codes", base.affinity_from_codes);
    return base;
}

inline json model_to_json(const mtdl::Model& m) {
    json j;
    j["version"] = kModelVersion;
    j["hyper"] = hyper_to_json(m.hyper);
    j["Q"] = matrix_to_json(m.projection);
    j["D"] = matrix_to_json(m.shared_dict);
    json dk = json::array();
    for (const auto& d : m.task_dicts) dk.push_back(matrix_to_json(d));
    j["D_k"] = std::move(dk);
    j["j_trace"] = m.j_trace;
    j["labels"] = m.labels;
    if (m.scaler.empty()) {
        j["scaler"] = nullptr;
    } else {
        j["scaler"] = json{{"mean", vector_to_json(m.scaler.mean)}, {"scale", vector_to_json(m.scaler.scale)}};
    }
    j["train_scores"] = m.train_scores;
    return j;
}

inline mtdl::Model model_from_json(const json& j) {
    try {
        const int version = j.at("version").get<int>();
        if (version != kModelVersion)
            throw Error(ErrorKind::parse, "unsupported model version " + std::to_string(version));
        mtdl::Model m;
        m.hyper = hyper_from_json(j.at("hyper"));
        m.projection = matrix_from_json(j.at("Q"), "Q");
        m.shared_dict = matrix_from_json(j.at("D"), "D");
        for (const auto& d : j.at("D_k")) m.task_dicts.push_back(matrix_from_json(d, "D_k"));
        m.j_trace = j.value("j_trace", std::vector<double>{});
        m.labels = j.value("labels", std::vector<std::string>{});
        if (j.contains("scaler") && !j.at("scaler").is_null()) {
            m.scaler.mean = vector_from_json(j.at("scaler").at("mean"));
            m.scaler.scale = vector_from_json(j.at("scaler").at("scale"));
        }
        m.train_scores = j.value("train_scores", std::vector<double>{});

        const auto sd = m.projection.cols(), mdim = m.projection.rows();
        if (m.task_dicts.empty()) throw invalid_input("model has no task dictionaries");
        for (const auto& d : m.task_dicts)
            if (d.rows() != m.hyper.atoms || d.cols() != mdim) throw invalid_input("D_k shape does not match Q and hyper.atoms");
        if (m.shared_dict.rows() != m.hyper.atoms || m.shared_dict.cols() != sd)
            throw invalid_input("D shape does not match Q and hyper.atoms");
        if (!m.labels.empty() && m.labels.size() != m.task_dicts.size())
            throw invalid_input("one label per task dictionary required");
        if (!m.scaler.empty() && (m.scaler.mean.size() != mdim || m.scaler.scale.size() != mdim))
            throw invalid_input("scaler dimension does not match the model");
        return m;
    } catch (const json::exception& ex) {
        throw Error(ErrorKind::parse, std::string("malformed model: ") + ex.what());
    }
}

inline std::string dump(const json& j) { return j.dump(1) + "\n"; }

inline void save_model(const std::string& path, const mtdl::Model& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw invalid_input("cannot write " + path);
    out << dump(model_to_json(m));
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw invalid_input("cannot read " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& ex) {
        throw Error(ErrorKind::parse, path + ": " + ex.what());
    }
}

inline mtdl::Model load_model(const std::string& path) { return model_from_json(read_json_file(path)); }

// ---------------------------------------------------------------------------
// Training configuration
// ---------------------------------------------------------------------------

struct TrainConfig {
    mtdl::Hyperparams hyper;
    FitOptions fit;
};

/// {"hyper": {...}, "standardize": bool, "score_mode": "...", "calibration_folds": n}.
/// Hyperparameter keys may also appear at the top level.
inline TrainConfig train_config_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorKind::parse, "config must be a JSON object");
    try {
        TrainConfig c;
        c.hyper = hyper_from_json(j, c.hyper);
        if (j.contains("hyper")) c.hyper = hyper_from_json(j.at("hyper"), c.hyper);
        c.fit.standardize = j.value("standardize", c.fit.standardize);
        c.fit.calibration_folds = j.value("calibration_folds", c.fit.calibration_folds);
        if (j.contains("score_mode")) c.fit.score_mode = parse_scoring_mode(j.at("score_mode").get<std::string>());
        return c;
    } catch (const json::exception& ex) {
        throw Error(ErrorKind::parse, std::string("malformed config: ") + ex.what());
    }
}

}  // namespace wits::io
