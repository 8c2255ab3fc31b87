#pragma once

// The `wits` command line: thin wrappers over the library. Exit codes are
// 0 ok, 1 usage, 2 input error, 3 numerical failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "wits/benchmark.hpp"
#include "wits/csv.hpp"
#include "wits/events.hpp"
#include "wits/model_io.hpp"
#include "wits/recognizer.hpp"
#include "wits/rules.hpp"
#include "wits/signal.hpp"
#include "wits/simhome.hpp"

namespace wits::cli {

using json = nlohmann::ordered_json;

enum ExitCode { kOk = 0, kUsage = 1, kInput = 2, kNumerical = 3 };

namespace detail {

inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw invalid_input("cannot read " + path);
    return in;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw invalid_input("cannot write " + path);
    return out;
}

inline std::string slurp(const std::string& path) {
    auto in = open_in(path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline io::FeatureTable load_features(const std::string& path) {
    auto in = open_in(path);
    try {
        return io::read_features_csv(in);
    } catch (const Error& e) {
        throw Error(e.kind(), path + ": " + e.what());
    }
}

inline std::vector<io::LabelRow> load_labels(const std::string& path) {
    auto in = open_in(path);
    try {
        return io::read_labels_csv(in);
    } catch (const Error& e) {
        throw Error(e.kind(), path + ": " + e.what());
    }
}

inline SignalStream load_sensors(const std::string& path) {
    auto in = open_in(path);
    try {
        return io::read_sensor_csv(in);
    } catch (const Error& e) {
        throw Error(e.kind(), path + ": " + e.what());
    }
}

struct ResultRecord {
    Timestamp start = 0, end = 0;
    std::string label;
    std::vector<double> scores;
    double normality = 0.0;
    bool abnormal = false;
};

inline json to_json(const ResultRecord& r) {
    json j;
    j["start_ms"] = r.start;
    j["end_ms"] = r.end;
    j["label"] = r.label;
    j["scores"] = r.scores;
    j["normality"] = r.normality;
    j["abnormal"] = r.abnormal;
    return j;
}

inline std::vector<ResultRecord> load_results(const std::string& path) {
    auto in = open_in(path);
    std::vector<ResultRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = json::parse(line);
            ResultRecord r;
            r.start = j.at("start_ms").get<Timestamp>();
            r.end = j.at("end_ms").get<Timestamp>();
            r.label = j.at("label").get<std::string>();
            r.scores = j.value("scores", std::vector<double>{});
            r.normality = j.value("normality", 0.0);
            r.abnormal = j.value("abnormal", false);
            out.push_back(std::move(r));
        } catch (const json::exception& ex) {
            throw Error(ErrorKind::parse, path + ": line " + std::to_string(lineno) + ": " + ex.what());
        }
    }
    return out;
}

inline std::vector<ResultRecord> classify_table(const io::FeatureTable& t, const mtdl::Model& model,
                                                const RecognizerOptions& opts) {
    std::vector<ResultRecord> out;
    for (Eigen::Index i = 0; i < t.x.rows(); ++i) {
        const auto r = classify(Eigen::RowVectorXd(t.x.row(i)), model, opts);
        out.push_back(ResultRecord{t.spans[static_cast<std::size_t>(i)].first, t.spans[static_cast<std::size_t>(i)].second,
                                   r.label.name, r.scores, r.normality, r.abnormal});
    }
    return out;
}

inline void write_results(const std::string& path, const std::vector<ResultRecord>& rows) {
    auto out = open_out(path);
    for (const auto& r : rows) out << to_json(r).dump() << '\n';
}

inline json confusion_json(const Confusion& c) {
    json j;
    j["labels"] = c.labels;
    j["counts"] = c.counts;
    return j;
}

// Rows of the comparison CSV: method,metric,truth,predicted,value.
inline void confusion_csv(std::ostream& out, const std::string& method, const Confusion& c) {
    out << method << ",accuracy,,," << io::format_double(c.accuracy()) << '\n';
    out << method << ",segments,,," << c.total() << '\n';
    for (std::size_t i = 0; i < c.labels.size(); ++i)
        for (std::size_t k = 0; k < c.labels.size(); ++k)
            out << method << ",confusion," << c.labels[i] << ',' << c.labels[k] << ',' << c.counts[i][k] << '\n';
}

inline std::size_t label_index(std::vector<std::string>& labels, const std::string& l) {
    const auto it = std::find(labels.begin(), labels.end(), l);
    if (it != labels.end()) return static_cast<std::size_t>(it - labels.begin());
    labels.push_back(l);
    return labels.size() - 1;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline int cmd_filter(const std::string& in, double lambda, const std::string& out_path, std::ostream& log) {
    const auto stream = detail::load_sensors(in);
    const auto smoothed = smooth(stream, lambda);
    auto out = detail::open_out(out_path);
    io::write_sensor_csv(out, smoothed);
    log << "filtered " << stream.frames.size() << " frames x " << stream.channel_count() << " channels\n";
    return kOk;
}

inline int cmd_featurize(const std::string& in, const PipelineOptions& opts, const std::string& out_path,
                         std::ostream& log) {
    const auto stream = detail::load_sensors(in);
    const auto f = featurize_stream(stream, opts);
    auto out = detail::open_out(out_path);
    io::write_features_csv(out, io::feature_table(f, stream.channels));
    log << "wrote " << f.features.rows() << " segments x " << f.features.cols() << " features\n";
    return kOk;
}

inline int cmd_train(const std::string& features, const std::string& labels, const io::TrainConfig& cfg,
                     const std::string& out_path, std::ostream& log) {
    const auto table = detail::load_features(features);
    const auto label_rows = detail::load_labels(labels);
    const auto matched = io::match_labels(table.spans, label_rows);
    LabeledRows rows;
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < matched.size(); ++i)
        if (!matched[i]->outlier) keep.push_back(static_cast<Eigen::Index>(i));
    rows.x.resize(static_cast<Eigen::Index>(keep.size()), table.x.cols());
    for (std::size_t r = 0; r < keep.size(); ++r) {
        rows.x.row(static_cast<Eigen::Index>(r)) = table.x.row(keep[r]);
        rows.labels.push_back(matched[static_cast<std::size_t>(keep[r])]->label);
    }
    if (rows.x.rows() == 0) throw invalid_input("no training rows");
    const auto fit = fit_model(rows, cfg.hyper, cfg.fit);
    io::save_model(out_path, fit.model);
    log << "trained " << fit.model.task_count() << " classes on " << rows.x.rows() << " segments ("
        << table.x.rows() - rows.x.rows() << " marked outliers skipped); sweeps " << fit.sweeps << ", J "
        << io::format_double(fit.model.j_trace.back()) << '\n';
    return kOk;
}

inline int cmd_classify(const std::string& model_path, const std::string& features, std::optional<double> epsilon,
                        std::optional<double> quantile, ScoringMode mode, const std::string& out_path,
                        std::ostream& log) {
    const auto model = io::load_model(model_path);
    const auto table = detail::load_features(features);
    if (table.x.cols() != model.feature_dim())
        throw invalid_input("feature table has " + std::to_string(table.x.cols()) + " columns, model expects " +
                            std::to_string(model.feature_dim()));
    RecognizerOptions opts;
    opts.mode = mode;
    if (epsilon) opts.epsilon = *epsilon;
    if (quantile) {
        if (model.train_scores.empty()) throw invalid_input("model carries no training scores to calibrate from");
        opts.epsilon = calibrate_threshold(model.train_scores, *quantile);
    }
    const auto rows = detail::classify_table(table, model, opts);
    detail::write_results(out_path, rows);
    int flagged = 0;
    for (const auto& r : rows) flagged += r.abnormal;
    log << "classified " << rows.size() << " segments";
    if (std::isfinite(opts.epsilon)) log << "; epsilon " << io::format_double(opts.epsilon) << ", " << flagged << " abnormal";
    log << '\n';
    return kOk;
}

inline int cmd_rules_check(const std::string& path, std::ostream& out) {
    const auto rs = rules::parse_rules(detail::slurp(path));
    out << rs.rules.size() << " rules accepted\n";
    for (const auto& r : rs.rules) out << "  " << r.name << '\n';
    return kOk;
}

inline int cmd_rules_run(const std::string& rules_path, const std::string& events_path, const std::string& out_path,
                         std::optional<Timestamp> until, Timestamp tz_minutes, std::ostream& log) {
    const auto rs = rules::parse_rules(detail::slurp(rules_path));
    auto in = detail::open_in(events_path);
    const auto events = read_events_jsonl(in);
    rules::EngineOptions opts;
    opts.tz_offset = tz_minutes * 60'000;
    const auto fired = rules::run(rs, events, opts, until);
    auto out = detail::open_out(out_path);
    rules::write_actions_jsonl(out, fired);
    log << events.size() << " events, " << fired.size() << " actions\n";
    return kOk;
}

inline int cmd_sim(const std::string& script_path, std::optional<std::uint64_t> seed, const std::string& dir,
                   std::ostream& log) {
    auto j = io::read_json_file(script_path);
    if (seed) j["seed"] = *seed;
    const auto script = sim::script_from_json(nlohmann::json::parse(j.dump()));
    script.validate();
    const auto planted = sim::planted_for(script);
    const auto g = sim::generate(script, planted);

    std::filesystem::create_directories(dir);
    const auto path = [&](const char* name) { return (std::filesystem::path(dir) / name).string(); };
    {
        auto out = detail::open_out(path("sensors.csv"));
        io::write_sensor_csv(out, g.stream);
    }
    {
        io::FeatureTable t;
        t.names = feature_names(g.stream.channels);
        for (const auto& s : g.segments) t.spans.emplace_back(s.start, s.end);
        t.x = g.features;
        auto out = detail::open_out(path("features.csv"));
        io::write_features_csv(out, t);
    }
    {
        std::vector<io::LabelRow> rows;
        for (const auto& s : g.segments)
            rows.push_back({s.start, s.end, script.classes[static_cast<std::size_t>(s.label - 1)], s.outlier});
        auto out = detail::open_out(path("labels.csv"));
        io::write_labels_csv(out, rows);
    }
    {
        auto out = detail::open_out(path("events.jsonl"));
        write_events_jsonl(out, g.events);
    }
    {
        json t;
        t["seed"] = script.seed;
        t["noise_sigma"] = g.noise_sigma;
        t["classes"] = script.classes;
        t["Q"] = io::matrix_to_json(planted.projection);
        t["D"] = io::matrix_to_json(planted.shared_dict);
        json dk = json::array();
        for (const auto& d : planted.task_dicts) dk.push_back(io::matrix_to_json(d));
        t["D_k"] = std::move(dk);
        auto out = detail::open_out(path("planted.json"));
        out << io::dump(t);
    }
    int outliers = 0;
    for (const auto& s : g.segments) outliers += s.outlier;
    log << "generated " << g.segments.size() << " segments (" << outliers << " outliers), " << g.events.size()
        << " events in " << dir << '\n';
    return kOk;
}

struct KnnInputs {
    std::string train_features, train_labels, test_features;
    int k = 5;
};

inline int cmd_report(const std::string& results_path, const std::string& truth_path, const std::string& out_path,
                      std::string csv_path, const std::optional<KnnInputs>& knn, std::ostream& log) {
    const auto results = detail::load_results(results_path);
    const auto truth = detail::load_labels(truth_path);
    std::vector<std::pair<Timestamp, Timestamp>> spans;
    for (const auto& r : results) spans.emplace_back(r.start, r.end);
    const auto matched = io::match_labels(spans, truth);

    std::vector<std::string> labels;
    for (const auto& t : truth) detail::label_index(labels, t.label);
    for (const auto& r : results) detail::label_index(labels, r.label);

    // kNN predictions may introduce no new labels: they come from training truth.
    std::vector<std::string> knn_pred;
    if (knn) {
        const auto train = detail::load_features(knn->train_features);
        const auto train_label_rows = detail::load_labels(knn->train_labels);
        const auto train_truth = io::match_labels(train.spans, train_label_rows);
        const auto test = detail::load_features(knn->test_features);
        if (test.spans != spans) throw invalid_input("kNN test features must list the same segments as the results");
        std::vector<int> ids;
        for (const auto* l : train_truth) ids.push_back(static_cast<int>(detail::label_index(labels, l->label)));
        const auto pred = knn_baseline(train.x, ids, test.x, knn->k);
        for (int p : pred) knn_pred.push_back(labels[static_cast<std::size_t>(p)]);
    }

    Confusion ours(labels), base(labels);
    DetectionStats det;
    int clean = 0, clean_hits = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto t = detail::label_index(labels, matched[i]->label);
        ours.add(t, detail::label_index(labels, results[i].label));
        if (knn) base.add(t, detail::label_index(labels, knn_pred[i]));
        det.add(matched[i]->outlier, results[i].abnormal);
        if (!matched[i]->outlier) {
            ++clean;
            clean_hits += results[i].label == matched[i]->label;
        }
    }

    json rep;
    rep["segments"] = results.size();
    json methods = json::array();
    json m;
    m["method"] = "mtdl";
    m["accuracy"] = ours.accuracy();
    m["clean_accuracy"] = clean ? static_cast<double>(clean_hits) / clean : 0.0;
    m["confusion"] = detail::confusion_json(ours);
    methods.push_back(m);
    if (knn) {
        json b;
        b["method"] = "knn";
        b["k"] = knn->k;
        b["accuracy"] = base.accuracy();
        b["confusion"] = detail::confusion_json(base);
        methods.push_back(b);
    }
    rep["methods"] = std::move(methods);
    json a;
    a["precision"] = det.precision();
    a["recall"] = det.recall();
    a["false_positive_rate"] = det.false_positive_rate();
    a["true_positive"] = det.true_positive;
    a["false_positive"] = det.false_positive;
    a["false_negative"] = det.false_negative;
    a["true_negative"] = det.true_negative;
    rep["anomaly"] = std::move(a);
    {
        auto out = detail::open_out(out_path);
        out << io::dump(rep);
    }

    if (csv_path.empty()) csv_path = std::filesystem::path(out_path).replace_extension(".csv").string();
    {
        auto out = detail::open_out(csv_path);
        out << "method,metric,truth,predicted,value\n";
        detail::confusion_csv(out, "mtdl", ours);
        if (knn) detail::confusion_csv(out, "knn", base);
        out << "mtdl,anomaly_precision,,," << io::format_double(det.precision()) << '\n';
        out << "mtdl,anomaly_recall,,," << io::format_double(det.recall()) << '\n';
        out << "mtdl,anomaly_false_positive_rate,,," << io::format_double(det.false_positive_rate()) << '\n';
    }
    log << "accuracy " << io::format_double(ours.accuracy());
    if (knn) log << ", knn " << io::format_double(base.accuracy());
    log << "; anomaly precision " << io::format_double(det.precision()) << ", recall " << io::format_double(det.recall())
        << '\n';
    return kOk;
}

/// Per-segment filter + featurize + classify time, with file reading timed
/// separately.
inline int cmd_latency(const std::string& model_path, const std::string& sensors, const PipelineOptions& opts,
                       std::ostream& out) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    const auto model = io::load_model(model_path);
    const auto stream = detail::load_sensors(sensors);
    const auto t1 = clock::now();
    const auto segs = segment(stream, opts.segmenting);
    if (segs.empty()) throw invalid_input("no complete segment in " + sensors);
    std::vector<double> ms;
    for (const auto& s : segs) {
        const auto a = clock::now();
        SignalStream one;
        one.channels = stream.channels;
        one.sample_period = stream.sample_period;
        one.frames = s.frames;
        const auto prepared = opts.use_growth ? smooth(one, opts.lambda) : one;
        Segment seg = s;
        seg.frames = prepared.frames;
        const Eigen::VectorXd f = extract_features(seg, opts.features);
        const auto r = classify(Eigen::RowVectorXd(f.transpose()), model);
        (void)r;
        ms.push_back(std::chrono::duration<double, std::milli>(clock::now() - a).count());
    }
    std::sort(ms.begin(), ms.end());
    double total = 0.0;
    for (double v : ms) total += v;
    json j;
    j["segments"] = ms.size();
    j["channels"] = stream.channel_count();
    j["io_ms"] = std::chrono::duration<double, std::milli>(t1 - t0).count();
    j["mean_ms"] = total / static_cast<double>(ms.size());
    j["median_ms"] = ms[ms.size() / 2];
    j["max_ms"] = ms.back();
    out << j.dump(2) << '\n';
    return kOk;
}

inline int cmd_benchmark(const BenchmarkConfig& cfg, const std::string& out_path, std::ostream& log) {
    const auto r = run_benchmark(cfg);
    json j;
    j["seed"] = cfg.seed;
    j["accuracy"] = r.ours.accuracy();
    j["knn_accuracy"] = r.knn.accuracy();
    j["confusion"] = detail::confusion_json(r.ours);
    j["knn_confusion"] = detail::confusion_json(r.knn);
    j["epsilon"] = r.epsilon;
    j["anomaly"] = {{"precision", r.detection.precision()},
                    {"recall", r.detection.recall()},
                    {"false_positive_rate", r.detection.false_positive_rate()},
                    {"clean_false_positive_rate", r.clean_detection.false_positive_rate()}};
    if (!out_path.empty()) {
        auto out = detail::open_out(out_path);
        out << io::dump(j);
    }
    log << "accuracy " << io::format_double(r.ours.accuracy()) << ", knn " << io::format_double(r.knn.accuracy())
        << "; recall " << io::format_double(r.detection.recall()) << ", fpr "
        << io::format_double(r.detection.false_positive_rate()) << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"WITS activity recognition and rule engine", "wits"};
    app.require_subcommand(1);

    std::string in, out_path, model_path, features, labels, config, script, results, truth, csv_path, rules_path, events_path;
    double lambda = 100.0;
    Timestamp window = 10'000, stride = 0;
    bool raw = false;

    auto* filter = app.add_subcommand("filter", "HP-filter every channel of a sensor CSV");
    filter->add_option("--in", in, "sensor CSV")->required();
    filter->add_option("--lambda", lambda, "smoothing parameter");
    filter->add_option("--out", out_path, "output sensor CSV (trend component)")->required();

    auto* featurize = app.add_subcommand("featurize", "segment a sensor CSV and extract features");
    featurize->add_option("--in", in, "sensor CSV")->required();
    featurize->add_option("--lambda", lambda, "smoothing parameter");
    featurize->add_option("--window", window, "segment length in ms");
    featurize->add_option("--stride", stride, "segment stride in ms (0: window)");
    featurize->add_flag("--raw", raw, "skip the HP filter");
    featurize->add_option("--out", out_path, "feature CSV")->required();

    std::optional<std::uint64_t> seed;
    std::optional<int> atoms, sd, sweeps, folds;
    std::optional<double> l1, l2, l3;
    auto* train = app.add_subcommand("train", "learn a model from labeled feature rows");
    train->add_option("--features", features, "feature CSV")->required();
    train->add_option("--labels", labels, "label CSV")->required();
    train->add_option("--config", config, "JSON training configuration");
    train->add_option("--seed", seed, "initialization seed");
    train->add_option("--atoms", atoms, "dictionary size");
    train->add_option("--subspace-dim", sd, "shared subspace dimension");
    train->add_option("--lambda1", l1);
    train->add_option("--lambda2", l2);
    train->add_option("--lambda3", l3);
    train->add_option("--max-sweeps", sweeps);
    train->add_option("--calibration-folds", folds, "held-out folds for training scores (0: in-sample)");
    train->add_option("--out", out_path, "model JSON")->required();

    std::optional<double> epsilon, quantile;
    std::string mode = "full";
    auto add_classify_opts = [&](CLI::App* c) {
        c->add_option("--model", model_path, "model JSON")->required();
        c->add_option("--features", features, "feature CSV")->required();
        c->add_option("--epsilon", epsilon, "abnormality threshold");
        c->add_option("--mode", mode, "scoring mode: full, no_shared or raw_residual");
        c->add_option("--out", out_path, "results JSON lines")->required();
    };
    auto* classify_cmd = app.add_subcommand("classify", "label every feature row");
    add_classify_opts(classify_cmd);
    classify_cmd->add_option("--quantile", quantile, "calibrate epsilon at this training-score quantile");
    double detect_q = 0.99;
    auto* detect = app.add_subcommand("detect", "classify and flag rows above a training-score quantile");
    add_classify_opts(detect);
    detect->add_option("--quantile", detect_q, "training-score quantile");

    auto* rules_cmd = app.add_subcommand("rules", "rule files");
    rules_cmd->require_subcommand(1);
    auto* check = rules_cmd->add_subcommand("check", "parse a rule file");
    check->add_option("--rules", rules_path, "rule file")->required();
    std::optional<Timestamp> until;
    Timestamp tz = 0;
    auto* run = rules_cmd->add_subcommand("run", "replay events through the rule engine");
    run->add_option("--rules", rules_path, "rule file")->required();
    run->add_option("--events", events_path, "event JSON lines")->required();
    run->add_option("--until", until, "process timers up to this timestamp (ms)");
    run->add_option("--tz", tz, "local-time offset in minutes");
    run->add_option("--out", out_path, "action log JSON lines")->required();

    auto* sim_cmd = app.add_subcommand("sim", "generate a synthetic smart-home run");
    sim_cmd->add_option("--script", script, "scenario script JSON")->required();
    sim_cmd->add_option("--seed", seed, "overrides the script seed");
    sim_cmd->add_option("--out", out_path, "output directory")->required();

    KnnInputs knn;
    auto* report = app.add_subcommand("report", "accuracy, confusion and anomaly statistics");
    report->add_option("--results", results, "results JSON lines")->required();
    report->add_option("--truth", truth, "label CSV")->required();
    report->add_option("--out", out_path, "report JSON")->required();
    report->add_option("--csv", csv_path, "report CSV (default: next to the JSON)");
    auto* kt = report->add_option("--knn-train", knn.train_features, "kNN baseline training features");
    auto* kl = report->add_option("--knn-labels", knn.train_labels, "kNN baseline training labels");
    auto* ke = report->add_option("--knn-test", knn.test_features, "features of the reported segments");
    report->add_option("--knn-k", knn.k, "neighbors");
    kt->needs(kl)->needs(ke);
    kl->needs(kt);
    ke->needs(kt);

    auto* latency = app.add_subcommand("latency", "time filter + featurize + classify per segment");
    latency->add_option("--model", model_path, "model JSON")->required();
    latency->add_option("--in", in, "sensor CSV")->required();
    latency->add_option("--lambda", lambda, "smoothing parameter");
    latency->add_option("--window", window, "segment length in ms");

    BenchmarkConfig bench;
    auto* benchmark = app.add_subcommand("benchmark", "synthetic recognition and abnormality benchmark");
    benchmark->add_option("--seed", bench.seed);
    benchmark->add_option("--out", out_path, "report JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    PipelineOptions pipe;
    pipe.lambda = lambda;
    pipe.segmenting.window = window;
    pipe.segmenting.stride = stride;
    pipe.use_growth = !raw;

    try {
        if (*filter) return cmd_filter(in, lambda, out_path, err);
        if (*featurize) return cmd_featurize(in, pipe, out_path, err);
        if (*train) {
            io::TrainConfig cfg;
            if (!config.empty()) cfg = io::train_config_from_json(io::read_json_file(config));
            if (seed) cfg.hyper.seed = *seed;
            if (atoms) cfg.hyper.atoms = *atoms;
            if (sd) cfg.hyper.subspace_dim = *sd;
            if (l1) cfg.hyper.lambda1 = *l1;
            if (l2) cfg.hyper.lambda2 = *l2;
            if (l3) cfg.hyper.lambda3 = *l3;
            if (sweeps) cfg.hyper.max_sweeps = *sweeps;
            if (folds) cfg.fit.calibration_folds = *folds;
            return cmd_train(features, labels, cfg, out_path, err);
        }
        if (*classify_cmd) return cmd_classify(model_path, features, epsilon, quantile, parse_scoring_mode(mode), out_path, err);
        if (*detect)
            return cmd_classify(model_path, features, epsilon, epsilon ? std::nullopt : std::optional<double>(detect_q),
                                parse_scoring_mode(mode), out_path, err);
        if (*check) return cmd_rules_check(rules_path, out);
        if (*run) return cmd_rules_run(rules_path, events_path, out_path, until, tz, err);
        if (*sim_cmd) return cmd_sim(script, seed, out_path, err);
        if (*report)
            return cmd_report(results, truth, out_path, csv_path, knn.train_features.empty() ? std::nullopt : std::optional(knn), err);
        if (*latency) {
            pipe.segmenting.stride = 0;
            return cmd_latency(model_path, in, pipe, out);
        }
        if (*benchmark) return cmd_benchmark(bench, out_path, err);
    } catch (const Error& e) {
        err << "wits: " << to_string(e.kind()) << ": " << e.what() << '\n';
        return e.kind() == ErrorKind::numerical ? kNumerical : kInput;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "wits: invalid-input: " << e.what() << '\n';
        return kInput;
    }
    return kUsage;
}

}  // namespace wits::cli
