#pragma once

// Metrics, bootstrap intervals, Pareto filtering, mean gradients, timing.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "derivfair/adam.hpp"
#include "derivfair/autodiff.hpp"
#include "derivfair/dataset.hpp"
#include "derivfair/errors.hpp"
#include "derivfair/mlp.hpp"
#include "derivfair/parallel.hpp"
#include "derivfair/rng.hpp"

namespace derivfair {

// ---------------------------------------------------------------------------
// Prediction metrics

enum class Task { Regression, Binary };

struct PredictionMetrics {
    double mse = 0.0;  // on the raw outputs (logits for Binary)
    std::optional<double> accuracy;
    std::optional<double> f1;
    std::optional<double> auc_roc;
};

/// Area under the ROC curve via the rank-sum statistic, ties get average ranks.
/// Empty when y_true has a single class.
inline std::optional<double> auc_roc(const Vector& y_true, const Vector& score) {
    if (y_true.size() != score.size()) throw DimensionError("auc_roc: lengths differ");
    const Eigen::Index n = y_true.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return score[a] < score[b]; });
    double rank_sum = 0.0, n_pos = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && score[order[j + 1]] == score[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            if (y_true[order[k]] == 1.0) {
                rank_sum += avg_rank;
                n_pos += 1.0;
            }
        i = j + 1;
    }
    const double n_neg = static_cast<double>(n) - n_pos;
    if (n_pos == 0.0 || n_neg == 0.0) return std::nullopt;
    return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

/// Regression: MSE. Binary: `output` holds logits; accuracy and F1 use
/// sigmoid(logit) >= 0.5, AUC uses the logits as scores.
inline PredictionMetrics prediction_metrics(const Vector& y_true, const Vector& output, Task task) {
    if (y_true.size() != output.size()) throw DimensionError("prediction_metrics: lengths differ");
    if (y_true.size() == 0) throw DimensionError("prediction_metrics: empty input");
    PredictionMetrics m;
    m.mse = (y_true - output).squaredNorm() / static_cast<double>(y_true.size());
    if (task == Task::Regression) return m;

    double tp = 0, fp = 0, fn = 0, correct = 0;
    for (Eigen::Index i = 0; i < y_true.size(); ++i) {
        if (y_true[i] != 0.0 && y_true[i] != 1.0) throw DomainError("prediction_metrics: binary labels must be 0/1");
        const bool pred = sigmoid(output[i]) >= 0.5;
        const bool truth = y_true[i] == 1.0;
        correct += pred == truth;
        tp += pred && truth;
        fp += pred && !truth;
        fn += !pred && truth;
    }
    m.accuracy = correct / static_cast<double>(y_true.size());
    const double denom = 2 * tp + fp + fn;
    m.f1 = denom > 0 ? 2 * tp / denom : 0.0;
    m.auc_roc = auc_roc(y_true, output);
    return m;
}

// ---------------------------------------------------------------------------
// Bootstrap

struct Interval {
    double mean = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t n_samples = 0;
};

namespace detail {

/// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& v, double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

/// Percentile interval of a sample of replicate values. Non-finite values are
/// dropped; n_samples is the number kept.
inline Interval percentile_interval(std::vector<double> values, double level = 0.95) {
    if (!(level > 0.0 && level < 1.0)) throw ContractError("percentile_interval: level must be in (0, 1)");
    values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return !std::isfinite(v); }), values.end());
    Interval out;
    out.n_samples = values.size();
    if (values.empty()) {
        out.mean = out.ci_low = out.ci_high = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    std::sort(values.begin(), values.end());
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    const double tail = (1.0 - level) / 2.0;
    out.ci_low = std::min(detail::quantile_sorted(values, tail), out.mean);
    out.ci_high = std::max(detail::quantile_sorted(values, 1.0 - tail), out.mean);
    return out;
}

/// Normal-theory interval mean +- z * sd / sqrt(k) across replicates.
inline Interval replicate_interval(std::vector<double> values, double z = 1.959963984540054) {
    values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return !std::isfinite(v); }), values.end());
    Interval out;
    out.n_samples = values.size();
    if (values.empty()) {
        out.mean = out.ci_low = out.ci_high = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    const double k = static_cast<double>(values.size());
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) / k;
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    const double half = values.size() > 1 ? z * std::sqrt(ss / (k - 1.0)) / std::sqrt(k) : 0.0;
    out.ci_low = out.mean - half;
    out.ci_high = out.mean + half;
    return out;
}

/// Row indices drawn with replacement for bootstrap replicate `b`.
inline std::vector<std::size_t> bootstrap_rows(std::size_t n_rows, std::uint64_t seed, std::size_t b) {
    Rng rng(derive_seed(seed, b));
    std::vector<std::size_t> rows(n_rows);
    for (auto& r : rows) r = static_cast<std::size_t>(rng.below(n_rows));
    return rows;
}

/// Vector-valued statistic over B resamples of the rows. Replicate b always uses
/// the same rows for a given seed, whatever the thread count.
/// The statistic also receives the replicate index, e.g. to seed training.
inline std::vector<Interval> bootstrap_ci_indexed(
    const std::function<std::vector<double>(std::size_t b, const std::vector<std::size_t>& rows)>& statistic,
    std::size_t n_rows, std::size_t n_boot, double level, std::uint64_t seed, unsigned threads = 1) {
    if (n_boot < 1) throw ContractError("bootstrap_ci: need at least one resample");
    if (n_rows < 1) throw ContractError("bootstrap_ci: no rows");
    std::vector<std::vector<double>> draws(n_boot);
    parallel_for(n_boot, threads, [&](std::size_t b) { draws[b] = statistic(b, bootstrap_rows(n_rows, seed, b)); });
    const std::size_t width = draws.front().size();
    std::vector<Interval> out;
    for (std::size_t k = 0; k < width; ++k) {
        std::vector<double> col;
        for (const auto& d : draws) {
            if (d.size() != width) throw DimensionError("bootstrap_ci: statistic changed length between resamples");
            col.push_back(d[k]);
        }
        out.push_back(percentile_interval(std::move(col), level));
    }
    return out;
}

inline std::vector<Interval> bootstrap_ci(
    const std::function<std::vector<double>(const std::vector<std::size_t>& rows)>& statistic, std::size_t n_rows,
    std::size_t n_boot, double level, std::uint64_t seed, unsigned threads = 1) {
    return bootstrap_ci_indexed([&](std::size_t, const std::vector<std::size_t>& rows) { return statistic(rows); },
                                n_rows, n_boot, level, seed, threads);
}

inline Interval bootstrap_ci(const std::function<double(const std::vector<std::size_t>& rows)>& statistic,
                             std::size_t n_rows, std::size_t n_boot, double level, std::uint64_t seed,
                             unsigned threads = 1) {
    return bootstrap_ci([&](const std::vector<std::size_t>& rows) { return std::vector<double>{statistic(rows)}; },
                        n_rows, n_boot, level, seed, threads)
        .front();
}

// ---------------------------------------------------------------------------
// Pareto front

struct ParetoPoint {
    double lambda_spd = 0.0;
    double lambda_ppd = 0.0;
    double spd_loss = 0.0;
    double ppd_loss = 0.0;
};

/// p dominates q: no worse in both losses, strictly better in one.
inline bool dominates(const ParetoPoint& p, const ParetoPoint& q) {
    return p.spd_loss <= q.spd_loss && p.ppd_loss <= q.ppd_loss && (p.spd_loss < q.spd_loss || p.ppd_loss < q.ppd_loss);
}

/// true for points no other point dominates. Equal points never dominate each other.
inline std::vector<bool> pareto_mask(const std::vector<ParetoPoint>& points) {
    for (const auto& p : points)
        if (!std::isfinite(p.spd_loss) || !std::isfinite(p.ppd_loss))
            throw DomainError("pareto_front: losses must be finite");
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return points[a].spd_loss != points[b].spd_loss ? points[a].spd_loss < points[b].spd_loss
                                                        : points[a].ppd_loss < points[b].ppd_loss;
    });
    std::vector<bool> keep(points.size(), false);
    double best_before = std::numeric_limits<double>::infinity();  // min ppd over strictly smaller spd
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && points[order[j]].spd_loss == points[order[i]].spd_loss) ++j;
        const double group_min = points[order[i]].ppd_loss;
        for (std::size_t k = i; k < j; ++k) {
            const double ppd = points[order[k]].ppd_loss;
            keep[order[k]] = ppd == group_min && best_before > ppd;
        }
        best_before = std::min(best_before, group_min);
        i = j;
    }
    return keep;
}

/// Non-dominated points in input order.
inline std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points) {
    const auto mask = pareto_mask(points);
    std::vector<ParetoPoint> out;
    for (std::size_t i = 0; i < points.size(); ++i)
        if (mask[i]) out.push_back(points[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Gradient summaries

template <class P>
RowVector mean_gradients(const P& model, const Matrix& batch) {
    return model.input_gradient(batch).colwise().mean();
}

// ---------------------------------------------------------------------------
// Timing

struct BenchResult {
    double t_backprop = 0.0;  // mean seconds per step
    double t_fairtune = 0.0;
    std::vector<double> backprop_samples;
    std::vector<double> fairtune_samples;
};

/// One ADAM step on a one-hidden-layer ELU network with MSE, with and without
/// the gradient-matching term, on N(0,1) data. Holds its own data and both
/// optimizer states so steps can be timed in any order.
class BackpropBench {
public:
    BackpropBench(int n, int m, int h, std::uint64_t seed) {
        if (n < 1 || m < 1 || h < 1) throw ContractError("bench_backprop: sizes must be positive");
        Rng rng(seed);
        auto normal_matrix = [&](int r, int c) {
            Matrix out(r, c);
            for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = rng.normal();
            return out;
        };
        x_ = normal_matrix(n, m);
        y_ = normal_matrix(n, 1).col(0);
        grad_y_ = normal_matrix(n, m);
        MLPConfig cfg;
        cfg.input_width = m;
        cfg.hidden_widths = {h};
        cfg.init_seed = seed;
        plain_ = fair_ = init_model(cfg);
        theta_plain_ = plain_.parameters();
        theta_fair_ = fair_.parameters();
        s_plain_ = AdamState::zeros(theta_plain_.size());
        s_fair_ = AdamState::zeros(theta_fair_.size());
    }

    void step_backprop() {
        Tape tape;
        const auto rec = plain_.record(tape, x_, false);
        const Var loss = tape.mean(tape.square(rec.output - tape.constant(y_)));
        adam_step(theta_plain_, tape.param_gradient(loss, plain_.parameter_count()), s_plain_, tc_);
        plain_.set_parameters(theta_plain_);
    }

    void step_fairtune() {
        Tape tape;
        const auto rec = fair_.record(tape, x_, true);
        Var loss = tape.mean(tape.square(rec.output - tape.constant(y_)));
        loss = loss + tape.mean(tape.square(*rec.input_grad - tape.constant(grad_y_)));
        adam_step(theta_fair_, tape.param_gradient(loss, fair_.parameter_count()), s_fair_, tc_);
        fair_.set_parameters(theta_fair_);
    }

    /// Seconds for one step of each kind.
    std::pair<double, double> time_steps() {
        return {seconds([this] { step_backprop(); }), seconds([this] { step_fairtune(); })};
    }

private:
    template <class Fn>
    static double seconds(Fn&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    Matrix x_, grad_y_;
    Vector y_;
    MLPModel plain_, fair_;
    Vector theta_plain_, theta_fair_;
    AdamState s_plain_, s_fair_;
    TrainConfig tc_;
};

/// Mean seconds per step over `reps` timed steps; one warm-up step is discarded.
inline BenchResult bench_backprop(int n, int m, int h, int reps, std::uint64_t seed = 0) {
    if (reps < 1) throw ContractError("bench_backprop: reps must be positive");
    BackpropBench bench(n, m, h, seed);
    bench.time_steps();
    BenchResult out;
    for (int r = 0; r < reps; ++r) {
        const auto [bp, ft] = bench.time_steps();
        out.backprop_samples.push_back(bp);
        out.fairtune_samples.push_back(ft);
    }
    out.t_backprop = std::accumulate(out.backprop_samples.begin(), out.backprop_samples.end(), 0.0) / reps;
    out.t_fairtune = std::accumulate(out.fairtune_samples.begin(), out.fairtune_samples.end(), 0.0) / reps;
    return out;
}

/// Least-squares line through (x, y); returns R^2.
inline double linear_fit_r2(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw DimensionError("linear_fit_r2: need >= 2 matched points");
    const double k = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / k;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / k;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return syy == 0.0 ? 1.0 : 0.0;
    return sxy * sxy / (sxx * syy);
}

// ---------------------------------------------------------------------------
// Reports

/// predictor -> metric -> interval, plus free-form string metadata.
struct EvalReport {
    std::map<std::string, std::map<std::string, Interval>> predictors;
    std::map<std::string, std::string> meta;

    void set(const std::string& predictor, const std::string& metric, const Interval& v) {
        const bool nan = std::isnan(v.mean) && std::isnan(v.ci_low) && std::isnan(v.ci_high);
        if (!nan && !(v.ci_low <= v.mean && v.mean <= v.ci_high))
            throw ContractError("EvalReport: interval for " + predictor + "/" + metric + " does not contain its mean");
        predictors[predictor][metric] = v;
    }

    const Interval& get(const std::string& predictor, const std::string& metric) const {
        const auto p = predictors.find(predictor);
        if (p == predictors.end()) throw SchemaError("EvalReport: no predictor '" + predictor + "'");
        const auto m = p->second.find(metric);
        if (m == p->second.end()) throw SchemaError("EvalReport: no metric '" + metric + "' for '" + predictor + "'");
        return m->second;
    }

    bool has(const std::string& predictor, const std::string& metric) const {
        const auto p = predictors.find(predictor);
        return p != predictors.end() && p->second.count(metric);
    }
};

namespace detail {

// JSON has no NaN; missing values are written as null.
inline nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
inline double number_from(const nlohmann::json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}
inline double parse_double(const std::string& s) {
    if (s == "nan" || s == "NaN" || s.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::istringstream ss(s);
    ss.imbue(std::locale::classic());
    double v;
    if (!(ss >> v)) throw SchemaError("report csv: bad number '" + s + "'");
    return v;
}

}  // namespace detail

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json j;
    j["format"] = "derivfair-report/1";
    j["meta"] = r.meta;
    j["predictors"] = nlohmann::json::object();
    for (const auto& [name, metrics] : r.predictors)
        for (const auto& [metric, v] : metrics)
            j["predictors"][name][metric] = {{"mean", detail::number_or_null(v.mean)},
                                             {"ci_low", detail::number_or_null(v.ci_low)},
                                             {"ci_high", detail::number_or_null(v.ci_high)},
                                             {"n_samples", v.n_samples}};
    return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "derivfair-report/1") throw SchemaError("report: unknown format");
        EvalReport r;
        r.meta = j.at("meta").get<std::map<std::string, std::string>>();
        for (const auto& [name, metrics] : j.at("predictors").items())
            for (const auto& [metric, v] : metrics.items())
                r.predictors[name][metric] = Interval{detail::number_from(v.at("mean")), detail::number_from(v.at("ci_low")),
                                                      detail::number_from(v.at("ci_high")),
                                                      v.at("n_samples").get<std::size_t>()};
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("report: ") + e.what());
    }
}

/// One row per predictor x metric.
inline std::string to_tidy_csv(const EvalReport& r) {
    std::ostringstream out;
    out << "predictor,metric,mean,ci_low,ci_high,n_samples\n";
    for (const auto& [name, metrics] : r.predictors)
        for (const auto& [metric, v] : metrics)
            out << name << ',' << metric << ',' << format_double(v.mean) << ',' << format_double(v.ci_low) << ','
                << format_double(v.ci_high) << ',' << v.n_samples << '\n';
    return out.str();
}

inline EvalReport report_from_tidy_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "predictor,metric,mean,ci_low,ci_high,n_samples")
        throw SchemaError("report csv: unexpected header");
    EvalReport r;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        if (cells.size() != 6) throw SchemaError("report csv: expected 6 fields in '" + line + "'");
        r.predictors[cells[0]][cells[1]] = Interval{detail::parse_double(cells[2]), detail::parse_double(cells[3]),
                                                    detail::parse_double(cells[4]),
                                                    static_cast<std::size_t>(std::stoull(cells[5]))};
    }
    return r;
}

inline void write_report(const EvalReport& r, const std::string& json_path, const std::string& csv_path) {
    std::ofstream j(json_path), c(csv_path);
    if (!j || !c) throw std::runtime_error("cannot write report to '" + json_path + "' / '" + csv_path + "'");
    j << to_json(r).dump(2) << '\n';
    c << to_tidy_csv(r);
    if (!j || !c) throw std::runtime_error("report write failed");
}

}  // namespace derivfair
