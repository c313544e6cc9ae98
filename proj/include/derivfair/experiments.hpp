#pragma once

// Experiment pipelines shared by the command-line tool and the acceptance run.

#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "derivfair/dataset.hpp"
#include "derivfair/eval.hpp"
#include "derivfair/fairness.hpp"
#include "derivfair/parallel.hpp"
#include "derivfair/scm.hpp"
#include "derivfair/train.hpp"

namespace derivfair {

/// predictor -> metric -> value, for one replicate or one resample.
using MetricTable = std::map<std::string, std::map<std::string, double>>;

enum class Preset { Linear, Multiplicative, Indirect };

inline Preset parse_preset(const std::string& s) {
    if (s == "linear") return Preset::Linear;
    if (s == "multiplicative") return Preset::Multiplicative;
    if (s == "indirect") return Preset::Indirect;
    throw DomainError("unknown preset '" + s + "' (expected linear, multiplicative or indirect)");
}

inline const char* preset_name(Preset p) {
    switch (p) {
        case Preset::Linear: return "linear";
        case Preset::Multiplicative: return "multiplicative";
        case Preset::Indirect: return "indirect";
    }
    return "?";
}

/// Network size and epochs per preset.
struct PresetShape {
    std::vector<int> hidden;
    int fit_epochs;
    int tune_epochs;
};

inline PresetShape preset_shape(Preset p) {
    if (p == Preset::Linear) return {{32, 32}, 50, 20};
    return {{64, 64}, 200, 100};
}

struct ExperimentConfig {
    Preset preset = Preset::Linear;
    std::vector<double> sigma2{1.0};
    std::vector<double> lambda_grid{0.5, 1.0, 10.0, 100.0};  // multiples of sigma^2
    int replicates = 20;
    Eigen::Index n_train = 1000;
    Eigen::Index n_test = 1000;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::optional<int> fit_epochs;
    std::optional<int> tune_epochs;
    int batch_size = 64;
    double learning_rate = 1e-3;
    double compat_tol = 0.2;
    IndirectBetas betas{};

    void validate() const {
        if (replicates < 1) throw ContractError("replicates must be >= 1");
        if (n_train < 1 || n_test < 1) throw ContractError("n_train and n_test must be >= 1");
        if (sigma2.empty()) throw ContractError("sigma2 list is empty");
        for (double s : sigma2)
            if (!(s >= 0.0) || !std::isfinite(s)) throw ContractError("sigma2 values must be finite and >= 0");
        for (double l : lambda_grid)
            if (!(l >= 0.0) || !std::isfinite(l)) throw ContractError("lambda multipliers must be finite and >= 0");
        if (fit_epochs && *fit_epochs < 1) throw ContractError("fit epochs must be >= 1");
        if (tune_epochs && *tune_epochs < 1) throw ContractError("tune epochs must be >= 1");
    }

    int fit_epochs_or_default() const { return fit_epochs.value_or(preset_shape(preset).fit_epochs); }
    int tune_epochs_or_default() const { return tune_epochs.value_or(preset_shape(preset).tune_epochs); }
};

/// "%g" without trailing noise, used in predictor labels.
inline std::string format_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

/// Tuning weights are multiples of sigma^2; with a noiseless outcome the
/// multiplier is used as is.
inline double lambda_scale(double sigma2) { return sigma2 > 0.0 ? sigma2 : 1.0; }

namespace detail {

struct ReplicateSeeds {
    std::uint64_t train, test, init, shuffle, tune;
};

inline ReplicateSeeds replicate_seeds(std::uint64_t seed, int replicate) {
    const std::uint64_t base = seed + static_cast<std::uint64_t>(replicate);
    return {base, derive_seed(base, 1), derive_seed(base, 2), derive_seed(base, 3), derive_seed(base, 4)};
}

inline TrainConfig train_config(const ExperimentConfig& cfg, int epochs, std::uint64_t shuffle_seed) {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = cfg.batch_size;
    t.learning_rate = cfg.learning_rate;
    t.shuffle_seed = shuffle_seed;
    return t;
}

inline MLPConfig mlp_config(const ExperimentConfig& cfg, int input_width, std::uint64_t init_seed) {
    MLPConfig m;
    m.input_width = input_width;
    m.hidden_widths = preset_shape(cfg.preset).hidden;
    m.init_seed = init_seed;
    return m;
}

template <class P>
void record_simulation_metrics(MetricTable& t, const std::string& name, const P& model, const Matrix& x,
                               const Vector& y, const PPDTarget& truth, const FeatureIndexSets& sets) {
    t[name]["pred_loss"] = (model.predict(x) - y).squaredNorm() / static_cast<double>(y.size());
    t[name]["spd_loss"] = spd_loss(model, x, sets.not_allowed);
    t[name]["ppd_loss"] = ppd_loss(model, truth, x, sets.allowed);
    const RowVector g = mean_gradients(model, x);
    static const char* names[] = {"grad_X", "grad_Z", "grad_W"};
    for (Eigen::Index j = 0; j < std::min<Eigen::Index>(3, g.size()); ++j) t[name][names[j]] = g[j];
}

}  // namespace detail

/// One replicate of the linear or multiplicative study: fit, then SPT / FT at
/// every lambda and Marginalize, all evaluated on a fresh test draw against the
/// true gradients of the data-generating process.
inline MetricTable simulation_replicate(const ExperimentConfig& cfg, double sigma2, int replicate) {
    if (cfg.preset == Preset::Indirect) throw ContractError("simulation_replicate: use indirect_replicate");
    const Setting setting = cfg.preset == Preset::Linear ? Setting::Linear : Setting::Multiplicative;
    const auto seeds = detail::replicate_seeds(cfg.seed, replicate);
    const Dataset train = simulate(setting, cfg.n_train, sigma2, seeds.train);
    const Dataset test = simulate(setting, cfg.n_test, sigma2, seeds.test);
    const CausalDiagram diagram = simulation_diagram();
    const auto features = diagram.outcome_parents();
    const FeatureIndexSets sets = parents_along(diagram);
    const Matrix x = train.select(features), xt = test.select(features);
    const Vector yt = test.outcome_values();
    const PPDTarget truth = PPDTarget::true_gradient([setting](const Matrix& b) { return true_gradients(setting, b); });

    const FitResult fit = fit_unconstrained(x, train.outcome_values(), detail::mlp_config(cfg, 3, seeds.init),
                                            detail::train_config(cfg, cfg.fit_epochs_or_default(), seeds.shuffle));
    MetricTable t;
    detail::record_simulation_metrics(t, "Unconstrained", fit.model, xt, yt, truth, sets);
    const auto compat = compatibility_check(fit.model, xt, compatibility_pairs(sets), cfg.compat_tol);
    t["Unconstrained"]["mixed_partial_max"] = compat.max_abs_mixed;
    t["Unconstrained"]["compatible"] = compat.compatible ? 1.0 : 0.0;
    t["Unconstrained"]["oracle_mse"] = sigma2;

    const auto marg = marginalize_predict(fit.model, x, sets.not_allowed,
                                          std::vector<FillKind>(sets.not_allowed.size(), FillKind::Mean));
    detail::record_simulation_metrics(t, "Marginalize", marg, xt, yt, truth, sets);

    for (std::size_t k = 0; k < cfg.lambda_grid.size(); ++k) {
        const double mult = cfg.lambda_grid[k];
        const double lambda = mult * lambda_scale(sigma2);
        TuningConfig tc{lambda, lambda, sets.not_allowed, sets.allowed,
                        detail::train_config(cfg, cfg.tune_epochs_or_default(), derive_seed(seeds.tune, k))};
        detail::record_simulation_metrics(t, "FT " + format_label(mult), fair_tune(fit.model, x, tc).model, xt, yt,
                                          truth, sets);
        detail::record_simulation_metrics(t, "SPT " + format_label(mult), spt_tune(fit.model, x, tc).model, xt, yt,
                                          truth, sets);
    }
    return t;
}

/// One replicate of the indirect-path study: a direct fair tuning that treats
/// X and W as not allowed, against the sequential predictor that regenerates W.
inline MetricTable indirect_replicate(const ExperimentConfig& cfg, double sigma2, int replicate) {
    const auto seeds = detail::replicate_seeds(cfg.seed, replicate);
    const double noise_sd = std::sqrt(sigma2);
    const Dataset train = simulate_indirect(cfg.n_train, cfg.betas, seeds.train, noise_sd);
    const Dataset test = simulate_indirect(cfg.n_test, cfg.betas, seeds.test, noise_sd);
    const CausalDiagram diagram = indirect_diagram();
    const auto features = diagram.outcome_parents();  // X, Z, W
    const int ix = 0, iz = 1, iw = 2;
    const Matrix x = train.select(features), xt = test.select(features);
    const Vector y = train.outcome_values(), yt = test.outcome_values();
    const IndirectBetas betas = cfg.betas;
    const PPDTarget truth =
        PPDTarget::true_gradient([betas](const Matrix& b) { return indirect_true_gradients(betas, b); });
    const std::vector<int> all_allowed{iz, iw};

    MetricTable t;
    auto pred_loss = [&](const Vector& p) { return (p - yt).squaredNorm() / static_cast<double>(yt.size()); };
    const int fit_epochs = cfg.fit_epochs_or_default(), tune_epochs = cfg.tune_epochs_or_default();
    const FitResult fit = fit_unconstrained(x, y, detail::mlp_config(cfg, 3, seeds.init),
                                            detail::train_config(cfg, fit_epochs, seeds.shuffle));
    t["Unconstrained"]["pred_loss"] = pred_loss(fit.model.predict(xt));
    t["Unconstrained"]["spd_loss"] = spd_loss(fit.model, xt, {ix});
    t["Unconstrained"]["ppd_loss"] = ppd_loss(fit.model, truth, xt, all_allowed);

    for (std::size_t k = 0; k < cfg.lambda_grid.size(); ++k) {
        const double mult = cfg.lambda_grid[k];
        const double lambda = mult * lambda_scale(sigma2);
        const std::string label = format_label(mult);

        TuningConfig direct{lambda, lambda, {ix, iw}, {iz},
                            detail::train_config(cfg, tune_epochs, derive_seed(seeds.tune, 2 * k))};
        const MLPModel d = fair_tune(fit.model, x, direct).model;
        t["Direct FT " + label]["pred_loss"] = pred_loss(d.predict(xt));
        t["Direct FT " + label]["spd_loss"] = spd_loss(d, xt, {ix});
        t["Direct FT " + label]["ppd_loss"] = ppd_loss(d, truth, xt, all_allowed);

        StageConfig stage;
        stage.mlp = detail::mlp_config(cfg, 1, derive_seed(seeds.init, 10 + k));
        stage.fit = detail::train_config(cfg, fit_epochs, derive_seed(seeds.shuffle, 10 + k));
        stage.lambda_spd = stage.lambda_ppd = lambda;
        stage.tune = detail::train_config(cfg, tune_epochs, derive_seed(seeds.tune, 2 * k + 1));
        const SequentialModel seq = sequential_fair_predict(train, diagram, stage, stage);
        const std::string name = "Sequential FT " + label;
        t[name]["pred_loss"] = pred_loss(seq.predictor.predict(xt));
        t[name]["spd_loss"] = spd_loss(seq.predictor, xt, {ix});
        // Parity of the outcome stage at the regenerated mediator, against the
        // true gradient evaluated at the same point.
        const Matrix staged = seq.predictor.outcome_batch(xt);
        const Matrix g = seq.predictor.outcome_stage_gradient(xt);
        const Matrix truth_g = indirect_true_gradients(betas, staged);
        double ppd = 0.0;
        for (int j : all_allowed) ppd += (g.col(j) - truth_g.col(j)).cwiseAbs().mean();
        t[name]["ppd_loss"] = ppd;
    }
    return t;
}

struct SimulationRun {
    std::vector<std::optional<MetricTable>> replicates;
    std::vector<std::string> failures;
    EvalReport report;
};

/// Aggregates replicate tables: mean and normal-theory interval per metric.
inline EvalReport aggregate_replicates(const std::vector<std::optional<MetricTable>>& reps) {
    std::map<std::string, std::map<std::string, std::vector<double>>> values;
    for (const auto& r : reps)
        if (r)
            for (const auto& [pred, metrics] : *r)
                for (const auto& [metric, v] : metrics) values[pred][metric].push_back(v);
    EvalReport report;
    for (auto& [pred, metrics] : values)
        for (auto& [metric, v] : metrics) report.set(pred, metric, replicate_interval(std::move(v)));
    return report;
}

/// All replicates at one noise level. A replicate whose tuning diverges is
/// recorded as failed and the run continues.
inline SimulationRun run_simulation(const ExperimentConfig& cfg, double sigma2) {
    cfg.validate();
    SimulationRun run;
    run.replicates.resize(static_cast<std::size_t>(cfg.replicates));
    std::vector<std::string> errors(run.replicates.size());
    parallel_for(run.replicates.size(), cfg.threads, [&](std::size_t r) {
        try {
            run.replicates[r] = cfg.preset == Preset::Indirect ? indirect_replicate(cfg, sigma2, static_cast<int>(r))
                                                               : simulation_replicate(cfg, sigma2, static_cast<int>(r));
        } catch (const DivergenceError& e) {
            errors[r] = "replicate " + std::to_string(r) + ": " + e.what();
        }
    });
    for (auto& e : errors)
        if (!e.empty()) run.failures.push_back(std::move(e));
    run.report = aggregate_replicates(run.replicates);
    run.report.meta = {{"preset", preset_name(cfg.preset)},
                       {"sigma2", format_double(sigma2)},
                       {"replicates", std::to_string(cfg.replicates)},
                       {"failed_replicates", std::to_string(run.failures.size())},
                       {"n_train", std::to_string(cfg.n_train)},
                       {"n_test", std::to_string(cfg.n_test)},
                       {"seed", std::to_string(cfg.seed)},
                       {"interval", "mean +- 1.96 sd / sqrt(replicates)"}};
    return run;
}

// ---------------------------------------------------------------------------
// Pareto sweep

struct ParetoSweep {
    std::vector<ParetoPoint> points;
    std::vector<bool> on_front;
};

inline const std::vector<double>& default_pareto_grid() {
    static const std::vector<double> grid{0.0, 0.1, 0.5, 1.0, 5.0, 10.0, 50.0, 100.0};
    return grid;
}

/// One tuned predictor per (lambda_spd, lambda_ppd) cell from a single
/// unconstrained fit; losses on a test draw against the true gradients.
inline ParetoSweep run_pareto(const ExperimentConfig& cfg, double sigma2, const std::vector<double>& spd_grid,
                              const std::vector<double>& ppd_grid) {
    cfg.validate();
    if (cfg.preset == Preset::Indirect) throw ContractError("pareto sweeps support the linear and multiplicative presets");
    if (spd_grid.empty() || ppd_grid.empty()) throw ContractError("pareto: empty lambda grid");
    const Setting setting = cfg.preset == Preset::Linear ? Setting::Linear : Setting::Multiplicative;
    const auto seeds = detail::replicate_seeds(cfg.seed, 0);
    const Dataset train = simulate(setting, cfg.n_train, sigma2, seeds.train);
    const Dataset test = simulate(setting, cfg.n_test, sigma2, seeds.test);
    const CausalDiagram diagram = simulation_diagram();
    const FeatureIndexSets sets = parents_along(diagram);
    const Matrix x = train.select(diagram.outcome_parents()), xt = test.select(diagram.outcome_parents());
    const PPDTarget truth = PPDTarget::true_gradient([setting](const Matrix& b) { return true_gradients(setting, b); });
    const MLPModel ref = fit_unconstrained(x, train.outcome_values(), detail::mlp_config(cfg, 3, seeds.init),
                                           detail::train_config(cfg, cfg.fit_epochs_or_default(), seeds.shuffle))
                             .model;

    ParetoSweep sweep;
    sweep.points.resize(spd_grid.size() * ppd_grid.size());
    parallel_for(sweep.points.size(), cfg.threads, [&](std::size_t cell) {
        const double ls = spd_grid[cell / ppd_grid.size()], lp = ppd_grid[cell % ppd_grid.size()];
        TuningConfig tc{ls, lp, sets.not_allowed, sets.allowed,
                        detail::train_config(cfg, cfg.tune_epochs_or_default(), derive_seed(seeds.tune, cell))};
        const MLPModel m = fair_tune(ref, x, tc).model;
        sweep.points[cell] = {ls, lp, spd_loss(m, xt, sets.not_allowed), ppd_loss(m, truth, xt, sets.allowed)};
    });
    sweep.on_front = pareto_mask(sweep.points);
    return sweep;
}

inline std::string pareto_csv(const ParetoSweep& s) {
    std::ostringstream out;
    out << "lambda_spd,lambda_ppd,spd_loss,ppd_loss,on_front\n";
    for (std::size_t i = 0; i < s.points.size(); ++i) {
        const auto& p = s.points[i];
        out << format_double(p.lambda_spd) << ',' << format_double(p.lambda_ppd) << ',' << format_double(p.spd_loss)
            << ',' << format_double(p.ppd_loss) << ',' << (s.on_front[i] ? 1 : 0) << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Recidivism data

struct CompasColumns {
    std::string race = "race";
    std::string sex = "sex";
    std::string age = "age";
    std::string priors = "priors_count";
    std::string degree = "c_charge_degree";
    std::string outcome = "two_year_recid";

    std::vector<std::string> all() const { return {race, sex, age, priors, degree, outcome}; }
};

struct CompasConfig {
    CompasColumns columns;
    std::vector<int> hidden{64, 64};
    int folds = 5;
    int fit_epochs = 100;
    int distill_epochs = 100;
    int tune_epochs = 50;
    int batch_size = 64;
    double learning_rate = 1e-3;
    std::size_t n_boot = 200;
    double level = 0.95;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

/// Loads the curated CSV. Race, sex and charge degree must be coded 0/1.
inline Dataset load_compas(const std::string& path, const CompasColumns& c) {
    Dataset d;
    try {
        d = read_csv(path, c.outcome, true, c.all());
    } catch (const SchemaError& e) {
        throw SchemaError(std::string(e.what()) + "; expected columns " + c.race + ", " + c.sex + ", " + c.age + ", " +
                          c.priors + ", " + c.degree + ", " + c.outcome +
                          " (race/sex/degree coded 0/1, numeric age and priors, outcome 0/1)");
    }
    for (const auto& name : {c.race, c.sex, c.degree}) {
        const Vector v = d.column(name);
        for (Eigen::Index i = 0; i < v.size(); ++i)
            if (v[i] != 0.0 && v[i] != 1.0) throw SchemaError("column '" + name + "' must be coded 0/1");
    }
    return d;
}

/// Small synthetic table with the recidivism schema, for smoke tests.
inline Dataset simulate_compas_like(Eigen::Index n, std::uint64_t seed, const CompasColumns& c = {}) {
    Rng rng(seed);
    Dataset d{c.all(), Matrix(n, 6), c.outcome, true};
    for (Eigen::Index i = 0; i < n; ++i) {
        const double race = rng.uniform() < 0.5 ? 1.0 : 0.0;
        const double sex = rng.uniform() < 0.8 ? 1.0 : 0.0;
        const double age = std::round(std::clamp(rng.normal(34.0, 11.0), 18.0, 80.0));
        const double priors = std::floor(std::max(0.0, rng.normal(1.0 + 2.0 * race + sex - 0.05 * (age - 34.0), 3.0)));
        const double degree = rng.uniform() < 0.55 + 0.1 * race ? 1.0 : 0.0;
        const double logit = -0.6 + 0.4 * race + 0.3 * sex - 0.04 * (age - 34.0) + 0.15 * priors + 0.2 * degree;
        const double y = rng.uniform() < sigmoid(logit) ? 1.0 : 0.0;
        d.values.row(i) << race, sex, age, priors, degree, y;
    }
    return d;
}

struct CompasModels {
    MLPModel unconstrained;
    MLPModel spt10, ft1, ft10;
    std::optional<MarginalizedPredictor> marginalize;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<std::string> compas_features(const CompasColumns& c) {
    return {c.race, c.sex, c.age, c.priors, c.degree};
}

}  // namespace detail

/// Cross-fit, distill, then tune SPT 10, FT 1 and FT 10 and build Marginalize.
inline CompasModels compas_fit(const Matrix& x, const Vector& y, const CompasConfig& cfg, std::uint64_t seed) {
    const CausalDiagram diagram = compas_diagram(cfg.columns.race, cfg.columns.sex, cfg.columns.age,
                                                 cfg.columns.priors, cfg.columns.degree, cfg.columns.outcome);
    const FeatureIndexSets sets = parents_along(diagram);
    MLPConfig mlp;
    mlp.input_width = static_cast<int>(x.cols());
    mlp.hidden_widths = cfg.hidden;
    mlp.init_seed = derive_seed(seed, 1);
    TrainConfig fit;
    fit.epochs = cfg.fit_epochs;
    fit.batch_size = cfg.batch_size;
    fit.learning_rate = cfg.learning_rate;
    fit.shuffle_seed = derive_seed(seed, 2);

    const CrossFitResult oof = cross_fit_logits(x, y, cfg.folds, mlp, fit, derive_seed(seed, 3));
    TrainConfig distill = fit;
    distill.epochs = cfg.distill_epochs;
    distill.shuffle_seed = derive_seed(seed, 4);
    mlp.init_seed = derive_seed(seed, 5);
    CompasModels out;
    out.warnings = oof.warnings;
    out.unconstrained = fit_distilled(x, oof.logits, mlp, distill).model;

    TrainConfig tune = fit;
    tune.epochs = cfg.tune_epochs;
    auto tuned = [&](double ls, double lp, std::uint64_t stream) {
        tune.shuffle_seed = derive_seed(seed, stream);
        return fair_tune(out.unconstrained, x, TuningConfig{ls, lp, sets.not_allowed, sets.allowed, tune}).model;
    };
    out.spt10 = tuned(10.0, 0.0, 6);
    out.ft1 = tuned(10.0, 1.0, 7);
    out.ft10 = tuned(10.0, 10.0, 8);
    // race and sex by training mode, age by training mean
    out.marginalize = marginalize_predict(out.unconstrained, x, sets.not_allowed,
                                          {FillKind::Mode, FillKind::Mode, FillKind::Mean});
    return out;
}

/// Table metrics for every predictor on one evaluation set.
inline MetricTable compas_evaluate(const CompasModels& m, const Matrix& x, const Vector& y) {
    const std::vector<int> not_allowed{0, 1, 2}, allowed{3, 4};
    const int race = 0, sex = 1, degree = 4;
    const PPDTarget ref = PPDTarget::reference(m.unconstrained);
    MetricTable t;
    auto record = [&](const std::string& name, const auto& model) {
        const auto pm = prediction_metrics(y, model.predict(x), Task::Binary);
        auto& row = t[name];
        row["accuracy"] = *pm.accuracy;
        row["f1"] = *pm.f1;
        row["auc_roc"] = pm.auc_roc.value_or(std::numeric_limits<double>::quiet_NaN());
        row["spd_loss"] = spd_loss(model, x, not_allowed);
        row["ppd_loss"] = ppd_loss(model, ref, x, allowed);
        const auto spd = spd_per_feature(model, x, {race, sex});
        row["spd_race"] = spd[0];
        row["spd_sex"] = spd[1];
        row["csp_race"] = csp_loss(model, x, race);
        row["csp_sex"] = csp_loss(model, x, sex);
        row["ppd_degree"] = ppd_per_feature(model, ref, x, {degree})[0];
        row["cpp_degree"] = cpp_loss(model, m.unconstrained, x, degree);
    };
    record("Unconstrained", m.unconstrained);
    record("FT 10", m.ft10);
    record("FT 1", m.ft1);
    record("SPT 10", m.spt10);
    record("Marginalize", *m.marginalize);
    return t;
}

inline const std::vector<std::string>& compas_metric_names() {
    static const std::vector<std::string> names{"accuracy", "f1",      "auc_roc",  "spd_loss",   "ppd_loss", "spd_race",
                                                "csp_race", "spd_sex", "csp_sex", "ppd_degree", "cpp_degree"};
    return names;
}

inline const std::vector<std::string>& compas_predictor_names() {
    static const std::vector<std::string> names{"Unconstrained", "FT 10", "FT 1", "SPT 10", "Marginalize"};
    return names;
}

struct CompasRun {
    EvalReport report;
};

/// Whole pipeline per bootstrap resample: train on the resampled rows and
/// evaluate on the rows left out of that resample.
inline CompasRun run_compas(const Dataset& data, const CompasConfig& cfg) {
    const Matrix x = data.select(detail::compas_features(cfg.columns));
    const Vector y = data.outcome_values();
    const auto& preds = compas_predictor_names();
    const auto& metrics = compas_metric_names();

    auto statistic = [&](std::size_t b, const std::vector<std::size_t>& rows) {
        std::vector<bool> in_bag(static_cast<std::size_t>(x.rows()), false);
        for (auto r : rows) in_bag[r] = true;
        std::vector<std::size_t> oob;
        for (std::size_t i = 0; i < in_bag.size(); ++i)
            if (!in_bag[i]) oob.push_back(i);
        std::vector<double> out(preds.size() * metrics.size(), std::numeric_limits<double>::quiet_NaN());
        if (oob.empty()) return out;
        const std::uint64_t rs = derive_seed(derive_seed(cfg.seed, 0xb007), b);
        const CompasModels m = compas_fit(detail::gather_rows(x, rows), detail::gather(y, rows), cfg, rs);
        const MetricTable t = compas_evaluate(m, detail::gather_rows(x, oob), detail::gather(y, oob));
        for (std::size_t p = 0; p < preds.size(); ++p)
            for (std::size_t k = 0; k < metrics.size(); ++k) out[p * metrics.size() + k] = t.at(preds[p]).at(metrics[k]);
        return out;
    };
    const auto intervals = bootstrap_ci_indexed(statistic, static_cast<std::size_t>(x.rows()), cfg.n_boot, cfg.level,
                                        cfg.seed, cfg.threads);
    CompasRun run;
    for (std::size_t p = 0; p < preds.size(); ++p)
        for (std::size_t k = 0; k < metrics.size(); ++k)
            run.report.set(preds[p], metrics[k], intervals[p * metrics.size() + k]);
    run.report.meta = {{"preset", "compas-csv"},
                       {"rows", std::to_string(x.rows())},
                       {"bootstraps", std::to_string(cfg.n_boot)},
                       {"interval", "percentile bootstrap, out-of-bag evaluation"},
                       {"seed", std::to_string(cfg.seed)}};
    return run;
}

namespace detail {

inline std::string table(const EvalReport& r, const std::vector<std::pair<std::string, std::string>>& cols) {
    std::ostringstream out;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-16s", "Model");
    out << buf;
    for (const auto& c : cols) {
        std::snprintf(buf, sizeof buf, " %18s", c.second.c_str());
        out << buf;
    }
    out << '\n';
    for (const auto& pred : compas_predictor_names()) {
        if (!r.predictors.count(pred)) continue;
        std::ostringstream means, cis;
        std::snprintf(buf, sizeof buf, "%-16s", pred.c_str());
        means << buf;
        std::snprintf(buf, sizeof buf, "%-16s", "");
        cis << buf;
        for (const auto& c : cols) {
            const Interval& v = r.get(pred, c.first);
            std::snprintf(buf, sizeof buf, " %18.2f", v.mean);
            means << buf;
            std::snprintf(buf, sizeof buf, "      (%.2f, %.2f)", v.ci_low, v.ci_high);
            cis << buf;
        }
        out << means.str() << '\n' << cis.str() << '\n';
    }
    return out.str();
}

}  // namespace detail

inline std::string compas_table_performance(const EvalReport& r) {
    return detail::table(r, {{"accuracy", "Accuracy"},
                             {"f1", "F1 Score"},
                             {"auc_roc", "AUC-ROC"},
                             {"spd_loss", "SPD Loss"},
                             {"ppd_loss", "PPD Loss"}});
}

inline std::string compas_table_contrast(const EvalReport& r) {
    return detail::table(r, {{"spd_race", "SPD Race"},
                             {"csp_race", "CSP Race"},
                             {"spd_sex", "SPD Sex"},
                             {"csp_sex", "CSP Sex"},
                             {"ppd_degree", "PPD Degree"},
                             {"cpp_degree", "CPP Degree"}});
}

// ---------------------------------------------------------------------------
// Timing grid

struct BenchRow {
    int n, m, h;
    Interval backprop;
    Interval fairtune;
};

/// Every (n, m, h) combination on this thread. Each of the `reps` passes times
/// one step in every cell, so slow periods on the host spread over the whole
/// grid instead of landing on a few cells.
inline std::vector<BenchRow> run_bench(const std::vector<int>& ns, const std::vector<int>& ms, const std::vector<int>& hs,
                                       int reps, std::uint64_t seed) {
    if (ns.empty() || ms.empty() || hs.empty()) throw ContractError("bench: size lists must be non-empty");
    if (reps < 1) throw ContractError("bench: reps must be positive");
    std::vector<BenchRow> rows;
    std::vector<BackpropBench> cells;
    for (int n : ns)
        for (int m : ms)
            for (int h : hs) {
                cells.emplace_back(n, m, h, derive_seed(seed, rows.size()));
                rows.push_back({n, m, h, {}, {}});
            }
    for (auto& c : cells) c.time_steps();  // warm-up
    std::vector<std::vector<double>> bp(cells.size()), ft(cells.size());
    for (int r = 0; r < reps; ++r)
        for (std::size_t k = 0; k < cells.size(); ++k) {
            const auto [b, f] = cells[k].time_steps();
            bp[k].push_back(b);
            ft[k].push_back(f);
        }
    for (std::size_t k = 0; k < cells.size(); ++k) {
        rows[k].backprop = replicate_interval(std::move(bp[k]));
        rows[k].fairtune = replicate_interval(std::move(ft[k]));
    }
    return rows;
}

inline std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::ostringstream out;
    out << "n,m,h,t_backprop,t_backprop_lo,t_backprop_hi,t_fairtune,t_fairtune_lo,t_fairtune_hi,reps\n";
    for (const auto& r : rows)
        out << r.n << ',' << r.m << ',' << r.h << ',' << format_double(r.backprop.mean) << ','
            << format_double(r.backprop.ci_low) << ',' << format_double(r.backprop.ci_high) << ','
            << format_double(r.fairtune.mean) << ',' << format_double(r.fairtune.ci_low) << ','
            << format_double(r.fairtune.ci_high) << ',' << r.backprop.n_samples << '\n';
    return out.str();
}

}  // namespace derivfair
