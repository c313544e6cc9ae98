#pragma once

// Derivative fairness losses, the fair tuning procedure and its baselines.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "derivfair/adam.hpp"
#include "derivfair/autodiff.hpp"
#include "derivfair/errors.hpp"
#include "derivfair/mlp.hpp"
#include "derivfair/scm.hpp"
#include "derivfair/train.hpp"

namespace derivfair {

/// Anything with a value and an analytic input gradient per row.
template <class P>
concept DifferentiablePredictor = requires(const P& p, const Matrix& batch) {
    { p.predict(batch) } -> std::convertible_to<Vector>;
    { p.input_gradient(batch) } -> std::convertible_to<Matrix>;
};

static_assert(DifferentiablePredictor<MLPModel>);

/// Closed-form predictor, used for oracles and true data-generating functions.
struct FunctionPredictor {
    std::function<Vector(const Matrix&)> value;
    std::function<Matrix(const Matrix&)> gradient;

    Vector predict(const Matrix& batch) const { return value(batch); }
    Matrix input_gradient(const Matrix& batch) const { return gradient(batch); }
};

/// Receives non-fatal diagnostics. Defaults to stderr.
inline std::function<void(const std::string&)>& warning_sink() {
    static std::function<void(const std::string&)> sink = [](const std::string& msg) {
        std::cerr << "warning: " << msg << '\n';
    };
    return sink;
}

namespace detail {

inline void check_indices(const std::vector<int>& idx, Eigen::Index width, const char* what) {
    for (int j : idx)
        if (j < 0 || j >= width)
            throw DimensionError(std::string(what) + ": feature index " + std::to_string(j) + " out of range");
}

inline Matrix column_mask(const std::vector<int>& idx, Eigen::Index rows, Eigen::Index cols) {
    Matrix m = Matrix::Zero(rows, cols);
    for (int j : idx) m.col(j).setOnes();
    return m;
}

}  // namespace detail

/// Mean over rows of sum_j |df/dx_j| for j in `not_allowed`.
template <DifferentiablePredictor P>
double spd_loss(const P& model, const Matrix& batch, const std::vector<int>& not_allowed) {
    if (not_allowed.empty()) {
        warning_sink()("spd_loss: empty not-allowed set, loss is 0");
        return 0.0;
    }
    detail::check_indices(not_allowed, batch.cols(), "spd_loss");
    const Matrix g = model.input_gradient(batch);
    double total = 0.0;
    for (int j : not_allowed) total += g.col(j).cwiseAbs().sum();
    return total / static_cast<double>(batch.rows());
}

/// Per-feature SPD terms, mean over rows of |df/dx_j|.
template <DifferentiablePredictor P>
std::vector<double> spd_per_feature(const P& model, const Matrix& batch, const std::vector<int>& idx) {
    detail::check_indices(idx, batch.cols(), "spd_per_feature");
    const Matrix g = model.input_gradient(batch);
    std::vector<double> out;
    for (int j : idx) out.push_back(g.col(j).cwiseAbs().mean());
    return out;
}

/// What predictive parity is measured against: a reference network's input
/// gradients (tuning), or the true gradient function of the data-generating
/// process (evaluation on simulated data).
class PPDTarget {
public:
    using GradientFn = std::function<Matrix(const Matrix&)>;

    static PPDTarget reference(const MLPModel& model) { return PPDTarget(model); }
    static PPDTarget true_gradient(GradientFn fn) { return PPDTarget(std::move(fn)); }

    bool is_reference() const { return std::holds_alternative<MLPModel>(target_); }

    Matrix gradients(const Matrix& batch) const {
        if (const auto* m = std::get_if<MLPModel>(&target_)) return m->input_gradient(batch);
        return std::get<GradientFn>(target_)(batch);
    }

private:
    explicit PPDTarget(MLPModel m) : target_(std::move(m)) {}
    explicit PPDTarget(GradientFn fn) : target_(std::move(fn)) {}
    std::variant<MLPModel, GradientFn> target_;
};

namespace detail {

inline Matrix checked_target(const PPDTarget& target, const Matrix& batch, const std::vector<int>& allowed) {
    Matrix t = target.gradients(batch);
    if (t.rows() != batch.rows()) throw DimensionError("ppd_loss: target gradient has the wrong number of rows");
    for (int j : allowed)
        if (j >= t.cols()) throw DimensionError("ppd_loss: target has no gradient column " + std::to_string(j));
    return t;
}

}  // namespace detail

/// Mean over rows of sum_j |df/dx_j - target_j| for j in `allowed`.
template <DifferentiablePredictor P>
double ppd_loss(const P& model, const PPDTarget& target, const Matrix& batch, const std::vector<int>& allowed) {
    detail::check_indices(allowed, batch.cols(), "ppd_loss");
    if (allowed.empty()) return 0.0;
    const Matrix g = model.input_gradient(batch);
    const Matrix t = detail::checked_target(target, batch, allowed);
    double total = 0.0;
    for (int j : allowed) total += (g.col(j) - t.col(j)).cwiseAbs().sum();
    return total / static_cast<double>(batch.rows());
}

template <DifferentiablePredictor P>
std::vector<double> ppd_per_feature(const P& model, const PPDTarget& target, const Matrix& batch,
                                    const std::vector<int>& idx) {
    detail::check_indices(idx, batch.cols(), "ppd_per_feature");
    const Matrix g = model.input_gradient(batch);
    const Matrix t = detail::checked_target(target, batch, idx);
    std::vector<double> out;
    for (int j : idx) out.push_back((g.col(j) - t.col(j)).cwiseAbs().mean());
    return out;
}

struct TuningConfig {
    double lambda_spd = 0.0;
    double lambda_ppd = 0.0;
    std::vector<int> not_allowed;
    std::vector<int> allowed;
    TrainConfig train{20, 64};  // epochs here are the tuning epochs

    void validate() const {
        if (!std::isfinite(lambda_spd) || lambda_spd < 0.0) throw ContractError("TuningConfig: lambda_spd must be finite and >= 0");
        if (!std::isfinite(lambda_ppd) || lambda_ppd < 0.0) throw ContractError("TuningConfig: lambda_ppd must be finite and >= 0");
        for (int j : not_allowed)
            if (std::find(allowed.begin(), allowed.end(), j) != allowed.end())
                throw PathConflictError("TuningConfig: feature " + std::to_string(j) + " is both allowed and not allowed");
        train.validate();
    }
};

/// The fair tuning loss for one batch, recorded so that param_gradient applies:
///   mean (f(x) - f_ref(x))^2 + lambda_spd * spd + lambda_ppd * ppd.
/// `ref_output` and `ref_grad` are the frozen reference network's values on the batch.
inline Var record_fair_tuning_loss(Tape& tape, const MLPModel& model, const Matrix& batch, const Vector& ref_output,
                                   const Matrix& ref_grad, const TuningConfig& cfg) {
    const bool need_grad = cfg.lambda_spd > 0.0 || cfg.lambda_ppd > 0.0;
    const auto rec = model.record(tape, batch, need_grad);
    Var loss = tape.mean(tape.square(rec.output - tape.constant(ref_output)));
    const double inv_n = 1.0 / static_cast<double>(batch.rows());
    if (cfg.lambda_spd > 0.0 && !cfg.not_allowed.empty()) {
        Var masked = tape.mul(tape.abs(*rec.input_grad), tape.constant(detail::column_mask(cfg.not_allowed, batch.rows(), batch.cols())));
        loss = loss + tape.scale(tape.sum(masked), cfg.lambda_spd * inv_n);
    }
    if (cfg.lambda_ppd > 0.0 && !cfg.allowed.empty()) {
        Var diff = tape.abs(*rec.input_grad - tape.constant(ref_grad));
        Var masked = tape.mul(diff, tape.constant(detail::column_mask(cfg.allowed, batch.rows(), batch.cols())));
        loss = loss + tape.scale(tape.sum(masked), cfg.lambda_ppd * inv_n);
    }
    return loss;
}

inline Var record_fair_tuning_loss(Tape& tape, const MLPModel& model, const MLPModel& reference, const Matrix& batch,
                                   const TuningConfig& cfg) {
    return record_fair_tuning_loss(tape, model, batch, reference.predict(batch), reference.input_gradient(batch), cfg);
}

inline double fair_tuning_loss(const MLPModel& model, const MLPModel& reference, const Matrix& batch,
                               const TuningConfig& cfg) {
    Tape tape;
    return record_fair_tuning_loss(tape, model, reference, batch, cfg).scalar();
}

struct TuneResult {
    MLPModel model;
    double initial_loss = 0.0;
    std::vector<double> epoch_losses;
};

/// Initializes at the reference parameters and minimizes the fair tuning loss
/// with ADAM over all rows of `features`.
inline TuneResult fair_tune(const MLPModel& reference, const Matrix& features, const TuningConfig& cfg) {
    cfg.validate();
    detail::check_indices(cfg.not_allowed, features.cols(), "fair_tune");
    detail::check_indices(cfg.allowed, features.cols(), "fair_tune");
    const Vector ref_out = reference.predict(features);
    const Matrix ref_grad = reference.input_gradient(features);

    MLPModel model = reference;
    TuneResult result{reference, 0.0, {}};
    {
        Tape tape;
        result.initial_loss = record_fair_tuning_loss(tape, model, features, ref_out, ref_grad, cfg).scalar();
    }
    // Divergence: 5 consecutive epochs above 10x the starting loss.
    const double limit = 10.0 * std::max(result.initial_loss, 1e-3);
    int above = 0;
    auto guard = [&](int epoch, double loss) {
        above = loss > limit ? above + 1 : 0;
        if (above >= 5)
            throw DivergenceError("fair_tune diverged: loss " + std::to_string(loss) + " at epoch " +
                                  std::to_string(epoch + 1) + " exceeds 10x the initial loss " +
                                  std::to_string(result.initial_loss));
    };
    auto build = [&](Tape& tape, const MLPModel& m, const std::vector<std::size_t>& rows) {
        return record_fair_tuning_loss(tape, m, detail::gather_rows(features, rows), detail::gather(ref_out, rows),
                                       detail::gather_rows(ref_grad, rows), cfg);
    };
    result.epoch_losses = run_minibatch_adam(model, features.rows(), cfg.train, build, guard);
    result.model = std::move(model);
    return result;
}

/// Statistical-parity-only tuning: fair tuning with lambda_ppd forced to 0.
inline TuneResult spt_tune(const MLPModel& reference, const Matrix& features, TuningConfig cfg) {
    cfg.lambda_ppd = 0.0;
    return fair_tune(reference, features, cfg);
}

// ---------------------------------------------------------------------------
// Marginalization baseline

enum class FillKind { Mean, Mode };

/// Fill value per protected column from training data. Mode ties go to the
/// smaller value.
inline std::vector<double> marginal_fills(const Matrix& train_features, const std::vector<int>& protected_idx,
                                          const std::vector<FillKind>& kinds) {
    if (kinds.size() != protected_idx.size()) throw DimensionError("marginal_fills: one fill kind per column");
    detail::check_indices(protected_idx, train_features.cols(), "marginal_fills");
    std::vector<double> fills;
    for (std::size_t k = 0; k < protected_idx.size(); ++k) {
        const Vector col = train_features.col(protected_idx[k]);
        if (kinds[k] == FillKind::Mean) {
            fills.push_back(col.mean());
        } else {
            std::map<double, int> counts;
            for (Eigen::Index i = 0; i < col.size(); ++i) ++counts[col[i]];
            auto best = counts.begin();
            for (auto it = counts.begin(); it != counts.end(); ++it)
                if (it->second > best->second) best = it;
            fills.push_back(best->first);
        }
    }
    return fills;
}

/// f_ref evaluated with the protected columns overwritten by fixed values. Those
/// inputs are unused, so their gradient columns are exactly zero.
class MarginalizedPredictor {
public:
    MarginalizedPredictor(MLPModel reference, std::vector<int> protected_idx, std::vector<double> fills)
        : reference_(std::move(reference)), protected_(std::move(protected_idx)), fills_(std::move(fills)) {
        if (protected_.size() != fills_.size()) throw DimensionError("MarginalizedPredictor: one fill per column");
        detail::check_indices(protected_, reference_.input_width(), "MarginalizedPredictor");
    }

    Matrix overwrite(const Matrix& batch) const {
        Matrix x = batch;
        for (std::size_t k = 0; k < protected_.size(); ++k) x.col(protected_[k]).setConstant(fills_[k]);
        return x;
    }

    Vector predict(const Matrix& batch) const { return reference_.predict(overwrite(batch)); }

    Matrix input_gradient(const Matrix& batch) const {
        Matrix g = reference_.input_gradient(overwrite(batch));
        for (int j : protected_) g.col(j).setZero();
        return g;
    }

    const std::vector<double>& fills() const { return fills_; }

private:
    MLPModel reference_;
    std::vector<int> protected_;
    std::vector<double> fills_;
};

inline MarginalizedPredictor marginalize_predict(const MLPModel& reference, const Matrix& train_features,
                                                 const std::vector<int>& protected_idx, const std::vector<FillKind>& kinds) {
    return MarginalizedPredictor(reference, protected_idx, marginal_fills(train_features, protected_idx, kinds));
}

// ---------------------------------------------------------------------------
// Contrast losses for binary features

namespace detail {

inline void check_binary(const Matrix& batch, int idx) {
    if (idx < 0 || idx >= batch.cols()) throw DimensionError("contrast loss: feature index out of range");
    for (Eigen::Index i = 0; i < batch.rows(); ++i)
        if (batch(i, idx) != 0.0 && batch(i, idx) != 1.0)
            throw DomainError("contrast loss: feature " + std::to_string(idx) + " is not coded 0/1");
}

template <DifferentiablePredictor P>
Vector contrast(const P& model, const Matrix& batch, int idx) {
    Matrix x0 = batch, x1 = batch;
    x0.col(idx).setZero();
    x1.col(idx).setOnes();
    return model.predict(x1) - model.predict(x0);
}

}  // namespace detail

/// mean_i |f(x_i with feature=1) - f(x_i with feature=0)|, on logits.
template <DifferentiablePredictor P>
double csp_loss(const P& model, const Matrix& batch, int binary_feature) {
    detail::check_binary(batch, binary_feature);
    return detail::contrast(model, batch, binary_feature).cwiseAbs().mean();
}

/// mean_i |contrast_model(x_i) - contrast_ref(x_i)|.
template <DifferentiablePredictor P, DifferentiablePredictor R>
double cpp_loss(const P& model, const R& reference, const Matrix& batch, int binary_feature) {
    detail::check_binary(batch, binary_feature);
    return (detail::contrast(model, batch, binary_feature) - detail::contrast(reference, batch, binary_feature))
        .cwiseAbs()
        .mean();
}

// ---------------------------------------------------------------------------
// Sequential prediction through a regenerated mediator

/// y_model(inputs with the mediator column replaced by mediator_model(...)).
/// Both stages read from one shared feature matrix; the observed mediator
/// column is ignored, so its gradient column is zero.
template <DifferentiablePredictor PW, DifferentiablePredictor PY>
class SequentialPredictor {
public:
    SequentialPredictor(PW mediator_model, std::vector<int> mediator_inputs, PY outcome_model,
                        std::vector<int> outcome_inputs, int mediator_column)
        : mediator_(std::move(mediator_model)),
          mediator_inputs_(std::move(mediator_inputs)),
          outcome_(std::move(outcome_model)),
          outcome_inputs_(std::move(outcome_inputs)),
          mediator_column_(mediator_column) {
        if (std::find(mediator_inputs_.begin(), mediator_inputs_.end(), mediator_column_) != mediator_inputs_.end())
            throw ContractError("SequentialPredictor: cyclic substitution, mediator feeds itself");
        slot_ = static_cast<int>(std::find(outcome_inputs_.begin(), outcome_inputs_.end(), mediator_column_) -
                                 outcome_inputs_.begin());
        if (slot_ == static_cast<int>(outcome_inputs_.size()))
            throw ContractError("SequentialPredictor: mediator is not an input of the outcome model");
    }

    Vector mediator_values(const Matrix& batch) const { return mediator_.predict(take(batch, mediator_inputs_)); }

    Vector predict(const Matrix& batch) const { return outcome_.predict(outcome_batch(batch)); }

    /// Chain rule through the substituted mediator.
    Matrix input_gradient(const Matrix& batch) const {
        const Matrix gy = outcome_.input_gradient(outcome_batch(batch));
        const Matrix gw = mediator_.input_gradient(take(batch, mediator_inputs_));
        Matrix g = Matrix::Zero(batch.rows(), batch.cols());
        for (std::size_t k = 0; k < outcome_inputs_.size(); ++k)
            if (static_cast<int>(k) != slot_) g.col(outcome_inputs_[k]) += gy.col(static_cast<Eigen::Index>(k));
        for (std::size_t k = 0; k < mediator_inputs_.size(); ++k)
            g.col(mediator_inputs_[k]) += gy.col(slot_).cwiseProduct(gw.col(static_cast<Eigen::Index>(k)));
        return g;
    }

    /// Gradient of the outcome stage with respect to its own inputs, evaluated at
    /// the regenerated mediator.
    Matrix outcome_stage_gradient(const Matrix& batch) const { return outcome_.input_gradient(outcome_batch(batch)); }

    Matrix outcome_batch(const Matrix& batch) const {
        Matrix x = take(batch, outcome_inputs_);
        x.col(slot_) = mediator_values(batch);
        return x;
    }

    const PW& mediator_model() const { return mediator_; }
    const PY& outcome_model() const { return outcome_; }

private:
    static Matrix take(const Matrix& batch, const std::vector<int>& cols) {
        Matrix out(batch.rows(), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = batch.col(cols[k]);
        return out;
    }

    PW mediator_;
    std::vector<int> mediator_inputs_;
    PY outcome_;
    std::vector<int> outcome_inputs_;
    int mediator_column_;
    int slot_ = 0;
};

/// Training configuration for one stage of a sequential predictor.
struct StageConfig {
    MLPConfig mlp;
    TrainConfig fit;
    double lambda_spd = 0.0;
    double lambda_ppd = 0.0;
    TrainConfig tune{20, 64};
};

/// The two fair sub-problems derived from a diagram with one not-allowed
/// indirect path through a mediator M.
struct SequentialPlan {
    std::string mediator;
    std::vector<std::string> features;           // outcome parents, shared input order
    std::vector<std::string> mediator_parents;   // inputs of the mediator stage
    FeatureIndexSets mediator_paths;             // indices into mediator_parents
    FeatureIndexSets outcome_paths;              // indices into features
};

/// Mediator stage: not-allowed / allowed parents of M are the nodes preceding M
/// on paths through it. Outcome stage: the mediator becomes an allowed parent,
/// since it will be regenerated fairly; other parents keep their labels.
inline SequentialPlan plan_sequential(const CausalDiagram& diagram) {
    std::set<std::string> mediators;
    for (const auto& p : diagram.path_sets().not_allowed)
        if (p.nodes.size() >= 3) mediators.insert(p.nodes[p.nodes.size() - 2]);
    if (mediators.size() != 1)
        throw ContractError("plan_sequential: expected exactly one mediator on not-allowed indirect paths, found " +
                            std::to_string(mediators.size()));
    SequentialPlan plan;
    plan.mediator = *mediators.begin();
    plan.features = diagram.outcome_parents();
    plan.mediator_parents = diagram.parents(plan.mediator);
    if (std::find(plan.features.begin(), plan.features.end(), plan.mediator) == plan.features.end())
        throw ContractError("plan_sequential: mediator is not a parent of the outcome");

    // Any mediator input that is downstream of the mediator would make the
    // substitution cyclic.
    const auto order = diagram.topological_order();
    const auto pos = [&](const std::string& n) { return std::find(order.begin(), order.end(), n) - order.begin(); };
    for (const auto& p : plan.mediator_parents)
        if (pos(p) >= pos(plan.mediator)) throw ContractError("plan_sequential: cyclic substitution through '" + p + "'");

    std::vector<Path> mediator_paths, outcome_paths;
    std::set<std::vector<std::string>> seen;
    for (const auto& p : diagram.paths()) {
        const auto it = std::find(p.nodes.begin(), p.nodes.end(), plan.mediator);
        if (it != p.nodes.end() && it != p.nodes.begin()) {
            std::vector<std::string> prefix(p.nodes.begin(), it + 1);
            if (seen.insert(prefix).second) mediator_paths.push_back({prefix, p.label});
        }
        if (p.nodes[p.nodes.size() - 2] != plan.mediator) outcome_paths.push_back(p);
    }
    outcome_paths.push_back({{plan.mediator, diagram.outcome()}, PathLabel::Allowed});

    plan.mediator_paths = parents_along(diagram.with_outcome(plan.mediator, mediator_paths));
    plan.outcome_paths = parents_along(diagram.with_outcome(diagram.outcome(), outcome_paths));
    return plan;
}

struct SequentialModel {
    SequentialPlan plan;
    SequentialPredictor<MLPModel, MLPModel> predictor;
    MLPModel mediator_reference;
    MLPModel outcome_reference;
};

/// Fits and fair-tunes the mediator on its parents, fits and fair-tunes the
/// outcome on the observed data, and composes the two with the tuned mediator
/// substituted for the observed one.
inline SequentialModel sequential_fair_predict(const Dataset& data, const CausalDiagram& diagram,
                                               const StageConfig& mediator_cfg, const StageConfig& outcome_cfg) {
    const SequentialPlan plan = plan_sequential(diagram);

    const Matrix xm = data.select(plan.mediator_parents);
    const Vector ym = data.column(plan.mediator);
    MLPModel m_ref = fit_unconstrained(xm, ym, mediator_cfg.mlp, mediator_cfg.fit).model;
    TuningConfig mt{mediator_cfg.lambda_spd, mediator_cfg.lambda_ppd, plan.mediator_paths.not_allowed,
                    plan.mediator_paths.allowed, mediator_cfg.tune};
    MLPModel m_fair = fair_tune(m_ref, xm, mt).model;

    const Matrix xy = data.select(plan.features);
    MLPModel y_ref = fit_unconstrained(xy, data.outcome_values(), outcome_cfg.mlp, outcome_cfg.fit).model;
    TuningConfig yt{outcome_cfg.lambda_spd, outcome_cfg.lambda_ppd, plan.outcome_paths.not_allowed,
                    plan.outcome_paths.allowed, outcome_cfg.tune};
    MLPModel y_fair = fair_tune(y_ref, xy, yt).model;

    std::vector<int> mediator_inputs, outcome_inputs;
    for (const auto& p : plan.mediator_parents) {
        const auto it = std::find(plan.features.begin(), plan.features.end(), p);
        if (it == plan.features.end())
            throw ContractError("sequential_fair_predict: mediator parent '" + p + "' is not an outcome parent");
        mediator_inputs.push_back(static_cast<int>(it - plan.features.begin()));
    }
    for (std::size_t k = 0; k < plan.features.size(); ++k) outcome_inputs.push_back(static_cast<int>(k));
    const int mediator_col = static_cast<int>(std::find(plan.features.begin(), plan.features.end(), plan.mediator) -
                                              plan.features.begin());
    return SequentialModel{plan,
                           SequentialPredictor<MLPModel, MLPModel>(std::move(m_fair), mediator_inputs, std::move(y_fair),
                                                                   outcome_inputs, mediator_col),
                           std::move(m_ref), std::move(y_ref)};
}

// ---------------------------------------------------------------------------
// Compatibility diagnostic

struct CompatibilityPair {
    int x_idx = 0;  // not-allowed parent
    int w_idx = 0;  // allowed parent
    double max_abs_mixed = 0.0;
    bool compatible = true;
};

struct CompatibilityReport {
    std::vector<CompatibilityPair> pairs;
    double max_abs_mixed = 0.0;
    bool compatible = true;
};

/// Estimates |d^2 f / dw dx| by central differences of the x gradient column in
/// the w direction. A pair is compatible iff the max over the batch is <= tol.
template <DifferentiablePredictor P>
CompatibilityReport compatibility_check(const P& model, const Matrix& batch,
                                        const std::vector<std::pair<int, int>>& pairs, double tol, double step = 1e-3) {
    CompatibilityReport report;
    for (const auto& [xi, wi] : pairs) {
        detail::check_indices({xi, wi}, batch.cols(), "compatibility_check");
        Matrix up = batch, down = batch;
        up.col(wi).array() += step;
        down.col(wi).array() -= step;
        const Vector mixed = (model.input_gradient(up).col(xi) - model.input_gradient(down).col(xi)) / (2.0 * step);
        CompatibilityPair p{xi, wi, mixed.cwiseAbs().maxCoeff(), true};
        p.compatible = p.max_abs_mixed <= tol;
        report.max_abs_mixed = std::max(report.max_abs_mixed, p.max_abs_mixed);
        report.compatible = report.compatible && p.compatible;
        report.pairs.push_back(p);
    }
    return report;
}

/// All (not-allowed, allowed) feature pairs.
inline std::vector<std::pair<int, int>> compatibility_pairs(const FeatureIndexSets& sets) {
    std::vector<std::pair<int, int>> out;
    for (int x : sets.not_allowed)
        for (int w : sets.allowed) out.emplace_back(x, w);
    return out;
}

}  // namespace derivfair
