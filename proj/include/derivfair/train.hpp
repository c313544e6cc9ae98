#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "derivfair/adam.hpp"
#include "derivfair/autodiff.hpp"
#include "derivfair/mlp.hpp"
#include "derivfair/rng.hpp"

namespace derivfair {

enum class PredictionLoss { Mse, Bce };

struct FitResult {
    MLPModel model;
    std::vector<double> epoch_losses;  // mean minibatch loss per epoch
};

/// Builds the scalar loss for one minibatch on a fresh tape.
using BatchLossBuilder = std::function<Var(Tape&, const MLPModel&, const std::vector<std::size_t>& rows)>;

namespace detail {

inline Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

inline Vector gather(const Vector& v, const std::vector<std::size_t>& rows) {
    Vector out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[static_cast<Eigen::Index>(rows[i])];
    return out;
}

}  // namespace detail

/// Shuffled minibatch ADAM over `n_rows` samples. `on_epoch` sees the mean loss
/// of each epoch and may throw to abort.
inline std::vector<double> run_minibatch_adam(MLPModel& model, Eigen::Index n_rows, const TrainConfig& cfg,
                                              const BatchLossBuilder& build_loss,
                                              const std::function<void(int, double)>& on_epoch = {}) {
    cfg.validate();
    if (n_rows < 1) throw ContractError("training needs at least one row");
    Rng rng(cfg.shuffle_seed);
    Vector theta = model.parameters();
    AdamState state = AdamState::zeros(theta.size());
    std::vector<std::size_t> order(static_cast<std::size_t>(n_rows));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<double> losses;
    const auto batch = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch)));
            Tape tape;
            const Var loss = build_loss(tape, model, rows);
            const double value = loss.scalar();
            if (!std::isfinite(value))
                throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch + 1));
            const Vector grad = tape.param_gradient(loss, model.parameter_count());
            adam_step(theta, grad, state, cfg);
            model.set_parameters(theta);
            total += value;
            ++batches;
        }
        losses.push_back(total / static_cast<double>(batches));
        if (on_epoch) on_epoch(epoch, losses.back());
    }
    return losses;
}

/// Mean prediction loss of model outputs (logits for Bce) against targets.
inline Var prediction_loss(Tape& tape, Var output, const Vector& targets, PredictionLoss kind) {
    Var y = tape.constant(targets);
    if (kind == PredictionLoss::Mse) return tape.mean(tape.square(output - y));
    // log(1 + e^z) - y z
    return tape.mean(tape.softplus(output) - tape.mul(y, output));
}

namespace detail {

struct Standardizer {
    RowVector mean;
    RowVector scale;

    static Standardizer fit(const Matrix& x) {
        Standardizer s{x.colwise().mean(), RowVector(x.cols())};
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            const double var = (x.col(j).array() - s.mean[j]).square().mean();
            s.scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
        }
        return s;
    }

    Matrix apply(const Matrix& x) const {
        Matrix out = x.rowwise() - mean;
        return out.array().rowwise() / scale.array();
    }

    /// net((x - mean) / scale) rewritten as a network on raw x.
    MLPModel fold_into(const MLPModel& m) const {
        auto layers = m.layers();
        Matrix& w = layers.front().weight;
        const Matrix scaled = w.array().rowwise() / scale.array();
        layers.front().bias -= (scaled * mean.transpose()).transpose();
        w = scaled;
        return MLPModel(m.config(), std::move(layers));
    }
};

}  // namespace detail

/// Minimizes the prediction loss of a freshly initialized network on (features,
/// targets). With Bce the targets are 0/1 and the network output is the logit.
inline FitResult fit_unconstrained(const Matrix& features, const Vector& targets, MLPConfig mlp_config,
                                   const TrainConfig& train_config, PredictionLoss loss = PredictionLoss::Mse) {
    if (features.rows() != targets.size()) throw DimensionError("fit_unconstrained: row counts differ");
    if (!targets.allFinite()) throw DomainError("fit_unconstrained: targets must be finite");
    mlp_config.input_width = static_cast<int>(features.cols());
    MLPModel model = init_model(mlp_config);

    std::optional<detail::Standardizer> scaler;
    if (train_config.standardize) scaler = detail::Standardizer::fit(features);
    const Matrix x = scaler ? scaler->apply(features) : features;

    auto build = [&](Tape& tape, const MLPModel& m, const std::vector<std::size_t>& rows) {
        const auto rec = m.record(tape, detail::gather_rows(x, rows), false);
        return prediction_loss(tape, rec.output, detail::gather(targets, rows), loss);
    };
    std::vector<double> losses = run_minibatch_adam(model, x.rows(), train_config, build);
    return FitResult{scaler ? scaler->fold_into(model) : model, std::move(losses)};
}

/// Regresses a network onto out-of-fold logits by MSE.
inline FitResult fit_distilled(const Matrix& features, const Vector& target_logits, const MLPConfig& mlp_config,
                               const TrainConfig& train_config) {
    if (!target_logits.allFinite()) throw DomainError("fit_distilled: target logits must be finite");
    return fit_unconstrained(features, target_logits, mlp_config, train_config, PredictionLoss::Mse);
}

struct CrossFitResult {
    Vector logits;                  // out-of-fold, original row order
    std::vector<int> fold_of_row;
    std::vector<std::string> warnings;
};

/// k-fold cross-fitting with Bce: each row's logit comes from a network trained
/// on the other folds only. Fold membership is a seeded permutation.
inline CrossFitResult cross_fit_logits(const Matrix& features, const Vector& outcome, int k_folds,
                                       const MLPConfig& mlp_config, const TrainConfig& train_config,
                                       std::uint64_t fold_seed) {
    const Eigen::Index n = features.rows();
    if (outcome.size() != n) throw DimensionError("cross_fit_logits: row counts differ");
    if (k_folds < 2) throw ContractError("cross_fit_logits: need at least 2 folds");
    if (k_folds > n) throw ContractError("cross_fit_logits: more folds than rows");
    for (Eigen::Index i = 0; i < n; ++i)
        if (outcome[i] != 0.0 && outcome[i] != 1.0) throw DomainError("cross_fit_logits: outcome must be binary");

    CrossFitResult out{Vector::Zero(n), std::vector<int>(static_cast<std::size_t>(n)), {}};
    Rng rng(fold_seed);
    const auto perm = rng.permutation(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < perm.size(); ++i) out.fold_of_row[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(k_folds));

    for (int fold = 0; fold < k_folds; ++fold) {
        std::vector<std::size_t> train_rows, held_rows;
        for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i)
            (out.fold_of_row[i] == fold ? held_rows : train_rows).push_back(i);
        const Vector y_train = detail::gather(outcome, train_rows);
        const double positives = y_train.sum();
        if (positives == 0.0 || positives == static_cast<double>(y_train.size()))
            out.warnings.push_back("fold " + std::to_string(fold) + ": training folds contain a single class");

        MLPConfig cfg = mlp_config;
        cfg.init_seed = derive_seed(mlp_config.init_seed, static_cast<std::uint64_t>(fold));
        TrainConfig tc = train_config;
        tc.shuffle_seed = derive_seed(train_config.shuffle_seed, static_cast<std::uint64_t>(fold));
        const FitResult fit = fit_unconstrained(detail::gather_rows(features, train_rows), y_train, cfg, tc,
                                                PredictionLoss::Bce);
        const Vector held_logits = fit.model.predict(detail::gather_rows(features, held_rows));
        for (std::size_t i = 0; i < held_rows.size(); ++i)
            out.logits[static_cast<Eigen::Index>(held_rows[i])] = held_logits[static_cast<Eigen::Index>(i)];
    }
    return out;
}

}  // namespace derivfair
