#pragma once

#include <cmath>
#include <cstdint>

#include "derivfair/autodiff.hpp"
#include "derivfair/errors.hpp"

namespace derivfair {

struct TrainConfig {
    int epochs = 50;
    int batch_size = 64;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t shuffle_seed = 0;
    // z-score the inputs while training; the scaling is folded back into the
    // first layer so the returned model takes raw features.
    bool standardize = false;

    void validate() const {
        if (epochs < 1) throw ContractError("TrainConfig: epochs must be >= 1");
        if (batch_size < 1) throw ContractError("TrainConfig: batch size must be >= 1");
        if (!(learning_rate > 0.0)) throw ContractError("TrainConfig: learning rate must be > 0");
    }
};

struct AdamState {
    Vector first_moment;
    Vector second_moment;
    long step = 0;

    static AdamState zeros(Eigen::Index n) { return {Vector::Zero(n), Vector::Zero(n), 0}; }
};

/// One bias-corrected ADAM update, in place.
inline void adam_step(Vector& params, const Vector& grads, AdamState& state, const TrainConfig& cfg) {
    if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
        state.second_moment.size() != params.size())
        throw DimensionError("adam_step: parameter, gradient and state sizes differ");
    ++state.step;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    state.first_moment = b1 * state.first_moment + (1.0 - b1) * grads;
    state.second_moment = b2 * state.second_moment + (1.0 - b2) * grads.cwiseAbs2();
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    const double lr = cfg.learning_rate, eps = cfg.adam_eps;
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        const double m_hat = state.first_moment[i] / c1;
        const double v_hat = state.second_moment[i] / c2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
}

}  // namespace derivfair
