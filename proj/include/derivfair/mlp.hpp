#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "derivfair/autodiff.hpp"
#include "derivfair/errors.hpp"
#include "derivfair/rng.hpp"

namespace derivfair {

enum class OutputHead { Identity, Sigmoid };

/// Shape of a fully connected ELU network with one output unit.
struct MLPConfig {
    int input_width = 1;
    std::vector<int> hidden_widths{32, 32};
    double elu_alpha = 1.0;
    // Sigmoid is applied only when producing probabilities for evaluation;
    // training and all derivatives work on the identity (logit) output.
    OutputHead output_head = OutputHead::Identity;
    std::uint64_t init_seed = 0;

    void validate() const {
        if (input_width < 1) throw ContractError("MLPConfig: input width must be >= 1");
        for (int w : hidden_widths)
            if (w < 1) throw ContractError("MLPConfig: hidden widths must be >= 1");
        if (!(elu_alpha > 0.0)) throw ContractError("MLPConfig: elu alpha must be > 0");
    }
};

struct DenseLayer {
    Matrix weight;   // out x in
    RowVector bias;  // 1 x out
};

/// Graph handles produced by MLPModel::record.
struct RecordedForward {
    Var output;                     // batch x 1
    std::optional<Var> input_grad;  // batch x input_width
};

class MLPModel {
public:
    MLPModel() = default;
    MLPModel(MLPConfig config, std::vector<DenseLayer> layers) : config_(std::move(config)), layers_(std::move(layers)) {
        check_layers();
    }

    const MLPConfig& config() const { return config_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }
    int input_width() const { return config_.input_width; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
        return n;
    }

    /// Flat layout: for each layer, its weight matrix row-major, then its bias.
    Vector parameters() const {
        Vector flat(static_cast<Eigen::Index>(parameter_count()));
        Eigen::Index k = 0;
        for (const auto& l : layers_) {
            for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
                for (Eigen::Index c = 0; c < l.weight.cols(); ++c) flat[k++] = l.weight(r, c);
            for (Eigen::Index c = 0; c < l.bias.size(); ++c) flat[k++] = l.bias[c];
        }
        return flat;
    }

    void set_parameters(const Vector& flat) {
        if (static_cast<std::size_t>(flat.size()) != parameter_count())
            throw DimensionError("set_parameters: expected " + std::to_string(parameter_count()) + " values, got " +
                                 std::to_string(flat.size()));
        Eigen::Index k = 0;
        for (auto& l : layers_) {
            for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
                for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = flat[k++];
            for (Eigen::Index c = 0; c < l.bias.size(); ++c) l.bias[c] = flat[k++];
        }
    }

    /// Network output (logit scale) for every row of `batch`.
    Vector predict(const Matrix& batch) const {
        check_batch(batch);
        Matrix h = batch;
        for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
            Matrix pre = h * layers_[l].weight.transpose();
            pre.rowwise() += layers_[l].bias;
            h = pre.unaryExpr([a = config_.elu_alpha](double x) { return elu(x, a); });
        }
        Matrix out = h * layers_.back().weight.transpose();
        out.rowwise() += layers_.back().bias;
        return out.col(0);
    }

    /// sigmoid(predict) when the head is Sigmoid, predict otherwise.
    Vector predict_response(const Matrix& batch) const {
        Vector z = predict(batch);
        if (config_.output_head == OutputHead::Sigmoid) z = z.unaryExpr([](double x) { return sigmoid(x); });
        return z;
    }

    /// Row i is the gradient of the output with respect to the inputs at sample i,
    /// by the layer chain rule.
    Matrix input_gradient(const Matrix& batch) const {
        check_batch(batch);
        std::vector<Matrix> pre;
        pre.reserve(layers_.size());
        Matrix h = batch;
        for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
            Matrix p = h * layers_[l].weight.transpose();
            p.rowwise() += layers_[l].bias;
            h = p.unaryExpr([a = config_.elu_alpha](double x) { return elu(x, a); });
            pre.push_back(std::move(p));
        }
        Matrix g = layers_.back().weight.replicate(batch.rows(), 1);
        for (std::size_t l = layers_.size() - 1; l-- > 0;) {
            g = g.cwiseProduct(pre[l].unaryExpr([a = config_.elu_alpha](double x) { return elu_prime(x, a); }));
            g = g * layers_[l].weight;
        }
        return g;
    }

    /// Smallest |pre-activation| over hidden units, per sample. Finite-difference
    /// checks skip samples that sit on the ELU kink.
    Vector min_abs_preactivation(const Matrix& batch) const {
        check_batch(batch);
        Vector out = Vector::Constant(batch.rows(), std::numeric_limits<double>::infinity());
        Matrix h = batch;
        for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
            Matrix p = h * layers_[l].weight.transpose();
            p.rowwise() += layers_[l].bias;
            out = out.cwiseMin(p.cwiseAbs().rowwise().minCoeff());
            h = p.unaryExpr([a = config_.elu_alpha](double x) { return elu(x, a); });
        }
        return out;
    }

    /// Records the forward pass (and optionally the input gradient) on `tape`
    /// with the parameters as differentiable leaves.
    RecordedForward record(Tape& tape, const Matrix& batch, bool with_input_grad) const {
        check_batch(batch);
        const double alpha = config_.elu_alpha;
        std::vector<Var> weights, biases, pre;
        std::size_t offset = 0;
        for (const auto& l : layers_) {
            weights.push_back(tape.parameter(l.weight, offset));
            offset += static_cast<std::size_t>(l.weight.size());
            biases.push_back(tape.parameter(l.bias, offset));
            offset += static_cast<std::size_t>(l.bias.size());
        }
        Var h = tape.constant(batch);
        for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
            Var p = tape.add_row(tape.matmul_bt(h, weights[l]), biases[l]);
            pre.push_back(p);
            h = tape.elu(p, alpha);
        }
        RecordedForward rec{tape.add_row(tape.matmul_bt(h, weights.back()), biases.back()), std::nullopt};
        if (with_input_grad) {
            Var g = tape.broadcast_rows(weights.back(), batch.rows());
            for (std::size_t l = layers_.size() - 1; l-- > 0;) {
                g = tape.mul(g, tape.elu_prime(pre[l], alpha));
                g = tape.matmul(g, weights[l]);
            }
            rec.input_grad = g;
        }
        return rec;
    }

private:
    void check_batch(const Matrix& batch) const {
        if (layers_.empty()) throw ContractError("MLPModel: model has no layers");
        if (batch.cols() != config_.input_width)
            throw DimensionError("MLPModel: batch has " + std::to_string(batch.cols()) + " columns, model expects " +
                                 std::to_string(config_.input_width));
    }

    void check_layers() const {
        config_.validate();
        if (layers_.size() != config_.hidden_widths.size() + 1)
            throw DimensionError("MLPModel: layer count does not match config");
        Eigen::Index in = config_.input_width;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const Eigen::Index out = l + 1 < layers_.size() ? config_.hidden_widths[l] : 1;
            if (layers_[l].weight.rows() != out || layers_[l].weight.cols() != in || layers_[l].bias.size() != out)
                throw DimensionError("MLPModel: layer " + std::to_string(l) + " has the wrong shape");
            in = out;
        }
    }

    MLPConfig config_;
    std::vector<DenseLayer> layers_;
};

/// Weights and biases uniform in +-1/sqrt(fan_in), the usual default for dense
/// layers in PyTorch. Weights are drawn row-major before the layer's biases.
inline MLPModel init_model(const MLPConfig& config) {
    config.validate();
    Rng rng(config.init_seed);
    std::vector<DenseLayer> layers;
    int in = config.input_width;
    for (std::size_t l = 0; l <= config.hidden_widths.size(); ++l) {
        const int out = l < config.hidden_widths.size() ? config.hidden_widths[l] : 1;
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        DenseLayer layer{Matrix(out, in), RowVector(out)};
        for (int r = 0; r < out; ++r)
            for (int c = 0; c < in; ++c) layer.weight(r, c) = rng.uniform(-bound, bound);
        for (int r = 0; r < out; ++r) layer.bias[r] = rng.uniform(-bound, bound);
        layers.push_back(std::move(layer));
        in = out;
    }
    return MLPModel(config, std::move(layers));
}

/// Linear model y = w . x + b as a network without hidden layers.
inline MLPModel linear_model(const RowVector& weights, double bias) {
    MLPConfig cfg;
    cfg.input_width = static_cast<int>(weights.size());
    cfg.hidden_widths.clear();
    DenseLayer layer{weights, RowVector::Constant(1, bias)};
    return MLPModel(cfg, {layer});
}

}  // namespace derivfair
