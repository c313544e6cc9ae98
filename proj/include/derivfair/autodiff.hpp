#pragma once

// Reverse-mode differentiation over a tape of dense-matrix operations.
//
// Every node holds a matrix (batch rows x features/units). Because operations
// such as elu_prime are themselves differentiable tape ops, an input-gradient
// computation recorded on the tape can be back-propagated into the parameters,
// which is what a gradient-penalty loss needs.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "derivfair/errors.hpp"

namespace derivfair {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline double elu(double x, double alpha = 1.0) { return x > 0.0 ? x : alpha * (std::exp(x) - 1.0); }

inline double elu_prime(double x, double alpha = 1.0) { return x > 0.0 ? 1.0 : alpha * std::exp(x); }

// The kink at 0 belongs to the positive branch here.
inline double elu_second(double x, double alpha = 1.0) { return x >= 0.0 ? 0.0 : alpha * std::exp(x); }

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// log(1 + e^x) without overflow.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// sign(0) = 0 keeps the L1 subgradient total.
inline double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

enum class Op {
    Constant,
    Parameter,
    Add,
    Sub,
    Mul,            // elementwise
    Scale,          // by a fixed scalar
    Abs,
    Square,
    Elu,
    EluPrime,
    Sigmoid,
    Softplus,
    MatMul,         // A * B
    MatMulBT,       // A * B^T
    AddRow,         // A + 1 r
    MulRow,         // A .* (1 r)
    BroadcastRows,  // 1 r, repeated `rows` times
    Sum,            // to 1x1
};

class Tape;

/// Handle to a tape node.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Matrix& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    double scalar() const;
};

class Tape {
public:
    struct Node {
        Op op;
        int lhs = -1;
        int rhs = -1;
        double scalar = 0.0;
        std::size_t param_offset = 0;
        Matrix value;
    };

    Tape() { nodes_.reserve(128); }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    std::size_t size() const { return nodes_.size(); }
    const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }

    Var constant(Matrix value) { return push({Op::Constant, -1, -1, 0.0, 0, std::move(value)}); }

    /// A parameter block stored row-major at `offset` in the flat parameter vector.
    Var parameter(Matrix value, std::size_t offset) {
        return push({Op::Parameter, -1, -1, 0.0, offset, std::move(value)});
    }

    Var add(Var a, Var b) {
        same_shape(a, b, "add");
        return push({Op::Add, a.id, b.id, 0.0, 0, a.value() + b.value()});
    }
    Var sub(Var a, Var b) {
        same_shape(a, b, "sub");
        return push({Op::Sub, a.id, b.id, 0.0, 0, a.value() - b.value()});
    }
    Var mul(Var a, Var b) {
        same_shape(a, b, "mul");
        return push({Op::Mul, a.id, b.id, 0.0, 0, a.value().cwiseProduct(b.value())});
    }
    Var scale(Var a, double s) { return push({Op::Scale, a.id, -1, s, 0, a.value() * s}); }
    Var abs(Var a) { return push({Op::Abs, a.id, -1, 0.0, 0, a.value().cwiseAbs()}); }
    Var square(Var a) { return push({Op::Square, a.id, -1, 0.0, 0, a.value().array().square().matrix()}); }

    Var elu(Var a, double alpha = 1.0) {
        return push({Op::Elu, a.id, -1, alpha, 0, a.value().unaryExpr([alpha](double x) { return derivfair::elu(x, alpha); })});
    }
    Var elu_prime(Var a, double alpha = 1.0) {
        return push({Op::EluPrime, a.id, -1, alpha, 0,
                     a.value().unaryExpr([alpha](double x) { return derivfair::elu_prime(x, alpha); })});
    }
    Var sigmoid(Var a) {
        return push({Op::Sigmoid, a.id, -1, 0.0, 0, a.value().unaryExpr([](double x) { return derivfair::sigmoid(x); })});
    }
    Var softplus(Var a) {
        return push({Op::Softplus, a.id, -1, 0.0, 0, a.value().unaryExpr([](double x) { return derivfair::softplus(x); })});
    }

    Var matmul(Var a, Var b) {
        if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ");
        return push({Op::MatMul, a.id, b.id, 0.0, 0, a.value() * b.value()});
    }
    Var matmul_bt(Var a, Var b) {
        if (a.cols() != b.cols()) throw DimensionError("matmul_bt: inner dimensions differ");
        return push({Op::MatMulBT, a.id, b.id, 0.0, 0, a.value() * b.value().transpose()});
    }
    Var add_row(Var a, Var row) {
        check_row(a, row, "add_row");
        Matrix v = a.value();
        v.rowwise() += row.value().row(0);
        return push({Op::AddRow, a.id, row.id, 0.0, 0, std::move(v)});
    }
    Var mul_row(Var a, Var row) {
        check_row(a, row, "mul_row");
        Matrix v = a.value().array().rowwise() * row.value().row(0).array();
        return push({Op::MulRow, a.id, row.id, 0.0, 0, std::move(v)});
    }
    Var broadcast_rows(Var row, Eigen::Index rows) {
        if (row.rows() != 1) throw DimensionError("broadcast_rows: expected a row vector");
        Matrix v = row.value().replicate(rows, 1);
        return push({Op::BroadcastRows, row.id, -1, 0.0, 0, std::move(v)});
    }
    Var sum(Var a) {
        Matrix v(1, 1);
        v(0, 0) = a.value().sum();
        return push({Op::Sum, a.id, -1, 0.0, 0, std::move(v)});
    }
    Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

    /// Adjoint of every node with respect to the scalar `root`.
    std::vector<Matrix> adjoints(Var root) const;

    /// d root / d theta, accumulated into a flat vector of `parameter_count` slots.
    Vector param_gradient(Var root, std::size_t parameter_count) const;

private:
    Var push(Node n) {
        nodes_.push_back(std::move(n));
        return Var{this, static_cast<int>(nodes_.size() - 1)};
    }
    static void same_shape(Var a, Var b, const char* what) {
        if (a.rows() != b.rows() || a.cols() != b.cols())
            throw DimensionError(std::string(what) + ": operand shapes differ");
    }
    static void check_row(Var a, Var row, const char* what) {
        if (row.rows() != 1 || row.cols() != a.cols())
            throw DimensionError(std::string(what) + ": row vector width differs from matrix");
    }

    std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape->node(id).value; }

inline double Var::scalar() const {
    const Matrix& v = value();
    if (v.rows() != 1 || v.cols() != 1) throw ContractError("Var::scalar: node is not 1x1");
    return v(0, 0);
}

inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
inline Var operator*(double s, Var a) { return a.tape->scale(a, s); }

inline std::vector<Matrix> Tape::adjoints(Var root) const {
    if (root.tape != this) throw ContractError("adjoints: root belongs to another tape");
    const Matrix& rv = nodes_.at(static_cast<std::size_t>(root.id)).value;
    if (rv.rows() != 1 || rv.cols() != 1) throw ContractError("adjoints: loss is not a scalar");

    std::vector<Matrix> adj(nodes_.size());
    auto accumulate = [&](int id, const auto& contribution) {
        Matrix& slot = adj[static_cast<std::size_t>(id)];
        if (slot.size() == 0)
            slot = contribution;
        else
            slot += contribution;
    };
    adj[static_cast<std::size_t>(root.id)] = Matrix::Ones(1, 1);

    for (int i = root.id; i >= 0; --i) {
        const Matrix& g = adj[static_cast<std::size_t>(i)];
        if (g.size() == 0) continue;
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        auto val = [&](int id) -> const Matrix& { return nodes_[static_cast<std::size_t>(id)].value; };
        switch (n.op) {
            case Op::Constant:
            case Op::Parameter:
                break;
            case Op::Add:
                accumulate(n.lhs, g);
                accumulate(n.rhs, g);
                break;
            case Op::Sub:
                accumulate(n.lhs, g);
                accumulate(n.rhs, -g);
                break;
            case Op::Mul:
                accumulate(n.lhs, g.cwiseProduct(val(n.rhs)));
                accumulate(n.rhs, g.cwiseProduct(val(n.lhs)));
                break;
            case Op::Scale:
                accumulate(n.lhs, g * n.scalar);
                break;
            case Op::Abs:
                accumulate(n.lhs, g.cwiseProduct(val(n.lhs).unaryExpr([](double x) { return sign_of(x); })));
                break;
            case Op::Square:
                accumulate(n.lhs, 2.0 * g.cwiseProduct(val(n.lhs)));
                break;
            case Op::Elu: {
                const double alpha = n.scalar;
                accumulate(n.lhs, g.cwiseProduct(val(n.lhs).unaryExpr([alpha](double x) { return derivfair::elu_prime(x, alpha); })));
                break;
            }
            case Op::EluPrime: {
                const double alpha = n.scalar;
                accumulate(n.lhs, g.cwiseProduct(val(n.lhs).unaryExpr([alpha](double x) { return derivfair::elu_second(x, alpha); })));
                break;
            }
            case Op::Sigmoid:
                accumulate(n.lhs, g.cwiseProduct(n.value.unaryExpr([](double s) { return s * (1.0 - s); })));
                break;
            case Op::Softplus:
                accumulate(n.lhs, g.cwiseProduct(val(n.lhs).unaryExpr([](double x) { return derivfair::sigmoid(x); })));
                break;
            case Op::MatMul:
                accumulate(n.lhs, g * val(n.rhs).transpose());
                accumulate(n.rhs, val(n.lhs).transpose() * g);
                break;
            case Op::MatMulBT:
                accumulate(n.lhs, g * val(n.rhs));
                accumulate(n.rhs, g.transpose() * val(n.lhs));
                break;
            case Op::AddRow:
                accumulate(n.lhs, g);
                accumulate(n.rhs, g.colwise().sum());
                break;
            case Op::MulRow: {
                const auto& row = val(n.rhs);
                Matrix ga = g.array().rowwise() * row.row(0).array();
                accumulate(n.lhs, ga);
                accumulate(n.rhs, g.cwiseProduct(val(n.lhs)).colwise().sum());
                break;
            }
            case Op::BroadcastRows:
                accumulate(n.lhs, g.colwise().sum());
                break;
            case Op::Sum: {
                const auto& a = val(n.lhs);
                accumulate(n.lhs, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
                break;
            }
        }
    }
    return adj;
}

inline Vector Tape::param_gradient(Var root, std::size_t parameter_count) const {
    const std::vector<Matrix> adj = adjoints(root);
    Vector grad = Vector::Zero(static_cast<Eigen::Index>(parameter_count));
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        if (n.op != Op::Parameter || adj[i].size() == 0) continue;
        const Matrix& g = adj[i];
        if (n.param_offset + static_cast<std::size_t>(g.size()) > parameter_count)
            throw DimensionError("param_gradient: parameter block exceeds parameter vector");
        std::size_t k = n.param_offset;
        for (Eigen::Index r = 0; r < g.rows(); ++r)
            for (Eigen::Index c = 0; c < g.cols(); ++c) grad[static_cast<Eigen::Index>(k++)] += g(r, c);
    }
    return grad;
}

}  // namespace derivfair
