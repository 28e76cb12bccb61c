#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every operation as a node holding its value, its inputs and
// an op kind; backward() walks the nodes once in reverse order and applies
// the matching adjoint rule. Nodes built only from constants carry no
// gradient and are skipped during the backward sweep.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "gina/error.hpp"

namespace gina {

using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
    return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
}

inline std::string shape_str(const Tensor& t) { return shape_str(t.rows(), t.cols()); }

enum class OpKind : std::uint8_t {
    Leaf,
    MatMul,
    Add,
    Sub,
    Mul,
    AddBias,       // matrix + row vector broadcast over rows
    MulCol,        // matrix * column vector broadcast over columns
    Scale,         // a * constant
    Shift,         // a + constant
    Tanh,
    Relu,
    Sigmoid,
    Log,
    Exp,
    Square,
    Clamp,
    Sum,
    Mean,
    RowSum,        // n x m -> n x 1
    ConcatCols,
    SliceCols,
    LogSumExpRows, // n x m -> n x 1
    Reshape,
    RepeatRows,    // each row repeated k times consecutively
    TileRows,      // whole matrix stacked k times
    GroupSumRows,  // consecutive groups of k rows summed
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    [[nodiscard]] std::size_t id() const { return id_; }
    [[nodiscard]] Tape* tape() const { return tape_; }
    [[nodiscard]] const Tensor& value() const;
    [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
    [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
    [[nodiscard]] double scalar() const { return value()(0, 0); }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

    Tape() { nodes_.reserve(256); }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf whose gradient is tracked (a trainable parameter).
    Var variable(Tensor value) { return push(OpKind::Leaf, {kNone, kNone}, std::move(value), true); }

    /// Leaf with no gradient (data, masks, pre-drawn noise).
    Var constant(Tensor value) { return push(OpKind::Leaf, {kNone, kNone}, std::move(value), false); }

    Var constant(double v) {
        Tensor t(1, 1);
        t(0, 0) = v;
        return constant(std::move(t));
    }

    [[nodiscard]] const Tensor& value(Var v) const { return nodes_.at(v.id()).value; }

    /// Gradient accumulated by the last backward(); zero-sized if the node
    /// does not depend on any variable.
    [[nodiscard]] const Tensor& grad(Var v) const { return nodes_.at(v.id()).grad; }

    [[nodiscard]] bool requires_grad(Var v) const { return nodes_.at(v.id()).needs_grad; }

    [[nodiscard]] std::size_t size() const { return nodes_.size(); }

    void backward(Var loss);

    // Recording entry point for the op functions below.
    Var push(OpKind op, std::array<std::size_t, 2> in, Tensor value, bool needs_grad, double a = 0.0,
             double b = 0.0, Eigen::Index k = 0) {
        nodes_.push_back(Node{op, in, a, b, k, std::move(value), Tensor{}, needs_grad});
        return Var(this, nodes_.size() - 1);
    }

    [[nodiscard]] bool needs(std::size_t id) const { return id != kNone && nodes_[id].needs_grad; }

private:
    struct Node {
        OpKind op;
        std::array<std::size_t, 2> in;
        double a;
        double b;
        Eigen::Index k;
        Tensor value;
        Tensor grad;
        bool needs_grad;
    };

    void apply_backward(std::size_t id);
    Tensor& grad_of(std::size_t id) {
        Node& n = nodes_[id];
        if (n.grad.size() == 0) n.grad = Tensor::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }

    std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(*this); }

namespace detail {

inline Tape& same_tape(Var a, Var b) {
    if (a.tape() == nullptr || a.tape() != b.tape()) throw ShapeError("operands live on different tapes");
    return *a.tape();
}

inline bool is_scalar(const Tensor& t) { return t.rows() == 1 && t.cols() == 1; }

// Elementwise binary ops accept equal shapes or one 1x1 operand.
inline void check_elementwise(const char* op, const Tensor& a, const Tensor& b) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) return;
    if (is_scalar(a) || is_scalar(b)) return;
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

// Reduce an adjoint back onto an operand that may have been broadcast.
inline void accumulate(Tensor& dst, const Tensor& g) {
    if (dst.rows() == g.rows() && dst.cols() == g.cols()) {
        dst += g;
    } else {
        dst(0, 0) += g.sum();
    }
}

template <class F>
Tensor broadcast_binary(const Tensor& a, const Tensor& b, F f) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) return a.binaryExpr(b, f);
    if (is_scalar(a)) {
        const double s = a(0, 0);
        return b.unaryExpr([&](double y) { return f(s, y); });
    }
    const double s = b(0, 0);
    return a.unaryExpr([&](double x) { return f(x, s); });
}

inline Tensor expand(const Tensor& t, Eigen::Index rows, Eigen::Index cols) {
    if (t.rows() == rows && t.cols() == cols) return t;
    return Tensor::Constant(rows, cols, t(0, 0));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Operations

inline Var matmul(Var a, Var b) {
    Tape& t = detail::same_tape(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols() != bv.rows())
        throw ShapeError("matmul: inner dimensions differ " + shape_str(av) + " * " + shape_str(bv));
    Tensor out = av * bv;
    return t.push(OpKind::MatMul, {a.id(), b.id()}, std::move(out), t.needs(a.id()) || t.needs(b.id()));
}

inline Var add(Var a, Var b) {
    Tape& t = detail::same_tape(a, b);
    detail::check_elementwise("add", a.value(), b.value());
    Tensor out = detail::broadcast_binary(a.value(), b.value(), [](double x, double y) { return x + y; });
    return t.push(OpKind::Add, {a.id(), b.id()}, std::move(out), t.needs(a.id()) || t.needs(b.id()));
}

inline Var sub(Var a, Var b) {
    Tape& t = detail::same_tape(a, b);
    detail::check_elementwise("sub", a.value(), b.value());
    Tensor out = detail::broadcast_binary(a.value(), b.value(), [](double x, double y) { return x - y; });
    return t.push(OpKind::Sub, {a.id(), b.id()}, std::move(out), t.needs(a.id()) || t.needs(b.id()));
}

inline Var mul(Var a, Var b) {
    Tape& t = detail::same_tape(a, b);
    detail::check_elementwise("mul", a.value(), b.value());
    Tensor out = detail::broadcast_binary(a.value(), b.value(), [](double x, double y) { return x * y; });
    return t.push(OpKind::Mul, {a.id(), b.id()}, std::move(out), t.needs(a.id()) || t.needs(b.id()));
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

/// a (n x m) + bias (1 x m), bias broadcast over rows.
inline Var add_bias(Var a, Var bias) {
    Tape& t = detail::same_tape(a, bias);
    const Tensor& av = a.value();
    const Tensor& bv = bias.value();
    if (bv.rows() != 1 || bv.cols() != av.cols())
        throw ShapeError("add_bias: bias " + shape_str(bv) + " does not fit " + shape_str(av));
    Tensor out = av.rowwise() + bv.row(0);
    return t.push(OpKind::AddBias, {a.id(), bias.id()}, std::move(out), t.needs(a.id()) || t.needs(bias.id()));
}

/// a (n x m) scaled row-wise by col (n x 1).
inline Var mul_col(Var a, Var col) {
    Tape& t = detail::same_tape(a, col);
    const Tensor& av = a.value();
    const Tensor& cv = col.value();
    if (cv.cols() != 1 || cv.rows() != av.rows())
        throw ShapeError("mul_col: column " + shape_str(cv) + " does not fit " + shape_str(av));
    Tensor out = av.array().colwise() * cv.col(0).array();
    return t.push(OpKind::MulCol, {a.id(), col.id()}, std::move(out), t.needs(a.id()) || t.needs(col.id()));
}

inline Var scale(Var a, double c) {
    Tape& t = *a.tape();
    Tensor out = a.value() * c;
    return t.push(OpKind::Scale, {a.id(), Tape::kNone}, std::move(out), t.needs(a.id()), c);
}

inline Var shift(Var a, double c) {
    Tape& t = *a.tape();
    Tensor out = a.value().array() + c;
    return t.push(OpKind::Shift, {a.id(), Tape::kNone}, std::move(out), t.needs(a.id()), c);
}

inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator+(Var a, double c) { return shift(a, c); }
inline Var operator+(double c, Var a) { return shift(a, c); }
inline Var operator-(Var a, double c) { return shift(a, -c); }
inline Var operator-(double c, Var a) { return shift(scale(a, -1.0), c); }
inline Var operator-(Var a) { return scale(a, -1.0); }

namespace detail {
inline Var unary(Var a, OpKind op, Tensor out, double p0 = 0.0, double p1 = 0.0) {
    Tape& t = *a.tape();
    return t.push(op, {a.id(), Tape::kNone}, std::move(out), t.needs(a.id()), p0, p1);
}
}  // namespace detail

inline Var tanh(Var a) { return detail::unary(a, OpKind::Tanh, a.value().array().tanh()); }

inline Var relu(Var a) { return detail::unary(a, OpKind::Relu, a.value().cwiseMax(0.0)); }

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline Var sigmoid(Var a) {
    return detail::unary(a, OpKind::Sigmoid, a.value().unaryExpr([](double x) { return sigmoid(x); }));
}

inline Var log(Var a) {
    const Tensor& v = a.value();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (!(v.data()[i] > 0.0))
            throw DomainError("log: non-positive input " + std::to_string(v.data()[i]) + " at flat index " +
                              std::to_string(i));
    }
    return detail::unary(a, OpKind::Log, v.array().log());
}

inline Var exp(Var a) { return detail::unary(a, OpKind::Exp, a.value().array().exp()); }

inline Var square(Var a) { return detail::unary(a, OpKind::Square, a.value().array().square()); }

/// Elementwise clamp to [lo, hi]; the gradient is zero where clamped.
inline Var clamp(Var a, double lo, double hi) {
    return detail::unary(a, OpKind::Clamp, a.value().cwiseMax(lo).cwiseMin(hi), lo, hi);
}

inline Var sum(Var a) {
    Tensor out(1, 1);
    out(0, 0) = a.value().sum();
    return detail::unary(a, OpKind::Sum, std::move(out));
}

inline Var mean(Var a) {
    if (a.value().size() == 0) throw ShapeError("mean: empty tensor");
    Tensor out(1, 1);
    out(0, 0) = a.value().mean();
    return detail::unary(a, OpKind::Mean, std::move(out));
}

/// Sum over columns: n x m -> n x 1.
inline Var row_sum(Var a) { return detail::unary(a, OpKind::RowSum, a.value().rowwise().sum()); }

inline Var concat_cols(Var a, Var b) {
    Tape& t = detail::same_tape(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rows() != bv.rows())
        throw ShapeError("concat_cols: row counts differ " + shape_str(av) + " | " + shape_str(bv));
    Tensor out(av.rows(), av.cols() + bv.cols());
    out.leftCols(av.cols()) = av;
    out.rightCols(bv.cols()) = bv;
    return t.push(OpKind::ConcatCols, {a.id(), b.id()}, std::move(out), t.needs(a.id()) || t.needs(b.id()));
}

inline Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
    const Tensor& av = a.value();
    if (start < 0 || count < 0 || start + count > av.cols())
        throw ShapeError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + shape_str(av));
    Tensor out = av.middleCols(start, count);
    Tape& t = *a.tape();
    return t.push(OpKind::SliceCols, {a.id(), Tape::kNone}, std::move(out), t.needs(a.id()), 0.0, 0.0, start);
}

/// Row-wise log-sum-exp with max subtraction: n x m -> n x 1.
inline Var logsumexp_rows(Var a) {
    const Tensor& av = a.value();
    if (av.cols() == 0) throw ShapeError("logsumexp_rows: no columns");
    Tensor out(av.rows(), 1);
    for (Eigen::Index i = 0; i < av.rows(); ++i) {
        const double m = av.row(i).maxCoeff();
        if (!std::isfinite(m)) {
            out(i, 0) = m;
            continue;
        }
        out(i, 0) = m + std::log((av.row(i).array() - m).exp().sum());
    }
    return detail::unary(a, OpKind::LogSumExpRows, std::move(out));
}

/// Reinterpret the row-major data with a new shape.
inline Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
    const Tensor& av = a.value();
    if (rows * cols != av.size())
        throw ShapeError("reshape: " + shape_str(av) + " -> " + shape_str(rows, cols) + " changes size");
    Tensor out = Eigen::Map<const Tensor>(av.data(), rows, cols);
    return detail::unary(a, OpKind::Reshape, std::move(out));
}

/// Each row repeated k times consecutively: row i lands at rows i*k .. i*k+k-1.
inline Var repeat_rows(Var a, Eigen::Index k) {
    const Tensor& av = a.value();
    if (k < 1) throw ShapeError("repeat_rows: k must be >= 1");
    Tensor out(av.rows() * k, av.cols());
    for (Eigen::Index i = 0; i < av.rows(); ++i)
        for (Eigen::Index j = 0; j < k; ++j) out.row(i * k + j) = av.row(i);
    Tape& t = *a.tape();
    return t.push(OpKind::RepeatRows, {a.id(), Tape::kNone}, std::move(out), t.needs(a.id()), 0.0, 0.0, k);
}

/// The whole matrix stacked k times: row i lands at rows i, i+n, i+2n, ...
inline Var tile_rows(Var a, Eigen::Index k) {
    const Tensor& av = a.value();
    if (k < 1) throw ShapeError("tile_rows: k must be >= 1");
    Tensor out(av.rows() * k, av.cols());
    for (Eigen::Index j = 0; j < k; ++j) out.middleRows(j * av.rows(), av.rows()) = av;
    Tape& t = *a.tape();
    return t.push(OpKind::TileRows, {a.id(), Tape::kNone}, std::move(out), t.needs(a.id()), 0.0, 0.0, k);
}

/// Sum consecutive groups of k rows: (n*k) x m -> n x m.
inline Var group_sum_rows(Var a, Eigen::Index k) {
    const Tensor& av = a.value();
    if (k < 1 || av.rows() % k != 0)
        throw ShapeError("group_sum_rows: " + std::to_string(av.rows()) + " rows not divisible by " +
                         std::to_string(k));
    const Eigen::Index n = av.rows() / k;
    Tensor out = Tensor::Zero(n, av.cols());
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < k; ++j) out.row(i) += av.row(i * k + j);
    Tape& t = *a.tape();
    return t.push(OpKind::GroupSumRows, {a.id(), Tape::kNone}, std::move(out), t.needs(a.id()), 0.0, 0.0, k);
}

// ---------------------------------------------------------------------------
// Backward sweep

inline void Tape::backward(Var loss) {
    if (loss.tape() != this) throw ShapeError("backward: loss is not on this tape");
    const std::size_t root = loss.id();
    if (!detail::is_scalar(nodes_.at(root).value))
        throw ShapeError("backward: loss must be 1x1, got " + shape_str(nodes_[root].value));
    for (auto& n : nodes_) n.grad.resize(0, 0);
    if (!nodes_[root].needs_grad) return;
    grad_of(root)(0, 0) = 1.0;
    for (std::size_t id = root + 1; id-- > 0;) {
        if (!nodes_[id].needs_grad || nodes_[id].grad.size() == 0) continue;
        apply_backward(id);
    }
}

inline void Tape::apply_backward(std::size_t id) {
    // Copy the small fields; references into nodes_ stay valid because the
    // backward sweep never appends nodes.
    const Node& n = nodes_[id];
    const Tensor& g = n.grad;
    const std::size_t ia = n.in[0];
    const std::size_t ib = n.in[1];
    const bool na = needs(ia);
    const bool nb = needs(ib);
    switch (n.op) {
        case OpKind::Leaf:
            break;
        case OpKind::MatMul:
            if (na) grad_of(ia).noalias() += g * nodes_[ib].value.transpose();
            if (nb) grad_of(ib).noalias() += nodes_[ia].value.transpose() * g;
            break;
        case OpKind::Add:
            if (na) detail::accumulate(grad_of(ia), g);
            if (nb) detail::accumulate(grad_of(ib), g);
            break;
        case OpKind::Sub:
            if (na) detail::accumulate(grad_of(ia), g);
            if (nb) detail::accumulate(grad_of(ib), -g);
            break;
        case OpKind::Mul: {
            const Tensor& av = nodes_[ia].value;
            const Tensor& bv = nodes_[ib].value;
            if (na) {
                Tensor ga = g.cwiseProduct(detail::expand(bv, g.rows(), g.cols()));
                detail::accumulate(grad_of(ia), ga);
            }
            if (nb) {
                Tensor gb = g.cwiseProduct(detail::expand(av, g.rows(), g.cols()));
                detail::accumulate(grad_of(ib), gb);
            }
            break;
        }
        case OpKind::AddBias:
            if (na) grad_of(ia) += g;
            if (nb) grad_of(ib) += g.colwise().sum();
            break;
        case OpKind::MulCol: {
            const Tensor& av = nodes_[ia].value;
            const Tensor& cv = nodes_[ib].value;
            if (na) grad_of(ia).array() += g.array().colwise() * cv.col(0).array();
            if (nb) grad_of(ib) += g.cwiseProduct(av).rowwise().sum();
            break;
        }
        case OpKind::Scale:
            grad_of(ia) += n.a * g;
            break;
        case OpKind::Shift:
            grad_of(ia) += g;
            break;
        case OpKind::Tanh:
            grad_of(ia).array() += g.array() * (1.0 - n.value.array().square());
            break;
        case OpKind::Relu:
            grad_of(ia).array() += g.array() * (nodes_[ia].value.array() > 0.0).cast<double>();
            break;
        case OpKind::Sigmoid:
            grad_of(ia).array() += g.array() * n.value.array() * (1.0 - n.value.array());
            break;
        case OpKind::Log:
            grad_of(ia).array() += g.array() / nodes_[ia].value.array();
            break;
        case OpKind::Exp:
            grad_of(ia).array() += g.array() * n.value.array();
            break;
        case OpKind::Square:
            grad_of(ia).array() += 2.0 * g.array() * nodes_[ia].value.array();
            break;
        case OpKind::Clamp: {
            const Tensor& av = nodes_[ia].value;
            grad_of(ia).array() += g.array() * (av.array() >= n.a && av.array() <= n.b).cast<double>();
            break;
        }
        case OpKind::Sum:
            grad_of(ia).array() += g(0, 0);
            break;
        case OpKind::Mean:
            grad_of(ia).array() += g(0, 0) / static_cast<double>(nodes_[ia].value.size());
            break;
        case OpKind::RowSum:
            grad_of(ia).colwise() += g.col(0);
            break;
        case OpKind::ConcatCols: {
            const Eigen::Index ca = nodes_[ia].value.cols();
            if (na) grad_of(ia) += g.leftCols(ca);
            if (nb) grad_of(ib) += g.rightCols(g.cols() - ca);
            break;
        }
        case OpKind::SliceCols:
            grad_of(ia).middleCols(n.k, g.cols()) += g;
            break;
        case OpKind::LogSumExpRows: {
            const Tensor& av = nodes_[ia].value;
            Tensor& ga = grad_of(ia);
            for (Eigen::Index i = 0; i < av.rows(); ++i) {
                if (!std::isfinite(n.value(i, 0))) continue;
                ga.row(i).array() += g(i, 0) * (av.row(i).array() - n.value(i, 0)).exp();
            }
            break;
        }
        case OpKind::Reshape: {
            Tensor& ga = grad_of(ia);
            Eigen::Map<Tensor>(ga.data(), g.rows(), g.cols()) += g;
            break;
        }
        case OpKind::RepeatRows: {
            Tensor& ga = grad_of(ia);
            for (Eigen::Index i = 0; i < ga.rows(); ++i)
                for (Eigen::Index j = 0; j < n.k; ++j) ga.row(i) += g.row(i * n.k + j);
            break;
        }
        case OpKind::TileRows: {
            Tensor& ga = grad_of(ia);
            const Eigen::Index rows = ga.rows();
            for (Eigen::Index j = 0; j < n.k; ++j) ga += g.middleRows(j * rows, rows);
            break;
        }
        case OpKind::GroupSumRows: {
            Tensor& ga = grad_of(ia);
            for (Eigen::Index i = 0; i < g.rows(); ++i)
                for (Eigen::Index j = 0; j < n.k; ++j) ga.row(i * n.k + j) += g.row(i);
            break;
        }
    }
}

}  // namespace gina
