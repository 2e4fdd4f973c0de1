#pragma once

// Minimal dense-tensor kernel with tape-based reverse-mode differentiation.
//
// Every trainable piece of the toolkit (LSTM, patch transformer, all losses)
// is expressed through the primitives below. Tensors are row-major doubles of
// rank <= 2 inside the tape; binary elementwise ops broadcast a size-1 row or
// column (scalar, row vector, column vector) against a matrix and nothing more.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nigcast::diff {

class Tensor {
public:
    using Shape = std::vector<std::size_t>;

    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
        return Tensor({rows, cols}, std::move(data));
    }
    static Tensor column(std::vector<double> data) {
        const auto n = data.size();
        return Tensor({n, 1}, std::move(data));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t rank() const noexcept { return shape_.size(); }
    // Matrix view: rank 0 -> 1x1, rank 1 [n] -> 1xn, rank 2 as is.
    std::size_t rows() const {
        if (shape_.size() > 2) rank_error();
        return shape_.size() == 2 ? shape_[0] : 1;
    }
    std::size_t cols() const {
        if (shape_.size() > 2) rank_error();
        return shape_.empty() ? 1 : shape_.back();
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& values() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    bool all_finite() const noexcept;
    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
    void fill(double v);

private:
    [[noreturn]] void rank_error() const;

    Shape shape_;
    std::vector<double> data_;
};

std::string shape_string(const Tensor::Shape& shape);

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid as long as the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape() const noexcept { return tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

    const Tensor& value() const;
    double item() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf that receives a gradient.
    Var parameter(Tensor value, std::string name = {});
    /// Leaf without gradient.
    Var constant(Tensor value);

    /// Records an op result. Throws NumericError if `value` holds NaN/Inf.
    Var record(std::string_view op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    /// Reverse sweep from a single-element node.
    void backward(Var loss);
    /// Gradient after backward(); zeros of the value's shape if unreached.
    Tensor grad(Var v) const;
    bool reached(Var v) const { return !nodes_[v.id()].grad.values().empty(); }

    /// Accumulation buffer used by backward closures.
    Tensor& grad_buffer(std::size_t id);

    std::size_t size() const noexcept { return nodes_.size(); }
    std::string_view op_name(std::size_t id) const { return nodes_[id].op; }

private:
    struct Node {
        std::string op;
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
};

// --- primitives -----------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var add_scalar(Var a, double c);
Var scale(Var a, double c);
Var neg(Var a);

Var matmul(Var a, Var b);

Var tanh(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var exp(Var a);
Var log(Var a);
Var lgamma(Var a);
Var square(Var a);
Var abs(Var a);  // subgradient 0 at 0

Var softmax(Var a);  // row-wise, max-subtracted

Var sum(Var a);       // all elements -> 1x1
Var sum_rows(Var a);  // r x c -> r x 1
Var mean(Var a);      // all elements -> 1x1

Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);

// --- composites built from the primitives ----------------------------------

Var sqrt(Var a);              // exp(0.5 log a)
Var logsumexp_rows(Var a);    // r x c -> r x 1, shift by a detached row max

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator+(Var a, double c) { return add_scalar(a, c); }
inline Var operator+(double c, Var a) { return add_scalar(a, c); }
inline Var operator-(Var a, double c) { return add_scalar(a, -c); }
inline Var operator-(double c, Var a) { return add_scalar(neg(a), c); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator/(Var a, double c) { return scale(a, 1.0 / c); }

// --- graph evaluation --------------------------------------------------------

/// A scalar objective over named parameter tensors, rebuilt on a fresh tape
/// for each evaluation.
struct Graph {
    std::vector<std::string> parameter_names;
    std::function<Var(Tape&, std::span<const Var> params)> build;
};

struct ValueAndGrad {
    double loss = 0.0;
    std::vector<Tensor> grads;
    std::vector<bool> unused;  // parameter not reachable from the loss
};

ValueAndGrad value_and_grad(const Graph& graph, std::span<const Tensor> params);

/// Loss value only. Throws NumericError on a non-finite intermediate.
double evaluate(const Graph& graph, std::span<const Tensor> params);

struct FlaggedCoordinate {
    std::size_t parameter = 0;
    std::size_t index = 0;
    std::string reason;
};

struct GradReport {
    std::vector<Tensor> analytic;
    std::vector<Tensor> numeric;
    std::vector<double> max_rel_error_per_parameter;
    double max_rel_error = 0.0;
    std::vector<FlaggedCoordinate> flagged;
};

/// |a - f| / max(|a|, |f|, 1e-8)
double relative_error(double analytic, double numeric);

/// Central differences per coordinate. `step` must lie in [1e-7, 1e-3].
GradReport finite_diff_check(const Graph& graph, std::span<const Tensor> params, double step);

}  // namespace nigcast::diff
