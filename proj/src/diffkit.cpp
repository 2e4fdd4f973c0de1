#include "nigcast/diffkit.hpp"

#include "nigcast/errors.hpp"
#include "nigcast/special.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace nigcast::diff {

// --- Tensor ------------------------------------------------------------------

namespace {

std::size_t shape_product(const Tensor::Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != data_.size()) {
        throw ContractError("Tensor: shape " + shape_string(shape_) + " does not match " +
                            std::to_string(data_.size()) + " values");
    }
}

void Tensor::rank_error() const {
    throw ContractError("Tensor: rank " + std::to_string(shape_.size()) + " has no matrix view");
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string shape_string(const Tensor::Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

// --- Var / Tape ---------------------------------------------------------------

const Tensor& Var::value() const { return tape_->value(id_); }

double Var::item() const {
    const auto& v = value();
    if (v.size() != 1) throw ContractError("Var::item on non-scalar " + shape_string(v.shape()));
    return v[0];
}

Var Tape::parameter(Tensor value, std::string name) {
    if (!value.all_finite()) throw NumericError("parameter '" + name + "' holds non-finite values");
    Node node;
    node.op = name.empty() ? "parameter" : "parameter:" + name;
    node.value = std::move(value);
    node.requires_grad = true;
    nodes_.push_back(std::move(node));
    return {this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
    if (!value.all_finite()) throw NumericError("constant holds non-finite values");
    Node node;
    node.op = "constant";
    node.value = std::move(value);
    nodes_.push_back(std::move(node));
    return {this, nodes_.size() - 1};
}

Var Tape::record(std::string_view op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
    const std::size_t id = nodes_.size();
    if (!value.all_finite()) {
        throw NumericError("non-finite value produced by node #" + std::to_string(id) + " (" + std::string(op) + ")");
    }
    Node node;
    node.op = std::string(op);
    node.value = std::move(value);
    node.requires_grad = std::any_of(inputs.begin(), inputs.end(), [this](std::size_t i) {
        return nodes_[i].requires_grad;
    });
    node.inputs = std::move(inputs);
    if (node.requires_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return {this, id};
}

Tensor& Tape::grad_buffer(std::size_t id) {
    auto& node = nodes_[id];
    if (node.grad.values().empty() && node.value.size() > 0) node.grad = Tensor(node.value.shape(), 0.0);
    return node.grad;
}

void Tape::backward(Var loss) {
    if (loss.tape() != this) throw ContractError("backward: variable belongs to another tape");
    const auto& v = nodes_[loss.id()].value;
    if (v.size() != 1) throw ContractError("backward: loss must be a single element, got " + shape_string(v.shape()));
    for (auto& n : nodes_) n.grad = Tensor();
    grad_buffer(loss.id())[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        auto& node = nodes_[i];
        if (!node.requires_grad || !node.backward || node.grad.values().empty()) continue;
        if (!node.grad.all_finite()) {
            throw NumericError("non-finite gradient at node #" + std::to_string(i) + " (" + node.op + ")");
        }
        // Closures only touch grad buffers of earlier nodes.
        Tensor g = std::move(node.grad);
        node.backward(*this, g);
        nodes_[i].grad = std::move(g);
    }
}

Tensor Tape::grad(Var v) const {
    const auto& node = nodes_[v.id()];
    if (node.grad.values().empty()) return Tensor(node.value.shape(), 0.0);
    return node.grad;
}

// --- helpers -----------------------------------------------------------------

namespace {

Tape& tape_of(Var a) {
    if (!a.valid()) throw ContractError("operation on an empty Var");
    return *a.tape();
}

Tape& tape_of(Var a, Var b) {
    if (a.tape() != b.tape() || !a.valid()) throw ContractError("operands live on different tapes");
    return *a.tape();
}

struct Broadcast {
    std::size_t rows, cols;
    std::size_t ar, ac, br, bc;
};

Broadcast broadcast_shape(const Tensor& a, const Tensor& b, std::string_view op) {
    Broadcast s{0, 0, a.rows(), a.cols(), b.rows(), b.cols()};
    auto combine = [&](std::size_t x, std::size_t y) -> std::size_t {
        if (x == y) return x;
        if (x == 1) return y;
        if (y == 1) return x;
        throw ContractError(std::string(op) + ": cannot broadcast " + shape_string(a.shape()) + " with " +
                            shape_string(b.shape()));
    };
    s.rows = combine(s.ar, s.br);
    s.cols = combine(s.ac, s.bc);
    return s;
}

template <typename Fwd, typename DA, typename DB>
Var binary(std::string_view op, Var a, Var b, Fwd fwd, DA da, DB db) {
    Tape& t = tape_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor out;
    Broadcast s{};
    const bool same = av.same_shape(bv);
    if (same) {
        out = Tensor(av.shape());
        auto& o = out.values();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(av[i], bv[i]);
        s = {av.rows(), av.cols(), av.rows(), av.cols(), av.rows(), av.cols()};
    } else {
        s = broadcast_shape(av, bv, op);
        out = Tensor({s.rows, s.cols});
        const double* A = av.data().data();
        const double* B = bv.data().data();
        double* O = out.data().data();
        for (std::size_t i = 0; i < s.rows; ++i) {
            const double* arow = A + (s.ar == 1 ? 0 : i * s.ac);
            const double* brow = B + (s.br == 1 ? 0 : i * s.bc);
            double* orow = O + i * s.cols;
            for (std::size_t j = 0; j < s.cols; ++j) {
                orow[j] = fwd(arow[s.ac == 1 ? 0 : j], brow[s.bc == 1 ? 0 : j]);
            }
        }
    }
    const std::size_t ia = a.id(), ib = b.id();
    return t.record(op, std::move(out), {ia, ib}, [ia, ib, s, same, da, db](Tape& tp, const Tensor& g) {
        const double* A = tp.value(ia).data().data();
        const double* B = tp.value(ib).data().data();
        const double* G = g.data().data();
        const bool need_a = tp.requires_grad(ia), need_b = tp.requires_grad(ib);
        double* dA = need_a ? tp.grad_buffer(ia).data().data() : nullptr;
        double* dB = need_b ? tp.grad_buffer(ib).data().data() : nullptr;
        if (same) {
            const std::size_t n = s.rows * s.cols;
            if (need_a) {
                for (std::size_t k = 0; k < n; ++k) dA[k] += G[k] * da(A[k], B[k]);
            }
            if (need_b) {
                for (std::size_t k = 0; k < n; ++k) dB[k] += G[k] * db(A[k], B[k]);
            }
            return;
        }
        // Broadcast operands accumulate into their single row and/or column.
        for (std::size_t i = 0; i < s.rows; ++i) {
            const std::size_t ra = s.ar == 1 ? 0 : i * s.ac;
            const std::size_t rb = s.br == 1 ? 0 : i * s.bc;
            const double* grow = G + i * s.cols;
            for (std::size_t j = 0; j < s.cols; ++j) {
                const std::size_t ka = ra + (s.ac == 1 ? 0 : j);
                const std::size_t kb = rb + (s.bc == 1 ? 0 : j);
                if (need_a) dA[ka] += grow[j] * da(A[ka], B[kb]);
                if (need_b) dB[kb] += grow[j] * db(A[ka], B[kb]);
            }
        }
    });
}

// Elementwise unary op; `deriv(x, y)` gets the input and output values.
template <typename Fwd, typename Deriv>
Var unary(std::string_view op, Var a, Fwd fwd, Deriv deriv) {
    Tape& t = tape_of(a);
    const Tensor& av = a.value();
    Tensor out(av.shape());
    auto& o = out.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(av[i]);
    const std::size_t ia = a.id();
    const std::size_t self = t.size();
    return t.record(op, std::move(out), {ia}, [ia, self, deriv](Tape& tp, const Tensor& g) {
        const auto& x = tp.value(ia).values();
        const auto& y = tp.value(self).values();
        auto& d = tp.grad_buffer(ia).values();
        const auto& gv = g.values();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i] * deriv(x[i], y[i]);
    });
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

}  // namespace

// --- elementwise binary --------------------------------------------------------

Var add(Var a, Var b) {
    return binary(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
    return binary(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
    return binary(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Var div(Var a, Var b) {
    return binary(
        "div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

Var add_scalar(Var a, double c) {
    return unary(
        "add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var scale(Var a, double c) {
    return unary(
        "scale", a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Var neg(Var a) { return scale(a, -1.0); }

// --- matmul --------------------------------------------------------------------

Var matmul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    if (bv.rows() != k) {
        throw ContractError("matmul: inner dimensions differ, " + shape_string(av.shape()) + " x " +
                            shape_string(bv.shape()));
    }
    Tensor out({m, n}, 0.0);
    {
        const double* A = av.data().data();
        const double* B = bv.data().data();
        double* C = out.data().data();
        for (std::size_t i = 0; i < m; ++i) {
            double* crow = C + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const double x = A[i * k + p];
                const double* brow = B + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += x * brow[j];
            }
        }
    }
    const std::size_t ia = a.id(), ib = b.id();
    return t.record("matmul", std::move(out), {ia, ib}, [ia, ib, m, k, n](Tape& tp, const Tensor& g) {
        const double* A = tp.value(ia).data().data();
        const double* B = tp.value(ib).data().data();
        const double* G = g.data().data();
        if (tp.requires_grad(ia)) {
            // dA = G * B^T
            double* dA = tp.grad_buffer(ia).data().data();
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = G + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const double* brow = B + p * n;
                    // Four partial sums so the reduction vectorizes.
                    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
                    std::size_t j = 0;
                    for (; j + 4 <= n; j += 4) {
                        s0 += grow[j] * brow[j];
                        s1 += grow[j + 1] * brow[j + 1];
                        s2 += grow[j + 2] * brow[j + 2];
                        s3 += grow[j + 3] * brow[j + 3];
                    }
                    for (; j < n; ++j) s0 += grow[j] * brow[j];
                    dA[i * k + p] += (s0 + s1) + (s2 + s3);
                }
            }
        }
        if (tp.requires_grad(ib)) {
            // dB = A^T * G
            double* dB = tp.grad_buffer(ib).data().data();
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = G + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const double x = A[i * k + p];
                    double* drow = dB + p * n;
                    for (std::size_t j = 0; j < n; ++j) drow[j] += x * grow[j];
                }
            }
        }
    });
}

// --- elementwise unary -----------------------------------------------------------

Var tanh(Var a) {
    return unary(
        "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
    return unary("sigmoid", a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
    return unary("softplus", a, stable_softplus, [](double x, double) { return stable_sigmoid(x); });
}

Var exp(Var a) {
    return unary(
        "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
    return unary(
        "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var lgamma(Var a) {
    for (double x : a.value().values()) {
        if (!(x > 0.0)) throw ContractError("lgamma: argument must be positive, got " + std::to_string(x));
    }
    return unary(
        "lgamma", a, [](double x) { return std::lgamma(x); }, [](double x, double) { return special::digamma(x); });
}

Var square(Var a) {
    return unary(
        "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(Var a) {
    return unary(
        "abs", a, [](double x) { return std::fabs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

// --- softmax / reductions -----------------------------------------------------------

Var softmax(Var a) {
    Tape& t = tape_of(a);
    const Tensor& av = a.value();
    const std::size_t r = av.rows(), c = av.cols();
    Tensor out({r, c});
    for (std::size_t i = 0; i < r; ++i) {
        double mx = av.at(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, av.at(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            out.at(i, j) = std::exp(av.at(i, j) - mx);
            z += out.at(i, j);
        }
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) /= z;
    }
    const std::size_t ia = a.id(), self = t.size();
    return t.record("softmax", std::move(out), {ia}, [ia, self, r, c](Tape& tp, const Tensor& g) {
        const Tensor& y = tp.value(self);
        Tensor& d = tp.grad_buffer(ia);
        for (std::size_t i = 0; i < r; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += g.at(i, j) * y.at(i, j);
            for (std::size_t j = 0; j < c; ++j) d.values()[i * c + j] += y.at(i, j) * (g.at(i, j) - dot);
        }
    });
}

Var sum(Var a) {
    Tape& t = tape_of(a);
    const auto& v = a.value().values();
    double s = 0.0;
    for (double x : v) s += x;
    const std::size_t ia = a.id();
    return t.record("sum", Tensor::scalar(s), {ia}, [ia](Tape& tp, const Tensor& g) {
        for (auto& d : tp.grad_buffer(ia).values()) d += g[0];
    });
}

Var sum_rows(Var a) {
    Tape& t = tape_of(a);
    const Tensor& av = a.value();
    const std::size_t r = av.rows(), c = av.cols();
    Tensor out({r, 1}, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += av.at(i, j);
        out[i] = s;
    }
    const std::size_t ia = a.id();
    return t.record("sum_rows", std::move(out), {ia}, [ia, r, c](Tape& tp, const Tensor& g) {
        auto& d = tp.grad_buffer(ia).values();
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) d[i * c + j] += g[i];
        }
    });
}

Var mean(Var a) {
    const auto n = a.value().size();
    if (n == 0) throw ContractError("mean of an empty tensor");
    Tape& t = tape_of(a);
    double s = 0.0;
    for (double x : a.value().values()) s += x;
    const std::size_t ia = a.id();
    const double inv = 1.0 / static_cast<double>(n);
    return t.record("mean", Tensor::scalar(s * inv), {ia}, [ia, inv](Tape& tp, const Tensor& g) {
        for (auto& d : tp.grad_buffer(ia).values()) d += g[0] * inv;
    });
}

// --- slicing / concatenation ------------------------------------------------------

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
    Tape& t = tape_of(a);
    const Tensor& av = a.value();
    const std::size_t r = av.rows(), c = av.cols();
    if (begin >= end || end > c) {
        throw ContractError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                            ") invalid for " + std::to_string(c) + " columns");
    }
    const std::size_t w = end - begin;
    Tensor out({r, w});
    for (std::size_t i = 0; i < r; ++i) {
        std::copy_n(av.data().data() + i * c + begin, w, out.data().data() + i * w);
    }
    const std::size_t ia = a.id();
    return t.record("slice_cols", std::move(out), {ia}, [ia, r, c, begin, w](Tape& tp, const Tensor& g) {
        auto& d = tp.grad_buffer(ia).values();
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < w; ++j) d[i * c + begin + j] += g[i * w + j];
        }
    });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
    Tape& t = tape_of(a);
    const Tensor& av = a.value();
    const std::size_t r = av.rows(), c = av.cols();
    if (begin >= end || end > r) {
        throw ContractError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                            ") invalid for " + std::to_string(r) + " rows");
    }
    Tensor out({end - begin, c});
    std::copy(av.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
              av.data().begin() + static_cast<std::ptrdiff_t>(end * c), out.data().begin());
    const std::size_t ia = a.id();
    return t.record("slice_rows", std::move(out), {ia}, [ia, begin, c](Tape& tp, const Tensor& g) {
        auto& d = tp.grad_buffer(ia).values();
        for (std::size_t k = 0; k < g.size(); ++k) d[begin * c + k] += g[k];
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    Tape& t = tape_of(parts[0]);
    const std::size_t r = parts[0].rows();
    std::size_t total = 0;
    std::vector<std::size_t> ids, widths;
    for (const auto& p : parts) {
        if (p.tape() != &t) throw ContractError("concat_cols: operands live on different tapes");
        if (p.rows() != r) throw ContractError("concat_cols: row counts differ");
        ids.push_back(p.id());
        widths.push_back(p.cols());
        total += p.cols();
    }
    Tensor out({r, total});
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& v = parts[k].value();
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < widths[k]; ++j) out.at(i, off + j) = v.at(i, j);
        }
        off += widths[k];
    }
    return t.record("concat_cols", std::move(out), ids, [ids, widths, r, total](Tape& tp, const Tensor& g) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (tp.requires_grad(ids[k])) {
                auto& d = tp.grad_buffer(ids[k]).values();
                for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t j = 0; j < widths[k]; ++j) d[i * widths[k] + j] += g[i * total + off + j];
                }
            }
            off += widths[k];
        }
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ContractError("concat_rows: no inputs");
    Tape& t = tape_of(parts[0]);
    const std::size_t c = parts[0].cols();
    std::vector<std::size_t> ids, sizes;
    std::size_t total_rows = 0;
    for (const auto& p : parts) {
        if (p.tape() != &t) throw ContractError("concat_rows: operands live on different tapes");
        if (p.cols() != c) throw ContractError("concat_rows: column counts differ");
        ids.push_back(p.id());
        sizes.push_back(p.value().size());
        total_rows += p.rows();
    }
    Tensor out({total_rows, c});
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
        off += p.value().size();
    }
    return t.record("concat_rows", std::move(out), ids, [ids, sizes](Tape& tp, const Tensor& g) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (tp.requires_grad(ids[k])) {
                auto& d = tp.grad_buffer(ids[k]).values();
                for (std::size_t j = 0; j < sizes[k]; ++j) d[j] += g[off + j];
            }
            off += sizes[k];
        }
    });
}

// --- composites -----------------------------------------------------------------

Var sqrt(Var a) { return exp(scale(log(a), 0.5)); }

Var logsumexp_rows(Var a) {
    const Tensor& av = a.value();
    const std::size_t r = av.rows(), c = av.cols();
    Tensor shift({r, 1});
    for (std::size_t i = 0; i < r; ++i) {
        double mx = av.at(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, av.at(i, j));
        shift[i] = mx;
    }
    // The shift cancels analytically, so treating it as a constant is exact.
    Var m = a.tape()->constant(std::move(shift));
    return add(log(sum_rows(exp(sub(a, m)))), m);
}

// --- graph evaluation -------------------------------------------------------------

namespace {

Var build_on(Tape& tape, const Graph& graph, std::span<const Tensor> params, std::vector<Var>& vars) {
    if (!graph.build) throw ContractError("Graph has no builder");
    if (!graph.parameter_names.empty() && graph.parameter_names.size() != params.size()) {
        throw ContractError("Graph expects " + std::to_string(graph.parameter_names.size()) + " parameters, got " +
                            std::to_string(params.size()));
    }
    vars.clear();
    for (std::size_t i = 0; i < params.size(); ++i) {
        vars.push_back(tape.parameter(params[i], i < graph.parameter_names.size() ? graph.parameter_names[i] : ""));
    }
    Var loss = graph.build(tape, vars);
    if (loss.tape() != &tape || loss.value().size() != 1) throw ContractError("Graph loss must be a scalar node");
    return loss;
}

}  // namespace

ValueAndGrad value_and_grad(const Graph& graph, std::span<const Tensor> params) {
    Tape tape;
    std::vector<Var> vars;
    Var loss = build_on(tape, graph, params, vars);
    tape.backward(loss);
    ValueAndGrad out;
    out.loss = loss.item();
    for (const auto& v : vars) {
        out.unused.push_back(!tape.reached(v));
        out.grads.push_back(tape.grad(v));
    }
    return out;
}

double evaluate(const Graph& graph, std::span<const Tensor> params) {
    Tape tape;
    std::vector<Var> vars;
    return build_on(tape, graph, params, vars).item();
}

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    return std::fabs(analytic - numeric) / denom;
}

GradReport finite_diff_check(const Graph& graph, std::span<const Tensor> params, double step) {
    if (!(step >= 1e-7 && step <= 1e-3)) throw ContractError("finite_diff_check: step must lie in [1e-7, 1e-3]");
    GradReport report;
    report.analytic = value_and_grad(graph, params).grads;
    std::vector<Tensor> work(params.begin(), params.end());
    for (std::size_t p = 0; p < work.size(); ++p) {
        Tensor numeric(work[p].shape(), 0.0);
        double worst = 0.0;
        for (std::size_t i = 0; i < work[p].size(); ++i) {
            const double orig = work[p][i];
            double f_plus = 0.0, f_minus = 0.0;
            try {
                work[p][i] = orig + step;
                f_plus = evaluate(graph, work);
                work[p][i] = orig - step;
                f_minus = evaluate(graph, work);
            } catch (const NumericError& e) {
                work[p][i] = orig;
                report.flagged.push_back({p, i, e.what()});
                continue;
            } catch (const ContractError& e) {
                work[p][i] = orig;
                report.flagged.push_back({p, i, e.what()});
                continue;
            }
            work[p][i] = orig;
            numeric[i] = (f_plus - f_minus) / (2.0 * step);
            worst = std::max(worst, relative_error(report.analytic[p][i], numeric[i]));
        }
        report.numeric.push_back(std::move(numeric));
        report.max_rel_error_per_parameter.push_back(worst);
        report.max_rel_error = std::max(report.max_rel_error, worst);
    }
    return report;
}

}  // namespace nigcast::diff
