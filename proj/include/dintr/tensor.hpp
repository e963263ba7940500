#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "dintr/errors.hpp"
#include "dintr/rng.hpp"

namespace dintr {

// Dense row-major f64 tensors with reverse-mode autodiff on a linear tape.
// Tensors are immutable values; ops return fresh tensors. Gradient buffers are
// shared between handles of the same tensor, so reading leaf.grad() after
// backward() sees the accumulated gradient regardless of which handle the tape
// captured. All loops are sequential with a fixed order: results are
// bit-reproducible for identical inputs.

class tape;

namespace detail {
tape*& active_tape();
} // namespace detail

class tensor {
public:
    tensor() = default;

    tensor(std::vector<std::size_t> shape, std::vector<double> data, bool requires_grad = false)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<double>>(std::move(data))),
          requires_grad_(requires_grad) {
        if (data_->size() != count(shape_))
            throw shape_error("data size " + std::to_string(data_->size()) +
                              " does not match shape volume " + std::to_string(count(shape_)));
        if (requires_grad_) grad_ = std::make_shared<std::vector<double>>(data_->size(), 0.0);
    }

    static tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
        std::size_t n = count(shape);
        return tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    static tensor full(std::vector<std::size_t> shape, double v, bool requires_grad = false) {
        std::size_t n = count(shape);
        return tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
    }

    static tensor scalar(double v, bool requires_grad = false) {
        return tensor({}, std::vector<double>{v}, requires_grad);
    }

    // Uniform(-scale, scale) init from a named deterministic stream.
    static tensor seeded_uniform(std::vector<std::size_t> shape, std::uint64_t seed,
                                 std::string_view tag, double scale, bool requires_grad = false) {
        rng g(mix_seed(seed, tag));
        std::size_t n = count(shape);
        std::vector<double> d(n);
        for (std::size_t i = 0; i < n; ++i) d[i] = g.uniform_sym(scale);
        return tensor(std::move(shape), std::move(d), requires_grad);
    }

    static tensor seeded_normal(std::vector<std::size_t> shape, std::uint64_t seed,
                                std::string_view tag, double stddev = 1.0,
                                bool requires_grad = false) {
        rng g(mix_seed(seed, tag));
        std::size_t n = count(shape);
        std::vector<double> d(n);
        for (std::size_t i = 0; i < n; ++i) d[i] = g.normal() * stddev;
        return tensor(std::move(shape), std::move(d), requires_grad);
    }

    bool defined() const { return static_cast<bool>(data_); }
    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_ ? data_->size() : 0; }

    std::size_t dim(std::size_t i) const {
        if (i >= shape_.size()) throw index_error("dim " + std::to_string(i) + " out of rank");
        return shape_[i];
    }

    const double* data() const { return data_->data(); }
    const std::vector<double>& values() const { return *data_; }

    double item() const {
        if (size() != 1) throw shape_error("item() needs a single-element tensor");
        return (*data_)[0];
    }

    double at(std::initializer_list<std::size_t> idx) const {
        return (*data_)[offset(idx)];
    }

    bool requires_grad() const { return requires_grad_; }

    bool has_grad() const { return static_cast<bool>(grad_); }

    const std::vector<double>& grad() const {
        if (!grad_) throw contract_error("tensor has no gradient buffer");
        return *grad_;
    }

    void zero_grad() {
        if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
    }

    // Same data, no gradient tracking. Shares the storage (tensors are immutable).
    tensor detach() const {
        tensor t;
        t.shape_ = shape_;
        t.data_ = data_;
        t.requires_grad_ = false;
        return t;
    }

    bool same_shape(const tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : *data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }

private:
    std::size_t offset(std::initializer_list<std::size_t> idx) const {
        if (idx.size() != shape_.size()) throw index_error("index rank mismatch");
        std::size_t off = 0;
        std::size_t i = 0;
        for (std::size_t v : idx) {
            if (v >= shape_[i]) throw index_error("index out of bounds");
            off = off * shape_[i] + v;
            ++i;
        }
        return off;
    }

    std::vector<std::size_t> shape_;
    std::shared_ptr<std::vector<double>> data_;
    std::shared_ptr<std::vector<double>> grad_;
    bool requires_grad_ = false;

    friend class tape;
    friend tensor make_traced(std::vector<std::size_t>, std::vector<double>, bool);
    friend std::vector<double>* grad_buffer(tensor&);
};

inline std::vector<double>* grad_buffer(tensor& t) { return t.grad_ ? t.grad_.get() : nullptr; }

// Linear tape of recorded operations. Single-threaded per training step;
// independent tapes may run on independent threads (the active pointer is
// thread-local). Nodes are appended in construction order, which is a
// topological order by definition, so one reverse sweep visits each exactly once.
class tape {
public:
    struct scope {
        explicit scope(tape& t) : prev_(detail::active_tape()) { detail::active_tape() = &t; }
        ~scope() { detail::active_tape() = prev_; }
        scope(const scope&) = delete;
        scope& operator=(const scope&) = delete;

    private:
        tape* prev_;
    };

    static tape* active() { return detail::active_tape(); }

    std::size_t node_count() const { return nodes_.size(); }

    void record(std::function<void()> backward_fn) { nodes_.push_back(std::move(backward_fn)); }

    // Seeds d(loss)/d(loss) = 1 and replays the tape once, newest node first.
    void backward(tensor& loss) {
        if (loss.size() != 1) throw contract_error("backward needs a scalar loss");
        if (!loss.grad_) throw contract_error("loss is not attached to the tape");
        (*loss.grad_)[0] += 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

    void clear() { nodes_.clear(); }

private:
    std::vector<std::function<void()>> nodes_;
};

namespace detail {

inline tape*& active_tape() {
    thread_local tape* t = nullptr;
    return t;
}

inline bool tracing(const tensor& a) { return active_tape() != nullptr && a.requires_grad(); }

inline bool tracing(const tensor& a, const tensor& b) {
    return active_tape() != nullptr && (a.requires_grad() || b.requires_grad());
}

} // namespace detail

// Creates an op output: grad buffer + requires_grad only when a tape is live.
inline tensor make_traced(std::vector<std::size_t> shape, std::vector<double> data, bool traced) {
    tensor t(std::move(shape), std::move(data), false);
    if (traced) {
        t.requires_grad_ = true;
        t.grad_ = std::make_shared<std::vector<double>>(t.size(), 0.0);
    }
    return t;
}

// ----- raw kernels (shared by forward and backward passes) -----

namespace detail {

// c (+)= a[m x k] . b[k x n], all row-major.
inline void mm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            double av = arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c (+)= a[m x k] . b^T where b is [n x k].
inline void mm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
}

// c (+)= a^T . b where a is [k x m], b is [k x n].
inline void mm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a + p * m;
        const double* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            double av = arow[i];
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

inline void require_rank2(const tensor& t, const char* who) {
    if (t.rank() != 2) throw shape_error(std::string(who) + " needs a rank-2 tensor");
}

} // namespace detail

// ----- elementwise ops -----

namespace detail {

template <class Fwd, class Bwd>
tensor unary_op(const tensor& a, Fwd fwd, Bwd bwd_factory) {
    std::size_t n = a.size();
    std::vector<double> out(n);
    const double* x = a.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(x[i]);
    bool traced = tracing(a);
    tensor y = make_traced(a.shape(), std::move(out), traced);
    if (traced) active_tape()->record(bwd_factory(a, y));
    return y;
}

} // namespace detail

inline tensor add(const tensor& a, const tensor& b) {
    if (!a.same_shape(b)) throw shape_error("add: operand shapes differ");
    std::size_t n = a.size();
    std::vector<double> out(n);
    const double *x = a.data(), *y = b.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
    bool traced = detail::tracing(a, b);
    tensor r = make_traced(a.shape(), std::move(out), traced);
    if (traced) {
        tensor ac = a, bc = b, rc = r;
        tape::active()->record([ac, bc, rc]() mutable {
            const auto& g = rc.grad();
            if (auto* ga = grad_buffer(ac))
                for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
            if (auto* gb = grad_buffer(bc))
                for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i];
        });
    }
    return r;
}

inline tensor sub(const tensor& a, const tensor& b) {
    if (!a.same_shape(b)) throw shape_error("sub: operand shapes differ");
    std::size_t n = a.size();
    std::vector<double> out(n);
    const double *x = a.data(), *y = b.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - y[i];
    bool traced = detail::tracing(a, b);
    tensor r = make_traced(a.shape(), std::move(out), traced);
    if (traced) {
        tensor ac = a, bc = b, rc = r;
        tape::active()->record([ac, bc, rc]() mutable {
            const auto& g = rc.grad();
            if (auto* ga = grad_buffer(ac))
                for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
            if (auto* gb = grad_buffer(bc))
                for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
        });
    }
    return r;
}

inline tensor mul(const tensor& a, const tensor& b) {
    if (!a.same_shape(b)) throw shape_error("mul: operand shapes differ");
    std::size_t n = a.size();
    std::vector<double> out(n);
    const double *x = a.data(), *y = b.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
    bool traced = detail::tracing(a, b);
    tensor r = make_traced(a.shape(), std::move(out), traced);
    if (traced) {
        tensor ac = a, bc = b, rc = r;
        tape::active()->record([ac, bc, rc]() mutable {
            const auto& g = rc.grad();
            const double *xv = ac.data(), *yv = bc.data();
            if (auto* ga = grad_buffer(ac))
                for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * yv[i];
            if (auto* gb = grad_buffer(bc))
                for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * xv[i];
        });
    }
    return r;
}

inline tensor scale(const tensor& a, double c) {
    return detail::unary_op(
        a, [c](double v) { return v * c; },
        [c](const tensor& ac, const tensor& yc) {
            return [ac, yc, c]() mutable {
                const auto& g = yc.grad();
                if (auto* ga = grad_buffer(const_cast<tensor&>(ac)))
                    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * c;
            };
        });
}

inline tensor add_scalar(const tensor& a, double c) {
    return detail::unary_op(
        a, [c](double v) { return v + c; },
        [](const tensor& ac, const tensor& yc) {
            return [ac, yc]() mutable {
                const auto& g = yc.grad();
                if (auto* ga = grad_buffer(const_cast<tensor&>(ac)))
                    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
            };
        });
}

inline tensor neg(const tensor& a) { return scale(a, -1.0); }

inline tensor exp(const tensor& a) {
    return detail::unary_op(
        a, [](double v) { return std::exp(v); },
        [](const tensor& ac, const tensor& yc) {
            return [ac, yc]() mutable {
                const auto& g = yc.grad();
                const double* yv = yc.data();
                if (auto* ga = grad_buffer(const_cast<tensor&>(ac)))
                    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * yv[i];
            };
        });
}

inline tensor log(const tensor& a) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.data()[i] <= 0.0) throw numeric_error("log: non-positive input");
    return detail::unary_op(
        a, [](double v) { return std::log(v); },
        [](const tensor& ac, const tensor& yc) {
            return [ac, yc]() mutable {
                const auto& g = yc.grad();
                const double* xv = ac.data();
                if (auto* ga = grad_buffer(const_cast<tensor&>(ac)))
                    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] / xv[i];
            };
        });
}

inline tensor sqrt(const tensor& a) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.data()[i] < 0.0) throw numeric_error("sqrt: negative input");
    return detail::unary_op(
        a, [](double v) { return std::sqrt(v); },
        [](const tensor& ac, const tensor& yc) {
            return [ac, yc]() mutable {
                const auto& g = yc.grad();
                const double* yv = yc.data();
                if (auto* ga = grad_buffer(const_cast<tensor&>(ac)))
                    for (std::size_t i = 0; i < g.size(); ++i)
                        (*ga)[i] += g[i] * 0.5 / (yv[i] == 0.0 ? 1e-300 : yv[i]);
            };
        });
}

// Exact erf-based gelu: x * Phi(x); d/dx = Phi(x) + x * phi(x).
inline tensor gelu(const tensor& a) {
    auto cdf = [](double v) { return 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2)); };
    return detail::unary_op(
        a, [cdf](double v) { return v * cdf(v); },
        [cdf](const tensor& ac, const tensor& yc) {
            return [ac, yc, cdf]() mutable {
                const auto& g = yc.grad();
                const double* xv = ac.data();
                if (auto* ga = grad_buffer(const_cast<tensor&>(ac))) {
                    const double inv_sqrt2pi = 0.3989422804014327;
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        double x = xv[i];
                        double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
                        (*ga)[i] += g[i] * (cdf(x) + x * pdf);
                    }
                }
            };
        });
}

// ----- matmul / transpose / softmax -----

inline tensor matmul(const tensor& a, const tensor& b) {
    detail::require_rank2(a, "matmul lhs");
    detail::require_rank2(b, "matmul rhs");
    std::size_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2) throw shape_error("matmul: inner dims " + std::to_string(k) + " vs " +
                                   std::to_string(k2));
    std::vector<double> out(m * n);
    detail::mm_nn(a.data(), b.data(), out.data(), m, k, n, false);
    bool traced = detail::tracing(a, b);
    tensor r = make_traced({m, n}, std::move(out), traced);
    if (traced) {
        tensor ac = a, bc = b, rc = r;
        tape::active()->record([ac, bc, rc, m, k, n]() mutable {
            const double* g = rc.grad().data();
            if (auto* ga = grad_buffer(ac)) detail::mm_nt(g, bc.data(), ga->data(), m, n, k, true);
            if (auto* gb = grad_buffer(bc)) detail::mm_tn(ac.data(), g, gb->data(), k, m, n, true);
        });
    }
    return r;
}

inline tensor transpose(const tensor& a) {
    detail::require_rank2(a, "transpose");
    std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m * n);
    const double* x = a.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
    bool traced = detail::tracing(a);
    tensor r = make_traced({n, m}, std::move(out), traced);
    if (traced) {
        tensor ac = a, rc = r;
        tape::active()->record([ac, rc, m, n]() mutable {
            const auto& g = rc.grad();
            if (auto* ga = grad_buffer(ac))
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += g[j * m + i];
        });
    }
    return r;
}

// Row-wise softmax of (scale * a), stabilized by row-max subtraction.
// Every output row sums to 1 up to rounding.
inline tensor softmax_rows(const tensor& a, double sm_scale) {
    detail::require_rank2(a, "softmax_rows");
    if (!(sm_scale > 0.0)) throw contract_error("softmax_rows: scale must be > 0");
    if (!a.all_finite()) throw numeric_error("softmax_rows: non-finite input");
    std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m * n);
    const double* x = a.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = x + i * n;
        double mx = row[0] * sm_scale;
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j] * sm_scale);
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double e = std::exp(row[j] * sm_scale - mx);
            out[i * n + j] = e;
            sum += e;
        }
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= sum;
    }
    bool traced = detail::tracing(a);
    tensor r = make_traced({m, n}, std::move(out), traced);
    if (traced) {
        tensor ac = a, rc = r;
        tape::active()->record([ac, rc, m, n, sm_scale]() mutable {
            const auto& g = rc.grad();
            const double* y = rc.data();
            if (auto* ga = grad_buffer(ac)) {
                for (std::size_t i = 0; i < m; ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
                    for (std::size_t j = 0; j < n; ++j)
                        (*ga)[i * n + j] += sm_scale * y[i * n + j] * (g[i * n + j] - dot);
                }
            }
        });
    }
    return r;
}

// ----- shape ops -----

inline tensor reshape(const tensor& a, std::vector<std::size_t> shape) {
    if (tensor::count(shape) != a.size()) throw shape_error("reshape: volume mismatch");
    bool traced = detail::tracing(a);
    tensor r = make_traced(std::move(shape), std::vector<double>(a.values()), traced);
    if (traced) {
        tensor ac = a, rc = r;
        tape::active()->record([ac, rc]() mutable {
            const auto& g = rc.grad();
            if (auto* ga = grad_buffer(ac))
                for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        });
    }
    return r;
}

namespace detail {

// Views any tensor as [before, axis_dim, after] around `axis`.
inline void axis_split(const std::vector<std::size_t>& shape, std::size_t axis,
                       std::size_t& before, std::size_t& adim, std::size_t& after) {
    if (axis >= shape.size()) throw index_error("axis out of rank");
    before = 1;
    after = 1;
    for (std::size_t i = 0; i < axis; ++i) before *= shape[i];
    adim = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) after *= shape[i];
}

} // namespace detail

inline tensor slice(const tensor& a, std::size_t axis, std::size_t start, std::size_t len) {
    std::size_t before, adim, after;
    detail::axis_split(a.shape(), axis, before, adim, after);
    if (start + len > adim) throw index_error("slice out of bounds");
    std::vector<std::size_t> oshape = a.shape();
    oshape[axis] = len;
    std::vector<double> out(before * len * after);
    const double* x = a.data();
    for (std::size_t b = 0; b < before; ++b)
        for (std::size_t i = 0; i < len; ++i)
            std::copy(x + (b * adim + start + i) * after, x + (b * adim + start + i + 1) * after,
                      out.data() + (b * len + i) * after);
    bool traced = detail::tracing(a);
    tensor r = make_traced(std::move(oshape), std::move(out), traced);
    if (traced) {
        tensor ac = a, rc = r;
        tape::active()->record([ac, rc, before, adim, after, start, len]() mutable {
            const auto& g = rc.grad();
            if (auto* ga = grad_buffer(ac))
                for (std::size_t b = 0; b < before; ++b)
                    for (std::size_t i = 0; i < len; ++i)
                        for (std::size_t j = 0; j < after; ++j)
                            (*ga)[(b * adim + start + i) * after + j] +=
                                g[(b * len + i) * after + j];
        });
    }
    return r;
}

inline tensor concat(const std::vector<tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw contract_error("concat: no parts");
    std::vector<std::size_t> oshape = parts[0].shape();
    if (axis >= oshape.size()) throw index_error("axis out of rank");
    std::size_t total = 0;
    for (const tensor& p : parts) {
        if (p.rank() != oshape.size()) throw shape_error("concat: rank mismatch");
        for (std::size_t i = 0; i < oshape.size(); ++i)
            if (i != axis && p.shape()[i] != oshape[i])
                throw shape_error("concat: non-axis dims differ");
        total += p.shape()[axis];
    }
    oshape[axis] = total;
    std::size_t before, adim, after;
    detail::axis_split(oshape, axis, before, adim, after);
    std::vector<double> out(before * adim * after);
    std::size_t pos = 0;
    for (const tensor& p : parts) {
        std::size_t plen = p.shape()[axis];
        const double* x = p.data();
        for (std::size_t b = 0; b < before; ++b)
            std::copy(x + b * plen * after, x + (b + 1) * plen * after,
                      out.data() + (b * adim + pos) * after);
        pos += plen;
    }
    bool traced = false;
    if (tape::active())
        for (const tensor& p : parts) traced = traced || p.requires_grad();
    tensor r = make_traced(std::move(oshape), std::move(out), traced);
    if (traced) {
        std::vector<tensor> pc = parts;
        tensor rc = r;
        tape::active()->record([pc, rc, before, adim, after]() mutable {
            const auto& g = rc.grad();
            std::size_t pos = 0;
            for (tensor& p : pc) {
                std::size_t plen = p.shape().empty() ? 1 : p.size() / (before * after);
                if (auto* gp = grad_buffer(p))
                    for (std::size_t b = 0; b < before; ++b)
                        for (std::size_t i = 0; i < plen * after; ++i)
                            (*gp)[b * plen * after + i] += g[(b * adim + pos) * after + i];
                pos += plen;
            }
        });
    }
    return r;
}

inline std::vector<tensor> split(const tensor& a, std::size_t axis,
                                 const std::vector<std::size_t>& sizes) {
    std::size_t before, adim, after;
    detail::axis_split(a.shape(), axis, before, adim, after);
    std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
    if (total != adim) throw shape_error("split: sizes do not cover the axis");
    std::vector<tensor> out;
    std::size_t pos = 0;
    for (std::size_t s : sizes) {
        out.push_back(slice(a, axis, pos, s));
        pos += s;
    }
    return out;
}

// ----- reductions -----

inline tensor sum(const tensor& a) {
    double s = 0.0;
    const double* x = a.data();
    for (std::size_t i = 0; i < a.size(); ++i) s += x[i];
    bool traced = detail::tracing(a);
    tensor r = make_traced({}, {s}, traced);
    if (traced) {
        tensor ac = a, rc = r;
        tape::active()->record([ac, rc]() mutable {
            double g = rc.grad()[0];
            if (auto* ga = grad_buffer(ac))
                for (double& v : *ga) v += g;
        });
    }
    return r;
}

inline tensor mean(const tensor& a) {
    if (a.size() == 0) throw contract_error("mean of empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

// Mean squared error over all elements; differentiable composite.
inline tensor mse(const tensor& a, const tensor& b) {
    tensor d = sub(a, b);
    return mean(mul(d, d));
}

} // namespace dintr
