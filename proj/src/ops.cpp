#include "stn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace stn::ops {

namespace {

using detail::Node;
using detail::TensorImpl;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                                shape_str(b));
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const std::string& why) {
    throw std::invalid_argument(std::string(op) + ": shape " + shape_str(a) + " " + why);
}

// Gradient buffer of t, allocated on first use; null when t takes no gradient.
double* grad_of(const Tensor& t) {
    if (!t.defined() || !t.requires_grad()) return nullptr;
    auto& impl = t.impl();
    if (impl.grad.empty()) impl.grad.assign(impl.values.size(), 0.0);
    return impl.grad.data();
}

template <class Backward>
Tensor make_result(Shape shape, std::vector<double> values, const char* op, std::initializer_list<Tensor> inputs,
                   Backward&& backward) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->values = std::move(values);
    bool needs = false;
    if (grad_enabled()) {
        for (const auto& t : inputs) needs = needs || (t.defined() && t.requires_grad());
    }
    if (needs) {
        impl->requires_grad = true;
        auto node = std::make_shared<Node>();
        node->op = op;
        for (const auto& t : inputs) {
            if (t.defined()) node->inputs.push_back(t.impl_ptr());
        }
        node->backward = std::forward<Backward>(backward);
        impl->node = std::move(node);
    }
    return Tensor::wrap(std::move(impl));
}

template <class Backward>
Tensor make_result_n(Shape shape, std::vector<double> values, const char* op, std::span<const Tensor> inputs,
                     Backward&& backward) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->values = std::move(values);
    bool needs = false;
    if (grad_enabled()) {
        for (const auto& t : inputs) needs = needs || t.requires_grad();
    }
    if (needs) {
        impl->requires_grad = true;
        auto node = std::make_shared<Node>();
        node->op = op;
        for (const auto& t : inputs) node->inputs.push_back(t.impl_ptr());
        node->backward = std::forward<Backward>(backward);
        impl->node = std::move(node);
    }
    return Tensor::wrap(std::move(impl));
}

bool is_suffix(const Shape& full, const Shape& part) {
    if (part.size() > full.size()) return false;
    return std::equal(part.rbegin(), part.rend(), full.rbegin());
}

// Unary elementwise op: f(x) forward, df(x, y) derivative.
template <class F, class DF>
Tensor unary(const Tensor& a, const char* op, F f, DF df) {
    const auto av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
    return make_result(a.shape(), std::move(out), op, {a}, [a, df](const TensorImpl& o) {
        double* ga = grad_of(a);
        if (!ga) return;
        const auto av = a.values();
        for (std::size_t i = 0; i < av.size(); ++i) ga[i] += o.grad[i] * df(av[i], o.values[i]);
    });
}

std::size_t product(const Shape& s, std::size_t from, std::size_t to) {
    std::size_t n = 1;
    for (std::size_t i = from; i < to; ++i) n *= s[i];
    return n;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (as.size() < 2 || bs.size() != 2 || as.back() != bs[0]) shape_error("matmul", as, bs);
    const std::size_t k = bs[0], n = bs[1];
    const std::size_t m = a.numel() / k;
    Shape os = as;
    os.back() = n;
    std::vector<double> out(m * n);
    MutMap(out.data(), m, n).noalias() = ConstMap(a.values().data(), m, k) * ConstMap(b.values().data(), k, n);
    return make_result(std::move(os), std::move(out), "matmul", {a, b}, [a, b, m, k, n](const TensorImpl& o) {
        ConstMap g(o.grad.data(), m, n);
        if (double* ga = grad_of(a)) {
            MutMap(ga, m, k).noalias() += g * ConstMap(b.values().data(), k, n).transpose();
        }
        if (double* gb = grad_of(b)) {
            MutMap(gb, k, n).noalias() += ConstMap(a.values().data(), m, k).transpose() * g;
        }
    });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0]) shape_error("bmm", as, bs);
    const std::size_t batch = as[0], m = as[1], k = as[2];
    const std::size_t bk = transpose_b ? bs[2] : bs[1];
    const std::size_t n = transpose_b ? bs[1] : bs[2];
    if (bk != k) shape_error("bmm", as, bs);
    std::vector<double> out(batch * m * n);
    for (std::size_t i = 0; i < batch; ++i) {
        ConstMap A(a.values().data() + i * m * k, m, k);
        MutMap C(out.data() + i * m * n, m, n);
        if (transpose_b) {
            C.noalias() = A * ConstMap(b.values().data() + i * n * k, n, k).transpose();
        } else {
            C.noalias() = A * ConstMap(b.values().data() + i * k * n, k, n);
        }
    }
    return make_result({batch, m, n}, std::move(out), "bmm", {a, b},
                       [a, b, batch, m, k, n, transpose_b](const TensorImpl& o) {
                           double* ga = grad_of(a);
                           double* gb = grad_of(b);
                           for (std::size_t i = 0; i < batch; ++i) {
                               ConstMap G(o.grad.data() + i * m * n, m, n);
                               ConstMap A(a.values().data() + i * m * k, m, k);
                               if (transpose_b) {
                                   ConstMap B(b.values().data() + i * n * k, n, k);
                                   if (ga) MutMap(ga + i * m * k, m, k).noalias() += G * B;
                                   if (gb) MutMap(gb + i * n * k, n, k).noalias() += G.transpose() * A;
                               } else {
                                   ConstMap B(b.values().data() + i * k * n, k, n);
                                   if (ga) MutMap(ga + i * m * k, m, k).noalias() += G * B.transpose();
                                   if (gb) MutMap(gb + i * k * n, k, n).noalias() += A.transpose() * G;
                               }
                           }
                       });
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!is_suffix(a.shape(), b.shape())) shape_error("add", a.shape(), b.shape());
    const auto av = a.values();
    const auto bv = b.values();
    const std::size_t inner = bv.size();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); i += inner) {
        for (std::size_t j = 0; j < inner; ++j) out[i + j] = av[i + j] + bv[j];
    }
    return make_result(a.shape(), std::move(out), "add", {a, b}, [a, b, inner](const TensorImpl& o) {
        if (double* ga = grad_of(a)) {
            for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
        }
        if (double* gb = grad_of(b)) {
            for (std::size_t i = 0; i < o.grad.size(); i += inner) {
                for (std::size_t j = 0; j < inner; ++j) gb[j] += o.grad[i + j];
            }
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (!is_suffix(a.shape(), b.shape())) shape_error("sub", a.shape(), b.shape());
    const auto av = a.values();
    const auto bv = b.values();
    const std::size_t inner = bv.size();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); i += inner) {
        for (std::size_t j = 0; j < inner; ++j) out[i + j] = av[i + j] - bv[j];
    }
    return make_result(a.shape(), std::move(out), "sub", {a, b}, [a, b, inner](const TensorImpl& o) {
        if (double* ga = grad_of(a)) {
            for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
        }
        if (double* gb = grad_of(b)) {
            for (std::size_t i = 0; i < o.grad.size(); i += inner) {
                for (std::size_t j = 0; j < inner; ++j) gb[j] -= o.grad[i + j];
            }
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (!is_suffix(a.shape(), b.shape())) shape_error("mul", a.shape(), b.shape());
    const auto av = a.values();
    const auto bv = b.values();
    const std::size_t inner = bv.size();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); i += inner) {
        for (std::size_t j = 0; j < inner; ++j) out[i + j] = av[i + j] * bv[j];
    }
    return make_result(a.shape(), std::move(out), "mul", {a, b}, [a, b, inner](const TensorImpl& o) {
        const auto av = a.values();
        const auto bv = b.values();
        if (double* ga = grad_of(a)) {
            for (std::size_t i = 0; i < o.grad.size(); i += inner) {
                for (std::size_t j = 0; j < inner; ++j) ga[i + j] += o.grad[i + j] * bv[j];
            }
        }
        if (double* gb = grad_of(b)) {
            for (std::size_t i = 0; i < o.grad.size(); i += inner) {
                for (std::size_t j = 0; j < inner; ++j) gb[j] += o.grad[i + j] * av[i + j];
            }
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    return unary(
        a, "scale", [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
    return unary(
        a, "add_scalar", [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& a) {
    return unary(
        a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    for (double x : a.values()) {
        if (!(x > 0.0)) throw std::invalid_argument("log: non-positive input " + std::to_string(x));
    }
    return unary(
        a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        a, "sigmoid",
        [](double x) {
            if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
    return unary(
        a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
    return unary(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    return unary(
        a, "gelu", [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
        [inv_sqrt_2pi](double x, double) {
            return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
        });
}

Tensor pow(const Tensor& a, double exponent) {
    for (double x : a.values()) {
        if (x < 0.0) throw std::invalid_argument("pow: negative base " + std::to_string(x));
    }
    return unary(
        a, "pow",
        [exponent](double x) { return exponent == 0.0 ? 1.0 : std::pow(x, exponent); },
        [exponent](double x, double) {
            if (exponent == 0.0) return 0.0;
            if (x == 0.0) return exponent == 1.0 ? 1.0 : 0.0;
            return exponent * std::pow(x, exponent - 1.0);
        });
}

Tensor clamp_min(const Tensor& a, double floor) {
    return unary(
        a, "clamp_min", [floor](double x) { return x > floor ? x : floor; },
        [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const Shape& first = parts[0].shape();
    if (axis >= first.size()) shape_error("concat", first, "has no axis " + std::to_string(axis));
    Shape os = first;
    os[axis] = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != first.size()) shape_error("concat", first, s);
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i != axis && s[i] != first[i]) shape_error("concat", first, s);
        }
        os[axis] += s[axis];
    }
    const std::size_t outer = product(first, 0, axis);
    const std::size_t out_inner = product(os, axis, os.size());
    std::vector<double> out(outer * out_inner);
    std::vector<std::size_t> widths;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.numel() / outer;
        const auto pv = p.values();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(pv.data() + o * w, w, out.data() + o * out_inner + offset);
        }
        widths.push_back(w);
        offset += w;
    }
    std::vector<Tensor> held(parts.begin(), parts.end());
    return make_result_n(std::move(os), std::move(out), "concat", parts,
                         [held, widths, outer, out_inner](const TensorImpl& o) {
                             std::size_t offset = 0;
                             for (std::size_t p = 0; p < held.size(); ++p) {
                                 const std::size_t w = widths[p];
                                 if (double* g = grad_of(held[p])) {
                                     for (std::size_t r = 0; r < outer; ++r) {
                                         const double* src = o.grad.data() + r * out_inner + offset;
                                         for (std::size_t j = 0; j < w; ++j) g[r * w + j] += src[j];
                                     }
                                 }
                                 offset += w;
                             }
                         });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
    return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const std::size_t n = x.shape().back();
    if (gamma.defined() && gamma.shape() != Shape{n}) shape_error("layer_norm", x.shape(), gamma.shape());
    if (beta.defined() && beta.shape() != Shape{n}) shape_error("layer_norm", x.shape(), beta.shape());
    const std::size_t rows = x.numel() / n;
    const auto xv = x.values();
    std::vector<double> xhat(x.numel());
    std::vector<double> inv_std(rows);
    std::vector<double> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += row[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[r] = inv;
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (row[j] - mu) * inv;
            xhat[r * n + j] = h;
            double y = h;
            if (gamma.defined()) y *= gamma.values()[j];
            if (beta.defined()) y += beta.values()[j];
            out[r * n + j] = y;
        }
    }
    return make_result(x.shape(), std::move(out), "layer_norm", {x, gamma, beta},
                       [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), n,
                        rows](const TensorImpl& o) {
                           double* gx = grad_of(x);
                           double* gg = grad_of(gamma);
                           double* gbeta = grad_of(beta);
                           std::vector<double> dxhat(n);
                           for (std::size_t r = 0; r < rows; ++r) {
                               const double* dy = o.grad.data() + r * n;
                               const double* h = xhat.data() + r * n;
                               double sum_d = 0.0, sum_dh = 0.0;
                               for (std::size_t j = 0; j < n; ++j) {
                                   if (gg) gg[j] += dy[j] * h[j];
                                   if (gbeta) gbeta[j] += dy[j];
                                   dxhat[j] = gamma.defined() ? dy[j] * gamma.values()[j] : dy[j];
                                   sum_d += dxhat[j];
                                   sum_dh += dxhat[j] * h[j];
                               }
                               if (!gx) continue;
                               const double k = inv_std[r] / static_cast<double>(n);
                               for (std::size_t j = 0; j < n; ++j) {
                                   gx[r * n + j] +=
                                       k * (static_cast<double>(n) * dxhat[j] - sum_d - h[j] * sum_dh);
                               }
                           }
                       });
}

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids, const Shape& id_shape) {
    if (table.rank() != 2) shape_error("embedding", table.shape(), "is not a [V, D] table");
    if (shape_numel(id_shape) != ids.size()) {
        shape_error("embedding", id_shape, "does not hold " + std::to_string(ids.size()) + " ids");
    }
    const std::size_t vocab = table.dim(0), d = table.dim(1);
    for (auto id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
            throw std::invalid_argument("embedding: id " + std::to_string(id) + " outside vocabulary of size " +
                                        std::to_string(vocab));
        }
    }
    std::vector<double> out(ids.size() * d);
    const auto tv = table.values();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
    }
    Shape os = id_shape;
    os.push_back(d);
    std::vector<std::int32_t> held(ids.begin(), ids.end());
    return make_result(std::move(os), std::move(out), "embedding", {table},
                       [table, held = std::move(held), d](const TensorImpl& o) {
                           double* g = grad_of(table);
                           if (!g) return;
                           for (std::size_t i = 0; i < held.size(); ++i) {
                               double* row = g + static_cast<std::size_t>(held[i]) * d;
                               for (std::size_t j = 0; j < d; ++j) row[j] += o.grad[i * d + j];
                           }
                       });
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must lie in [0, 1)");
    if (!training || rate == 0.0) return x;
    const double keep = 1.0 - rate;
    std::bernoulli_distribution draw(keep);
    std::vector<double> factor(x.numel());
    for (auto& f : factor) f = draw(rng) ? 1.0 / keep : 0.0;
    std::vector<double> out(x.numel());
    const auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor[i];
    return make_result(x.shape(), std::move(out), "dropout", {x}, [x, factor = std::move(factor)](const TensorImpl& o) {
        if (double* g = grad_of(x)) {
            for (std::size_t i = 0; i < factor.size(); ++i) g[i] += o.grad[i] * factor[i];
        }
    });
}

Tensor sum(const Tensor& x, std::size_t axis) {
    const Shape& s = x.shape();
    if (axis >= s.size()) shape_error("sum", s, "has no axis " + std::to_string(axis));
    const std::size_t outer = product(s, 0, axis), n = s[axis], inner = product(s, axis + 1, s.size());
    Shape os;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i != axis) os.push_back(s[i]);
    }
    if (os.empty()) os.push_back(1);
    std::vector<double> out(outer * inner, 0.0);
    const auto xv = x.values();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += xv[(o * n + k) * inner + i];
        }
    }
    return make_result(std::move(os), std::move(out), "sum", {x}, [x, outer, n, inner](const TensorImpl& o) {
        double* g = grad_of(x);
        if (!g) return;
        for (std::size_t a = 0; a < outer; ++a) {
            for (std::size_t k = 0; k < n; ++k) {
                for (std::size_t i = 0; i < inner; ++i) g[(a * n + k) * inner + i] += o.grad[a * inner + i];
            }
        }
    });
}

Tensor mean(const Tensor& x, std::size_t axis) {
    return scale(sum(x, axis), 1.0 / static_cast<double>(x.dim(axis)));
}

Tensor sum_all(const Tensor& x) {
    double total = 0.0;
    for (double v : x.values()) total += v;
    return make_result({1}, {total}, "sum_all", {x}, [x](const TensorImpl& o) {
        if (double* g = grad_of(x)) {
            for (std::size_t i = 0; i < x.numel(); ++i) g[i] += o.grad[0];
        }
    });
}

Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.numel())); }

namespace {

Tensor softmax_impl(const Tensor& scores, const Tensor* mask) {
    const std::size_t n = scores.shape().back();
    const std::size_t rows = scores.numel() / n;
    const auto sv = scores.values();
    std::span<const double> mv;
    if (mask) {
        if (mask->shape() != scores.shape()) shape_error("masked_softmax", scores.shape(), mask->shape());
        mv = mask->values();
        for (double m : mv) {
            if (m != 0.0 && m != 1.0) throw std::invalid_argument("masked_softmax: mask values must be 0 or 1");
        }
    }
    std::vector<double> out(scores.numel(), 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* s = sv.data() + r * n;
        const double* m = mask ? mv.data() + r * n : nullptr;
        double mx = -std::numeric_limits<double>::infinity();
        bool any = false;
        for (std::size_t j = 0; j < n; ++j) {
            if (m && m[j] == 0.0) continue;
            any = true;
            mx = std::max(mx, s[j]);
        }
        if (!any) throw std::invalid_argument("masked_softmax: row " + std::to_string(r) + " has no valid position");
        double total = 0.0;
        double* y = out.data() + r * n;
        for (std::size_t j = 0; j < n; ++j) {
            if (m && m[j] == 0.0) continue;
            y[j] = std::exp(s[j] - mx);
            total += y[j];
        }
        for (std::size_t j = 0; j < n; ++j) y[j] /= total;
    }
    return make_result(scores.shape(), std::move(out), mask ? "masked_softmax" : "softmax", {scores},
                       [scores, n, rows](const TensorImpl& o) {
                           double* g = grad_of(scores);
                           if (!g) return;
                           for (std::size_t r = 0; r < rows; ++r) {
                               const double* y = o.values.data() + r * n;
                               const double* dy = o.grad.data() + r * n;
                               double dot = 0.0;
                               for (std::size_t j = 0; j < n; ++j) dot += y[j] * dy[j];
                               // Masked positions have y = 0 and therefore receive nothing.
                               for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (dy[j] - dot);
                           }
                       });
}

}  // namespace

Tensor masked_softmax(const Tensor& scores, const Tensor& mask) { return softmax_impl(scores, &mask); }
Tensor softmax(const Tensor& scores) { return softmax_impl(scores, nullptr); }

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) shape_error("reshape", x.shape(), shape);
    std::vector<double> out(x.values().begin(), x.values().end());
    return make_result(std::move(shape), std::move(out), "reshape", {x}, [x](const TensorImpl& o) {
        if (double* g = grad_of(x)) {
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
        }
    });
}

Tensor transpose_last(const Tensor& x) {
    const Shape& s = x.shape();
    if (s.size() < 2) shape_error("transpose_last", s, "needs at least two axes");
    const std::size_t a = s[s.size() - 2], b = s.back();
    const std::size_t outer = x.numel() / (a * b);
    Shape os = s;
    std::swap(os[os.size() - 2], os.back());
    std::vector<double> out(x.numel());
    const auto xv = x.values();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < a; ++i) {
            for (std::size_t j = 0; j < b; ++j) out[o * a * b + j * a + i] = xv[o * a * b + i * b + j];
        }
    }
    return make_result(std::move(os), std::move(out), "transpose_last", {x}, [x, outer, a, b](const TensorImpl& o) {
        double* g = grad_of(x);
        if (!g) return;
        for (std::size_t q = 0; q < outer; ++q) {
            for (std::size_t i = 0; i < a; ++i) {
                for (std::size_t j = 0; j < b; ++j) g[q * a * b + i * b + j] += o.grad[q * a * b + j * a + i];
            }
        }
    });
}

Tensor select(const Tensor& x, std::size_t axis, std::size_t index) {
    const Shape& s = x.shape();
    if (axis >= s.size() || index >= s[axis]) {
        shape_error("select", s, "has no index " + std::to_string(index) + " on axis " + std::to_string(axis));
    }
    const std::size_t outer = product(s, 0, axis), n = s[axis], inner = product(s, axis + 1, s.size());
    Shape os;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i != axis) os.push_back(s[i]);
    }
    if (os.empty()) os.push_back(1);
    std::vector<double> out(outer * inner);
    const auto xv = x.values();
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(xv.data() + (o * n + index) * inner, inner, out.data() + o * inner);
    }
    return make_result(std::move(os), std::move(out), "select", {x}, [x, outer, n, inner, index](const TensorImpl& o) {
        double* g = grad_of(x);
        if (!g) return;
        for (std::size_t a = 0; a < outer; ++a) {
            for (std::size_t i = 0; i < inner; ++i) g[(a * n + index) * inner + i] += o.grad[a * inner + i];
        }
    });
}

Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t end) {
    const Shape& s = x.shape();
    const std::size_t n = s.back();
    if (begin >= end || end > n) {
        shape_error("slice_last", s, "cannot slice [" + std::to_string(begin) + ", " + std::to_string(end) + ")");
    }
    const std::size_t rows = x.numel() / n, w = end - begin;
    Shape os = s;
    os.back() = w;
    std::vector<double> out(rows * w);
    const auto xv = x.values();
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(xv.data() + r * n + begin, w, out.data() + r * w);
    return make_result(std::move(os), std::move(out), "slice_last", {x}, [x, rows, n, w, begin](const TensorImpl& o) {
        double* g = grad_of(x);
        if (!g) return;
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < w; ++j) g[r * n + begin + j] += o.grad[r * w + j];
        }
    });
}

Tensor gather_positions(const Tensor& x, std::span<const std::size_t> positions) {
    const Shape& s = x.shape();
    if (s.size() != 3 || positions.size() != s[0]) {
        shape_error("gather_positions", s, "does not match " + std::to_string(positions.size()) + " positions");
    }
    const std::size_t batch = s[0], len = s[1], f = s[2];
    for (auto p : positions) {
        if (p >= len) shape_error("gather_positions", s, "has no position " + std::to_string(p));
    }
    std::vector<double> out(batch * f);
    const auto xv = x.values();
    for (std::size_t b = 0; b < batch; ++b) {
        std::copy_n(xv.data() + (b * len + positions[b]) * f, f, out.data() + b * f);
    }
    std::vector<std::size_t> held(positions.begin(), positions.end());
    return make_result({batch, f}, std::move(out), "gather_positions", {x},
                       [x, held = std::move(held), len, f](const TensorImpl& o) {
                           double* g = grad_of(x);
                           if (!g) return;
                           for (std::size_t b = 0; b < held.size(); ++b) {
                               for (std::size_t j = 0; j < f; ++j) g[(b * len + held[b]) * f + j] += o.grad[b * f + j];
                           }
                       });
}

Tensor gather_columns(const Tensor& x, std::span<const std::size_t> index) {
    const Shape& s = x.shape();
    if (s.size() != 2 || index.size() != s[0]) {
        shape_error("gather_columns", s, "does not match " + std::to_string(index.size()) + " indices");
    }
    const std::size_t rows = s[0], cols = s[1];
    for (auto c : index) {
        if (c >= cols) shape_error("gather_columns", s, "has no column " + std::to_string(c));
    }
    std::vector<double> out(rows);
    for (std::size_t r = 0; r < rows; ++r) out[r] = x.values()[r * cols + index[r]];
    std::vector<std::size_t> held(index.begin(), index.end());
    return make_result({rows}, std::move(out), "gather_columns", {x}, [x, held = std::move(held), cols](const TensorImpl& o) {
        double* g = grad_of(x);
        if (!g) return;
        for (std::size_t r = 0; r < held.size(); ++r) g[r * cols + held[r]] += o.grad[r];
    });
}

Tensor split_heads(const Tensor& x, std::size_t heads) {
    const Shape& s = x.shape();
    if (s.size() != 3 || heads == 0 || s[2] % heads != 0) {
        shape_error("split_heads", s, "cannot split into " + std::to_string(heads) + " heads");
    }
    const std::size_t batch = s[0], len = s[1], dh = s[2] / heads;
    std::vector<double> out(x.numel());
    const auto xv = x.values();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < len; ++t) {
            for (std::size_t h = 0; h < heads; ++h) {
                std::copy_n(xv.data() + (b * len + t) * s[2] + h * dh, dh,
                            out.data() + ((b * heads + h) * len + t) * dh);
            }
        }
    }
    return make_result({batch * heads, len, dh}, std::move(out), "split_heads", {x},
                       [x, batch, len, heads, dh](const TensorImpl& o) {
                           double* g = grad_of(x);
                           if (!g) return;
                           const std::size_t d = heads * dh;
                           for (std::size_t b = 0; b < batch; ++b) {
                               for (std::size_t t = 0; t < len; ++t) {
                                   for (std::size_t h = 0; h < heads; ++h) {
                                       const double* src = o.grad.data() + ((b * heads + h) * len + t) * dh;
                                       double* dst = g + (b * len + t) * d + h * dh;
                                       for (std::size_t j = 0; j < dh; ++j) dst[j] += src[j];
                                   }
                               }
                           }
                       });
}

Tensor merge_heads(const Tensor& x, std::size_t heads) {
    const Shape& s = x.shape();
    if (s.size() != 3 || heads == 0 || s[0] % heads != 0) {
        shape_error("merge_heads", s, "cannot merge " + std::to_string(heads) + " heads");
    }
    const std::size_t batch = s[0] / heads, len = s[1], dh = s[2], d = heads * dh;
    std::vector<double> out(x.numel());
    const auto xv = x.values();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t t = 0; t < len; ++t) {
                std::copy_n(xv.data() + ((b * heads + h) * len + t) * dh, dh, out.data() + (b * len + t) * d + h * dh);
            }
        }
    }
    return make_result({batch, len, d}, std::move(out), "merge_heads", {x},
                       [x, batch, len, heads, dh, d](const TensorImpl& o) {
                           double* g = grad_of(x);
                           if (!g) return;
                           for (std::size_t b = 0; b < batch; ++b) {
                               for (std::size_t h = 0; h < heads; ++h) {
                                   for (std::size_t t = 0; t < len; ++t) {
                                       const double* src = o.grad.data() + (b * len + t) * d + h * dh;
                                       double* dst = g + ((b * heads + h) * len + t) * dh;
                                       for (std::size_t j = 0; j < dh; ++j) dst[j] += src[j];
                                   }
                               }
                           }
                       });
}

}  // namespace stn::ops
