#include "ratlab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ratlab::ad {

Var Graph::leaf(Tensor value) {
    if (!value.all_finite()) throw NumericError("leaf: non-finite value");
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    n.is_leaf = true;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
    if (!value.all_finite()) throw NumericError("constant: non-finite value");
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Graph::detach(Var v) {
    check_owned(v, "detach");
    return constant(v.value());
}

void Graph::check_owned(Var v, const char* what) const {
    if (!v.valid() || &v.graph() != this || v.id() >= nodes_.size()) {
        throw std::invalid_argument(std::string(what) + ": variable not recorded on this graph");
    }
}

Var Graph::record(std::string_view op, Tensor value, std::span<const Var> inputs,
                  Backward backward) {
    if (!value.all_finite()) {
        throw NumericError(std::string(op) + ": produced a non-finite value");
    }
    bool rg = false;
    for (Var in : inputs) {
        check_owned(in, "record");
        rg = rg || nodes_[in.id()].requires_grad;
    }
    Node n;
    n.value = std::move(value);
    n.requires_grad = rg;
    if (rg) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

void Graph::accumulate(Var v, std::span<const double> g) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (g.size() != n.value.size()) throw ShapeError("accumulate: gradient size mismatch");
    if (!n.has_grad) {
        n.grad = Tensor(n.value.shape(), std::vector<double>(g.begin(), g.end()));
        n.has_grad = true;
        return;
    }
    auto dst = n.grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

void Graph::accumulate(Var v, const Tensor& g) { accumulate(v, g.data()); }

std::vector<Tensor> Graph::grad(Var loss, std::span<const Var> leaves) {
    check_owned(loss, "grad");
    if (loss.value().size() != 1) {
        throw ShapeError("grad: loss must be a scalar, got " + shape_str(loss.shape()));
    }
    for (Var l : leaves) {
        check_owned(l, "grad");
        if (!nodes_[l.id()].is_leaf) throw std::invalid_argument("grad: variable is not a leaf");
    }
    for (auto& n : nodes_) {
        n.has_grad = false;
        n.grad = Tensor();
    }
    Node& top = nodes_[loss.id()];
    top.grad = Tensor(top.value.shape(), 1.0);
    top.has_grad = top.requires_grad;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.has_grad || !n.backward) continue;
        // Copy: the closure may accumulate into other nodes but never into i.
        const Tensor g = n.grad;
        n.backward(*this, g);
    }
    std::vector<Tensor> out;
    out.reserve(leaves.size());
    for (Var l : leaves) {
        const Node& n = nodes_[l.id()];
        out.push_back(n.has_grad ? n.grad : Tensor(n.value.shape(), 0.0));
    }
    return out;
}

Tensor Graph::grad(Var loss, Var leaf) {
    Var ls[] = {leaf};
    return std::move(grad(loss, ls).front());
}

// --- elementwise ------------------------------------------------------------

namespace {

enum class Bcast { none, a_scalar, b_scalar };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return Bcast::none;
    if (b.size() == 1) return Bcast::b_scalar;
    if (a.size() == 1) return Bcast::a_scalar;
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

template <typename F>
Tensor elementwise(const Tensor& a, const Tensor& b, Bcast k, F f) {
    if (k == Bcast::none) {
        Tensor out(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
        return out;
    }
    if (k == Bcast::b_scalar) {
        Tensor out(a.shape());
        const double s = b[0];
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], s);
        return out;
    }
    Tensor out(b.shape());
    const double s = a[0];
    for (std::size_t i = 0; i < b.size(); ++i) out[i] = f(s, b[i]);
    return out;
}

// Reduces a full-shape gradient onto an operand that may have been broadcast.
void accumulate_to(Graph& g, Var v, Tensor&& full) {
    if (v.size() == full.size()) {
        g.accumulate(v, full);
        return;
    }
    double s = 0.0;
    for (double x : full.data()) s += x;
    g.accumulate(v, std::span<const double>(&s, 1));
}

}  // namespace

Var add(Var a, Var b) {
    const auto k = broadcast_kind(a.value(), b.value(), "add");
    Tensor out = elementwise(a.value(), b.value(), k, [](double x, double y) { return x + y; });
    Var ins[] = {a, b};
    return a.graph().record("add", std::move(out), ins, [a, b](Graph& g, const Tensor& go) {
        accumulate_to(g, a, Tensor(go));
        accumulate_to(g, b, Tensor(go));
    });
}

Var sub(Var a, Var b) {
    const auto k = broadcast_kind(a.value(), b.value(), "sub");
    Tensor out = elementwise(a.value(), b.value(), k, [](double x, double y) { return x - y; });
    Var ins[] = {a, b};
    return a.graph().record("sub", std::move(out), ins, [a, b](Graph& g, const Tensor& go) {
        accumulate_to(g, a, Tensor(go));
        accumulate_to(g, b, go * -1.0);
    });
}

Var mul(Var a, Var b) {
    const auto k = broadcast_kind(a.value(), b.value(), "mul");
    Tensor out = elementwise(a.value(), b.value(), k, [](double x, double y) { return x * y; });
    Var ins[] = {a, b};
    return a.graph().record("mul", std::move(out), ins, [a, b](Graph& g, const Tensor& go) {
        const Tensor& av = a.value();
        const Tensor& bv = b.value();
        const std::size_t n = go.size();
        if (g.requires_grad(a)) {
            Tensor ga(go.shape());
            for (std::size_t i = 0; i < n; ++i) ga[i] = go[i] * (bv.size() == 1 ? bv[0] : bv[i]);
            accumulate_to(g, a, std::move(ga));
        }
        if (g.requires_grad(b)) {
            Tensor gb(go.shape());
            for (std::size_t i = 0; i < n; ++i) gb[i] = go[i] * (av.size() == 1 ? av[0] : av[i]);
            accumulate_to(g, b, std::move(gb));
        }
    });
}

Var div(Var a, Var b) {
    const auto k = broadcast_kind(a.value(), b.value(), "div");
    for (double d : b.value().data()) {
        if (d == 0.0) throw NumericError("div: division by zero");
    }
    Tensor out = elementwise(a.value(), b.value(), k, [](double x, double y) { return x / y; });
    Var ins[] = {a, b};
    return a.graph().record("div", std::move(out), ins, [a, b](Graph& g, const Tensor& go) {
        const Tensor& av = a.value();
        const Tensor& bv = b.value();
        const std::size_t n = go.size();
        auto a_at = [&](std::size_t i) { return av.size() == 1 ? av[0] : av[i]; };
        auto b_at = [&](std::size_t i) { return bv.size() == 1 ? bv[0] : bv[i]; };
        if (g.requires_grad(a)) {
            Tensor ga(go.shape());
            for (std::size_t i = 0; i < n; ++i) ga[i] = go[i] / b_at(i);
            accumulate_to(g, a, std::move(ga));
        }
        if (g.requires_grad(b)) {
            Tensor gb(go.shape());
            for (std::size_t i = 0; i < n; ++i) {
                const double bi = b_at(i);
                gb[i] = -go[i] * a_at(i) / (bi * bi);
            }
            accumulate_to(g, b, std::move(gb));
        }
    });
}

Var scale(Var a, double s) {
    Tensor out = a.value() * s;
    Var ins[] = {a};
    return a.graph().record("scale", std::move(out), ins,
                            [a, s](Graph& g, const Tensor& go) { g.accumulate(a, go * s); });
}

Var add_scalar(Var a, double s) {
    Tensor out = a.value();
    for (auto& v : out.data()) v += s;
    Var ins[] = {a};
    return a.graph().record("add_scalar", std::move(out), ins,
                            [a](Graph& g, const Tensor& go) { g.accumulate(a, go); });
}

Var neg(Var a) { return scale(a, -1.0); }

// --- linear algebra ---------------------------------------------------------

Var matmul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
        throw ShapeError("matmul: " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
    }
    const std::size_t m = av.dim(0), kk = av.dim(1), n = bv.dim(1);
    Tensor out = ratlab::matmul(av, bv);
    Var ins[] = {a, b};
    return a.graph().record("matmul", std::move(out), ins,
                            [a, b, m, kk, n](Graph& g, const Tensor& go) {
                                if (g.requires_grad(a)) {
                                    Tensor ga(Shape{m, kk});  // G * B^T
                                    gemm(go.data(), b.value().data(), ga.data(), m, n, kk, false,
                                         true);
                                    g.accumulate(a, ga);
                                }
                                if (g.requires_grad(b)) {
                                    Tensor gb(Shape{kk, n});  // A^T * G
                                    gemm(a.value().data(), go.data(), gb.data(), kk, m, n, true,
                                         false);
                                    g.accumulate(b, gb);
                                }
                            });
}

Var add_bias(Var a, Var bias) {
    const Tensor& av = a.value();
    const Tensor& bv = bias.value();
    if (av.rank() != 2 || bv.size() != av.dim(1)) {
        throw ShapeError("add_bias: " + shape_str(av.shape()) + " + " + shape_str(bv.shape()));
    }
    const std::size_t m = av.dim(0), n = av.dim(1);
    Tensor out = av;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
    Var ins[] = {a, bias};
    return a.graph().record("add_bias", std::move(out), ins,
                            [a, bias, m, n](Graph& g, const Tensor& go) {
                                g.accumulate(a, go);
                                if (g.requires_grad(bias)) {
                                    std::vector<double> gb(n, 0.0);
                                    for (std::size_t i = 0; i < m; ++i)
                                        for (std::size_t j = 0; j < n; ++j) gb[j] += go[i * n + j];
                                    g.accumulate(bias, gb);
                                }
                            });
}

// --- unary ------------------------------------------------------------------

namespace {

template <typename F, typename D>
Var unary(std::string_view name, Var x, F f, D deriv) {
    Tensor out(x.shape());
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    Var ins[] = {x};
    return x.graph().record(name, std::move(out), ins, [x, deriv](Graph& g, const Tensor& go) {
        const Tensor& xv = x.value();
        Tensor gx(xv.shape());
        for (std::size_t i = 0; i < xv.size(); ++i) gx[i] = go[i] * deriv(xv[i]);
        g.accumulate(x, gx);
    });
}

}  // namespace

Var relu(Var x) {
    // Subgradient 0 at the kink.
    return unary(
        "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var x) {
    return unary(
        "exp", x, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}

Var log(Var x) {
    for (double v : x.value().data()) {
        if (!(v > 0.0)) throw NumericError("log: non-positive argument");
    }
    return unary(
        "log", x, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

Var square(Var x) {
    return unary(
        "square", x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

Var sum(Var x) {
    double s = 0.0;
    for (double v : x.value().data()) s += v;
    Var ins[] = {x};
    return x.graph().record("sum", Tensor::scalar(s), ins, [x](Graph& g, const Tensor& go) {
        g.accumulate(x, Tensor(x.shape(), go[0]));
    });
}

Var mean(Var x) {
    const double n = static_cast<double>(x.size());
    return scale(sum(x), 1.0 / n);
}

Var reshape(Var x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    Var ins[] = {x};
    return x.graph().record("reshape", std::move(out), ins,
                            [x](Graph& g, const Tensor& go) { g.accumulate(x, go.data()); });
}

// --- probability ------------------------------------------------------------

Var log_softmax(Var logits) {
    const Tensor& z = logits.value();
    if (z.rank() != 2 || z.dim(1) < 2) {
        throw ShapeError("log_softmax: expected batch x K with K >= 2, got " +
                         shape_str(z.shape()));
    }
    if (!z.all_finite()) throw NumericError("log_softmax: non-finite logits");
    const std::size_t m = z.dim(0), k = z.dim(1);
    Tensor out(z.shape());
    for (std::size_t i = 0; i < m; ++i) {
        auto zi = z.row(i);
        const double mx = *std::max_element(zi.begin(), zi.end());
        double s = 0.0;
        for (double v : zi) s += std::exp(v - mx);
        const double lse = mx + std::log(s);
        for (std::size_t j = 0; j < k; ++j) out[i * k + j] = zi[j] - lse;
    }
    Var ins[] = {logits};
    const std::size_t out_id = logits.graph().size();
    return logits.graph().record(
        "log_softmax", std::move(out), ins, [logits, out_id, m, k](Graph& g, const Tensor& go) {
            const Tensor& ls = g.value(out_id);
            Tensor gz(Shape{m, k});
            for (std::size_t i = 0; i < m; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < k; ++j) s += go[i * k + j];
                for (std::size_t j = 0; j < k; ++j)
                    gz[i * k + j] = go[i * k + j] - std::exp(ls[i * k + j]) * s;
            }
            g.accumulate(logits, gz);
        });
}

Var kl_categorical(Var p_log, Var q_log, bool stop_gradient_p) {
    const Tensor& p = p_log.value();
    const Tensor& q = q_log.value();
    if (p.shape() != q.shape() || p.rank() != 2) {
        throw ShapeError("kl_categorical: " + shape_str(p.shape()) + " vs " + shape_str(q.shape()));
    }
    const std::size_t m = p.dim(0), k = p.dim(1);
    double s = 0.0;
    for (std::size_t i = 0; i < m * k; ++i) s += std::exp(p[i]) * (p[i] - q[i]);
    const double inv_m = 1.0 / static_cast<double>(m);
    Var ins[] = {p_log, q_log};
    return p_log.graph().record(
        "kl_categorical", Tensor::scalar(s * inv_m), ins,
        [p_log, q_log, stop_gradient_p, inv_m](Graph& g, const Tensor& go) {
            const Tensor& p = p_log.value();
            const Tensor& q = q_log.value();
            const double c = go[0] * inv_m;
            if (g.requires_grad(q_log)) {
                Tensor gq(q.shape());
                for (std::size_t i = 0; i < q.size(); ++i) gq[i] = -c * std::exp(p[i]);
                g.accumulate(q_log, gq);
            }
            if (!stop_gradient_p && g.requires_grad(p_log)) {
                Tensor gp(p.shape());
                for (std::size_t i = 0; i < p.size(); ++i)
                    gp[i] = c * std::exp(p[i]) * (p[i] - q[i] + 1.0);
                g.accumulate(p_log, gp);
            }
        });
}

Var entropy(Var log_probs) {
    const Tensor& l = log_probs.value();
    if (l.rank() != 2) throw ShapeError("entropy: expected batch x K");
    const double inv_m = 1.0 / static_cast<double>(l.dim(0));
    double s = 0.0;
    for (double v : l.data()) s -= std::exp(v) * v;
    Var ins[] = {log_probs};
    return log_probs.graph().record("entropy", Tensor::scalar(s * inv_m), ins,
                                    [log_probs, inv_m](Graph& g, const Tensor& go) {
                                        const Tensor& l = log_probs.value();
                                        Tensor gl(l.shape());
                                        for (std::size_t i = 0; i < l.size(); ++i)
                                            gl[i] = -go[0] * inv_m * std::exp(l[i]) * (l[i] + 1.0);
                                        g.accumulate(log_probs, gl);
                                    });
}

Var nll(Var log_probs, std::span<const int> labels, std::span<const double> weights) {
    const Tensor& l = log_probs.value();
    if (l.rank() != 2 || labels.size() != l.dim(0)) {
        throw ShapeError("nll: labels do not match batch of " + shape_str(l.shape()));
    }
    if (!weights.empty() && weights.size() != labels.size()) {
        throw ShapeError("nll: weight count mismatch");
    }
    const std::size_t m = l.dim(0), k = l.dim(1);
    std::vector<int> ys(labels.begin(), labels.end());
    std::vector<double> ws(m, 1.0);
    if (!weights.empty()) ws.assign(weights.begin(), weights.end());
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (ys[i] < 0 || static_cast<std::size_t>(ys[i]) >= k) {
            throw std::out_of_range("nll: label " + std::to_string(ys[i]) + " outside [0, " +
                                    std::to_string(k) + ")");
        }
        if (ws[i] != 0.0) s -= ws[i] * l[i * k + ys[i]];
    }
    const double inv_m = 1.0 / static_cast<double>(m);
    Var ins[] = {log_probs};
    return log_probs.graph().record(
        "nll", Tensor::scalar(s * inv_m), ins,
        [log_probs, ys = std::move(ys), ws = std::move(ws), m, k, inv_m](Graph& g,
                                                                         const Tensor& go) {
            Tensor gl(Shape{m, k});
            for (std::size_t i = 0; i < m; ++i) gl[i * k + ys[i]] = -go[0] * inv_m * ws[i];
            g.accumulate(log_probs, gl);
        });
}

}  // namespace ratlab::ad
