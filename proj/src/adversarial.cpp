#include "ratlab/adversarial.hpp"

#include <cassert>
#include <cmath>
#include <iostream>
#include <stdexcept>

namespace ratlab {

void validate(const AdvConfig& cfg) {
    if (!(cfg.xi > 0.0)) throw std::invalid_argument("adversarial: xi must be positive");
    if (cfg.power_iterations < 1) {
        throw std::invalid_argument("adversarial: power_iterations must be at least 1");
    }
}

double sigmoid_rampup(std::size_t t, std::size_t horizon) {
    if (horizon == 0 || t >= horizon) return 1.0;
    const double x = static_cast<double>(t) / static_cast<double>(horizon);
    const double d = 1.0 - x;
    return std::exp(-5.0 * d * d);
}

double rampup_value(const RampSchedule& s, std::size_t t) {
    if (s.horizon == 0 || t >= s.horizon) return s.max_value;
    return s.max_value * sigmoid_rampup(t, s.horizon);
}

std::vector<std::size_t> normalize_rows_l2(Tensor& t, double target) {
    std::vector<std::size_t> zero;
    for (std::size_t b = 0; b < t.rows(); ++b) {
        auto row = t.row(b);
        const double n = l2_norm(row);
        if (!(n > 0.0)) {
            zero.push_back(b);
            continue;
        }
        const double s = target / n;
        for (double& v : row) v *= s;
    }
    return zero;
}

Tensor power_iteration_fd(const DisplacedGradient& grad_at, Tensor direction, int iterations,
                          Tensor* last_direction) {
    if (iterations < 1) throw std::invalid_argument("power_iteration_fd: iterations < 1");
    for (int k = 0;; ++k) {
        Tensor g = grad_at(direction);
        if (k + 1 == iterations) {
            if (last_direction) *last_direction = std::move(direction);
            return g;
        }
        const Tensor prev = direction;
        direction = std::move(g);
        for (std::size_t b : normalize_rows_l2(direction)) {
            auto src = prev.row(b);
            std::copy(src.begin(), src.end(), direction.row(b).begin());
        }
    }
}

namespace {

void check_batch(const Tensor& x, const char* what) {
    if (x.rank() != 2 || x.dim(0) == 0) {
        throw ShapeError(std::string(what) + ": expected non-empty batch x D input, got " +
                         shape_str(x.shape()));
    }
}

void warn(const std::string& msg) { std::cerr << "ratlab: " << msg << '\n'; }

}  // namespace

Tensor vadv_perturbation(const Classifier& model, const Tensor& x, double eps,
                         const AdvConfig& cfg, Rng& rng, GenerationStats* stats) {
    validate(cfg);
    check_batch(x, "vadv_perturbation");
    if (!(eps > 0.0)) throw std::invalid_argument("vadv_perturbation: eps must be positive");
    const Tensor p = model.predict_log_proba(x);
    const double xi = cfg.xi;

    auto grad_at = [&](const Tensor& d) {
        ad::Graph g;
        ad::Var dv = g.leaf(d);
        ad::Var xh = ad::add(g.constant(x), ad::scale(dv, xi));
        ad::Var q = ad::log_softmax(model.logits(g, xh));
        ad::Var kl = ad::kl_categorical(g.constant(p), q, true);
        return g.grad(kl, dv);
    };

    Tensor d = rng.normal_tensor(x.shape());
    normalize_rows_l2(d);
    Tensor last;
    Tensor r = power_iteration_fd(grad_at, std::move(d), cfg.power_iterations, &last);
    // Flat rows keep the direction they were last evaluated at.
    const std::vector<std::size_t> zero = normalize_rows_l2(r, eps);
    for (std::size_t b : zero) {
        auto src = last.row(b);
        auto dst = r.row(b);
        const double s = eps / l2_norm(src);
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] * s;
    }
    if (!zero.empty()) {
        if (stats) stats->zero_gradient_rows += zero.size();
        warn("vadv_perturbation: flat model output for " + std::to_string(zero.size()) +
             " sample(s); keeping the current directions");
    }
    return r;
}

std::vector<RampSchedule> schedules_for(const Composite& composite, std::size_t horizon) {
    std::vector<RampSchedule> out;
    out.reserve(composite.size());
    for (const auto& s : composite) out.push_back({s.epsilon_max(), horizon});
    return out;
}

namespace {

void check_composite(const Composite& composite, std::span<const RampSchedule> schedules,
                     const Tensor& x) {
    if (composite.empty()) throw std::invalid_argument("tadv_params: empty composite");
    if (schedules.size() != composite.size()) {
        throw std::invalid_argument("tadv_params: need one rampup schedule per component");
    }
    check_batch(x, "tadv_params");
}

Tensor unit_direction(const TransformSpec& spec, std::size_t batch, Rng& rng) {
    Tensor v = rng.normal_tensor(Shape{batch, spec.param_dim()});
    for (std::size_t b = 0; b < batch; ++b) normalize_row(spec, v.row(b), 1.0);
    return v;
}

}  // namespace

std::vector<Tensor> tadv_params(const Classifier& model, const Tensor& x,
                                const Composite& composite,
                                std::span<const RampSchedule> schedules, const AdvConfig& cfg,
                                std::size_t t, Rng& rng, GenerationStats* stats) {
    validate(cfg);
    check_composite(composite, schedules, x);
#ifndef NDEBUG
    assert(identity_gradient_norm(model, x, composite) <= 1e-6);
#endif
    const std::size_t batch = x.dim(0);
    const std::size_t n = composite.size();
    const Tensor p = model.predict_log_proba(x);

    std::vector<Tensor> dirs;
    dirs.reserve(n);
    for (const auto& spec : composite) dirs.push_back(unit_direction(spec, batch, rng));

    for (int it = 0;; ++it) {
        ad::Graph g;
        std::vector<ad::Var> leaves, phis;
        for (std::size_t i = 0; i < n; ++i) {
            leaves.push_back(g.leaf(dirs[i]));
            phis.push_back(ad::scale(leaves.back(), cfg.xi));  // phi_id + xi v, phi_id = 0
        }
        ad::Var xh = compose(composite, phis, g.constant(x));
        ad::Var q = ad::log_softmax(model.logits(g, xh));
        ad::Var kl = ad::kl_categorical(g.constant(p), q, true);
        std::vector<Tensor> grads = g.grad(kl, leaves);

        const bool last = it + 1 == cfg.power_iterations;
        std::size_t degenerate = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double eps = last ? rampup_value(schedules[i], t) : 1.0;
            for (std::size_t b = 0; b < batch; ++b) {
                if (normalize_row(composite[i], grads[i].row(b), eps)) continue;
                // Flat direction: keep the current random direction at the target norm.
                auto keep = dirs[i].row(b);
                std::copy(keep.begin(), keep.end(), grads[i].row(b).begin());
                if (last) normalize_row(composite[i], grads[i].row(b), eps);
                ++degenerate;
            }
        }
        if (degenerate) {
            if (stats) stats->zero_gradient_rows += degenerate;
            warn("tadv_params: zero gradient for " + std::to_string(degenerate) +
                 " component row(s); keeping the current directions");
        }
        if (last) return grads;
        dirs = std::move(grads);
    }
}

std::vector<Tensor> random_params(const Composite& composite,
                                  std::span<const RampSchedule> schedules, std::size_t t,
                                  std::size_t batch, Rng& rng) {
    if (schedules.size() != composite.size()) {
        throw std::invalid_argument("random_params: need one rampup schedule per component");
    }
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < composite.size(); ++i) {
        Tensor v = unit_direction(composite[i], batch, rng);
        const double eps = rampup_value(schedules[i], t);
        for (std::size_t b = 0; b < batch; ++b) normalize_row(composite[i], v.row(b), eps);
        out.push_back(std::move(v));
    }
    return out;
}

double identity_gradient_norm(const Classifier& model, const Tensor& x,
                              const Composite& composite) {
    const Tensor p = model.predict_log_proba(x);
    ad::Graph g;
    std::vector<ad::Var> leaves;
    for (const auto& spec : composite) leaves.push_back(g.leaf(identity_params(spec, x.dim(0))));
    ad::Var xh = compose(composite, leaves, g.constant(x));
    ad::Var kl = ad::kl_categorical(g.constant(p), ad::log_softmax(model.logits(g, xh)), true);
    double worst = 0.0;
    for (const Tensor& gr : g.grad(kl, leaves)) {
        for (std::size_t b = 0; b < gr.rows(); ++b) worst = std::max(worst, l2_norm(gr.row(b)));
    }
    return worst;
}

double lds_t(const Classifier& model, const Tensor& x, const Composite& composite,
             const std::vector<Tensor>& params) {
    const Tensor p = model.predict_log_proba(x);
    ad::Graph g;
    std::vector<ad::Var> ps;
    for (const auto& t : params) ps.push_back(g.constant(t));
    ad::Var xh = compose(composite, ps, g.constant(x));
    return ad::kl_categorical(g.constant(p), ad::log_softmax(model.logits(g, xh)), true)
        .value()
        .item();
}

ad::Var lds_t(const Classifier& model, std::span<const ad::Var> theta, ad::Var clean_log_probs,
              ad::Var x, const Composite& composite, const std::vector<Tensor>& params,
              bool stop_gradient_p) {
    ad::Graph& g = x.graph();
    std::vector<ad::Var> ps;
    for (const auto& t : params) ps.push_back(g.constant(t));
    ad::Var xh = compose(composite, ps, x);
    ad::Var q = ad::log_softmax(model.logits(g, xh, theta));
    return ad::kl_categorical(clean_log_probs, q, stop_gradient_p);
}

}  // namespace ratlab
