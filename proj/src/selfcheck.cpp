#include "ratlab/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include "ratlab/adversarial.hpp"
#include "ratlab/model.hpp"
#include "ratlab/objectives.hpp"
#include "ratlab/transforms.hpp"

namespace ratlab {

GradCheckResult gradcheck(const GraphFunction& f, const std::vector<Tensor>& inputs, double h) {
    std::vector<Tensor> analytic;
    {
        ad::Graph g;
        std::vector<ad::Var> leaves;
        for (const Tensor& t : inputs) leaves.push_back(g.leaf(t));
        analytic = g.grad(f(g, leaves), leaves);
    }
    auto eval = [&](const std::vector<Tensor>& xs) {
        ad::Graph g;
        std::vector<ad::Var> vs;
        for (const Tensor& t : xs) vs.push_back(g.constant(t));
        return f(g, vs).value().item();
    };
    GradCheckResult r;
    std::vector<Tensor> xs = inputs;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        Tensor numeric(xs[i].shape());
        for (std::size_t j = 0; j < xs[i].size(); ++j) {
            const double x0 = xs[i][j];
            xs[i][j] = x0 + h;
            const double up = eval(xs);
            xs[i][j] = x0 - h;
            const double down = eval(xs);
            xs[i][j] = x0;
            numeric[j] = (up - down) / (2.0 * h);
            ++r.entries;
        }
        const double scale = std::max({l2_norm(analytic[i].data()), l2_norm(numeric.data()), 1e-12});
        r.max_rel_err = std::max(r.max_rel_err, l2_norm((analytic[i] - numeric).data()) / scale);
    }
    return r;
}

namespace {

struct Reporter {
    std::ostream& os;
    bool all_ok = true;
    void operator()(const std::string& name, bool ok, const std::string& detail) {
        os << (ok ? "[ok]   " : "[FAIL] ") << name << "  " << detail << '\n';
        all_ok = all_ok && ok;
    }
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

Tensor small_normal(Rng& rng, Shape s, double scale) {
    Tensor t = rng.normal_tensor(std::move(s));
    for (double& v : t.data()) v *= scale;
    return t;
}

}  // namespace

bool run_selfcheck(std::ostream& os) {
    Reporter report{os};
    Rng rng(20240607);
    const ImageGeometry img{2, 5, 6};

    {
        Mlp model(3, 8, 4, rng);
        const Tensor x = rng.normal_tensor({5, 3});
        const Tensor p = model.predict_log_proba(rng.normal_tensor({5, 3}));
        const auto r = gradcheck(
            [&](ad::Graph& g, std::span<const ad::Var> v) {
                return ad::kl_categorical(g.constant(p), ad::log_softmax(model.logits(g, v[0], v.subspan(1))));
            },
            [&] {
                std::vector<Tensor> in{x};
                for (const Tensor& t : model.parameters()) in.push_back(t);
                return in;
            }());
        report("gradient: mlp + log_softmax + kl", r.max_rel_err <= 1e-4, "rel err " + num(r.max_rel_err));
    }

    const Composite families{TransformSpec::noise(img.dim(), 1.0), TransformSpec::affine(img, 0.6),
                             TransformSpec::tps(img, 1.0), TransformSpec::flow(img, 0.01),
                             TransformSpec::channel(img, 0.001)};
    for (const auto& spec : families) {
        const Tensor x = rng.normal_tensor({2, img.dim()});
        const Tensor phi = small_normal(rng, {2, spec.param_dim()}, 0.05);
        const Tensor w = rng.normal_tensor({2, img.dim()});
        const auto r = gradcheck(
            [&](ad::Graph& g, std::span<const ad::Var> v) {
                return ad::sum(ad::mul(apply(spec, v[0], v[1]), g.constant(w)));
            },
            {phi, x});
        report("gradient: " + std::string(family_name(spec.family())), r.max_rel_err <= 1e-4,
               "rel err " + num(r.max_rel_err));
        const Tensor y = apply(spec, identity_params(spec, 2), x);
        report("identity: " + std::string(family_name(spec.family())), y == x, "exact");
    }

    {
        Mlp model(4, 16, 3, rng);
        const Tensor x = rng.normal_tensor({6, 4});
        const AdvConfig cfg;
        Rng a(7), b(7);
        const Tensor r_vat = vadv_perturbation(model, x, 0.5, cfg, a);
        const Composite noise{TransformSpec::noise(4, 0.5)};
        const auto sched = schedules_for(noise, 0);
        const auto r_rat = tadv_params(model, x, noise, sched, cfg, 0, b);
        report("vat == rat with a noise-only composite", r_rat[0] == r_vat, "bit-exact");
    }

    {
        const RampSchedule s{2.5, 100};
        const double t0 = rampup_value(s, 0);
        bool mono = true;
        for (std::size_t t = 1; t <= 1000; ++t) mono = mono && rampup_value({2.5, 1000}, t) >= rampup_value({2.5, 1000}, t - 1);
        const bool ok = std::abs(t0 - 2.5 * std::exp(-5.0)) <= 1e-12 * 2.5 * std::exp(-5.0) &&
                        rampup_value(s, 100) == 2.5 && rampup_value(s, 1000) == 2.5 && mono;
        report("rampup endpoints and monotonicity", ok, "t=0 -> " + num(t0));
    }

    {
        // Two-class linear softmax: the Hessian of the KL in the input is
        // p0 p1 (w0 - w1)(w0 - w1)^T, so the dominant direction is w0 - w1.
        const std::size_t d = 5;
        Tensor w = rng.normal_tensor({d, 2});
        LinearSoftmax model(w, Tensor(Shape{2}));
        const Tensor x = rng.normal_tensor({1, d});
        const Tensor p = model.predict_log_proba(x);
        auto grad_at = [&](const Tensor& v) {
            ad::Graph g;
            ad::Var dv = g.leaf(v);
            ad::Var q = ad::log_softmax(model.logits(g, ad::add(g.constant(x), ad::scale(dv, 1e-6))));
            return g.grad(ad::kl_categorical(g.constant(p), q, true), dv);
        };
        Tensor v = rng.normal_tensor({1, d});
        normalize_rows_l2(v);
        const Tensor h = power_iteration_fd(grad_at, v, 50);
        std::vector<double> u(d);
        for (std::size_t i = 0; i < d; ++i) u[i] = w.at(i, 0) - w.at(i, 1);
        const double cos = dot(h.data(), u) / (l2_norm(h.data()) * l2_norm(u));
        report("power iteration aligns with the dominant eigenvector", std::abs(cos) >= 0.999,
               "|cos| " + num(std::abs(cos)));
    }

    os << (report.all_ok ? "selfcheck passed\n" : "selfcheck FAILED\n");
    return report.all_ok;
}

}  // namespace ratlab
