#pragma once

// Test-side oracles. Deliberately independent of the library's own gradcheck:
// a per-entry relative error with a floor, evaluated from a plain value
// function that rebuilds the graph from scratch for every probe.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "ratlab/autodiff.hpp"
#include "ratlab/rng.hpp"
#include "ratlab/tensor.hpp"

namespace oracle {

using ratlab::Tensor;
namespace ad = ratlab::ad;

using Fn = std::function<ad::Var(ad::Graph&, std::span<const ad::Var>)>;

struct Report {
    double worst_rel = 0.0;
    double worst_abs = 0.0;
    std::size_t probes = 0;
};

inline double value_of(const Fn& f, const std::vector<Tensor>& xs) {
    ad::Graph g;
    std::vector<ad::Var> vs;
    for (const auto& x : xs) vs.push_back(g.constant(x));
    return f(g, vs).value().item();
}

inline std::vector<Tensor> analytic(const Fn& f, const std::vector<Tensor>& xs) {
    ad::Graph g;
    std::vector<ad::Var> vs;
    for (const auto& x : xs) vs.push_back(g.leaf(x));
    return g.grad(f(g, vs), vs);
}

// |a - n| / max(|a|, |n|, floor) per entry, central differences with step h.
inline Report finite_difference(const Fn& f, std::vector<Tensor> xs, double h = 1e-6,
                                double floor = 1e-3) {
    const auto grads = analytic(f, xs);
    Report r;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        for (std::size_t j = 0; j < xs[i].size(); ++j) {
            const double x0 = xs[i][j];
            xs[i][j] = x0 + h;
            const double up = value_of(f, xs);
            xs[i][j] = x0 - h;
            const double dn = value_of(f, xs);
            xs[i][j] = x0;
            const double num = (up - dn) / (2.0 * h);
            const double a = grads[i][j];
            const double err = std::abs(a - num);
            r.worst_abs = std::max(r.worst_abs, err);
            r.worst_rel = std::max(r.worst_rel, err / std::max({std::abs(a), std::abs(num), floor}));
            ++r.probes;
        }
    }
    return r;
}

inline Tensor normal(ratlab::Rng& rng, ratlab::Shape s, double scale = 1.0) {
    Tensor t = rng.normal_tensor(std::move(s));
    for (double& v : t.data()) v *= scale;
    return t;
}

inline Tensor uniform(ratlab::Rng& rng, ratlab::Shape s, double lo, double hi) {
    Tensor t(std::move(s));
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

}  // namespace oracle
