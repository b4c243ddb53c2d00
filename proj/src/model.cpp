#include "ratlab/model.hpp"

#include <cmath>
#include <stdexcept>

namespace ratlab {

ad::Var Classifier::logits(ad::Graph& g, ad::Var x) const {
    std::vector<ad::Var> ps;
    ps.reserve(parameters().size());
    for (const auto& p : parameters()) ps.push_back(g.constant(p));
    return logits(g, x, ps);
}

std::vector<ad::Var> Classifier::parameter_leaves(ad::Graph& g) const {
    std::vector<ad::Var> ps;
    ps.reserve(parameters().size());
    for (const auto& p : parameters()) ps.push_back(g.leaf(p));
    return ps;
}

Tensor Classifier::predict_log_proba(const Tensor& x) const {
    ad::Graph g;
    return ad::log_softmax(logits(g, g.constant(x))).value();
}

namespace {

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w(Shape{fan_in, fan_out});
    for (auto& v : w.data()) v = rng.uniform(-limit, limit);
    return w;
}

void check_graph(const ad::Graph& g, ad::Var x) {
    if (&x.graph() != &g) throw std::invalid_argument("logits: input recorded on another graph");
}

void check_input(const Tensor& x, std::size_t dim) {
    if (x.rank() != 2 || x.dim(1) != dim) {
        throw ShapeError("classifier: expected batch x " + std::to_string(dim) + " input, got " +
                         shape_str(x.shape()));
    }
}

}  // namespace

Mlp::Mlp(std::size_t input_dim, std::size_t hidden, std::size_t classes, Rng& rng)
    : input_dim_(input_dim), hidden_(hidden), classes_(classes) {
    params_.push_back(glorot_uniform(input_dim, hidden, rng));
    params_.emplace_back(Shape{hidden}, 0.0);
    params_.push_back(glorot_uniform(hidden, hidden, rng));
    params_.emplace_back(Shape{hidden}, 0.0);
    params_.push_back(glorot_uniform(hidden, classes, rng));
    params_.emplace_back(Shape{classes}, 0.0);
}

Mlp::Mlp(std::size_t input_dim, std::size_t hidden, std::size_t classes,
         std::vector<Tensor> params)
    : input_dim_(input_dim), hidden_(hidden), classes_(classes), params_(std::move(params)) {
    const Shape expected[] = {{input_dim, hidden}, {hidden}, {hidden, hidden},
                              {hidden},            {hidden, classes}, {classes}};
    if (params_.size() != 6) throw ShapeError("mlp: expected 6 parameter tensors");
    for (std::size_t i = 0; i < 6; ++i) {
        if (params_[i].shape() != expected[i]) {
            throw ShapeError("mlp: parameter " + std::to_string(i) + " has shape " +
                             shape_str(params_[i].shape()) + ", expected " +
                             shape_str(expected[i]));
        }
    }
}

Mlp Mlp::from_parameters(std::vector<Tensor> params) {
    if (params.size() != 6 || params[0].rank() != 2 || params[4].rank() != 2) {
        throw ShapeError("mlp snapshot: expected w1,b1,w2,b2,w3,b3");
    }
    const std::size_t d = params[0].dim(0), h = params[0].dim(1), k = params[4].dim(1);
    return Mlp(d, h, k, std::move(params));
}

ad::Var Mlp::logits(ad::Graph& g, ad::Var x, std::span<const ad::Var> p) const {
    check_graph(g, x);
    check_input(x.value(), input_dim_);
    if (p.size() != 6) throw ShapeError("mlp: expected 6 parameter variables");
    ad::Var h = ad::relu(ad::add_bias(ad::matmul(x, p[0]), p[1]));
    h = ad::relu(ad::add_bias(ad::matmul(h, p[2]), p[3]));
    return ad::add_bias(ad::matmul(h, p[4]), p[5]);
}

LinearSoftmax::LinearSoftmax(Tensor weight, Tensor bias) {
    if (weight.rank() != 2 || bias.size() != weight.dim(1)) {
        throw ShapeError("linear: weight " + shape_str(weight.shape()) + " bias " +
                         shape_str(bias.shape()));
    }
    params_.push_back(std::move(weight));
    params_.push_back(bias.reshaped(Shape{bias.size()}));
}

ad::Var LinearSoftmax::logits(ad::Graph& g, ad::Var x, std::span<const ad::Var> p) const {
    check_graph(g, x);
    check_input(x.value(), input_dim());
    if (p.size() != 2) throw ShapeError("linear: expected 2 parameter variables");
    return ad::add_bias(ad::matmul(x, p[0]), p[1]);
}

}  // namespace ratlab
