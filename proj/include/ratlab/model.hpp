#pragma once

#include <memory>
#include <span>
#include <vector>

#include "ratlab/autodiff.hpp"
#include "ratlab/rng.hpp"
#include "ratlab/tensor.hpp"

namespace ratlab {

// A classifier p_theta(y|x): maps a batch x D input to batch x K logits.
class Classifier {
public:
    virtual ~Classifier() = default;

    virtual std::vector<Tensor>& parameters() = 0;
    virtual const std::vector<Tensor>& parameters() const = 0;
    virtual std::size_t input_dim() const = 0;
    virtual std::size_t num_classes() const = 0;
    virtual std::unique_ptr<Classifier> clone() const = 0;

    // Logits with `params` recorded on `g` (one Var per parameter tensor).
    virtual ad::Var logits(ad::Graph& g, ad::Var x, std::span<const ad::Var> params) const = 0;

    // Logits with the current parameters as constants.
    ad::Var logits(ad::Graph& g, ad::Var x) const;
    // Parameters recorded as leaves, in parameters() order.
    std::vector<ad::Var> parameter_leaves(ad::Graph& g) const;
    Tensor predict_log_proba(const Tensor& x) const;
};

// Three affine layers with ReLU between: D -> H -> H -> K.
class Mlp final : public Classifier {
public:
    Mlp(std::size_t input_dim, std::size_t hidden, std::size_t classes, Rng& rng);
    Mlp(std::size_t input_dim, std::size_t hidden, std::size_t classes,
        std::vector<Tensor> params);

    std::vector<Tensor>& parameters() override { return params_; }
    const std::vector<Tensor>& parameters() const override { return params_; }
    std::size_t input_dim() const override { return input_dim_; }
    std::size_t num_classes() const override { return classes_; }
    std::size_t hidden() const { return hidden_; }
    std::unique_ptr<Classifier> clone() const override { return std::make_unique<Mlp>(*this); }

    using Classifier::logits;
    ad::Var logits(ad::Graph& g, ad::Var x, std::span<const ad::Var> params) const override;

    // Rebuilds an Mlp from a parameter snapshot, inferring the layer widths.
    static Mlp from_parameters(std::vector<Tensor> params);

private:
    std::size_t input_dim_;
    std::size_t hidden_;
    std::size_t classes_;
    std::vector<Tensor> params_;  // w1, b1, w2, b2, w3, b3
};

// Single affine layer followed by softmax.
class LinearSoftmax final : public Classifier {
public:
    LinearSoftmax(Tensor weight, Tensor bias);  // weight: D x K, bias: K

    std::vector<Tensor>& parameters() override { return params_; }
    const std::vector<Tensor>& parameters() const override { return params_; }
    std::size_t input_dim() const override { return params_[0].dim(0); }
    std::size_t num_classes() const override { return params_[0].dim(1); }
    std::unique_ptr<Classifier> clone() const override {
        return std::make_unique<LinearSoftmax>(*this);
    }

    using Classifier::logits;
    ad::Var logits(ad::Graph& g, ad::Var x, std::span<const ad::Var> params) const override;

private:
    std::vector<Tensor> params_;
};

}  // namespace ratlab
