#include <doctest.h>

#include <cmath>

#include "ratlab/model.hpp"
#include "support/gradient_suite.hpp"

using namespace ratlab;

TEST_CASE("zero parameters give uniform predictions") {
    Rng rng(1);
    Mlp model(2, 16, 3, rng);
    for (Tensor& p : model.parameters()) std::fill(p.data().begin(), p.data().end(), 0.0);
    const Tensor lp = model.predict_log_proba(oracle::normal(rng, {4, 2}));
    CHECK(lp.shape() == Shape{4, 3});
    for (double v : lp.data()) CHECK(v == doctest::Approx(-std::log(3.0)).epsilon(1e-15));
}

TEST_CASE("forward is deterministic and seeded") {
    Rng a(5), b(5);
    Mlp m1(2, 8, 2, a), m2(2, 8, 2, b);
    CHECK(m1.parameters() == m2.parameters());
    Rng rng(6);
    const Tensor x = oracle::normal(rng, {3, 2});
    CHECK(m1.predict_log_proba(x) == m1.predict_log_proba(x));
}

TEST_CASE("initialization is bounded by the fan-in/fan-out limit and biases start at zero") {
    Rng rng(2);
    Mlp model(2, 128, 2, rng);
    const auto& p = model.parameters();
    REQUIRE(p.size() == 6);
    const std::size_t fans[3][2] = {{2, 128}, {128, 128}, {128, 2}};
    for (int layer = 0; layer < 3; ++layer) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fans[layer][0] + fans[layer][1]));
        CHECK(max_abs(p[2 * layer].data()) <= limit);
        CHECK(max_abs(p[2 * layer + 1].data()) == 0.0);
    }
}

TEST_CASE("mlp gradients match central differences") {
    Rng rng(3);
    CHECK(gradient_suite::mlp_worst(rng) <= 1e-4);
}

TEST_CASE("input dimension and parameter count are validated") {
    Rng rng(4);
    Mlp model(2, 8, 2, rng);
    CHECK_THROWS_AS(model.predict_log_proba(Tensor(Shape{3, 5})), ShapeError);
    std::vector<Tensor> bad = model.parameters();
    bad.pop_back();
    CHECK_THROWS_AS(Mlp::from_parameters(bad), ShapeError);
    ad::Graph g;
    const auto theta = model.parameter_leaves(g);
    CHECK_THROWS_AS(model.logits(g, g.constant(Tensor(Shape{1, 2})), std::span(theta).first(4)),
                    ShapeError);
}

TEST_CASE("snapshot reconstruction infers widths") {
    Rng rng(7);
    Mlp model(5, 9, 3, rng);
    const Mlp back = Mlp::from_parameters(model.parameters());
    CHECK(back.input_dim() == 5);
    CHECK(back.hidden() == 9);
    CHECK(back.num_classes() == 3);
    const Tensor x = oracle::normal(rng, {2, 5});
    CHECK(back.predict_log_proba(x) == model.predict_log_proba(x));
}

TEST_CASE("linear softmax matches a hand computation") {
    LinearSoftmax m(Tensor::matrix(2, 2, {1, 0, 0, 1}), Tensor::vector({0, 0}));
    const Tensor lp = m.predict_log_proba(Tensor::matrix(1, 2, {std::log(3.0), 0.0}));
    CHECK(std::exp(lp[0]) == doctest::Approx(0.75));
    CHECK(std::exp(lp[1]) == doctest::Approx(0.25));
}
