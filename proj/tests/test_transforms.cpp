#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "ratlab/transforms.hpp"
#include "support/gradient_suite.hpp"

using namespace ratlab;

namespace {

using gradient_suite::image_families;
using gradient_suite::kArcs;
using gradient_suite::kImage;

double deg(double d) { return d * std::numbers::pi / 180.0; }

}  // namespace

TEST_CASE("identity params reproduce the input exactly") {
    Rng rng(1);
    const Tensor x = oracle::normal(rng, {4, kImage.dim()});
    for (const auto& spec : image_families()) {
        INFO(family_name(spec.family()));
        CHECK(apply(spec, identity_params(spec, 4), x) == x);
    }
    const auto rot = TransformSpec::rotation(kArcs, 10.0);
    const Tensor pts = oracle::normal(rng, {6, 2});
    CHECK(apply(rot, identity_params(rot, 6), pts) == pts);
}

TEST_CASE("family norms are absolutely homogeneous") {
    Rng rng(2);
    Composite all = image_families();
    all.push_back(TransformSpec::rotation(kArcs, 10.0));
    for (const auto& spec : all) {
        for (int trial = 0; trial < 100; ++trial) {
            const Tensor phi = oracle::normal(rng, {spec.param_dim()});
            const double c = rng.uniform(-3.0, 3.0);
            const double lhs = param_norm(spec, (phi * c).data());
            CHECK(lhs == doctest::Approx(std::abs(c) * param_norm(spec, phi.data())).epsilon(1e-12));
        }
    }
}

TEST_CASE("normalize_to hits the requested norm") {
    Rng rng(3);
    for (const auto& spec : image_families()) {
        const Tensor phi = oracle::normal(rng, {5, spec.param_dim()});
        for (double eps : {1e-3, 0.3, 6.0}) {
            for (double n : param_norms(spec, normalize_to(spec, phi, eps))) CHECK(std::abs(n - eps) <= 1e-9);
        }
        CHECK(normalize_to(spec, phi, 0.0) == identity_params(spec, 5));
        CHECK_THROWS_AS(normalize_to(spec, identity_params(spec, 2), 1.0), NumericError);
    }
}

TEST_CASE("normalize_to preserves direction") {
    Rng rng(4);
    const auto spec = TransformSpec::flow(kImage, 0.01);
    const Tensor phi = oracle::normal(rng, {1, spec.param_dim()});
    const Tensor n = normalize_to(spec, phi, 0.5);
    CHECK(oracle::cosine(n.data(), phi.data()) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("affine operator norm equals the largest singular value of [A | t]") {
    Rng rng(5);
    const auto spec = TransformSpec::affine(kImage, 0.6);
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor phi = oracle::normal(rng, {6}, rng.uniform(0.01, 3.0));
        Eigen::Matrix<double, 2, 3> m;
        m << phi[0], phi[1], phi[2], phi[3], phi[4], phi[5];
        const double sigma = Eigen::JacobiSVD<Eigen::Matrix<double, 2, 3>>(m).singularValues()(0);
        CHECK(param_norm(spec, phi.data()) == doctest::Approx(sigma).epsilon(1e-12));
    }
}

TEST_CASE("affine translation by 2/W moves the image one pixel") {
    const ImageGeometry img{1, 4, 6};
    const auto spec = TransformSpec::affine(img, 1.0);
    Tensor x(Shape{1, img.dim()});
    for (std::size_t p = 0; p < img.dim(); ++p) x[p] = static_cast<double>(p * p % 11);
    const Tensor phi = Tensor::matrix(1, 6, {0, 0, 2.0 / 6.0, 0, 0, 0});
    const Tensor y = apply(spec, phi, x);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j + 1 < 6; ++j)
            CHECK(y[i * 6 + j] == doctest::Approx(x[i * 6 + j + 1]).epsilon(1e-12));
    // Border replication on the last column.
    for (std::size_t i = 0; i < 4; ++i) CHECK(y[i * 6 + 5] == doctest::Approx(x[i * 6 + 5]));
}

TEST_CASE("bilinear sampling at half-pixel offsets averages neighbours") {
    const Tensor image(Shape{1, 2, 2}, std::vector<double>{0, 2, 4, 6});
    Tensor grid = identity_grid(2, 2);
    CHECK(std::ranges::equal(bilinear_sample(image, grid).data(), image.data()));
    // Shift every sample half a pixel right: u += 1/W.
    for (std::size_t p = 0; p < 4; ++p) grid[2 * p] += 0.5;
    const Tensor out = bilinear_sample(image, grid);
    CHECK(out[0] == doctest::Approx(1.0));
    CHECK(out[2] == doctest::Approx(5.0));
    CHECK(out[1] == doctest::Approx(2.0));  // clamped at the border
}

TEST_CASE("tps with zero control offsets is the identity; uniform offsets translate") {
    Rng rng(6);
    const auto spec = TransformSpec::tps(kImage, 1.0);
    const Tensor x = oracle::normal(rng, {1, kImage.dim()});
    const Tensor y = apply(spec, Tensor(Shape{1, spec.param_dim()}), x);
    CHECK(max_abs((y - x).data()) <= 1e-9);
    // The spline reproduces affine (here constant) fields exactly.
    const std::size_t m = spec.param_dim() / 2;
    Tensor phi(Shape{1, spec.param_dim()});
    for (std::size_t c = 0; c < m; ++c) {
        phi[c] = 0.13;
        phi[m + c] = -0.07;
    }
    const auto d = oracle::displacement(spec, phi.data());
    for (std::size_t p = 0; p < kImage.pixels(); ++p) {
        CHECK(std::abs(d[p] - 0.13) <= 1e-9);
        CHECK(std::abs(d[kImage.pixels() + p] + 0.07) <= 1e-9);
    }
}

TEST_CASE("a composite with one active component equals that component alone, bit for bit") {
    Rng rng(7);
    const Composite chain = image_families();
    const Tensor x = oracle::normal(rng, {2, kImage.dim()});
    for (std::size_t active = 0; active < chain.size(); ++active) {
        std::vector<Tensor> params;
        for (const auto& s : chain) params.push_back(identity_params(s, 2));
        params[active] = oracle::normal(rng, {2, chain[active].param_dim()}, 0.05);
        CHECK(compose(chain, params, x) == apply(chain[active], params[active], x));
    }
}

TEST_CASE("composition applies components in list order") {
    const ImageGeometry img{1, 1, 2};
    const Composite chain{TransformSpec::channel(img, 1.0), TransformSpec::noise(2, 1.0)};
    const Tensor x = Tensor::matrix(1, 2, {1.0, 2.0});
    const std::vector<Tensor> params{Tensor::matrix(1, 1, {1.0}), Tensor::matrix(1, 2, {10.0, 10.0})};
    // (1 + 1) * x + 10, not (x + 10) * 2.
    CHECK(compose(chain, params, x) == Tensor::matrix(1, 2, {12.0, 14.0}));
}

TEST_CASE("recorded and plain application agree") {
    Rng rng(8);
    Composite all = image_families();
    for (const auto& spec : all) {
        const Tensor x = oracle::normal(rng, {3, kImage.dim()});
        const Tensor phi = oracle::normal(rng, {3, spec.param_dim()}, 0.05);
        ad::Graph g;
        CHECK(apply(spec, g.constant(phi), g.constant(x)).value() == apply(spec, phi, x));
    }
}

TEST_CASE("every family's gradient matches central differences away from cell boundaries") {
    Rng rng(9);
    for (const auto& spec : image_families()) {
        INFO(family_name(spec.family()));
        CHECK(gradient_suite::family_worst(spec, rng) <= 1e-4);
    }
    CHECK(gradient_suite::rotation_worst(rng) <= 1e-4);
}

TEST_CASE("rotation keeps on-arc points on their arc and inverts") {
    const auto rot = TransformSpec::rotation(kArcs, 10.0);
    Rng rng(10);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t k = rng.index(2);
        const Arc& a = kArcs[k];
        // Stay 10 degrees inside the arc so the rotated point remains on it.
        const double t = deg(rng.uniform(a.start_deg + 10.0, a.end_deg - 10.0));
        const Tensor pt = Tensor::matrix(1, 2, {a.cx + a.radius * std::cos(t), a.cy + a.radius * std::sin(t)});
        const double angle = rng.uniform(-10.0, 10.0);
        const Tensor moved = apply(rot, Tensor::matrix(1, 1, {angle}), pt);
        CHECK(distance_to_arc(a, moved[0], moved[1]) <= 1e-9);
        const Tensor back = apply(rot, Tensor::matrix(1, 1, {-angle}), moved);
        CHECK(max_abs((back - pt).data()) <= 1e-9);
    }
}

TEST_CASE("rotation turns counter-clockwise for positive angles about the arc center") {
    const auto rot = TransformSpec::rotation(kArcs, 10.0);
    const Tensor top = Tensor::matrix(1, 2, {0.0, 1.0});  // upper arc at 90 degrees
    const Tensor moved = apply(rot, Tensor::matrix(1, 1, {90.0}), top);
    CHECK(moved[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(std::abs(moved[1]) <= 1e-12);
}

TEST_CASE("channel weighting scales each channel") {
    const ImageGeometry img{2, 1, 2};
    const auto spec = TransformSpec::channel(img, 1.0);
    const Tensor x = Tensor::matrix(1, 4, {1, 2, 3, 4});
    CHECK(apply(spec, Tensor::matrix(1, 2, {0.5, -0.5}), x) == Tensor::matrix(1, 4, {1.5, 3, 1.5, 2}));
    CHECK(param_norm(spec, Tensor::vector({0.5, -0.75}).data()) == 0.75);
}

TEST_CASE("invalid specs and shapes are rejected") {
    CHECK_THROWS(TransformSpec::noise(4, 0.0));
    CHECK_THROWS(TransformSpec::affine(kImage, -1.0));
    CHECK_THROWS(TransformSpec::rotation({}, 1.0));
    const auto spec = TransformSpec::affine(kImage, 0.6);
    CHECK_THROWS_AS(apply(spec, Tensor(Shape{1, 5}), Tensor(Shape{1, kImage.dim()})), ShapeError);
    CHECK_THROWS_AS(apply(spec, Tensor(Shape{1, 6}), Tensor(Shape{1, 7})), ShapeError);
    CHECK_THROWS_AS(compose({spec}, {}, Tensor(Shape{1, kImage.dim()})), std::invalid_argument);
    CHECK_THROWS(parse_family("shear"));
    CHECK(parse_family("tps") == Family::tps);
}

TEST_CASE("nearest arc and distances") {
    CHECK(nearest_arc(kArcs, 0.0, 1.0) == 0);
    CHECK(nearest_arc(kArcs, 1.0, -0.5) == 1);
    CHECK(distance_to_arc(kArcs[0], 0.0, 2.0) == doctest::Approx(1.0));
    // Off the angular range: distance to the nearest endpoint.
    CHECK(distance_to_arc(kArcs[0], 0.0, -1.0) == doctest::Approx(std::sqrt(2.0)));
    CHECK(distance_to_circle(kArcs[0], 0.0, -1.0) == doctest::Approx(0.0));
}
