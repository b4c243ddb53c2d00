#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "ratlab/data.hpp"
#include "support/oracle.hpp"

using namespace ratlab;

namespace {

// Smooth-ish 8x8 images: white noise plus a neighbour blur.
Tensor toy_images(Rng& rng, std::size_t n) {
    const ImageGeometry img{1, 8, 8};
    const Tensor z = rng.normal_tensor({n, img.dim()});
    Tensor x(z.shape());
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t j = 0; j < 8; ++j) {
                double v = z[b * 64 + i * 8 + j];
                if (j + 1 < 8) v += 0.5 * z[b * 64 + i * 8 + j + 1];
                if (i + 1 < 8) v += 0.3 * z[b * 64 + (i + 1) * 8 + j];
                x[b * 64 + i * 8 + j] = 2.0 + 3.0 * v;
            }
    return x;
}

std::vector<double> covariance(const Tensor& x) {
    const std::size_t n = x.dim(0), d = x.dim(1);
    std::vector<double> mean(d, 0.0), cov(d * d, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < d; ++j) mean[j] += x[r * d + j] / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                cov[i * d + j] += (x[r * d + i] - mean[i]) * (x[r * d + j] - mean[j]) / static_cast<double>(n);
    return cov;
}

}  // namespace

TEST_CASE("moons split sizes and labels") {
    const DatasetSplit d = make_moons({10, 30, 100, 1000}, MoonsGeometry{}, 3);
    CHECK(d.x_labeled.shape() == Shape{20, 2});
    CHECK(d.x_unlabeled.shape() == Shape{60, 2});
    CHECK(d.x_validation.shape() == Shape{200, 2});
    CHECK(d.x_test.shape() == Shape{2000, 2});
    for (const auto* ys : {&d.y_labeled, &d.y_unlabeled, &d.y_validation, &d.y_test}) {
        CHECK(std::count(ys->begin(), ys->end(), 0) == static_cast<long>(ys->size() / 2));
        CHECK(std::count(ys->begin(), ys->end(), 1) == static_cast<long>(ys->size() / 2));
    }
}

TEST_CASE("noiseless moons lie on their class arc") {
    MoonsGeometry geo;
    geo.noise = 0.0;
    const DatasetSplit d = make_moons({5, 5, 5, 50}, geo, 4);
    for (std::size_t i = 0; i < d.x_test.dim(0); ++i) {
        const Arc& arc = geo.arcs[static_cast<std::size_t>(d.y_test[i])];
        CHECK(distance_to_arc(arc, d.x_test.at(i, 0), d.x_test.at(i, 1)) <= 1e-12);
    }
    std::vector<int> labels;
    const Tensor on = sample_arcs(geo, 9, &labels);
    CHECK(on.shape() == Shape{18, 2});
    for (std::size_t i = 0; i < 18; ++i)
        CHECK(distance_to_arc(geo.arcs[static_cast<std::size_t>(labels[i])], on.at(i, 0), on.at(i, 1)) <= 1e-12);
}

TEST_CASE("moons noise has the configured spread") {
    MoonsGeometry geo;
    geo.noise = 0.1;
    const DatasetSplit d = make_moons({1, 1, 1, 20000}, geo, 5);
    // Distance to the circle of a point displaced by isotropic noise is close
    // to |radial component| for small noise: mean 0.1 * sqrt(2 / pi).
    double s = 0.0;
    for (std::size_t i = 0; i < d.x_test.dim(0); ++i) {
        const Arc& arc = geo.arcs[static_cast<std::size_t>(d.y_test[i])];
        s += distance_to_circle(arc, d.x_test.at(i, 0), d.x_test.at(i, 1));
    }
    CHECK(s / 40000.0 == doctest::Approx(0.1 * std::sqrt(2.0 / std::numbers::pi)).epsilon(0.03));
}

TEST_CASE("moons generation is deterministic in the seed") {
    const auto a = make_moons({10, 30, 100, 100}, MoonsGeometry{}, 9);
    const auto b = make_moons({10, 30, 100, 100}, MoonsGeometry{}, 9);
    const auto c = make_moons({10, 30, 100, 100}, MoonsGeometry{}, 10);
    CHECK(a.x_labeled == b.x_labeled);
    CHECK(a.x_test == b.x_test);
    CHECK(a.y_test == b.y_test);
    CHECK_FALSE(a.x_labeled == c.x_labeled);
}

TEST_CASE("moons rotation composite: rotation then noise") {
    const Composite c = moons_rotation_transform(MoonsGeometry{}, 10.0, 0.3);
    REQUIRE(c.size() == 2);
    CHECK(c[0].family() == Family::rotation);
    CHECK(c[0].epsilon_max() == 10.0);
    CHECK(c[1].family() == Family::noise);
    CHECK(c[1].epsilon_max() == 0.3);
}

TEST_CASE("points CSV round-trips") {
    const auto d = make_moons({2, 3, 4, 5}, MoonsGeometry{}, 11);
    std::stringstream ss;
    write_points_csv(ss, d);
    const std::string text = ss.str();
    CHECK(text.rfind("x1,x2,label,split\n", 0) == 0);
    CHECK(text.find(",-1,1\n") != std::string::npos);
    const auto back = read_points_csv(ss);
    CHECK(back.x_labeled == d.x_labeled);
    CHECK(back.x_unlabeled == d.x_unlabeled);
    CHECK(back.x_test == d.x_test);
    CHECK(back.y_validation == d.y_validation);
    std::istringstream bad("x1,x2,label,split\n1,2,0,7\n");
    CHECK_THROWS(read_points_csv(bad));
}

TEST_CASE("pool splits are disjoint and exhaustive") {
    const std::size_t n = 100;
    Tensor x(Shape{n, 4});
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i * 4] = static_cast<double>(i);  // row id
        y[i] = static_cast<int>(i % 3);
    }
    const auto d = split_pool(x, y, {1, 2, 2}, 3, 10, 15, 20, 12);
    CHECK(d.x_labeled.dim(0) == 10);
    CHECK(d.x_validation.dim(0) == 15);
    CHECK(d.x_test.dim(0) == 20);
    CHECK(d.x_unlabeled.dim(0) == 55);
    std::set<int> seen;
    for (const Tensor* t : {&d.x_labeled, &d.x_unlabeled, &d.x_validation, &d.x_test})
        for (std::size_t r = 0; r < t->dim(0); ++r) seen.insert(static_cast<int>(t->at(r, 0)));
    CHECK(seen.size() == n);
    for (std::size_t r = 0; r < d.x_labeled.dim(0); ++r)
        CHECK(d.y_labeled[r] == static_cast<int>(d.x_labeled.at(r, 0)) % 3);
    CHECK_THROWS(split_pool(x, y, {1, 2, 2}, 3, 50, 50, 1, 12));
}

TEST_CASE("gcn gives zero mean and unit standard deviation per sample") {
    Rng rng(13);
    const Tensor x = toy_images(rng, 50);
    const Tensor g = gcn(x);
    for (std::size_t r = 0; r < 50; ++r) {
        double m = 0.0, v = 0.0;
        for (double e : g.row(r)) m += e;
        m /= 64.0;
        for (double e : g.row(r)) v += (e - m) * (e - m);
        CHECK(std::abs(m) <= 1e-12);
        CHECK(std::abs(std::sqrt(v / 64.0) - 1.0) <= 1e-9);
    }
    const Tensor gg = gcn(g);
    CHECK(max_abs((gg - g).data()) <= 1e-12);
    Tensor flat(Shape{1, 4}, 3.0);
    CHECK(gcn(flat) == Tensor(Shape{1, 4}));
}

TEST_CASE("zca whitened covariance equals the regularized identity") {
    // With reg r = zeta * mean eigenvalue the whitened covariance is exactly
    // I - U diag(r / (lambda + r)) U^T; checked against an independent
    // eigendecomposition on correlated data.
    Rng rng(14);
    const Tensor x = toy_images(rng, 2000);
    const double zeta = 1e-3;
    const Tensor w = zca_apply(zca_fit(x, zeta), x);
    const auto c = covariance(x);
    Eigen::Map<const Eigen::Matrix<double, 64, 64, Eigen::RowMajor>> cov(c.data());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const double r = zeta * es.eigenvalues().mean();
    Eigen::VectorXd shrink(64);
    for (int i = 0; i < 64; ++i) shrink(i) = r / (es.eigenvalues()(i) + r);
    const Eigen::MatrixXd expected = Eigen::MatrixXd::Identity(64, 64) -
                                     es.eigenvectors() * shrink.asDiagonal() * es.eigenvectors().transpose();
    const auto got = covariance(w);
    double worst = 0.0;
    for (int i = 0; i < 64; ++i)
        for (int j = 0; j < 64; ++j) worst = std::max(worst, std::abs(got[i * 64 + j] - expected(i, j)));
    CHECK(worst <= 1e-9);
}

TEST_CASE("zca on white toy images: off-diagonals within 1e-6") {
    Rng rng(15);
    const Tensor x = rng.normal_tensor({4000, 64});
    const ZcaState z = zca_fit(x, 1e-5);
    const auto cov = covariance(zca_apply(z, x));
    double off = 0.0, diag = 0.0;
    for (std::size_t i = 0; i < 64; ++i)
        for (std::size_t j = 0; j < 64; ++j) {
            if (i == j) diag = std::max(diag, std::abs(cov[i * 64 + j] - 1.0));
            else off = std::max(off, std::abs(cov[i * 64 + j]));
        }
    CHECK(off <= 1e-6);
    CHECK(diag <= 1e-3);
    for (std::size_t i = 0; i < 64; ++i)
        for (std::size_t j = 0; j < 64; ++j) CHECK(z.whitening.at(i, j) == z.whitening.at(j, i));
    CHECK_THROWS(zca_fit(Tensor(Shape{1, 64}), 1e-5));
    CHECK_THROWS_AS(zca_apply(z, Tensor(Shape{2, 63})), ShapeError);
}

TEST_CASE("augmentation policies") {
    Rng rng(16);
    const ImageGeometry img{2, 5, 6};
    const Tensor x = rng.normal_tensor({8, img.dim()});
    CHECK(augment(x, {AugmentKind::none, 0.15, 2}, img, rng) == x);

    // Pure shifts: every output row equals some translate of its input.
    const Tensor s = augment(x, {AugmentKind::svhn_like, 0.0, 2}, img, rng);
    for (std::size_t b = 0; b < 8; ++b) {
        const Tensor row = Tensor::matrix(1, img.dim(), {x.row(b).begin(), x.row(b).end()});
        bool found = false;
        for (int du = -2; du <= 2 && !found; ++du)
            for (int dv = -2; dv <= 2 && !found; ++dv) {
                const Tensor t = translate(row, img, du, dv);
                found = std::equal(t.data().begin(), t.data().end(), s.row(b).begin());
            }
        CHECK(found);
    }

    const Tensor zeros(Shape{2000, 10});
    const Tensor n = augment(zeros, {AugmentKind::gaussian, 0.15, 0}, {1, 1, 10}, rng);
    double mean_abs = 0.0;
    for (double v : n.data()) mean_abs += std::abs(v);
    mean_abs /= static_cast<double>(n.size());
    CHECK(mean_abs == doctest::Approx(0.15 * std::sqrt(2.0 / std::numbers::pi)).epsilon(0.02));
    CHECK(parse_augment("cifar_like") == AugmentKind::cifar_like);
    CHECK_THROWS(parse_augment("mixup"));
}

TEST_CASE("translate and flip by hand") {
    const ImageGeometry img{1, 2, 3};
    const Tensor x = Tensor::matrix(1, 6, {1, 2, 3, 4, 5, 6});
    CHECK(translate(x, img, 1, 0) == Tensor::matrix(1, 6, {1, 1, 2, 4, 4, 5}));
    CHECK(translate(x, img, 0, -1) == Tensor::matrix(1, 6, {4, 5, 6, 4, 5, 6}));
    CHECK(flip_horizontal(x, img) == Tensor::matrix(1, 6, {3, 2, 1, 6, 5, 4}));
    CHECK(flip_horizontal(flip_horizontal(x, img), img) == x);
}
