#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "ratlab/adversarial.hpp"
#include "support/oracle.hpp"

using namespace ratlab;

namespace {

// Hessian of KL[p(x) || p(x + r)] in r at r = 0 for logits x W + b:
// W (diag p - p p^T) W^T.
Eigen::MatrixXd linear_softmax_hessian(const Tensor& w, const Tensor& log_p) {
    const auto d = static_cast<Eigen::Index>(w.dim(0));
    const auto k = static_cast<Eigen::Index>(w.dim(1));
    Eigen::MatrixXd W(d, k);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < k; ++j) W(i, j) = w.at(i, j);
    Eigen::VectorXd p(k);
    for (Eigen::Index j = 0; j < k; ++j) p(j) = std::exp(log_p[j]);
    const Eigen::MatrixXd cov = Eigen::MatrixXd(p.asDiagonal()) - p * p.transpose();
    return W * cov * W.transpose();
}

DisplacedGradient input_gradient(const Classifier& model, const Tensor& x, double xi) {
    const Tensor p = model.predict_log_proba(x);
    return [&model, x, p, xi](const Tensor& v) {
        ad::Graph g;
        ad::Var dv = g.leaf(v);
        ad::Var q = ad::log_softmax(model.logits(g, ad::add(g.constant(x), ad::scale(dv, xi))));
        return g.grad(ad::kl_categorical(g.constant(p), q, true), dv);
    };
}

const std::vector<Arc> kArcs{{0.0, 0.0, 1.0, 0.0, 180.0}, {1.0, 0.5, 1.0, 180.0, 360.0}};

}  // namespace

TEST_CASE("rampup endpoints, saturation and monotonicity") {
    const RampSchedule s{2.5, 1000};
    CHECK(std::abs(rampup_value(s, 0) - 2.5 * std::exp(-5.0)) <= 1e-12 * 2.5 * std::exp(-5.0));
    CHECK(rampup_value(s, 1000) == 2.5);
    CHECK(rampup_value(s, 5000) == 2.5);
    for (std::size_t t = 1; t <= 1000; ++t) CHECK(rampup_value(s, t) >= rampup_value(s, t - 1));
    CHECK(rampup_value({2.5, 0}, 0) == 2.5);
    CHECK(sigmoid_rampup(500, 1000) == doctest::Approx(std::exp(-1.25)));
}

TEST_CASE("one displaced gradient divided by xi approximates the Hessian-vector product") {
    Rng rng(1);
    const std::size_t d = 4;
    const double xi = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor w = rng.normal_tensor({d, 3});
        const LinearSoftmax model(w, rng.normal_tensor({3}));
        const Tensor x = rng.normal_tensor({1, d});
        const Eigen::MatrixXd h = linear_softmax_hessian(w, model.predict_log_proba(x));
        Tensor v = rng.normal_tensor({1, d});
        normalize_rows_l2(v);
        const Tensor g = input_gradient(model, x, xi)(v);
        Eigen::VectorXd hv = h * Eigen::Map<const Eigen::VectorXd>(v.data().data(), d);
        double err = 0.0;
        for (std::size_t i = 0; i < d; ++i) err += std::pow(g[i] / (xi * xi) - hv(static_cast<Eigen::Index>(i)), 2);
        // The one-sided difference carries an O(xi) truncation term.
        CHECK(std::sqrt(err) / hv.norm() <= 1e-5);
    }
}

TEST_CASE("power iteration converges to the dominant eigenvector of the analytic Hessian") {
    Rng rng(2);
    const std::size_t d = 5;
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor w = rng.normal_tensor({d, 3});
        const LinearSoftmax model(w, Tensor(Shape{3}));
        const Tensor x = rng.normal_tensor({1, d});
        const Eigen::MatrixXd h = linear_softmax_hessian(w, model.predict_log_proba(x));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
        const auto& ev = es.eigenvalues();
        // Skip nearly degenerate spectra where 50 iterations cannot separate.
        if (ev(d - 2) > 0.7 * ev(d - 1)) continue;
        Tensor v = rng.normal_tensor({1, d});
        normalize_rows_l2(v);
        const Tensor r = power_iteration_fd(input_gradient(model, x, 1e-6), v, 50);
        const Eigen::VectorXd top = es.eigenvectors().col(static_cast<Eigen::Index>(d - 1));
        CHECK(std::abs(oracle::cosine(r.data(), std::span<const double>(top.data(), d))) >= 0.999);
    }
}

TEST_CASE("on a quadratic the displaced gradient over xi is H d") {
    Rng rng(21);
    const std::size_t d = 6;
    const double xi = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor a = rng.normal_tensor({d, d});
        Tensor h(Shape{d, d});
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) h.at(i, j) = a.at(i, j) + a.at(j, i);
        Tensor dir = rng.normal_tensor({1, d});
        normalize_rows_l2(dir);
        Tensor at = dir;
        for (double& e : at.data()) e *= xi;
        ad::Graph g;
        const ad::Var r = g.leaf(at);
        const Tensor grad = g.grad(ad::scale(ad::sum(ad::mul(r, ad::matmul(r, g.constant(h)))), 0.5), r);
        double err = 0.0, norm = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            double hd = 0.0;
            for (std::size_t i = 0; i < d; ++i) hd += dir[i] * h.at(i, j);
            err += std::pow(grad[j] / xi - hd, 2);
            norm += hd * hd;
        }
        CHECK(std::sqrt(err / norm) <= 1e-6);
    }
}

TEST_CASE("power iteration keeps zero rows at their previous direction") {
    auto flat = [](const Tensor& v) {
        Tensor g = v;
        for (double& e : g.row(1)) e = 0.0;
        return g;
    };
    const Tensor v = Tensor::matrix(2, 2, {0.6, 0.8, 1.0, 0.0});
    const Tensor r = power_iteration_fd(flat, v, 3);
    CHECK(r.at(0, 0) == doctest::Approx(0.6));
    CHECK_THROWS(power_iteration_fd(flat, v, 0));
}

TEST_CASE("virtual adversarial perturbations have the requested per-sample norm") {
    Rng rng(3);
    Mlp model(4, 16, 3, rng);
    const Tensor x = rng.normal_tensor({7, 4});
    Rng gen(4);
    const Tensor r = vadv_perturbation(model, x, 0.3, AdvConfig{}, gen);
    for (std::size_t b = 0; b < 7; ++b) CHECK(std::abs(l2_norm(r.row(b)) - 0.3) <= 1e-12);
    CHECK_THROWS(vadv_perturbation(model, x, 0.0, AdvConfig{}, gen));
    CHECK_THROWS(vadv_perturbation(model, x, 0.3, AdvConfig{1e-6, 0}, gen));
}

TEST_CASE("a noise-only composite reproduces the virtual adversarial perturbation bit for bit") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        Mlp model(3, 8, 2, rng);
        const Tensor x = rng.normal_tensor({5, 3});
        const double eps = rng.uniform(0.05, 2.0);
        for (int iterations : {1, 2}) {
            const AdvConfig cfg{1e-6, iterations};
            Rng a(seed + 100), b(seed + 100);
            const Tensor r_vat = vadv_perturbation(model, x, eps, cfg, a);
            const Composite noise{TransformSpec::noise(3, eps)};
            const auto r_rat = tadv_params(model, x, noise, schedules_for(noise, 0), cfg, 0, b);
            CHECK(r_rat[0] == r_vat);
        }
    }
}

TEST_CASE("flat outputs fall back to the same directions in both paths") {
    const LinearSoftmax flat(Tensor(Shape{3, 2}), Tensor(Shape{2}));
    Rng data(11);
    const Tensor x = data.normal_tensor({4, 3});
    for (int iterations : {1, 3}) {
        const AdvConfig cfg{1e-6, iterations};
        Rng a(12), b(12);
        GenerationStats sa, sb;
        const Tensor r_vat = vadv_perturbation(flat, x, 0.7, cfg, a, &sa);
        const Composite noise{TransformSpec::noise(3, 0.7)};
        const auto r_rat = tadv_params(flat, x, noise, schedules_for(noise, 0), cfg, 0, b, &sb);
        CHECK(r_rat[0] == r_vat);
        CHECK(sa.zero_gradient_rows == 4);
        CHECK(sb.zero_gradient_rows == 4 * static_cast<std::size_t>(iterations));
        for (std::size_t r = 0; r < 4; ++r) CHECK(std::abs(l2_norm(r_vat.row(r)) - 0.7) <= 1e-12);
    }
}

TEST_CASE("adversarial parameters sit at the ramped epsilon of every component") {
    Rng rng(5);
    const ImageGeometry img{2, 5, 4};
    Mlp model(img.dim(), 16, 3, rng);
    const Tensor x = rng.normal_tensor({3, img.dim()});
    const Composite chain{TransformSpec::affine(img, 0.6), TransformSpec::tps(img, 1.0),
                          TransformSpec::flow(img, 0.01), TransformSpec::channel(img, 0.001),
                          TransformSpec::noise(img.dim(), 6.0)};
    for (std::size_t horizon : {std::size_t{0}, std::size_t{100}}) {
        const auto sched = schedules_for(chain, horizon);
        for (std::size_t t : {0, 40, 100}) {
            const auto params = tadv_params(model, x, chain, sched, AdvConfig{}, t, rng);
            for (std::size_t i = 0; i < chain.size(); ++i) {
                const double eps = rampup_value(sched[i], t);
                for (double n : param_norms(chain[i], params[i])) CHECK(std::abs(n - eps) <= 1e-9 * eps);
            }
            const auto rnd = random_params(chain, sched, t, 3, rng);
            for (std::size_t i = 0; i < chain.size(); ++i) {
                for (double n : param_norms(chain[i], rnd[i]))
                    CHECK(std::abs(n - rampup_value(sched[i], t)) <= 1e-9 * chain[i].epsilon_max());
            }
        }
    }
}

TEST_CASE("the transformed divergence is stationary at the identity") {
    Rng rng(6);
    const ImageGeometry img{1, 4, 4};
    Mlp model(img.dim(), 16, 3, rng);
    const Tensor x = rng.normal_tensor({4, img.dim()});
    const Composite chain{TransformSpec::affine(img, 0.6), TransformSpec::tps(img, 1.0),
                          TransformSpec::noise(img.dim(), 1.0)};
    CHECK(identity_gradient_norm(model, x, chain) <= 1e-12);
    std::vector<Tensor> id;
    for (const auto& s : chain) id.push_back(identity_params(s, 4));
    CHECK(lds_t(model, x, chain, id) == 0.0);

    Mlp toy(2, 16, 2, rng);
    const Tensor pts = rng.normal_tensor({6, 2});
    CHECK(identity_gradient_norm(toy, pts, {TransformSpec::rotation(kArcs, 10.0)}) <= 1e-12);
}

TEST_CASE("adversarial parameters beat random ones of equal norm") {
    Rng rng(7);
    std::size_t wins = 0, checked = 0;
    for (int batch = 0; batch < 20; ++batch) {
        Mlp model(2, 32, 2, rng);
        const Tensor x = oracle::normal(rng, {16, 2}, 1.5);
        const Composite chain{TransformSpec::rotation(kArcs, 10.0), TransformSpec::noise(2, 0.3)};
        const auto sched = schedules_for(chain, 0);
        const double adv = lds_t(model, x, chain, tadv_params(model, x, chain, sched, AdvConfig{}, 0, rng));
        double mean = 0.0;
        for (int k = 0; k < 100; ++k) mean += lds_t(model, x, chain, random_params(chain, sched, 0, 16, rng));
        mean /= 100.0;
        wins += adv > mean;
        ++checked;
    }
    CHECK(wins >= checked * 9 / 10);
}

TEST_CASE("generation validates its inputs") {
    Rng rng(8);
    Mlp model(2, 4, 2, rng);
    const Tensor x = rng.normal_tensor({3, 2});
    const Composite noise{TransformSpec::noise(2, 1.0)};
    CHECK_THROWS(tadv_params(model, x, {}, {}, AdvConfig{}, 0, rng));
    CHECK_THROWS(tadv_params(model, x, noise, {}, AdvConfig{}, 0, rng));
    CHECK_THROWS(tadv_params(model, x, noise, schedules_for(noise, 0), AdvConfig{0.0, 1}, 0, rng));
    CHECK_THROWS_AS(tadv_params(model, Tensor(Shape{0, 2}), noise, schedules_for(noise, 0), AdvConfig{}, 0, rng),
                    ShapeError);
    Tensor z(Shape{2, 3});
    z.row(0)[0] = 3.0;
    const auto zero = normalize_rows_l2(z);
    REQUIRE(zero.size() == 1);
    CHECK(zero[0] == 1);
    CHECK(z.at(0, 0) == 1.0);
}
