#include <doctest.h>

#include <cmath>
#include <sstream>

#include "ratlab/training.hpp"
#include "support/oracle.hpp"

using namespace ratlab;

namespace {

TrainSpec quick_spec(Method m, std::size_t iterations = 40) {
    TrainSpec s;
    s.method.method = m;
    s.training.iterations = iterations;
    s.training.hidden = 16;
    s.training.lr = 0.01;
    s.training.lr_decay_factor = 1.0;
    return s;
}

DatasetSplit small_moons(std::uint64_t seed = 1) { return make_moons({10, 30, 50, 100}, MoonsGeometry{}, seed); }

}  // namespace

TEST_CASE("first Adam step moves each weight by lr against the gradient sign") {
    std::vector<Tensor> params{Tensor::vector({1.0, 1.0, 1.0})};
    OptState st = adam_init(params, 0.001);
    adam_step(st, params, {Tensor::vector({1.0, -3.0, 0.0})});
    // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
    CHECK(params[0][0] == doctest::Approx(1.0 - 0.001 / (1.0 + 1e-8)).epsilon(1e-15));
    CHECK(params[0][1] == doctest::Approx(1.0 + 0.001 * 3.0 / (3.0 + 1e-8)).epsilon(1e-15));
    CHECK(params[0][2] == 1.0);
    CHECK(st.step == 1);
}

TEST_CASE("Adam second step against a hand computation") {
    std::vector<Tensor> params{Tensor::vector({0.5})};
    OptState st = adam_init(params, 0.1);
    adam_step(st, params, {Tensor::vector({2.0})});
    adam_step(st, params, {Tensor::vector({-1.0})});
    const double m = 0.9 * (0.1 * 2.0) + 0.1 * -1.0;
    const double v = 0.999 * (0.001 * 4.0) + 0.001 * 1.0;
    const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
    const double first = 0.5 - 0.1 * 2.0 / (2.0 + 1e-8);
    CHECK(params[0][0] == doctest::Approx(first - 0.1 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-14));
    CHECK_THROWS_AS(adam_step(st, params, {Tensor::vector({1.0, 2.0})}), ShapeError);
    CHECK_THROWS_AS(adam_step(st, params, {}), ShapeError);
}

TEST_CASE("Adam's step is invariant to gradient scale") {
    Rng rng(1);
    const Tensor g = rng.normal_tensor({6});
    std::vector<Tensor> a{Tensor(Shape{6})}, b{Tensor(Shape{6})};
    OptState sa = adam_init(a, 0.01), sb = adam_init(b, 0.01);
    for (int k = 0; k < 5; ++k) {
        adam_step(sa, a, {g});
        adam_step(sb, b, {g * 1000.0});
    }
    for (std::size_t i = 0; i < 6; ++i) CHECK(a[0][i] == doctest::Approx(b[0][i]).epsilon(1e-6));
}

TEST_CASE("learning-rate schedule") {
    CHECK(lr_schedule(0.003, 0, 10000) == 0.003);
    CHECK(lr_schedule(0.003, 7999, 10000) == 0.003);
    CHECK(lr_schedule(0.003, 8000, 10000) == doctest::Approx(0.0006));
    CHECK(lr_schedule(0.003, 9999, 10000, 0.8, 1.0) == 0.003);
}

TEST_CASE("evaluate counts argmax mistakes") {
    // Logits are the inputs: class = larger coordinate.
    const LinearSoftmax model(Tensor::matrix(2, 2, {1, 0, 0, 1}), Tensor(Shape{2}));
    Tensor x(Shape{10, 2});
    std::vector<int> y(10);
    int wrong = 0;
    for (std::size_t i = 0; i < 10; ++i) {
        x[2 * i] = static_cast<double>(i);
        x[2 * i + 1] = 4.5;
        y[i] = static_cast<int>(i % 2);
        const int pred = i > 4 ? 0 : 1;
        wrong += pred != y[i];
    }
    CHECK(evaluate(model, x, y) == doctest::Approx(wrong / 10.0));
    CHECK_THROWS(evaluate(model, Tensor(Shape{0, 2}), {}));
}

TEST_CASE("model selection picks the earliest minimum") {
    std::vector<MetricRecord> r{{10, 0, 0, 0.3, 0.1}, {20, 0, 0, 0.2, 0.5}, {30, 0, 0, 0.2, 0.0}, {40, 0, 0, 0.25, 0.0}};
    CHECK(select_min_validation(r) == 1);
    CHECK_THROWS(select_min_validation({}));
}

TEST_CASE("evaluation cadence") {
    TrainOptions o;
    o.iterations = 500;
    CHECK(eval_cadence(o) == 25);
    o.eval_every = 7;
    CHECK(eval_cadence(o) == 7);
    o.eval_every = 0;
    o.iterations = 10;
    CHECK(eval_cadence(o) == 1);
}

TEST_CASE("supervised training on all labels separates the moons") {
    DatasetSplit d = make_moons({40, 1, 100, 500}, MoonsGeometry{}, 2);
    TrainSpec s = quick_spec(Method::supervised, 500);
    s.training.hidden = 32;
    const TrainResult r = train(s, d, 3);
    CHECK(r.selected_record().test_err <= 0.05);
    CHECK(r.metrics.records.back().iteration == 500);
    CHECK(r.metrics.records.size() == 20);
}

TEST_CASE("training is deterministic in the seed for every method") {
    const DatasetSplit d = small_moons();
    for (Method m : {Method::supervised, Method::pi_model, Method::pseudo_label, Method::mean_teacher,
                     Method::vat, Method::rat, Method::random_transform}) {
        TrainSpec s = quick_spec(m, 20);
        s.method.lambda_max = 1.0;
        s.vat_epsilon = 0.3;
        s.composite = moons_rotation_transform(MoonsGeometry{});
        const TrainResult a = train(s, d, 5);
        const TrainResult b = train(s, d, 5);
        INFO(method_name(m));
        CHECK(a.metrics == b.metrics);
        CHECK(a.model->parameters() == b.model->parameters());
        CHECK(a.selected_index == b.selected_index);
    }
}

TEST_CASE("selected snapshot reproduces its recorded errors") {
    const DatasetSplit d = small_moons(4);
    TrainSpec s = quick_spec(Method::rat, 60);
    s.method.lambda_max = 1.0;
    s.composite = moons_rotation_transform(MoonsGeometry{});
    const TrainResult r = train(s, d, 6);
    const auto& rec = r.selected_record();
    CHECK(evaluate(*r.selected, d.x_validation, d.y_validation) == rec.val_err);
    CHECK(evaluate(*r.selected, d.x_test, d.y_test) == rec.test_err);
    for (const auto& other : r.metrics.records) CHECK(other.val_err >= rec.val_err);
}

TEST_CASE("a non-finite loss aborts with the iteration and seed") {
    DatasetSplit d = small_moons();
    for (double& v : d.x_labeled.data()) v *= 1e10;
    TrainSpec s = quick_spec(Method::supervised, 10);
    s.training.lr = 1e300;  // one step puts the weights near 1e300; the next forward overflows
    try {
        train(s, d, 77);
        FAIL("expected divergence");
    } catch (const TrainingDiverged& e) {
        const std::string msg = e.what();
        CHECK(msg.find("seed 77") != std::string::npos);
        CHECK(msg.find("iteration") != std::string::npos);
    }
}

TEST_CASE("boundary table of an input-independent classifier") {
    const LinearSoftmax flat(Tensor(Shape{2, 2}), Tensor(Shape{2}));
    BoundaryGrid grid;
    grid.resolution = 7;
    const Tensor t = boundary_table(flat, grid);
    CHECK(t.shape() == Shape{49, 4});
    for (std::size_t r = 0; r < 49; ++r) {
        CHECK(t.at(r, 2) == 0.0);
        CHECK(t.at(r, 3) == doctest::Approx(0.5));
    }
    CHECK(t.at(0, 0) == grid.x1_min);
    CHECK(t.at(1, 1) == grid.x2_min);
    CHECK(t.at(48, 0) == grid.x1_max);
    CHECK(t.at(48, 1) == grid.x2_max);
    std::ostringstream os;
    write_boundary_csv(os, t);
    CHECK(os.str().rfind("x1,x2,class,confidence\n", 0) == 0);
    const LinearSoftmax wide(Tensor(Shape{3, 2}), Tensor(Shape{2}));
    CHECK_THROWS(boundary_table(wide, grid));
}

TEST_CASE("metrics CSV layout") {
    RunMetrics m;
    m.records = {{25, 1.5, 0.25, 0.1, 0.2}};
    m.block_seconds = {3.0};
    std::ostringstream os;
    write_metrics_csv(os, m);
    CHECK(os.str() == "iteration,loss,reg,val_err,test_err\n25,1.5,0.25,0.1,0.2\n");
}
