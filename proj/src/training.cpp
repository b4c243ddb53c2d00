#include "ratlab/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

namespace ratlab {

OptState adam_init(const std::vector<Tensor>& params, double lr) {
    OptState s;
    s.lr = lr;
    for (const Tensor& p : params) {
        s.m.emplace_back(p.shape());
        s.v.emplace_back(p.shape());
    }
    return s;
}

void adam_step(OptState& s, std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
    if (params.size() != grads.size() || params.size() != s.m.size()) {
        throw ShapeError("adam_step: " + std::to_string(params.size()) + " params, " +
                         std::to_string(grads.size()) + " grads, " + std::to_string(s.m.size()) +
                         " moment slots");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].shape() != grads[i].shape() || params[i].shape() != s.m[i].shape()) {
            throw ShapeError("adam_step: shape mismatch at tensor " + std::to_string(i) + ": " +
                             shape_str(params[i].shape()) + " vs grad " +
                             shape_str(grads[i].shape()));
        }
    }
    ++s.step;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i].data();
        auto g = grads[i].data();
        auto m = s.m[i].data();
        auto v = s.v[i].data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = s.beta1 * m[j] + (1.0 - s.beta1) * g[j];
            v[j] = s.beta2 * v[j] + (1.0 - s.beta2) * g[j] * g[j];
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            p[j] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
        }
    }
}

double lr_schedule(double base_lr, std::size_t t, std::size_t total, double decay_at,
                   double factor) {
    const double boundary = decay_at * static_cast<double>(total);
    return static_cast<double>(t) < boundary ? base_lr : base_lr * factor;
}

std::size_t eval_cadence(const TrainOptions& opt) {
    if (opt.eval_every > 0) return opt.eval_every;
    return std::max<std::size_t>(1, opt.iterations / 20);
}

double evaluate(const Classifier& model, const Tensor& x, std::span<const int> y) {
    if (y.empty()) throw std::invalid_argument("evaluate: empty split");
    if (x.rank() != 2 || x.dim(0) != y.size()) {
        throw ShapeError("evaluate: " + shape_str(x.shape()) + " with " +
                         std::to_string(y.size()) + " labels");
    }
    const Tensor lp = model.predict_log_proba(x);
    const std::size_t k = lp.dim(1);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c) {
            if (lp[i * k + c] > lp[i * k + best]) best = c;
        }
        if (static_cast<int>(best) != y[i]) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(y.size());
}

std::size_t select_min_validation(const std::vector<MetricRecord>& records) {
    if (records.empty()) throw std::invalid_argument("select_min_validation: no records");
    std::size_t best = 0;
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].val_err < records[best].val_err) best = i;
    }
    return best;
}

namespace {

// Rows drawn without replacement; the full set, in order, when batch covers it.
std::vector<std::size_t> draw_rows(std::size_t n, std::size_t batch, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (batch == 0 || batch >= n) return idx;
    for (std::size_t i = 0; i < batch; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
    idx.resize(batch);
    return idx;
}

std::vector<int> take_labels(const std::vector<int>& y, const std::vector<std::size_t>& idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(y[i]);
    return out;
}

void check_data(const DatasetSplit& d) {
    if (d.x_labeled.rank() != 2 || d.x_labeled.dim(0) == 0) {
        throw std::invalid_argument("train: empty labeled split");
    }
    if (d.x_labeled.dim(0) != d.y_labeled.size() || d.x_validation.dim(0) != d.y_validation.size() ||
        d.x_test.dim(0) != d.y_test.size()) {
        throw ShapeError("train: split sizes and label counts disagree");
    }
    if (d.y_validation.empty() || d.y_test.empty()) {
        throw std::invalid_argument("train: validation and test splits must be non-empty");
    }
    const std::size_t dim = d.x_labeled.dim(1);
    for (const Tensor* t : {&d.x_unlabeled, &d.x_validation, &d.x_test}) {
        if (t->rank() != 2 || t->dim(1) != dim) {
            throw ShapeError("train: split dimension mismatch, " + shape_str(t->shape()));
        }
    }
}

}  // namespace

TrainResult train(const TrainSpec& spec, const DatasetSplit& data, std::uint64_t seed) {
    validate(spec.method);
    validate(spec.adv);
    check_data(data);
    const Method method = spec.method.method;
    const bool transform_method = method == Method::rat || method == Method::random_transform;
    if (transform_method && spec.composite.empty()) {
        throw std::invalid_argument("train: method " + std::string(method_name(method)) +
                                    " needs at least one transform");
    }
    if (method == Method::vat && !(spec.vat_epsilon > 0.0)) {
        throw std::invalid_argument("train: vat epsilon must be positive");
    }
    const bool needs_unlabeled = method != Method::supervised;
    if (needs_unlabeled && data.x_unlabeled.dim(0) == 0 && !spec.method.regularize_labeled) {
        throw std::invalid_argument("train: no data for the regularizer");
    }
    const TrainOptions& opt = spec.training;
    if (opt.iterations == 0) throw std::invalid_argument("train: iterations must be positive");

    Rng root(seed);
    Rng init_rng = root.split();
    Rng batch_rng = root.split();
    Rng gen_rng = root.split();
    Rng aug_rng = root.split();

    const std::size_t dim = data.x_labeled.dim(1);
    TrainResult result;
    result.model = std::make_unique<Mlp>(dim, opt.hidden, data.num_classes, init_rng);
    Classifier& model = *result.model;
    std::unique_ptr<Classifier> teacher;
    if (method == Method::mean_teacher) teacher = model.clone();

    OptState state = adam_init(model.parameters(), opt.lr);
    AdversarialSetup setup{spec.adv, spec.composite,
                           schedules_for(spec.composite, spec.epsilon_rampup), spec.vat_epsilon,
                           spec.stop_gradient_p};
    const std::size_t cadence = eval_cadence(opt);
    const std::size_t n_l = data.x_labeled.dim(0), n_u = data.x_unlabeled.dim(0);
    std::vector<Tensor> best_params;
    double best_val = 0.0;
    auto block_start = std::chrono::steady_clock::now();

    for (std::size_t t = 0; t < opt.iterations; ++t) {
        const auto li = draw_rows(n_l, opt.labeled_batch, batch_rng);
        Tensor x_l = take_rows(data.x_labeled, li);
        const std::vector<int> y_l = take_labels(data.y_labeled, li);
        Tensor x_u;
        if (n_u > 0) x_u = take_rows(data.x_unlabeled, draw_rows(n_u, opt.unlabeled_batch, batch_rng));
        if (spec.input_augment.kind != AugmentKind::none) {
            x_l = augment(x_l, spec.input_augment, data.image, aug_rng);
            if (n_u > 0) x_u = augment(x_u, spec.input_augment, data.image, aug_rng);
        }
        Tensor x_reg;
        if (needs_unlabeled) {
            if (n_u == 0) {
                x_reg = x_l;
            } else if (spec.method.regularize_labeled) {
                x_reg = concat_rows({&x_u, &x_l});
            } else {
                x_reg = x_u;
            }
        }

        LossTerms terms;
        double loss = 0.0;
        std::vector<Tensor> grads;
        try {
            ad::Graph g;
            const auto theta = model.parameter_leaves(g);
            const MethodConfig& mc = spec.method;
            const double lam = lambda_schedule(mc, t);
            auto entropy = [&]() {
                return mc.entropy_weight > 0.0 ? entropy_term(model, g, theta, x_reg)
                                               : g.constant(Tensor::scalar(0.0));
            };
            switch (method) {
                case Method::supervised: {
                    ad::Var z = g.constant(Tensor::scalar(0.0));
                    terms = assemble(supervised_loss(model, g, theta, x_l, y_l), z, z, 0.0, 0.0);
                    break;
                }
                case Method::pi_model:
                    terms = assemble(supervised_loss(model, g, theta, x_l, y_l),
                                     pi_model_loss(model, g, theta, x_reg, mc.perturbation,
                                                   data.image, gen_rng),
                                     entropy(), lam, mc.entropy_weight);
                    break;
                case Method::pseudo_label:
                    terms = assemble(supervised_loss(model, g, theta, x_l, y_l),
                                     pseudo_label_loss(model, g, theta, x_reg,
                                                       mc.pseudo_label_threshold),
                                     entropy(), lam, mc.entropy_weight);
                    break;
                case Method::mean_teacher:
                    terms = assemble(supervised_loss(model, g, theta, x_l, y_l),
                                     mean_teacher_consistency(model, g, theta, *teacher, x_reg,
                                                              mc.perturbation, data.image,
                                                              gen_rng),
                                     entropy(), lam, mc.entropy_weight);
                    break;
                case Method::vat:
                    terms = vat_objective(model, g, theta, x_l, y_l, x_reg,
                                          rampup_value({spec.vat_epsilon, spec.epsilon_rampup}, t),
                                          setup, mc, t, gen_rng, &result.generation);
                    break;
                case Method::rat:
                    terms = rat_objective(model, g, theta, x_l, y_l, x_reg, setup, mc, t, gen_rng,
                                          &result.generation);
                    break;
                case Method::random_transform:
                    terms = random_transform_objective(model, g, theta, x_l, y_l, x_reg, setup,
                                                       mc, t, gen_rng);
                    break;
            }
            loss = terms.total.value().item();
            if (!std::isfinite(loss)) throw NumericError("non-finite loss");
            grads = g.grad(terms.total, theta);
        } catch (const NumericError& e) {
            throw TrainingDiverged("train: " + std::string(method_name(method)) +
                                   " diverged at iteration " + std::to_string(t) + " (seed " +
                                   std::to_string(seed) + "): " + e.what());
        }

        state.lr = lr_schedule(opt.lr, t, opt.iterations, opt.lr_decay_at, opt.lr_decay_factor);
        adam_step(state, model.parameters(), grads);
        for (const Tensor& p : model.parameters()) {
            if (!p.all_finite()) {
                throw TrainingDiverged("train: non-finite parameters after iteration " +
                                       std::to_string(t) + " (seed " + std::to_string(seed) + ")");
            }
        }
        if (teacher) ema_update(teacher->parameters(), model.parameters(), spec.method.ema_decay);

        const std::size_t done = t + 1;
        if (done % cadence == 0 || done == opt.iterations) {
            MetricRecord rec;
            rec.iteration = done;
            rec.loss = loss;
            rec.reg = terms.regularizer;
            rec.val_err = evaluate(model, data.x_validation, data.y_validation);
            rec.test_err = evaluate(model, data.x_test, data.y_test);
            if (result.metrics.records.empty() || rec.val_err < best_val) {
                best_val = rec.val_err;
                best_params = model.parameters();
                result.selected_index = result.metrics.records.size();
            }
            result.metrics.records.push_back(rec);
            const auto now = std::chrono::steady_clock::now();
            result.metrics.block_seconds.push_back(
                std::chrono::duration<double>(now - block_start).count());
            block_start = now;
        }
    }

    result.selected = model.clone();
    result.selected->parameters() = std::move(best_params);
    return result;
}

Tensor boundary_table(const Classifier& model, const BoundaryGrid& grid) {
    if (model.input_dim() != 2) {
        throw std::invalid_argument("export_boundary: model input dimension is " +
                                    std::to_string(model.input_dim()) + ", need 2");
    }
    const std::size_t r = grid.resolution;
    if (r < 2) throw std::invalid_argument("export_boundary: resolution must be >= 2");
    Tensor pts(Shape{r * r, 2});
    for (std::size_t i = 0; i < r; ++i) {
        const double x2 = grid.x2_min + (grid.x2_max - grid.x2_min) * i / static_cast<double>(r - 1);
        for (std::size_t j = 0; j < r; ++j) {
            pts.at(i * r + j, 0) =
                grid.x1_min + (grid.x1_max - grid.x1_min) * j / static_cast<double>(r - 1);
            pts.at(i * r + j, 1) = x2;
        }
    }
    const Tensor lp = model.predict_log_proba(pts);
    const std::size_t k = lp.dim(1);
    Tensor out(Shape{r * r, 4});
    for (std::size_t n = 0; n < r * r; ++n) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c) {
            if (lp[n * k + c] > lp[n * k + best]) best = c;
        }
        out.at(n, 0) = pts.at(n, 0);
        out.at(n, 1) = pts.at(n, 1);
        out.at(n, 2) = static_cast<double>(best);
        out.at(n, 3) = std::exp(lp[n * k + best]);
    }
    return out;
}

void write_boundary_csv(std::ostream& os, const Tensor& table) {
    os << "x1,x2,class,confidence\n";
    write_csv(os, table);
}

void write_metrics_csv(std::ostream& os, const RunMetrics& metrics) {
    os << "iteration,loss,reg,val_err,test_err\n";
    Tensor t(Shape{metrics.records.size(), 5});
    for (std::size_t i = 0; i < metrics.records.size(); ++i) {
        const auto& r = metrics.records[i];
        t.at(i, 0) = static_cast<double>(r.iteration);
        t.at(i, 1) = r.loss;
        t.at(i, 2) = r.reg;
        t.at(i, 3) = r.val_err;
        t.at(i, 4) = r.test_err;
    }
    write_csv(os, t);
}

}  // namespace ratlab
