#include "ratlab/objectives.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ratlab {

std::string_view method_name(Method m) {
    switch (m) {
        case Method::supervised: return "supervised";
        case Method::pi_model: return "pi_model";
        case Method::pseudo_label: return "pseudo_label";
        case Method::mean_teacher: return "mean_teacher";
        case Method::vat: return "vat";
        case Method::rat: return "rat";
        case Method::random_transform: return "random_transform";
    }
    return "?";
}

Method parse_method(std::string_view s) {
    for (Method m : {Method::supervised, Method::pi_model, Method::pseudo_label,
                     Method::mean_teacher, Method::vat, Method::rat, Method::random_transform}) {
        if (method_name(m) == s) return m;
    }
    throw std::invalid_argument("unknown method '" + std::string(s) + "'");
}

void validate(const MethodConfig& cfg) {
    if (!(cfg.lambda_max >= 0.0)) throw std::invalid_argument("method: lambda must be >= 0");
    if (!(cfg.entropy_weight >= 0.0)) {
        throw std::invalid_argument("method: entropy_weight must be >= 0");
    }
    if (!(cfg.pseudo_label_threshold >= 0.0 && cfg.pseudo_label_threshold <= 1.0)) {
        throw std::invalid_argument("method: pseudo_label_threshold must lie in [0, 1]");
    }
    if (!(cfg.ema_decay >= 0.0 && cfg.ema_decay < 1.0)) {
        throw std::invalid_argument("method: ema_decay must lie in [0, 1)");
    }
    if (!(cfg.perturbation.noise_sigma >= 0.0) || cfg.perturbation.max_shift < 0) {
        throw std::invalid_argument("method: perturbation sigma and shift must be >= 0");
    }
}

double lambda_schedule(const MethodConfig& cfg, std::size_t t) {
    return rampup_value({cfg.lambda_max, cfg.lambda_rampup}, t);
}

namespace {

ad::Var log_probs(const Classifier& model, ad::Graph& g, std::span<const ad::Var> theta,
                  const Tensor& x) {
    return ad::log_softmax(model.logits(g, g.constant(x), theta));
}

ad::Var probs(const Classifier& model, ad::Graph& g, std::span<const ad::Var> theta,
              const Tensor& x) {
    return ad::exp(log_probs(model, g, theta, x));
}

ad::Var zero(ad::Graph& g) { return g.constant(Tensor::scalar(0.0)); }

ad::Var maybe_entropy(const Classifier& model, ad::Graph& g, std::span<const ad::Var> theta,
                      const Tensor& x_u, double weight) {
    return weight > 0.0 ? entropy_term(model, g, theta, x_u) : zero(g);
}

}  // namespace

ad::Var supervised_loss(const Classifier& model, ad::Graph& g, std::span<const ad::Var> theta,
                        const Tensor& x_l, std::span<const int> y) {
    const int k = static_cast<int>(model.num_classes());
    for (int label : y) {
        if (label < 0 || label >= k) {
            throw std::out_of_range("supervised_loss: label " + std::to_string(label) +
                                    " outside [0, " + std::to_string(k) + ")");
        }
    }
    return ad::nll(log_probs(model, g, theta, x_l), y);
}

ad::Var entropy_term(const Classifier& model, ad::Graph& g, std::span<const ad::Var> theta,
                     const Tensor& x_u) {
    return ad::entropy(log_probs(model, g, theta, x_u));
}

double supervised_loss(const Classifier& model, const Tensor& x_l, std::span<const int> y) {
    ad::Graph g;
    const auto theta = model.parameter_leaves(g);
    return supervised_loss(model, g, theta, x_l, y).value().item();
}

double entropy_term(const Classifier& model, const Tensor& x_u) {
    ad::Graph g;
    const auto theta = model.parameter_leaves(g);
    return entropy_term(model, g, theta, x_u).value().item();
}

LossTerms assemble(ad::Var supervised, ad::Var consistency, ad::Var entropy, double lambda,
                   double entropy_weight) {
    LossTerms out;
    out.supervised = supervised.value().item();
    out.regularizer = consistency.value().item();
    out.entropy = entropy.value().item();
    out.total = supervised + ad::scale(consistency, lambda) + ad::scale(entropy, entropy_weight);
    return out;
}

ad::Var consistency_at(const Classifier& model, ad::Graph& g, std::span<const ad::Var> theta,
                       const Tensor& x_u, const Composite& composite,
                       const std::vector<Tensor>& params, bool stop_gradient_p) {
    return lds_t(model, theta, log_probs(model, g, theta, x_u), g.constant(x_u), composite, params,
                 stop_gradient_p);
}

LossTerms rat_objective(const Classifier& model, ad::Graph& g, std::span<const ad::Var> theta,
                        const Tensor& x_l, std::span<const int> y, const Tensor& x_u,
                        const AdversarialSetup& setup, const MethodConfig& cfg, std::size_t t,
                        Rng& rng, GenerationStats* stats) {
    // Generated with the current parameters, then held fixed.
    const std::vector<Tensor> params =
        tadv_params(model, x_u, setup.composite, setup.schedules, setup.adv, t, rng, stats);
    return assemble(supervised_loss(model, g, theta, x_l, y),
                    consistency_at(model, g, theta, x_u, setup.composite, params,
                                   setup.stop_gradient_p),
                    maybe_entropy(model, g, theta, x_u, cfg.entropy_weight),
                    lambda_schedule(cfg, t), cfg.entropy_weight);
}

LossTerms vat_objective(const Classifier& model, ad::Graph& g, std::span<const ad::Var> theta,
                        const Tensor& x_l, std::span<const int> y, const Tensor& x_u,
                        double eps, const AdversarialSetup& setup, const MethodConfig& cfg,
                        std::size_t t, Rng& rng, GenerationStats* stats) {
    const Tensor r = vadv_perturbation(model, x_u, eps, setup.adv, rng, stats);
    const Composite noise{TransformSpec::noise(x_u.dim(1), eps)};
    return assemble(supervised_loss(model, g, theta, x_l, y),
                    consistency_at(model, g, theta, x_u, noise, {r}, setup.stop_gradient_p),
                    maybe_entropy(model, g, theta, x_u, cfg.entropy_weight),
                    lambda_schedule(cfg, t), cfg.entropy_weight);
}

LossTerms random_transform_objective(const Classifier& model, ad::Graph& g,
                                     std::span<const ad::Var> theta, const Tensor& x_l,
                                     std::span<const int> y, const Tensor& x_u,
                                     const AdversarialSetup& setup, const MethodConfig& cfg,
                                     std::size_t t, Rng& rng) {
    const std::vector<Tensor> params =
        random_params(setup.composite, setup.schedules, t, x_u.dim(0), rng);
    return assemble(supervised_loss(model, g, theta, x_l, y),
                    consistency_at(model, g, theta, x_u, setup.composite, params,
                                   setup.stop_gradient_p),
                    maybe_entropy(model, g, theta, x_u, cfg.entropy_weight),
                    lambda_schedule(cfg, t), cfg.entropy_weight);
}

ad::Var pi_model_loss(const Classifier& model, ad::Graph& g, std::span<const ad::Var> theta,
                      const Tensor& x_u, const AugmentPolicy& policy, const ImageGeometry& image,
                      Rng& rng) {
    const Tensor a = augment(x_u, policy, image, rng);
    const Tensor b = augment(x_u, policy, image, rng);
    return ad::mean(ad::square(probs(model, g, theta, a) - probs(model, g, theta, b)));
}

ad::Var pseudo_label_loss(const Classifier& model, ad::Graph& g, std::span<const ad::Var> theta,
                          const Tensor& x_u, double threshold) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
        throw std::invalid_argument("pseudo_label_loss: threshold must lie in [0, 1]");
    }
    const Tensor lp = model.predict_log_proba(x_u);
    const std::size_t m = lp.dim(0), k = lp.dim(1);
    std::vector<int> labels(m);
    std::vector<double> mask(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c) {
            if (lp[i * k + c] > lp[i * k + best]) best = c;
        }
        labels[i] = static_cast<int>(best);
        mask[i] = std::exp(lp[i * k + best]) >= threshold ? 1.0 : 0.0;
    }
    return ad::nll(log_probs(model, g, theta, x_u), labels, mask);
}

ad::Var mean_teacher_consistency(const Classifier& student, ad::Graph& g,
                                 std::span<const ad::Var> theta, const Classifier& teacher,
                                 const Tensor& x_u, const AugmentPolicy& policy,
                                 const ImageGeometry& image, Rng& rng) {
    const Tensor a = augment(x_u, policy, image, rng);
    const Tensor b = augment(x_u, policy, image, rng);
    Tensor target = teacher.predict_log_proba(b);
    for (double& v : target.data()) v = std::exp(v);
    return ad::mean(ad::square(probs(student, g, theta, a) - g.constant(target)));
}

void ema_update(std::vector<Tensor>& teacher, const std::vector<Tensor>& student, double decay) {
    if (!(decay >= 0.0 && decay < 1.0)) throw std::invalid_argument("ema_update: decay in [0, 1)");
    if (teacher.size() != student.size()) {
        throw ShapeError("ema_update: teacher has " + std::to_string(teacher.size()) +
                         " tensors, student " + std::to_string(student.size()));
    }
    for (std::size_t i = 0; i < teacher.size(); ++i) {
        if (teacher[i].shape() != student[i].shape()) {
            throw ShapeError("ema_update: tensor " + std::to_string(i) + " shape " +
                             shape_str(teacher[i].shape()) + " vs " +
                             shape_str(student[i].shape()));
        }
        auto t = teacher[i].data();
        auto s = student[i].data();
        for (std::size_t j = 0; j < t.size(); ++j) t[j] = decay * t[j] + (1.0 - decay) * s[j];
    }
}

double mean_squared_probability_gap(const Classifier& a, const Classifier& b, const Tensor& x) {
    const Tensor pa = a.predict_log_proba(x);
    const Tensor pb = b.predict_log_proba(x);
    double s = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        const double d = std::exp(pa[i]) - std::exp(pb[i]);
        s += d * d;
    }
    return s / static_cast<double>(pa.size());
}

MeanTeacherStep mean_teacher_step(const Classifier& student, Classifier& teacher,
                                  const Tensor& x_u, double decay) {
    MeanTeacherStep out{mean_squared_probability_gap(student, teacher, x_u)};
    ema_update(teacher.parameters(), student.parameters(), decay);
    return out;
}

}  // namespace ratlab
