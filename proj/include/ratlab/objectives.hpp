#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "ratlab/adversarial.hpp"
#include "ratlab/autodiff.hpp"
#include "ratlab/data.hpp"
#include "ratlab/model.hpp"
#include "ratlab/transforms.hpp"

namespace ratlab {

enum class Method { supervised, pi_model, pseudo_label, mean_teacher, vat, rat, random_transform };

std::string_view method_name(Method m);
Method parse_method(std::string_view s);

struct MethodConfig {
    Method method = Method::supervised;
    double lambda_max = 0.0;
    std::size_t lambda_rampup = 0;  // horizon in iterations; 0 disables
    double entropy_weight = 0.0;
    double pseudo_label_threshold = 0.95;
    double ema_decay = 0.95;
    // Stochastic perturbation of the two branches of Pi-Model / Mean Teacher.
    AugmentPolicy perturbation{AugmentKind::gaussian, 0.15, 2};
    // Include the labeled batch in the batch the regularizer sees.
    bool regularize_labeled = true;
    friend bool operator==(const MethodConfig&, const MethodConfig&) = default;
};

void validate(const MethodConfig& cfg);

double lambda_schedule(const MethodConfig& cfg, std::size_t t);

// Recorded terms. `theta` are the model parameters recorded on `g`.
ad::Var supervised_loss(const Classifier& model, ad::Graph& g, std::span<const ad::Var> theta,
                        const Tensor& x_l, std::span<const int> y);
ad::Var entropy_term(const Classifier& model, ad::Graph& g, std::span<const ad::Var> theta,
                     const Tensor& x_u);

// Value forms with the model's current parameters.
double supervised_loss(const Classifier& model, const Tensor& x_l, std::span<const int> y);
double entropy_term(const Classifier& model, const Tensor& x_u);

struct LossTerms {
    ad::Var total;
    double supervised = 0.0;
    double regularizer = 0.0;  // unweighted consistency / LDS value
    double entropy = 0.0;
};

// supervised + lambda * consistency + entropy_weight * entropy, with the
// consistency term supplied by the caller.
LossTerms assemble(ad::Var supervised, ad::Var consistency, ad::Var entropy, double lambda,
                   double entropy_weight);

struct AdversarialSetup {
    AdvConfig adv;
    Composite composite;                // rat / random_transform
    std::vector<RampSchedule> schedules;  // one per component
    double vat_epsilon = 6.0;
    bool stop_gradient_p = true;
};

// Consistency term at fixed (constant) transform params.
ad::Var consistency_at(const Classifier& model, ad::Graph& g, std::span<const ad::Var> theta,
                       const Tensor& x_u, const Composite& composite,
                       const std::vector<Tensor>& params, bool stop_gradient_p);

LossTerms rat_objective(const Classifier& model, ad::Graph& g, std::span<const ad::Var> theta,
                        const Tensor& x_l, std::span<const int> y, const Tensor& x_u,
                        const AdversarialSetup& setup, const MethodConfig& cfg, std::size_t t,
                        Rng& rng, GenerationStats* stats = nullptr);

LossTerms vat_objective(const Classifier& model, ad::Graph& g, std::span<const ad::Var> theta,
                        const Tensor& x_l, std::span<const int> y, const Tensor& x_u,
                        double eps, const AdversarialSetup& setup, const MethodConfig& cfg,
                        std::size_t t, Rng& rng, GenerationStats* stats = nullptr);

LossTerms random_transform_objective(const Classifier& model, ad::Graph& g,
                                     std::span<const ad::Var> theta, const Tensor& x_l,
                                     std::span<const int> y, const Tensor& x_u,
                                     const AdversarialSetup& setup, const MethodConfig& cfg,
                                     std::size_t t, Rng& rng);

// Mean over all elements of (p(a1(x)) - p(a2(x)))^2 for two independent draws
// of the perturbation policy. Gradient flows through both branches.
ad::Var pi_model_loss(const Classifier& model, ad::Graph& g, std::span<const ad::Var> theta,
                      const Tensor& x_u, const AugmentPolicy& policy, const ImageGeometry& image,
                      Rng& rng);

// Cross-entropy against the model's own argmax, masked to max prob >= threshold,
// averaged over the full batch. Targets are constants.
ad::Var pseudo_label_loss(const Classifier& model, ad::Graph& g, std::span<const ad::Var> theta,
                          const Tensor& x_u, double threshold);

// Mean squared difference between student and (constant) teacher
// probabilities, each on an independent draw of the perturbation policy.
ad::Var mean_teacher_consistency(const Classifier& student, ad::Graph& g,
                                 std::span<const ad::Var> theta, const Classifier& teacher,
                                 const Tensor& x_u, const AugmentPolicy& policy,
                                 const ImageGeometry& image, Rng& rng);

// teacher = decay * teacher + (1 - decay) * student, per parameter tensor.
void ema_update(std::vector<Tensor>& teacher, const std::vector<Tensor>& student, double decay);

struct MeanTeacherStep {
    double consistency;
};
// Consistency on unperturbed x_u, then the EMA update of `teacher`.
MeanTeacherStep mean_teacher_step(const Classifier& student, Classifier& teacher,
                                  const Tensor& x_u, double decay);

double mean_squared_probability_gap(const Classifier& a, const Classifier& b, const Tensor& x);

}  // namespace ratlab
