#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ratlab/autodiff.hpp"
#include "ratlab/model.hpp"
#include "ratlab/rng.hpp"
#include "ratlab/transforms.hpp"

namespace ratlab {

struct AdvConfig {
    double xi = 1e-6;          // finite-difference step
    int power_iterations = 1;  // one iteration is the default
    friend bool operator==(const AdvConfig&, const AdvConfig&) = default;
};

void validate(const AdvConfig& cfg);

// Sigmoid-shaped ramp exp(-5 (1 - x)^2), x = min(t / horizon, 1).
// A zero horizon disables the ramp (value 1 everywhere).
double sigmoid_rampup(std::size_t t, std::size_t horizon);

struct RampSchedule {
    double max_value = 0.0;
    std::size_t horizon = 0;  // 0 disables rampup
};

double rampup_value(const RampSchedule& s, std::size_t t);

// Counters for degenerate directions met during generation.
struct GenerationStats {
    std::size_t zero_gradient_rows = 0;
};

// Power iteration driven by a displaced-gradient oracle. `grad_at(v)` must
// return the gradient with respect to v of F(xi * v); for F with a stationary
// minimum at 0 this is xi^2 H v up to O(xi^3). Rows of `direction` are
// iterated independently and kept at unit L2 norm between iterations.
// Returns the raw gradient of the last iteration; `last_direction` receives the
// direction it was evaluated at.
using DisplacedGradient = std::function<Tensor(const Tensor& direction)>;
Tensor power_iteration_fd(const DisplacedGradient& grad_at, Tensor direction, int iterations,
                          Tensor* last_direction = nullptr);

// Unit-L2 rows; rows that are exactly zero are left untouched and reported.
std::vector<std::size_t> normalize_rows_l2(Tensor& t, double target = 1.0);

// Virtual adversarial perturbation r with ||r_b||_2 == eps for every sample b.
Tensor vadv_perturbation(const Classifier& model, const Tensor& x, double eps,
                         const AdvConfig& cfg, Rng& rng, GenerationStats* stats = nullptr);

// Adversarial parameters for each component of `composite`: random unit
// directions, one joint displaced gradient through the whole chain, then each
// component normalized to its ramped epsilon. Returns phi_id + v per component.
std::vector<Tensor> tadv_params(const Classifier& model, const Tensor& x,
                                const Composite& composite,
                                std::span<const RampSchedule> schedules, const AdvConfig& cfg,
                                std::size_t t, Rng& rng, GenerationStats* stats = nullptr);

// Random directions at the same ramped norms (the non-adversarial variant).
std::vector<Tensor> random_params(const Composite& composite,
                                  std::span<const RampSchedule> schedules, std::size_t t,
                                  std::size_t batch, Rng& rng);

// One schedule per component with max_value = the component's epsilon_max.
std::vector<RampSchedule> schedules_for(const Composite& composite, std::size_t horizon);

// Largest per-sample gradient norm of the transformed KL at identity params.
// Analytically zero; used as a sanity check.
double identity_gradient_norm(const Classifier& model, const Tensor& x,
                              const Composite& composite);

// KL[p(.|x) || p(.|f(x))] as a value.
double lds_t(const Classifier& model, const Tensor& x, const Composite& composite,
             const std::vector<Tensor>& params);

// Recorded form for training: `clean_log_probs` are the model's log-probs on x
// (computed with theta), transform params are constants.
ad::Var lds_t(const Classifier& model, std::span<const ad::Var> theta, ad::Var clean_log_probs,
              ad::Var x, const Composite& composite, const std::vector<Tensor>& params,
              bool stop_gradient_p = true);

}  // namespace ratlab
