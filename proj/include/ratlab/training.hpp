#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <vector>

#include "ratlab/adversarial.hpp"
#include "ratlab/data.hpp"
#include "ratlab/model.hpp"
#include "ratlab/objectives.hpp"

namespace ratlab {

struct OptState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::size_t step = 0;
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

OptState adam_init(const std::vector<Tensor>& params, double lr);
// Bias-corrected Adam with the state's current lr.
void adam_step(OptState& state, std::vector<Tensor>& params, const std::vector<Tensor>& grads);

// base_lr before decay_at * total, base_lr * factor from there on.
double lr_schedule(double base_lr, std::size_t t, std::size_t total, double decay_at = 0.8,
                   double factor = 0.2);

struct TrainOptions {
    std::size_t iterations = 500;
    std::size_t labeled_batch = 0;    // 0: full batch
    std::size_t unlabeled_batch = 0;  // 0: full batch
    double lr = 0.001;
    double lr_decay_at = 0.8;
    double lr_decay_factor = 0.2;
    std::size_t eval_every = 0;  // 0: iterations / 20
    std::size_t hidden = 128;
    friend bool operator==(const TrainOptions&, const TrainOptions&) = default;
};

struct TrainSpec {
    MethodConfig method;
    AdvConfig adv;
    Composite composite;                 // rat / random_transform
    std::size_t epsilon_rampup = 0;      // horizon for every epsilon, VAT included; 0 disables
    double vat_epsilon = 6.0;
    bool stop_gradient_p = true;
    AugmentPolicy input_augment;         // applied to every drawn batch
    TrainOptions training;
};

struct MetricRecord {
    std::size_t iteration = 0;
    double loss = 0.0;
    double reg = 0.0;
    double val_err = 0.0;
    double test_err = 0.0;
    friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

struct RunMetrics {
    std::vector<MetricRecord> records;
    std::vector<double> block_seconds;  // wall clock per evaluation block; not compared
    friend bool operator==(const RunMetrics& a, const RunMetrics& b) {
        return a.records == b.records;
    }
};

struct TrainResult {
    RunMetrics metrics;
    std::unique_ptr<Classifier> model;      // final parameters
    std::unique_ptr<Classifier> selected;   // parameters at minimum validation error
    std::size_t selected_index = 0;         // into metrics.records
    GenerationStats generation;

    const MetricRecord& selected_record() const { return metrics.records.at(selected_index); }
};

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::size_t eval_cadence(const TrainOptions& opt);

// Deterministic under (spec, data, seed).
TrainResult train(const TrainSpec& spec, const DatasetSplit& data, std::uint64_t seed);

// Fraction of argmax mispredictions.
double evaluate(const Classifier& model, const Tensor& x, std::span<const int> y);

// First minimum; ties resolve to the earliest record.
std::size_t select_min_validation(const std::vector<MetricRecord>& records);

struct BoundaryGrid {
    double x1_min = -1.5, x1_max = 2.5;
    double x2_min = -1.25, x2_max = 1.75;
    std::size_t resolution = 100;
};

// Row-major (x2 outer, x1 inner) grid rows: x1, x2, class, confidence.
Tensor boundary_table(const Classifier& model, const BoundaryGrid& grid);
void write_boundary_csv(std::ostream& os, const Tensor& table);
void write_metrics_csv(std::ostream& os, const RunMetrics& metrics);

}  // namespace ratlab
