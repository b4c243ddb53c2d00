#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ratlab/data.hpp"
#include "ratlab/objectives.hpp"
#include "ratlab/training.hpp"
#include "ratlab/transforms.hpp"

namespace ratlab {

// Config grammar: '#' starts a comment, '[section]' opens a section,
// 'key = value' sets a key, lists are comma-separated. Transform components
// are sections named transform.0, transform.1, ... applied in index order.

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class DatasetKind { moons, images };

struct ImageSetConfig {
    std::string path;  // tensor file holding x [N, C*H*W] then y [N]
    ImageGeometry image{1, 8, 8};
    std::size_t classes = 10;
    std::size_t labeled = 100;
    std::size_t validation = 100;
    std::size_t test = 200;
    bool gcn = true;
    bool zca = true;
    double zca_zeta = 1e-5;
    friend bool operator==(const ImageSetConfig&, const ImageSetConfig&) = default;
};

struct DatasetConfig {
    DatasetKind kind = DatasetKind::moons;
    MoonsGeometry geometry;
    MoonsCounts counts;
    ImageSetConfig images;
    AugmentPolicy augment;  // input augmentation during training
};

struct TransformConfig {
    Family family = Family::noise;
    double epsilon = 1.0;
    std::size_t grid = 4;  // tps only
    friend bool operator==(const TransformConfig&, const TransformConfig&) = default;
};

struct BoundaryConfig {
    bool enabled = true;  // moons only
    BoundaryGrid grid;
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    DatasetConfig dataset;
    MethodConfig method;
    AdvConfig adv;
    bool epsilon_rampup_enabled = false;
    std::size_t epsilon_rampup = 0;  // horizon; 0 with rampup on means 0.8 x iterations
    double vat_epsilon = 6.0;
    bool stop_gradient_p = true;
    std::vector<TransformConfig> transforms;
    TrainOptions training;
    BoundaryConfig boundary;
};

// Compares only the dataset block that is active.
bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

// Shipped defaults for a method on a dataset kind.
ExperimentConfig default_config(Method method, DatasetKind kind);
double default_epsilon(Family family);

ExperimentConfig parse_config(std::string_view text, std::string_view origin = "<config>");
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

// Dotted key path "section.key" (e.g. "method.lambda", "transform.0.epsilon").
// Throws ConfigError if the leaf is missing or not numeric.
ExperimentConfig with_numeric(const ExperimentConfig& cfg, std::string_view path, double value);
double numeric_leaf(const ExperimentConfig& cfg, std::string_view path);

// Comma-separated values, or start:stop:step (inclusive, rounded to the step).
std::vector<double> parse_value_list(std::string_view spec);

std::vector<std::uint64_t> parse_seed_list(std::string_view spec);

Composite build_composite(const ExperimentConfig& cfg, const ImageGeometry& image);
TrainSpec build_train_spec(const ExperimentConfig& cfg, const ImageGeometry& image);

void validate(const ExperimentConfig& cfg);

}  // namespace ratlab
