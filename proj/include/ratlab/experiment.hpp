#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ratlab/config.hpp"
#include "ratlab/data.hpp"
#include "ratlab/training.hpp"

namespace ratlab {

// Output layout of a run directory:
//   config.cfg                          resolved config
//   summary.txt                         key=value lines, deterministic
//   trial_<i>_seed_<s>/metrics.csv      iteration,loss,reg,val_err,test_err
//   trial_<i>_seed_<s>/boundary.csv     x1,x2,class,confidence (2-D data only)
//   trial_<i>_seed_<s>/snapshot.ratt    selected parameters, tensor records
// A gridsearch directory holds gridsearch.csv and one run directory per value
// (value_<k>/).

struct TrialSeeds {
    std::uint64_t data;
    std::uint64_t train;
};
TrialSeeds derive_seeds(std::uint64_t trial_seed);

// Dataset for one trial, preprocessed per config.
DatasetSplit prepare_dataset(const ExperimentConfig& cfg, std::uint64_t data_seed);

struct TrialOutcome {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double test_err = 0.0;  // at the selected checkpoint
    double val_err = 0.0;
    std::size_t selected_iteration = 0;
    double final_test_err = 0.0;
    RunMetrics metrics;
    std::vector<Tensor> selected_params;
    GenerationStats generation;
};

TrialOutcome run_trial(const ExperimentConfig& cfg, std::size_t index, std::uint64_t seed);

struct RunSummary {
    std::string name;
    Method method = Method::supervised;
    std::vector<TrialOutcome> trials;
    double mean_test_err = 0.0;
    double std_test_err = 0.0;  // sample standard deviation
    double mean_val_err = 0.0;
    std::size_t failed = 0;
};

struct RunOptions {
    bool force = false;
    std::size_t threads = 0;  // 0: RAT_LAB_THREADS or hardware concurrency
    bool write_files = true;
};

std::size_t resolve_threads(std::size_t requested, std::size_t trials);

// Runs every seed of the config; writes the layout above under `out`.
RunSummary run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out,
                          const RunOptions& options);

std::string format_summary(const RunSummary& s);
void print_summary_table(std::ostream& os, const RunSummary& s);

struct GridRow {
    double value = 0.0;
    double mean_err = 0.0;
    double std_err = 0.0;
    std::size_t failed = 0;
};

struct GridResult {
    std::string param;
    std::vector<GridRow> rows;
    std::size_t argmin = 0;
};

GridResult gridsearch(const ExperimentConfig& cfg, const std::string& param,
                      const std::vector<double>& values, const std::filesystem::path& out,
                      const RunOptions& options);
std::string format_grid_csv(const GridResult& g);

// Refuses a non-empty directory unless force; with force removes only the
// entries this tool writes.
void prepare_output_dir(const std::filesystem::path& out, bool force);

double mean_of(const std::vector<double>& v);
double sample_std(const std::vector<double>& v);

}  // namespace ratlab
