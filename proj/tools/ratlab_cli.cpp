#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "ratlab/config.hpp"
#include "ratlab/experiment.hpp"
#include "ratlab/selfcheck.hpp"

namespace {

using namespace ratlab;

constexpr int kExitTrialFailure = 1;
constexpr int kExitUsage = 2;

struct BatteryFlags {
    std::string config;
    std::string seed_list;
    std::optional<std::size_t> trials;
    std::string out;
    bool force = false;
};

void add_battery_flags(CLI::App* cmd, BatteryFlags& f) {
    cmd->add_option("--config", f.config, "experiment config file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed-list", f.seed_list, "comma-separated seeds, overrides the config");
    cmd->add_option("--trials", f.trials, "number of trials (first N seeds, or seed+0..N-1)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--out", f.out, "output directory (default runs/<name>)");
    cmd->add_flag("--force", f.force, "overwrite an existing output directory");
}

ExperimentConfig resolve(const BatteryFlags& f) {
    ExperimentConfig cfg = load_config(f.config);
    if (!f.seed_list.empty()) cfg.seeds = parse_seed_list(f.seed_list);
    if (f.trials) {
        const std::size_t n = *f.trials;
        if (!f.seed_list.empty()) {
            if (n > cfg.seeds.size()) {
                throw std::invalid_argument("--trials " + std::to_string(n) + " exceeds the " +
                                            std::to_string(cfg.seeds.size()) + " listed seeds");
            }
            cfg.seeds.resize(n);
        } else {
            const std::uint64_t base = cfg.seeds.front();
            cfg.seeds.clear();
            for (std::size_t i = 0; i < n; ++i) cfg.seeds.push_back(base + i);
        }
    }
    return cfg;
}

std::filesystem::path out_dir(const BatteryFlags& f, const ExperimentConfig& cfg) {
    return f.out.empty() ? std::filesystem::path("runs") / cfg.name : std::filesystem::path(f.out);
}

int cmd_run(const BatteryFlags& f) {
    const ExperimentConfig cfg = resolve(f);
    const auto out = out_dir(f, cfg);
    const RunSummary s = run_experiment(cfg, out, {f.force, 0, true});
    print_summary_table(std::cout, s);
    for (const auto& t : s.trials) {
        if (!t.ok) std::cerr << "ratlab: " << t.error << '\n';
    }
    std::cout << "wrote " << (out / "summary.txt").string() << '\n';
    return s.failed ? kExitTrialFailure : 0;
}

int cmd_gridsearch(const BatteryFlags& f, const std::string& param, const std::string& values) {
    const ExperimentConfig cfg = resolve(f);
    const auto out = out_dir(f, cfg);
    const GridResult g = gridsearch(cfg, param, parse_value_list(values), out, {f.force, 0, true});
    std::cout << g.param << "\n  value        mean_err   std_err\n";
    std::size_t failed = 0;
    for (std::size_t k = 0; k < g.rows.size(); ++k) {
        const auto& r = g.rows[k];
        failed += r.failed;
        std::printf("  %-11g  %8.4f  %8.4f%s%s\n", r.value, r.mean_err, r.std_err,
                    k == g.argmin ? "  <- argmin" : "", r.failed ? "  (failed trials)" : "");
    }
    std::cout << "wrote " << (out / "gridsearch.csv").string() << '\n';
    return failed ? kExitTrialFailure : 0;
}

int cmd_make_moons(const std::string& config, std::uint64_t seed, const std::string& out) {
    ExperimentConfig cfg = config.empty() ? default_config(Method::supervised, DatasetKind::moons)
                                          : load_config(config);
    if (cfg.dataset.kind != DatasetKind::moons) {
        throw std::invalid_argument("make-moons: config dataset kind is not moons");
    }
    const DatasetSplit d = make_moons(cfg.dataset.counts, cfg.dataset.geometry, seed);
    if (out.empty() || out == "-") {
        write_points_csv(std::cout, d);
        return 0;
    }
    std::ofstream os(out);
    if (!os) throw std::runtime_error("cannot write " + out);
    write_points_csv(os, d);
    return 0;
}

int cmd_export_boundary(const std::string& snapshot, const std::string& config,
                        std::optional<std::size_t> resolution, const std::string& out) {
    BoundaryGrid grid;
    if (!config.empty()) grid = load_config(config).boundary.grid;
    if (resolution) grid.resolution = *resolution;
    const Mlp model = Mlp::from_parameters(load_tensors(snapshot));
    const Tensor table = boundary_table(model, grid);
    if (out.empty() || out == "-") {
        write_boundary_csv(std::cout, table);
        return 0;
    }
    std::ofstream os(out);
    if (!os) throw std::runtime_error("cannot write " + out);
    write_boundary_csv(os, table);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ratlab: adversarial-transformation regularization experiments"};
    app.require_subcommand(1);

    BatteryFlags run_flags;
    auto* run = app.add_subcommand("run", "run every trial of a config");
    add_battery_flags(run, run_flags);

    BatteryFlags grid_flags;
    std::string param, values;
    auto* grid = app.add_subcommand("gridsearch", "sweep one numeric config leaf");
    add_battery_flags(grid, grid_flags);
    grid->add_option("--param", param, "dotted key path, e.g. transform.0.epsilon")->required();
    grid->add_option("--values", values, "comma-separated list or start:stop:step")->required();

    std::string moons_config, moons_out;
    std::uint64_t moons_seed = 0;
    auto* moons = app.add_subcommand("make-moons", "export a moons dataset as CSV");
    moons->add_option("--config", moons_config, "config providing geometry and counts")
        ->check(CLI::ExistingFile);
    moons->add_option("--seed", moons_seed, "dataset seed");
    moons->add_option("--out", moons_out, "CSV path (default: stdout)");

    std::string snap, boundary_config, boundary_out;
    std::optional<std::size_t> resolution;
    auto* boundary = app.add_subcommand("export-boundary", "decision boundary from a snapshot");
    boundary->add_option("--snapshot", snap, "snapshot.ratt of a 2-D model")
        ->required()
        ->check(CLI::ExistingFile);
    boundary->add_option("--config", boundary_config, "config providing the [boundary] grid")
        ->check(CLI::ExistingFile);
    boundary->add_option("--resolution", resolution, "grid points per axis");
    boundary->add_option("--out", boundary_out, "CSV path (default: stdout)");

    auto* selfcheck = app.add_subcommand("selfcheck", "run the built-in invariant checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);  // prints help or the error
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (*run) return cmd_run(run_flags);
        if (*grid) return cmd_gridsearch(grid_flags, param, values);
        if (*moons) return cmd_make_moons(moons_config, moons_seed, moons_out);
        if (*boundary) return cmd_export_boundary(snap, boundary_config, resolution, boundary_out);
        if (*selfcheck) return run_selfcheck(std::cout) ? 0 : kExitTrialFailure;
    } catch (const ConfigError& e) {
        std::cerr << "ratlab: config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "ratlab: " << e.what() << '\n';
        return kExitUsage;
    }
    return 0;
}
