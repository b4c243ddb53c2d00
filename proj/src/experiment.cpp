#include "ratlab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;

namespace ratlab {

namespace {

std::string fmt(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << content;
    if (!out) throw std::runtime_error("write failed: " + p.string());
}

std::string trial_dir_name(std::size_t index, std::uint64_t seed) {
    return "trial_" + std::to_string(index) + "_seed_" + std::to_string(seed);
}

std::vector<int> labels_from(const Tensor& y, std::size_t classes) {
    std::vector<int> out;
    out.reserve(y.size());
    for (double v : y.data()) {
        const double r = std::round(v);
        if (r != v || r < 0 || r >= static_cast<double>(classes)) {
            throw std::runtime_error("image set: label " + fmt(v) + " is not a class index below " +
                                     std::to_string(classes));
        }
        out.push_back(static_cast<int>(r));
    }
    return out;
}

}  // namespace

TrialSeeds derive_seeds(std::uint64_t trial_seed) {
    Rng r(trial_seed);
    const std::uint64_t data = r.engine()();
    const std::uint64_t train = r.engine()();
    return {data, train};
}

DatasetSplit prepare_dataset(const ExperimentConfig& cfg, std::uint64_t data_seed) {
    if (cfg.dataset.kind == DatasetKind::moons) {
        return make_moons(cfg.dataset.counts, cfg.dataset.geometry, data_seed);
    }
    const ImageSetConfig& im = cfg.dataset.images;
    const std::vector<Tensor> records = load_tensors(im.path);
    if (records.size() != 2) {
        throw std::runtime_error(im.path + ": expected two tensor records (images, labels), found " +
                                 std::to_string(records.size()));
    }
    const Tensor& x = records[0];
    if (x.rank() != 2 || x.dim(1) != im.image.dim()) {
        throw ShapeError(im.path + ": images " + shape_str(x.shape()) + " do not match " +
                         std::to_string(im.image.channels) + "x" + std::to_string(im.image.height) +
                         "x" + std::to_string(im.image.width));
    }
    DatasetSplit d = split_pool(x, labels_from(records[1], im.classes), im.image, im.classes,
                                im.labeled, im.validation, im.test, data_seed);
    if (im.gcn) {
        d.x_labeled = gcn(d.x_labeled);
        d.x_unlabeled = gcn(d.x_unlabeled);
        d.x_validation = gcn(d.x_validation);
        d.x_test = gcn(d.x_test);
    }
    if (im.zca) {
        const ZcaState z = zca_fit(concat_rows({&d.x_labeled, &d.x_unlabeled}), im.zca_zeta);
        d.x_labeled = zca_apply(z, d.x_labeled);
        d.x_unlabeled = zca_apply(z, d.x_unlabeled);
        d.x_validation = zca_apply(z, d.x_validation);
        d.x_test = zca_apply(z, d.x_test);
    }
    return d;
}

TrialOutcome run_trial(const ExperimentConfig& cfg, std::size_t index, std::uint64_t seed) {
    TrialOutcome t;
    t.index = index;
    t.seed = seed;
    const TrialSeeds seeds = derive_seeds(seed);
    const DatasetSplit data = prepare_dataset(cfg, seeds.data);
    const TrainSpec spec = build_train_spec(cfg, data.image);
    TrainResult r = train(spec, data, seeds.train);
    const MetricRecord& sel = r.selected_record();
    t.ok = true;
    t.test_err = sel.test_err;
    t.val_err = sel.val_err;
    t.selected_iteration = sel.iteration;
    t.final_test_err = r.metrics.records.back().test_err;
    t.metrics = std::move(r.metrics);
    t.selected_params = r.selected->parameters();
    t.generation = r.generation;
    return t;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::size_t resolve_threads(std::size_t requested, std::size_t trials) {
    std::size_t n = requested;
    if (n == 0) {
        if (const char* env = std::getenv("RAT_LAB_THREADS")) {
            const std::string_view s(env);
            std::size_t v = 0;
            const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
            if (res.ec != std::errc() || res.ptr != s.data() + s.size() || v == 0) {
                throw std::invalid_argument("RAT_LAB_THREADS must be a positive integer, got '" +
                                            std::string(s) + "'");
            }
            n = v;
        } else {
            n = std::max(1u, std::thread::hardware_concurrency());
        }
    }
    return std::max<std::size_t>(1, std::min(n, trials));
}

void prepare_output_dir(const fs::path& out, bool force) {
    if (fs::exists(out)) {
        if (!fs::is_directory(out)) throw std::runtime_error(out.string() + " is not a directory");
        if (!fs::is_empty(out)) {
            if (!force) {
                throw std::runtime_error("output directory " + out.string() +
                                         " is not empty; pass --force to overwrite");
            }
            for (const auto& e : fs::directory_iterator(out)) {
                const std::string name = e.path().filename().string();
                if (name == "config.cfg" || name == "summary.txt" || name == "gridsearch.csv" ||
                    name.rfind("trial_", 0) == 0 || name.rfind("value_", 0) == 0) {
                    fs::remove_all(e.path());
                }
            }
        }
    }
    fs::create_directories(out);
}

RunSummary run_experiment(const ExperimentConfig& cfg, const fs::path& out,
                          const RunOptions& options) {
    validate(cfg);
    if (options.write_files) {
        prepare_output_dir(out, options.force);
        write_file(out / "config.cfg", serialize_config(cfg));
    }
    RunSummary s;
    s.name = cfg.name;
    s.method = cfg.method.method;
    const std::size_t n = cfg.seeds.size();
    s.trials.resize(n);

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < n; i = next++) {
            TrialOutcome& t = s.trials[i];
            try {
                t = run_trial(cfg, i, cfg.seeds[i]);
                if (options.write_files) {
                    const fs::path dir = out / trial_dir_name(i, t.seed);
                    fs::create_directories(dir);
                    std::ostringstream m;
                    write_metrics_csv(m, t.metrics);
                    write_file(dir / "metrics.csv", m.str());
                    save_tensors((dir / "snapshot.ratt").string(), t.selected_params);
                    if (cfg.dataset.kind == DatasetKind::moons && cfg.boundary.enabled) {
                        const Mlp model = Mlp::from_parameters(t.selected_params);
                        std::ostringstream b;
                        write_boundary_csv(b, boundary_table(model, cfg.boundary.grid));
                        write_file(dir / "boundary.csv", b.str());
                    }
                }
            } catch (const std::exception& e) {
                t.index = i;
                t.seed = cfg.seeds[i];
                t.ok = false;
                t.error = "trial " + std::to_string(i) + " (seed " + std::to_string(cfg.seeds[i]) +
                          "): " + e.what();
            }
        }
    };
    const std::size_t threads = resolve_threads(options.threads, n);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker);
    }

    std::vector<double> test, val;
    for (const auto& t : s.trials) {
        if (!t.ok) {
            ++s.failed;
            continue;
        }
        test.push_back(t.test_err);
        val.push_back(t.val_err);
    }
    s.mean_test_err = mean_of(test);
    s.std_test_err = sample_std(test);
    s.mean_val_err = mean_of(val);
    if (options.write_files) write_file(out / "summary.txt", format_summary(s));
    return s;
}

std::string format_summary(const RunSummary& s) {
    std::ostringstream os;
    os << "name=" << s.name << "\n";
    os << "method=" << method_name(s.method) << "\n";
    os << "trials=" << s.trials.size() << "\n";
    os << "failed=" << s.failed << "\n";
    os << "mean_test_err=" << fmt(s.mean_test_err) << "\n";
    os << "std_test_err=" << fmt(s.std_test_err) << "\n";
    os << "mean_val_err=" << fmt(s.mean_val_err) << "\n";
    for (const auto& t : s.trials) {
        const std::string p = "trial_" + std::to_string(t.index) + "_";
        os << p << "seed=" << t.seed << "\n";
        os << p << "status=" << (t.ok ? "ok" : "failed") << "\n";
        if (t.ok) {
            os << p << "test_err=" << fmt(t.test_err) << "\n";
            os << p << "val_err=" << fmt(t.val_err) << "\n";
            os << p << "selected_iteration=" << t.selected_iteration << "\n";
            os << p << "final_test_err=" << fmt(t.final_test_err) << "\n";
        }
    }
    return os.str();
}

void print_summary_table(std::ostream& os, const RunSummary& s) {
    os << s.name << " (" << method_name(s.method) << ")\n";
    os << "  trial  seed        val_err   test_err  iteration\n";
    for (const auto& t : s.trials) {
        os << "  " << std::setw(5) << t.index << "  " << std::setw(4) << t.seed << "  ";
        if (!t.ok) {
            os << "failed: " << t.error << "\n";
            continue;
        }
        os << std::fixed << std::setprecision(4) << std::setw(13) << t.val_err << std::setw(11)
           << t.test_err << std::setw(11) << t.selected_iteration << "\n";
    }
    os << std::fixed << std::setprecision(2) << "  test error " << 100.0 * s.mean_test_err
       << "% +- " << 100.0 * s.std_test_err << "%";
    if (s.failed) os << "  (" << s.failed << " failed)";
    os << "\n";
    os.unsetf(std::ios::floatfield);
}

GridResult gridsearch(const ExperimentConfig& cfg, const std::string& param,
                      const std::vector<double>& values, const fs::path& out,
                      const RunOptions& options) {
    if (values.empty()) throw std::invalid_argument("gridsearch: no values");
    numeric_leaf(cfg, param);
    std::vector<ExperimentConfig> configs;
    for (double v : values) configs.push_back(with_numeric(cfg, param, v));
    if (options.write_files) prepare_output_dir(out, options.force);

    GridResult g;
    g.param = param;
    for (std::size_t k = 0; k < values.size(); ++k) {
        RunOptions sub = options;
        sub.force = true;
        const RunSummary s = run_experiment(configs[k], out / ("value_" + std::to_string(k)), sub);
        g.rows.push_back({values[k], s.mean_test_err, s.std_test_err, s.failed});
    }
    // Values with failed trials never win.
    bool found = false;
    for (std::size_t k = 0; k < g.rows.size(); ++k) {
        if (g.rows[k].failed) continue;
        if (!found || g.rows[k].mean_err < g.rows[g.argmin].mean_err) g.argmin = k;
        found = true;
    }
    if (options.write_files) {
        write_file(out / "gridsearch.csv", format_grid_csv(g));
    }
    return g;
}

std::string format_grid_csv(const GridResult& g) {
    std::ostringstream os;
    os << "value,mean_err,std_err,argmin\n";
    for (std::size_t k = 0; k < g.rows.size(); ++k) {
        os << fmt(g.rows[k].value) << ',' << fmt(g.rows[k].mean_err) << ','
           << fmt(g.rows[k].std_err) << ',' << (k == g.argmin ? 1 : 0) << '\n';
    }
    return os.str();
}

}  // namespace ratlab
