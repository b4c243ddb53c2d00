#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

#include "ratlab/adversarial.hpp"
#include "ratlab/config.hpp"
#include "ratlab/data.hpp"
#include "ratlab/experiment.hpp"
#include "ratlab/model.hpp"
#include "ratlab/training.hpp"
#include "ratlab/transforms.hpp"

namespace py = pybind11;
using namespace ratlab;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    Array out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

py::array_t<int> to_labels(const std::vector<int>& v) {
    py::array_t<int> out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

std::vector<Tensor> to_tensors(const std::vector<Array>& as) {
    std::vector<Tensor> out;
    for (const auto& a : as) out.push_back(to_tensor(a));
    return out;
}

py::list to_arrays(const std::vector<Tensor>& ts) {
    py::list out;
    for (const auto& t : ts) out.append(to_array(t));
    return out;
}

py::dict split_dict(const DatasetSplit& d) {
    py::dict out;
    out["x_labeled"] = to_array(d.x_labeled);
    out["y_labeled"] = to_labels(d.y_labeled);
    out["x_unlabeled"] = to_array(d.x_unlabeled);
    out["y_unlabeled"] = to_labels(d.y_unlabeled);
    out["x_validation"] = to_array(d.x_validation);
    out["y_validation"] = to_labels(d.y_validation);
    out["x_test"] = to_array(d.x_test);
    out["y_test"] = to_labels(d.y_test);
    return out;
}

py::dict summary_dict(const RunSummary& s) {
    py::dict out;
    out["name"] = s.name;
    out["method"] = std::string(method_name(s.method));
    out["mean_test_err"] = s.mean_test_err;
    out["std_test_err"] = s.std_test_err;
    out["mean_val_err"] = s.mean_val_err;
    out["failed"] = s.failed;
    py::list trials;
    for (const auto& t : s.trials) {
        py::dict d;
        d["seed"] = t.seed;
        d["ok"] = t.ok;
        d["error"] = t.error;
        d["test_err"] = t.test_err;
        d["val_err"] = t.val_err;
        d["selected_iteration"] = t.selected_iteration;
        d["params"] = to_arrays(t.selected_params);
        trials.append(d);
    }
    out["trials"] = trials;
    return out;
}

ExperimentConfig config_from(const std::string& text_or_path, bool is_path) {
    return is_path ? load_config(text_or_path) : parse_config(text_or_path);
}

}  // namespace

PYBIND11_MODULE(_ratlab, m) {
    m.doc() = "Adversarial-transformation regularization: core operations";

    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    // Models.
    py::class_<Classifier, std::shared_ptr<Classifier>>(m, "Classifier")
        .def("predict_log_proba", [](const Classifier& c, const Array& x) {
            return to_array(c.predict_log_proba(to_tensor(x)));
        })
        .def("parameters", [](const Classifier& c) { return to_arrays(c.parameters()); })
        .def_property_readonly("input_dim", &Classifier::input_dim)
        .def_property_readonly("num_classes", &Classifier::num_classes);

    py::class_<Mlp, Classifier, std::shared_ptr<Mlp>>(m, "Mlp")
        .def(py::init([](std::size_t input_dim, std::size_t hidden, std::size_t classes, std::uint64_t seed) {
                 Rng rng(seed);
                 return std::make_shared<Mlp>(input_dim, hidden, classes, rng);
             }),
             py::arg("input_dim"), py::arg("hidden"), py::arg("classes"), py::arg("seed") = 0)
        .def_static("from_parameters", [](const std::vector<Array>& params) {
            return std::make_shared<Mlp>(Mlp::from_parameters(to_tensors(params)));
        });

    py::class_<LinearSoftmax, Classifier, std::shared_ptr<LinearSoftmax>>(m, "LinearSoftmax")
        .def(py::init([](const Array& w, const Array& b) {
                 return std::make_shared<LinearSoftmax>(to_tensor(w), to_tensor(b));
             }),
             py::arg("weight"), py::arg("bias"));

    m.def("evaluate", [](const Classifier& c, const Array& x, const std::vector<int>& y) {
        return evaluate(c, to_tensor(x), y);
    });

    // Transforms.
    py::class_<TransformSpec>(m, "Transform")
        .def_static("noise", &TransformSpec::noise, py::arg("dim"), py::arg("epsilon"))
        .def_static("affine", [](std::size_t c, std::size_t h, std::size_t w, double eps) {
            return TransformSpec::affine({c, h, w}, eps);
        }, py::arg("channels"), py::arg("height"), py::arg("width"), py::arg("epsilon"))
        .def_static("tps", [](std::size_t c, std::size_t h, std::size_t w, double eps, std::size_t grid) {
            return TransformSpec::tps({c, h, w}, eps, grid);
        }, py::arg("channels"), py::arg("height"), py::arg("width"), py::arg("epsilon"), py::arg("grid") = 4)
        .def_static("flow", [](std::size_t c, std::size_t h, std::size_t w, double eps) {
            return TransformSpec::flow({c, h, w}, eps);
        }, py::arg("channels"), py::arg("height"), py::arg("width"), py::arg("epsilon"))
        .def_static("channel", [](std::size_t c, std::size_t h, std::size_t w, double eps) {
            return TransformSpec::channel({c, h, w}, eps);
        }, py::arg("channels"), py::arg("height"), py::arg("width"), py::arg("epsilon"))
        .def_static("moons_rotation", [](double eps) {
            return TransformSpec::rotation(MoonsGeometry{}.arcs, eps);
        }, py::arg("epsilon"), "rotation in degrees about the nearest default moons arc center")
        .def_property_readonly("family", [](const TransformSpec& s) { return std::string(family_name(s.family())); })
        .def_property_readonly("param_dim", &TransformSpec::param_dim)
        .def_property_readonly("epsilon", &TransformSpec::epsilon_max)
        .def("identity", [](const TransformSpec& s, std::size_t batch) { return to_array(identity_params(s, batch)); },
             py::arg("batch") = 1)
        .def("norms", [](const TransformSpec& s, const Array& p) { return param_norms(s, to_tensor(p)); })
        .def("normalize", [](const TransformSpec& s, const Array& p, double eps) {
            return to_array(normalize_to(s, to_tensor(p), eps));
        })
        .def("apply", [](const TransformSpec& s, const Array& p, const Array& x) {
            return to_array(apply(s, to_tensor(p), to_tensor(x)));
        });

    m.def("compose", [](const Composite& specs, const std::vector<Array>& params, const Array& x) {
        return to_array(compose(specs, to_tensors(params), to_tensor(x)));
    });

    // Adversarial generation.
    m.def("rampup_value", [](double max_value, std::size_t horizon, std::size_t t) {
        return rampup_value({max_value, horizon}, t);
    }, py::arg("max_value"), py::arg("horizon"), py::arg("t"));

    m.def("vadv_perturbation",
          [](const Classifier& model, const Array& x, double eps, double xi, int iterations, std::uint64_t seed) {
              Rng rng(seed);
              return to_array(vadv_perturbation(model, to_tensor(x), eps, {xi, iterations}, rng));
          },
          py::arg("model"), py::arg("x"), py::arg("epsilon"), py::arg("xi") = 1e-6,
          py::arg("power_iterations") = 1, py::arg("seed") = 0);

    m.def("tadv_params",
          [](const Classifier& model, const Array& x, const Composite& chain, double xi, int iterations,
             std::uint64_t seed, std::size_t horizon, std::size_t t) {
              Rng rng(seed);
              return to_arrays(tadv_params(model, to_tensor(x), chain, schedules_for(chain, horizon),
                                           {xi, iterations}, t, rng));
          },
          py::arg("model"), py::arg("x"), py::arg("transforms"), py::arg("xi") = 1e-6,
          py::arg("power_iterations") = 1, py::arg("seed") = 0, py::arg("horizon") = 0, py::arg("t") = 0);

    m.def("random_params",
          [](const Composite& chain, std::size_t batch, std::uint64_t seed, std::size_t horizon, std::size_t t) {
              Rng rng(seed);
              return to_arrays(random_params(chain, schedules_for(chain, horizon), t, batch, rng));
          },
          py::arg("transforms"), py::arg("batch"), py::arg("seed") = 0, py::arg("horizon") = 0, py::arg("t") = 0);

    m.def("lds_t", [](const Classifier& model, const Array& x, const Composite& chain,
                      const std::vector<Array>& params) {
        return lds_t(model, to_tensor(x), chain, to_tensors(params));
    });

    // Data.
    m.def("make_moons",
          [](std::uint64_t seed, std::size_t labeled, std::size_t unlabeled, std::size_t validation,
             std::size_t test, double noise) {
              MoonsGeometry g;
              g.noise = noise;
              return split_dict(make_moons({labeled, unlabeled, validation, test}, g, seed));
          },
          py::arg("seed") = 0, py::arg("labeled_per_class") = 10, py::arg("unlabeled_per_class") = 30,
          py::arg("validation_per_class") = 100, py::arg("test_per_class") = 1000, py::arg("noise") = 0.1);

    m.def("sample_arcs", [](std::size_t per_arc) {
        std::vector<int> labels;
        const Tensor x = sample_arcs(MoonsGeometry{}, per_arc, &labels);
        return py::make_tuple(to_array(x), to_labels(labels));
    }, py::arg("per_arc"));

    m.def("gcn", [](const Array& x) { return to_array(gcn(to_tensor(x))); });
    m.def("zca_fit", [](const Array& x, double zeta) {
        const ZcaState z = zca_fit(to_tensor(x), zeta);
        return py::make_tuple(to_array(z.mean), to_array(z.whitening));
    }, py::arg("x"), py::arg("zeta") = 1e-5);
    m.def("zca_apply", [](const Array& mean, const Array& whitening, const Array& x) {
        return to_array(zca_apply({to_tensor(mean), to_tensor(whitening)}, to_tensor(x)));
    });

    m.def("save_tensors", [](const std::string& path, const std::vector<Array>& ts) {
        save_tensors(path, to_tensors(ts));
    });
    m.def("load_tensors", [](const std::string& path) { return to_arrays(load_tensors(path)); });

    // Experiments.
    m.def("normalized_config", [](const std::string& text) { return serialize_config(parse_config(text)); },
          "parse a config and return it with every default filled in");

    m.def("run_experiment",
          [](const std::string& config, bool is_path, const std::optional<std::filesystem::path>& out,
             std::size_t threads, bool force) {
              const ExperimentConfig cfg = config_from(config, is_path);
              RunSummary s;
              {
                  py::gil_scoped_release release;
                  s = run_experiment(cfg, out.value_or(""), {force, threads, out.has_value()});
              }
              return summary_dict(s);
          },
          py::arg("config"), py::arg("is_path") = false, py::arg("out") = py::none(), py::arg("threads") = 0,
          py::arg("force") = false);
}
