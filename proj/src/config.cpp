#include "ratlab/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace ratlab {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto p = s.find(sep, start);
        out.push_back(trim(s.substr(start, p == std::string_view::npos ? s.npos : p - start)));
        if (p == std::string_view::npos) break;
        start = p + 1;
    }
    return out;
}

bool to_double(std::string_view s, double& v) {
    s = trim(s);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(v);
}

template <class T>
bool to_unsigned(std::string_view s, T& v) {
    s = trim(s);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    return !s.empty() && res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::string fmt(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Entry {
    std::string key;
    std::string value;
    std::size_t line;
};

struct RawSection {
    std::string name;
    std::size_t line;
    std::vector<Entry> entries;
};

struct Context {
    std::string origin;
    [[noreturn]] void fail(std::size_t line, const std::string& msg) const {
        throw ConfigError(origin + ":" + std::to_string(line) + ": " + msg);
    }
};

std::vector<RawSection> parse_raw(std::string_view text, const Context& ctx) {
    std::vector<RawSection> sections;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == text.npos ? text.npos : nl - pos);
        pos = nl == text.npos ? text.size() + 1 : nl + 1;
        ++lineno;
        if (const auto hash = line.find('#'); hash != line.npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') ctx.fail(lineno, "malformed section header");
            std::string name(trim(line.substr(1, line.size() - 2)));
            for (const auto& s : sections) {
                if (s.name == name) ctx.fail(lineno, "duplicate section [" + name + "]");
            }
            sections.push_back({name, lineno, {}});
            continue;
        }
        const auto eq = line.find('=');
        if (eq == line.npos) ctx.fail(lineno, "expected 'key = value'");
        if (sections.empty()) ctx.fail(lineno, "key outside of any section");
        std::string key(trim(line.substr(0, eq)));
        if (key.empty()) ctx.fail(lineno, "empty key");
        auto& sec = sections.back();
        for (const auto& e : sec.entries) {
            if (e.key == key) ctx.fail(lineno, "duplicate key '" + sec.name + "." + key + "'");
        }
        sec.entries.push_back({key, std::string(trim(line.substr(eq + 1))), lineno});
    }
    return sections;
}

// --- typed setters ------------------------------------------------------------

struct Leaf {
    const Context& ctx;
    const std::string& section;
    const Entry& e;

    [[noreturn]] void bad(const std::string& what) const {
        ctx.fail(e.line, "key '" + section + "." + e.key + "': expected " + what + ", got '" +
                             e.value + "'");
    }
    double number() const {
        double v;
        if (!to_double(e.value, v)) bad("a number");
        return v;
    }
    std::size_t count() const {
        std::size_t v;
        if (!to_unsigned(e.value, v)) bad("a non-negative integer");
        return v;
    }
    bool boolean() const {
        const std::string_view s = e.value;
        if (s == "true" || s == "yes" || s == "1") return true;
        if (s == "false" || s == "no" || s == "0") return false;
        bad("true or false");
    }
    std::vector<double> numbers(std::size_t n) const {
        std::vector<double> out;
        for (auto part : split(e.value, ',')) {
            double v;
            if (!to_double(part, v)) bad(std::to_string(n) + " comma-separated numbers");
            out.push_back(v);
        }
        if (out.size() != n) bad(std::to_string(n) + " comma-separated numbers");
        return out;
    }
    Arc arc() const {
        const auto v = numbers(5);
        return {v[0], v[1], v[2], v[3], v[4]};
    }
    template <class F>
    auto parsed(F&& f) const {
        try {
            return f(std::string_view(e.value));
        } catch (const std::invalid_argument& ex) {
            ctx.fail(e.line, "key '" + section + "." + e.key + "': " + ex.what());
        }
    }
};

using Setter = std::function<void(ExperimentConfig&, const Leaf&)>;
using SetterTable = std::map<std::string, Setter, std::less<>>;

const std::map<std::string, SetterTable, std::less<>>& setters() {
    static const std::map<std::string, SetterTable, std::less<>> table = {
        {"experiment",
         {
             {"name", [](ExperimentConfig& c, const Leaf& l) { c.name = l.e.value; }},
             {"seeds",
              [](ExperimentConfig& c, const Leaf& l) {
                  c.seeds = l.parsed([](std::string_view s) { return parse_seed_list(s); });
              }},
         }},
        {"dataset",
         {
             {"kind", [](ExperimentConfig&, const Leaf&) {}},  // resolved before defaults
             {"labeled_per_class",
              [](ExperimentConfig& c, const Leaf& l) { c.dataset.counts.labeled_per_class = l.count(); }},
             {"unlabeled_per_class",
              [](ExperimentConfig& c, const Leaf& l) {
                  c.dataset.counts.unlabeled_per_class = l.count();
              }},
             {"validation_per_class",
              [](ExperimentConfig& c, const Leaf& l) {
                  c.dataset.counts.validation_per_class = l.count();
              }},
             {"test_per_class",
              [](ExperimentConfig& c, const Leaf& l) { c.dataset.counts.test_per_class = l.count(); }},
             {"noise", [](ExperimentConfig& c, const Leaf& l) { c.dataset.geometry.noise = l.number(); }},
             {"upper_arc",
              [](ExperimentConfig& c, const Leaf& l) { c.dataset.geometry.arcs[0] = l.arc(); }},
             {"lower_arc",
              [](ExperimentConfig& c, const Leaf& l) { c.dataset.geometry.arcs[1] = l.arc(); }},
             {"path", [](ExperimentConfig& c, const Leaf& l) { c.dataset.images.path = l.e.value; }},
             {"channels",
              [](ExperimentConfig& c, const Leaf& l) { c.dataset.images.image.channels = l.count(); }},
             {"height",
              [](ExperimentConfig& c, const Leaf& l) { c.dataset.images.image.height = l.count(); }},
             {"width",
              [](ExperimentConfig& c, const Leaf& l) { c.dataset.images.image.width = l.count(); }},
             {"classes", [](ExperimentConfig& c, const Leaf& l) { c.dataset.images.classes = l.count(); }},
             {"labeled", [](ExperimentConfig& c, const Leaf& l) { c.dataset.images.labeled = l.count(); }},
             {"validation",
              [](ExperimentConfig& c, const Leaf& l) { c.dataset.images.validation = l.count(); }},
             {"test", [](ExperimentConfig& c, const Leaf& l) { c.dataset.images.test = l.count(); }},
             {"gcn", [](ExperimentConfig& c, const Leaf& l) { c.dataset.images.gcn = l.boolean(); }},
             {"zca", [](ExperimentConfig& c, const Leaf& l) { c.dataset.images.zca = l.boolean(); }},
             {"zca_zeta",
              [](ExperimentConfig& c, const Leaf& l) { c.dataset.images.zca_zeta = l.number(); }},
             {"augment",
              [](ExperimentConfig& c, const Leaf& l) {
                  c.dataset.augment.kind = l.parsed([](std::string_view s) { return parse_augment(s); });
              }},
             {"augment_sigma",
              [](ExperimentConfig& c, const Leaf& l) { c.dataset.augment.noise_sigma = l.number(); }},
             {"augment_shift",
              [](ExperimentConfig& c, const Leaf& l) {
                  c.dataset.augment.max_shift = static_cast<int>(l.count());
              }},
         }},
        {"method",
         {
             {"name", [](ExperimentConfig&, const Leaf&) {}},  // resolved before defaults
             {"lambda", [](ExperimentConfig& c, const Leaf& l) { c.method.lambda_max = l.number(); }},
             {"lambda_rampup",
              [](ExperimentConfig& c, const Leaf& l) { c.method.lambda_rampup = l.count(); }},
             {"entropy_weight",
              [](ExperimentConfig& c, const Leaf& l) { c.method.entropy_weight = l.number(); }},
             {"pseudo_label_threshold",
              [](ExperimentConfig& c, const Leaf& l) { c.method.pseudo_label_threshold = l.number(); }},
             {"ema_decay", [](ExperimentConfig& c, const Leaf& l) { c.method.ema_decay = l.number(); }},
             {"perturbation",
              [](ExperimentConfig& c, const Leaf& l) {
                  c.method.perturbation.kind =
                      l.parsed([](std::string_view s) { return parse_augment(s); });
              }},
             {"perturbation_sigma",
              [](ExperimentConfig& c, const Leaf& l) { c.method.perturbation.noise_sigma = l.number(); }},
             {"perturbation_shift",
              [](ExperimentConfig& c, const Leaf& l) {
                  c.method.perturbation.max_shift = static_cast<int>(l.count());
              }},
             {"regularize_labeled",
              [](ExperimentConfig& c, const Leaf& l) { c.method.regularize_labeled = l.boolean(); }},
         }},
        {"adversarial",
         {
             {"xi", [](ExperimentConfig& c, const Leaf& l) { c.adv.xi = l.number(); }},
             {"power_iterations",
              [](ExperimentConfig& c, const Leaf& l) {
                  c.adv.power_iterations = static_cast<int>(l.count());
              }},
             {"rampup",
              [](ExperimentConfig& c, const Leaf& l) { c.epsilon_rampup_enabled = l.boolean(); }},
             {"epsilon_rampup",
              [](ExperimentConfig& c, const Leaf& l) { c.epsilon_rampup = l.count(); }},
             {"vat_epsilon", [](ExperimentConfig& c, const Leaf& l) { c.vat_epsilon = l.number(); }},
             {"stop_gradient_p",
              [](ExperimentConfig& c, const Leaf& l) { c.stop_gradient_p = l.boolean(); }},
         }},
        {"training",
         {
             {"iterations",
              [](ExperimentConfig& c, const Leaf& l) { c.training.iterations = l.count(); }},
             {"labeled_batch",
              [](ExperimentConfig& c, const Leaf& l) { c.training.labeled_batch = l.count(); }},
             {"unlabeled_batch",
              [](ExperimentConfig& c, const Leaf& l) { c.training.unlabeled_batch = l.count(); }},
             {"lr", [](ExperimentConfig& c, const Leaf& l) { c.training.lr = l.number(); }},
             {"lr_decay_at",
              [](ExperimentConfig& c, const Leaf& l) { c.training.lr_decay_at = l.number(); }},
             {"lr_decay_factor",
              [](ExperimentConfig& c, const Leaf& l) { c.training.lr_decay_factor = l.number(); }},
             {"eval_every",
              [](ExperimentConfig& c, const Leaf& l) { c.training.eval_every = l.count(); }},
             {"hidden", [](ExperimentConfig& c, const Leaf& l) { c.training.hidden = l.count(); }},
         }},
        {"boundary",
         {
             {"enabled", [](ExperimentConfig& c, const Leaf& l) { c.boundary.enabled = l.boolean(); }},
             {"x1_range",
              [](ExperimentConfig& c, const Leaf& l) {
                  const auto v = l.numbers(2);
                  c.boundary.grid.x1_min = v[0];
                  c.boundary.grid.x1_max = v[1];
              }},
             {"x2_range",
              [](ExperimentConfig& c, const Leaf& l) {
                  const auto v = l.numbers(2);
                  c.boundary.grid.x2_min = v[0];
                  c.boundary.grid.x2_max = v[1];
              }},
             {"resolution",
              [](ExperimentConfig& c, const Leaf& l) { c.boundary.grid.resolution = l.count(); }},
         }},
    };
    return table;
}

const Entry* find(const RawSection* s, std::string_view key) {
    if (!s) return nullptr;
    for (const auto& e : s->entries) {
        if (e.key == key) return &e;
    }
    return nullptr;
}

std::string_view kind_name(DatasetKind k) { return k == DatasetKind::moons ? "moons" : "images"; }

DatasetKind parse_kind(std::string_view s) {
    if (s == "moons") return DatasetKind::moons;
    if (s == "images") return DatasetKind::images;
    throw std::invalid_argument("unknown dataset kind '" + std::string(s) + "'");
}

std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
    std::string out;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(seeds[i]);
    }
    return out;
}

std::string fmt_arc(const Arc& a) {
    return fmt(a.cx) + ", " + fmt(a.cy) + ", " + fmt(a.radius) + ", " + fmt(a.start_deg) + ", " +
           fmt(a.end_deg);
}

}  // namespace

double default_epsilon(Family family) {
    switch (family) {
        case Family::noise: return 6.0;
        case Family::affine: return 0.6;
        case Family::tps: return 1.0;
        case Family::flow: return 0.01;
        case Family::channel: return 0.001;
        case Family::rotation: return 10.0;
    }
    return 1.0;
}

ExperimentConfig default_config(Method method, DatasetKind kind) {
    ExperimentConfig c;
    c.dataset.kind = kind;
    c.method.method = method;
    double lr = 0.003;
    switch (method) {
        case Method::supervised: c.method.lambda_max = 0.0; break;
        case Method::pi_model:
            c.method.lambda_max = 20.0;
            lr = 0.0003;
            break;
        case Method::mean_teacher:
            c.method.lambda_max = 8.0;
            lr = 0.0004;
            break;
        case Method::pseudo_label: c.method.lambda_max = 1.0; break;
        case Method::vat:
        case Method::rat:
        case Method::random_transform:
            c.method.lambda_max = 0.3;
            c.method.entropy_weight = 0.06;
            break;
    }
    const bool transform_method = method == Method::rat || method == Method::random_transform;
    if (kind == DatasetKind::moons) {
        // Toy protocol: full batch, Adam defaults, no schedules.
        c.training.iterations = 500;
        c.training.labeled_batch = 0;
        c.training.unlabeled_batch = 0;
        c.training.lr = 0.001;
        c.training.lr_decay_factor = 1.0;
        c.method.lambda_rampup = 0;
        c.method.perturbation = {AugmentKind::gaussian, 0.15, 2};
        if (transform_method) {
            c.transforms = {{Family::rotation, 10.0, 4}, {Family::noise, 0.3, 4}};
        }
    } else {
        c.training.iterations = 10000;
        c.training.labeled_batch = 64;
        c.training.unlabeled_batch = 64;
        c.training.lr = lr;
        c.training.lr_decay_at = 0.8;
        c.training.lr_decay_factor = 0.2;
        c.method.lambda_rampup = 4000;
        c.method.perturbation = {AugmentKind::cifar_like, 0.15, 2};
        c.boundary.enabled = false;
        if (transform_method) {
            c.transforms = {{Family::affine, 0.6, 4}, {Family::noise, 6.0, 4}};
        }
    }
    return c;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    if (a.dataset.kind != b.dataset.kind) return false;
    const bool data_eq = a.dataset.kind == DatasetKind::moons
                             ? a.dataset.geometry == b.dataset.geometry &&
                                   a.dataset.counts.labeled_per_class == b.dataset.counts.labeled_per_class &&
                                   a.dataset.counts.unlabeled_per_class == b.dataset.counts.unlabeled_per_class &&
                                   a.dataset.counts.validation_per_class == b.dataset.counts.validation_per_class &&
                                   a.dataset.counts.test_per_class == b.dataset.counts.test_per_class
                             : a.dataset.images == b.dataset.images;
    const bool boundary_eq =
        a.boundary.enabled == b.boundary.enabled &&
        a.boundary.grid.x1_min == b.boundary.grid.x1_min && a.boundary.grid.x1_max == b.boundary.grid.x1_max &&
        a.boundary.grid.x2_min == b.boundary.grid.x2_min && a.boundary.grid.x2_max == b.boundary.grid.x2_max &&
        a.boundary.grid.resolution == b.boundary.grid.resolution;
    return data_eq && boundary_eq && a.name == b.name && a.seeds == b.seeds &&
           a.dataset.augment == b.dataset.augment && a.method == b.method && a.adv == b.adv &&
           a.epsilon_rampup_enabled == b.epsilon_rampup_enabled &&
           a.epsilon_rampup == b.epsilon_rampup && a.vat_epsilon == b.vat_epsilon &&
           a.stop_gradient_p == b.stop_gradient_p && a.transforms == b.transforms &&
           a.training == b.training;
}

namespace {

void check(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

}  // namespace

void validate(const ExperimentConfig& c) {
    check(!c.seeds.empty(), "experiment.seeds: at least one seed is required");
    const MethodConfig& m = c.method;
    check(m.lambda_max >= 0.0, "method.lambda: must be >= 0");
    check(m.entropy_weight >= 0.0, "method.entropy_weight: must be >= 0");
    check(m.pseudo_label_threshold >= 0.0 && m.pseudo_label_threshold <= 1.0,
          "method.pseudo_label_threshold: must lie in [0, 1]");
    check(m.ema_decay >= 0.0 && m.ema_decay < 1.0, "method.ema_decay: must lie in [0, 1)");
    check(m.perturbation.noise_sigma >= 0.0, "method.perturbation_sigma: must be >= 0");
    check(m.perturbation.max_shift >= 0, "method.perturbation_shift: must be >= 0");
    check(c.adv.xi > 0.0, "adversarial.xi: must be positive");
    check(c.adv.power_iterations >= 1, "adversarial.power_iterations: must be at least 1");
    check(c.vat_epsilon > 0.0, "adversarial.vat_epsilon: must be positive");
    check(c.training.iterations > 0, "training.iterations: must be positive");
    check(c.training.lr > 0.0, "training.lr: must be positive");
    check(c.training.lr_decay_at >= 0.0 && c.training.lr_decay_at <= 1.0,
          "training.lr_decay_at: must lie in [0, 1]");
    check(c.training.lr_decay_factor > 0.0, "training.lr_decay_factor: must be positive");
    check(c.training.hidden > 0, "training.hidden: must be positive");
    check(c.dataset.augment.noise_sigma >= 0.0, "dataset.augment_sigma: must be >= 0");
    if (c.dataset.kind == DatasetKind::moons) {
        const auto& k = c.dataset.counts;
        check(k.labeled_per_class > 0, "dataset.labeled_per_class: must be positive");
        check(k.unlabeled_per_class > 0, "dataset.unlabeled_per_class: must be positive");
        check(k.validation_per_class > 0, "dataset.validation_per_class: must be positive");
        check(k.test_per_class > 0, "dataset.test_per_class: must be positive");
        check(c.dataset.geometry.noise >= 0.0, "dataset.noise: must be >= 0");
        const auto& arcs = c.dataset.geometry.arcs;
        check(arcs.size() == 2 && arcs[0].radius > 0.0 && arcs[1].radius > 0.0,
              "dataset arcs: radii must be positive");
        check(!(arcs[0] == arcs[1]), "dataset arcs: the two arcs must differ");
        check(c.dataset.augment.kind == AugmentKind::none ||
                  c.dataset.augment.kind == AugmentKind::gaussian,
              "dataset.augment: spatial policies need image data");
        check(c.method.perturbation.kind == AugmentKind::none ||
                  c.method.perturbation.kind == AugmentKind::gaussian,
              "method.perturbation: spatial policies need image data");
    } else {
        const auto& im = c.dataset.images;
        check(!im.path.empty(), "dataset.path: required for image data");
        check(im.image.channels > 0 && im.image.height > 0 && im.image.width > 0,
              "dataset.channels/height/width: must be positive");
        check(im.classes >= 2, "dataset.classes: need at least two classes");
        check(im.labeled > 0, "dataset.labeled: must be positive");
        check(im.validation > 0 && im.test > 0, "dataset.validation/test: must be positive");
        check(im.zca_zeta >= 0.0, "dataset.zca_zeta: must be >= 0");
    }
    for (std::size_t i = 0; i < c.transforms.size(); ++i) {
        const auto& t = c.transforms[i];
        const std::string key = "transform." + std::to_string(i);
        check(t.epsilon > 0.0, key + ".epsilon: must be positive");
        if (c.dataset.kind == DatasetKind::moons) {
            check(t.family == Family::noise || t.family == Family::rotation,
                  key + ".family: only noise and rotation apply to 2-D points");
        } else {
            check(t.family != Family::rotation, key + ".family: rotation needs the moons dataset");
        }
        if (t.family == Family::tps) check(t.grid >= 2, key + ".grid: must be at least 2");
    }
    const bool transform_method =
        c.method.method == Method::rat || c.method.method == Method::random_transform;
    check(!transform_method || !c.transforms.empty(),
          "transform: method " + std::string(method_name(c.method.method)) +
              " needs at least one [transform.N] section");
    if (c.boundary.enabled) {
        check(c.boundary.grid.resolution >= 2, "boundary.resolution: must be at least 2");
        check(c.boundary.grid.x1_min < c.boundary.grid.x1_max &&
                  c.boundary.grid.x2_min < c.boundary.grid.x2_max,
              "boundary ranges: min must be below max");
    }
}

ExperimentConfig parse_config(std::string_view text, std::string_view origin) {
    const Context ctx{std::string(origin)};
    const auto raw = parse_raw(text, ctx);

    const RawSection* dataset = nullptr;
    const RawSection* method = nullptr;
    std::vector<const RawSection*> transforms;
    for (const auto& s : raw) {
        if (s.name == "dataset") dataset = &s;
        if (s.name == "method") method = &s;
        if (s.name.rfind("transform.", 0) == 0) {
            std::size_t idx;
            if (!to_unsigned(std::string_view(s.name).substr(10), idx)) {
                ctx.fail(s.line, "transform sections are named transform.0, transform.1, ...");
            }
            if (transforms.size() <= idx) transforms.resize(idx + 1, nullptr);
            transforms[idx] = &s;
        } else if (!setters().contains(s.name)) {
            ctx.fail(s.line, "unknown section [" + s.name + "]");
        }
    }

    DatasetKind kind = DatasetKind::moons;
    if (const Entry* e = find(dataset, "kind")) {
        try {
            kind = parse_kind(e->value);
        } catch (const std::invalid_argument& ex) {
            ctx.fail(e->line, std::string("key 'dataset.kind': ") + ex.what());
        }
    }
    Method m = Method::supervised;
    if (const Entry* e = find(method, "name")) {
        try {
            m = parse_method(e->value);
        } catch (const std::invalid_argument& ex) {
            ctx.fail(e->line, std::string("key 'method.name': ") + ex.what());
        }
    }

    ExperimentConfig cfg = default_config(m, kind);
    for (const auto& s : raw) {
        const auto it = setters().find(s.name);
        if (it == setters().end()) continue;
        for (const auto& e : s.entries) {
            const auto st = it->second.find(e.key);
            if (st == it->second.end()) ctx.fail(e.line, "unknown key '" + s.name + "." + e.key + "'");
            st->second(cfg, Leaf{ctx, s.name, e});
        }
    }

    if (!transforms.empty()) {
        cfg.transforms.clear();
        for (std::size_t i = 0; i < transforms.size(); ++i) {
            const RawSection* s = transforms[i];
            if (!s) ctx.fail(1, "missing section [transform." + std::to_string(i) + "]");
            const Entry* fam = find(s, "family");
            if (!fam) ctx.fail(s->line, "[" + s->name + "] needs a 'family' key");
            TransformConfig t;
            t.family = Leaf{ctx, s->name, *fam}.parsed([](std::string_view v) { return parse_family(v); });
            t.epsilon = default_epsilon(t.family);
            for (const auto& e : s->entries) {
                const Leaf leaf{ctx, s->name, e};
                if (e.key == "family") continue;
                if (e.key == "epsilon") {
                    t.epsilon = leaf.number();
                } else if (e.key == "grid") {
                    t.grid = leaf.count();
                } else {
                    ctx.fail(e.line, "unknown key '" + s->name + "." + e.key + "'");
                }
            }
            cfg.transforms.push_back(t);
        }
    }

    try {
        validate(cfg);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(origin) + ": " + e.what());
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

std::string serialize_config(const ExperimentConfig& c) {
    std::ostringstream os;
    os << "[experiment]\n";
    os << "name = " << c.name << "\n";
    os << "seeds = " << join_seeds(c.seeds) << "\n\n";

    os << "[dataset]\n";
    os << "kind = " << kind_name(c.dataset.kind) << "\n";
    if (c.dataset.kind == DatasetKind::moons) {
        const auto& k = c.dataset.counts;
        os << "labeled_per_class = " << k.labeled_per_class << "\n";
        os << "unlabeled_per_class = " << k.unlabeled_per_class << "\n";
        os << "validation_per_class = " << k.validation_per_class << "\n";
        os << "test_per_class = " << k.test_per_class << "\n";
        os << "noise = " << fmt(c.dataset.geometry.noise) << "\n";
        os << "upper_arc = " << fmt_arc(c.dataset.geometry.arcs[0]) << "\n";
        os << "lower_arc = " << fmt_arc(c.dataset.geometry.arcs[1]) << "\n";
    } else {
        const auto& im = c.dataset.images;
        os << "path = " << im.path << "\n";
        os << "channels = " << im.image.channels << "\n";
        os << "height = " << im.image.height << "\n";
        os << "width = " << im.image.width << "\n";
        os << "classes = " << im.classes << "\n";
        os << "labeled = " << im.labeled << "\n";
        os << "validation = " << im.validation << "\n";
        os << "test = " << im.test << "\n";
        os << "gcn = " << fmt_bool(im.gcn) << "\n";
        os << "zca = " << fmt_bool(im.zca) << "\n";
        os << "zca_zeta = " << fmt(im.zca_zeta) << "\n";
    }
    os << "augment = " << augment_name(c.dataset.augment.kind) << "\n";
    os << "augment_sigma = " << fmt(c.dataset.augment.noise_sigma) << "\n";
    os << "augment_shift = " << c.dataset.augment.max_shift << "\n\n";

    const auto& m = c.method;
    os << "[method]\n";
    os << "name = " << method_name(m.method) << "\n";
    os << "lambda = " << fmt(m.lambda_max) << "\n";
    os << "lambda_rampup = " << m.lambda_rampup << "\n";
    os << "entropy_weight = " << fmt(m.entropy_weight) << "\n";
    os << "pseudo_label_threshold = " << fmt(m.pseudo_label_threshold) << "\n";
    os << "ema_decay = " << fmt(m.ema_decay) << "\n";
    os << "perturbation = " << augment_name(m.perturbation.kind) << "\n";
    os << "perturbation_sigma = " << fmt(m.perturbation.noise_sigma) << "\n";
    os << "perturbation_shift = " << m.perturbation.max_shift << "\n";
    os << "regularize_labeled = " << fmt_bool(m.regularize_labeled) << "\n\n";

    os << "[adversarial]\n";
    os << "xi = " << fmt(c.adv.xi) << "\n";
    os << "power_iterations = " << c.adv.power_iterations << "\n";
    os << "rampup = " << fmt_bool(c.epsilon_rampup_enabled) << "\n";
    os << "epsilon_rampup = " << c.epsilon_rampup << "\n";
    os << "vat_epsilon = " << fmt(c.vat_epsilon) << "\n";
    os << "stop_gradient_p = " << fmt_bool(c.stop_gradient_p) << "\n\n";

    for (std::size_t i = 0; i < c.transforms.size(); ++i) {
        const auto& t = c.transforms[i];
        os << "[transform." << i << "]\n";
        os << "family = " << family_name(t.family) << "\n";
        os << "epsilon = " << fmt(t.epsilon) << "\n";
        if (t.family == Family::tps) os << "grid = " << t.grid << "\n";
        os << "\n";
    }

    const auto& tr = c.training;
    os << "[training]\n";
    os << "iterations = " << tr.iterations << "\n";
    os << "labeled_batch = " << tr.labeled_batch << "\n";
    os << "unlabeled_batch = " << tr.unlabeled_batch << "\n";
    os << "lr = " << fmt(tr.lr) << "\n";
    os << "lr_decay_at = " << fmt(tr.lr_decay_at) << "\n";
    os << "lr_decay_factor = " << fmt(tr.lr_decay_factor) << "\n";
    os << "eval_every = " << tr.eval_every << "\n";
    os << "hidden = " << tr.hidden << "\n\n";

    const auto& b = c.boundary;
    os << "[boundary]\n";
    os << "enabled = " << fmt_bool(b.enabled) << "\n";
    os << "x1_range = " << fmt(b.grid.x1_min) << ", " << fmt(b.grid.x1_max) << "\n";
    os << "x2_range = " << fmt(b.grid.x2_min) << ", " << fmt(b.grid.x2_max) << "\n";
    os << "resolution = " << b.grid.resolution << "\n";
    return os.str();
}

namespace {

std::pair<std::string_view, std::string_view> split_path(std::string_view path) {
    const auto dot = path.rfind('.');
    if (dot == path.npos || dot == 0 || dot + 1 == path.size()) {
        throw ConfigError("parameter path '" + std::string(path) + "' is not of the form section.key");
    }
    return {path.substr(0, dot), path.substr(dot + 1)};
}

// Locates the serialized value of a leaf: returns [begin, end) of the value.
std::pair<std::size_t, std::size_t> locate(const std::string& text, std::string_view path) {
    const auto [section, key] = split_path(path);
    std::string_view current;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto nl = text.find('\n', pos);
        const std::size_t end = nl == std::string::npos ? text.size() : nl;
        std::string_view line(text.data() + pos, end - pos);
        if (!line.empty() && line.front() == '[') {
            current = line.substr(1, line.size() - 2);
        } else if (current == section) {
            const auto eq = line.find('=');
            if (eq != line.npos && trim(line.substr(0, eq)) == key) {
                return {pos + eq + 2, end};
            }
        }
        pos = end + 1;
    }
    throw ConfigError("parameter '" + std::string(path) + "' does not exist");
}

}  // namespace

double numeric_leaf(const ExperimentConfig& cfg, std::string_view path) {
    const std::string text = serialize_config(cfg);
    const auto [b, e] = locate(text, path);
    double v;
    if (!to_double(std::string_view(text).substr(b, e - b), v)) {
        throw ConfigError("parameter '" + std::string(path) + "' is not numeric");
    }
    return v;
}

ExperimentConfig with_numeric(const ExperimentConfig& cfg, std::string_view path, double value) {
    numeric_leaf(cfg, path);
    std::string text = serialize_config(cfg);
    const auto [b, e] = locate(text, path);
    text.replace(b, e - b, fmt(value));
    return parse_config(text, "<" + std::string(path) + " = " + fmt(value) + ">");
}

std::vector<double> parse_value_list(std::string_view spec) {
    spec = trim(spec);
    if (spec.find(':') != spec.npos) {
        const auto parts = split(spec, ':');
        double a, b, s;
        if (parts.size() != 3 || !to_double(parts[0], a) || !to_double(parts[1], b) ||
            !to_double(parts[2], s)) {
            throw std::invalid_argument("value range '" + std::string(spec) +
                                        "' must be start:stop:step");
        }
        if (!(s > 0.0) || b < a) {
            throw std::invalid_argument("value range '" + std::string(spec) +
                                        "' needs step > 0 and stop >= start");
        }
        const auto n = static_cast<std::size_t>(std::floor((b - a) / s + 1e-9)) + 1;
        std::vector<double> out;
        for (std::size_t i = 0; i < n; ++i) {
            // Round to the step's decimal resolution so 0.001 * 3 prints as 0.003.
            const double v = a + static_cast<double>(i) * s;
            const double digits = std::max(0.0, std::ceil(-std::log10(s)) + 6.0);
            const double q = std::pow(10.0, digits);
            out.push_back(std::round(v * q) / q);
        }
        return out;
    }
    std::vector<double> out;
    for (auto part : split(spec, ',')) {
        double v;
        if (!to_double(part, v)) {
            throw std::invalid_argument("value list '" + std::string(spec) + "': '" +
                                        std::string(part) + "' is not a number");
        }
        out.push_back(v);
    }
    return out;
}

std::vector<std::uint64_t> parse_seed_list(std::string_view spec) {
    std::vector<std::uint64_t> out;
    for (auto part : split(spec, ',')) {
        std::uint64_t v;
        if (!to_unsigned(part, v)) {
            throw std::invalid_argument("seed list '" + std::string(spec) + "': '" +
                                        std::string(part) + "' is not a non-negative integer");
        }
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument("empty seed list");
    return out;
}

Composite build_composite(const ExperimentConfig& cfg, const ImageGeometry& image) {
    Composite out;
    for (const auto& t : cfg.transforms) {
        switch (t.family) {
            case Family::noise: out.push_back(TransformSpec::noise(image.dim(), t.epsilon)); break;
            case Family::affine: out.push_back(TransformSpec::affine(image, t.epsilon)); break;
            case Family::tps: out.push_back(TransformSpec::tps(image, t.epsilon, t.grid)); break;
            case Family::flow: out.push_back(TransformSpec::flow(image, t.epsilon)); break;
            case Family::channel: out.push_back(TransformSpec::channel(image, t.epsilon)); break;
            case Family::rotation:
                out.push_back(TransformSpec::rotation(cfg.dataset.geometry.arcs, t.epsilon));
                break;
        }
    }
    return out;
}

TrainSpec build_train_spec(const ExperimentConfig& cfg, const ImageGeometry& image) {
    TrainSpec s;
    s.method = cfg.method;
    s.adv = cfg.adv;
    s.composite = build_composite(cfg, image);
    if (cfg.epsilon_rampup_enabled) {
        s.epsilon_rampup = cfg.epsilon_rampup
                               ? cfg.epsilon_rampup
                               : static_cast<std::size_t>(
                                     std::llround(0.8 * static_cast<double>(cfg.training.iterations)));
    }
    s.vat_epsilon = cfg.vat_epsilon;
    s.stop_gradient_p = cfg.stop_gradient_p;
    s.input_augment = cfg.dataset.augment;
    s.training = cfg.training;
    return s;
}

}  // namespace ratlab
