#include "ratlab/data.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iostream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ratlab {

namespace {

constexpr double kRad = std::numbers::pi / 180.0;

void arc_point(const Arc& a, double deg, double& x, double& y) {
    x = a.cx + a.radius * std::cos(deg * kRad);
    y = a.cy + a.radius * std::sin(deg * kRad);
}

void draw_moons(const MoonsGeometry& geo, std::size_t per_class, Rng& rng, Tensor& x,
                std::vector<int>& y) {
    const std::size_t k = geo.arcs.size();
    x = Tensor(Shape{per_class * k, 2});
    y.assign(per_class * k, 0);
    std::size_t r = 0;
    for (std::size_t c = 0; c < k; ++c) {
        const Arc& a = geo.arcs[c];
        for (std::size_t i = 0; i < per_class; ++i, ++r) {
            const double deg = rng.uniform(a.start_deg, a.end_deg);
            double px, py;
            arc_point(a, deg, px, py);
            if (geo.noise > 0.0) {
                px += geo.noise * rng.normal();
                py += geo.noise * rng.normal();
            }
            x.at(r, 0) = px;
            x.at(r, 1) = py;
            y[r] = static_cast<int>(c);
        }
    }
}

}  // namespace

DatasetSplit make_moons(const MoonsCounts& counts, const MoonsGeometry& geometry,
                        std::uint64_t seed) {
    if (counts.labeled_per_class == 0 || counts.unlabeled_per_class == 0) {
        throw std::invalid_argument("make_moons: labeled and unlabeled counts must be positive");
    }
    if (geometry.arcs.size() < 2) throw std::invalid_argument("make_moons: need two arcs");
    if (geometry.noise < 0.0) throw std::invalid_argument("make_moons: negative noise");
    Rng root(seed);
    Rng rl = root.split(), ru = root.split(), rv = root.split(), rt = root.split();
    DatasetSplit d;
    d.seed = seed;
    d.num_classes = geometry.arcs.size();
    d.image = {1, 1, 2};
    draw_moons(geometry, counts.labeled_per_class, rl, d.x_labeled, d.y_labeled);
    draw_moons(geometry, counts.unlabeled_per_class, ru, d.x_unlabeled, d.y_unlabeled);
    draw_moons(geometry, counts.validation_per_class, rv, d.x_validation, d.y_validation);
    draw_moons(geometry, counts.test_per_class, rt, d.x_test, d.y_test);
    return d;
}

Tensor sample_arcs(const MoonsGeometry& geometry, std::size_t per_arc, std::vector<int>* labels) {
    Tensor x(Shape{per_arc * geometry.arcs.size(), 2});
    if (labels) labels->clear();
    std::size_t r = 0;
    for (std::size_t c = 0; c < geometry.arcs.size(); ++c) {
        const Arc& a = geometry.arcs[c];
        for (std::size_t i = 0; i < per_arc; ++i, ++r) {
            const double f = per_arc > 1 ? static_cast<double>(i) / (per_arc - 1) : 0.5;
            arc_point(a, a.start_deg + f * (a.end_deg - a.start_deg), x.at(r, 0), x.at(r, 1));
            if (labels) labels->push_back(static_cast<int>(c));
        }
    }
    return x;
}

Composite moons_rotation_transform(const MoonsGeometry& geometry, double rotation_eps,
                                   double noise_eps) {
    return {TransformSpec::rotation(geometry.arcs, rotation_eps),
            TransformSpec::noise(2, noise_eps)};
}

// --- CSV -----------------------------------------------------------------------

void write_points_csv(std::ostream& os, const DatasetSplit& d) {
    os << "x1,x2,label,split\n";
    char buf[32];
    auto num = [&](double v) {
        auto res = std::to_chars(buf, buf + sizeof buf, v);
        os.write(buf, res.ptr - buf);
    };
    auto block = [&](const Tensor& x, const std::vector<int>* y, int split) {
        for (std::size_t i = 0; i < x.rows(); ++i) {
            num(x.at(i, 0));
            os << ',';
            num(x.at(i, 1));
            os << ',' << (y ? (*y)[i] : -1) << ',' << split << '\n';
        }
    };
    block(d.x_labeled, &d.y_labeled, 0);
    block(d.x_unlabeled, nullptr, 1);
    block(d.x_validation, &d.y_validation, 2);
    block(d.x_test, &d.y_test, 3);
}

DatasetSplit read_points_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("x1,x2,label,split", 0) != 0) {
        throw std::runtime_error("points csv: missing header x1,x2,label,split");
    }
    std::vector<double> xs[4];
    std::vector<int> ys[4];
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string f[4];
        for (auto& s : f) std::getline(ss, s, ',');
        double x1 = 0, x2 = 0;
        int label = 0, split = 0;
        auto bad = [&]() {
            return std::runtime_error("points csv: malformed line " + std::to_string(lineno));
        };
        if (std::from_chars(f[0].data(), f[0].data() + f[0].size(), x1).ec != std::errc() ||
            std::from_chars(f[1].data(), f[1].data() + f[1].size(), x2).ec != std::errc() ||
            std::from_chars(f[2].data(), f[2].data() + f[2].size(), label).ec != std::errc() ||
            std::from_chars(f[3].data(), f[3].data() + f[3].size(), split).ec != std::errc() ||
            split < 0 || split > 3) {
            throw bad();
        }
        xs[split].push_back(x1);
        xs[split].push_back(x2);
        ys[split].push_back(label);
    }
    DatasetSplit d;
    Tensor* xt[4] = {&d.x_labeled, &d.x_unlabeled, &d.x_validation, &d.x_test};
    std::vector<int>* yt[4] = {&d.y_labeled, &d.y_unlabeled, &d.y_validation, &d.y_test};
    int max_label = 1;
    for (int s = 0; s < 4; ++s) {
        const std::size_t n = ys[s].size();
        *xt[s] = Tensor(Shape{n, 2}, std::move(xs[s]));
        *yt[s] = std::move(ys[s]);
        for (int l : *yt[s]) max_label = std::max(max_label, l);
    }
    d.num_classes = static_cast<std::size_t>(max_label) + 1;
    d.image = {1, 1, 2};
    return d;
}

DatasetSplit split_pool(const Tensor& x, const std::vector<int>& y, ImageGeometry image,
                        std::size_t num_classes, std::size_t n_labeled,
                        std::size_t n_validation, std::size_t n_test, std::uint64_t seed) {
    if (x.rank() != 2 || x.dim(0) != y.size()) {
        throw ShapeError("split_pool: " + shape_str(x.shape()) + " with " +
                         std::to_string(y.size()) + " labels");
    }
    const std::size_t n = x.dim(0);
    if (n_labeled == 0 || n_labeled + n_validation + n_test >= n) {
        throw std::invalid_argument("split_pool: split sizes leave no unlabeled data");
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    auto part = [&](std::size_t lo, std::size_t hi, Tensor& xs, std::vector<int>& ys) {
        std::span<const std::size_t> idx(perm.data() + lo, hi - lo);
        xs = take_rows(x, idx);
        ys.clear();
        for (std::size_t i : idx) ys.push_back(y[i]);
    };
    DatasetSplit d;
    d.seed = seed;
    d.num_classes = num_classes;
    d.image = image;
    std::size_t a = 0;
    part(a, a + n_labeled, d.x_labeled, d.y_labeled);
    a += n_labeled;
    part(a, a + n_validation, d.x_validation, d.y_validation);
    a += n_validation;
    part(a, a + n_test, d.x_test, d.y_test);
    a += n_test;
    part(a, n, d.x_unlabeled, d.y_unlabeled);
    return d;
}

// --- preprocessing ---------------------------------------------------------------

Tensor gcn(const Tensor& images) {
    if (images.rank() < 1 || images.size() == 0) throw ShapeError("gcn: empty input");
    Tensor out = images;
    const std::size_t rows = images.rank() == 1 ? 1 : images.dim(0);
    std::size_t constant_rows = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        auto row = images.rank() == 1 ? out.data() : out.row(r);
        const double n = static_cast<double>(row.size());
        double mean = 0.0;
        for (double v : row) mean += v;
        mean /= n;
        double var = 0.0;
        for (double v : row) var += (v - mean) * (v - mean);
        const double sd = std::sqrt(var / n);
        if (sd < kGcnStdFloor) ++constant_rows;
        const double s = 1.0 / std::max(sd, kGcnStdFloor);
        for (double& v : row) v = (v - mean) * s;
    }
    if (constant_rows) {
        std::cerr << "ratlab: gcn: " << constant_rows << " constant image(s) mapped to zeros\n";
    }
    return out;
}

ZcaState zca_fit(const Tensor& images, double zeta) {
    if (images.rank() != 2 || images.dim(0) < 2) {
        throw ShapeError("zca_fit: expected N x D with N >= 2, got " + shape_str(images.shape()));
    }
    if (zeta < 0.0) throw std::invalid_argument("zca_fit: negative zeta");
    const auto n = static_cast<Eigen::Index>(images.dim(0));
    const auto d = static_cast<Eigen::Index>(images.dim(1));
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
        images.data().data(), n, d);
    const Eigen::RowVectorXd mu = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - mu;
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw NumericError("zca_fit: eigendecomposition failed");
    const Eigen::VectorXd lambda = eig.eigenvalues();
    const double mean_eig = lambda.mean();
    const double reg = zeta * mean_eig;
    if (reg <= 0.0 && lambda.minCoeff() <= 1e-12 * std::max(mean_eig, 1e-300)) {
        throw NumericError("zca_fit: degenerate covariance and no regularization");
    }
    Eigen::VectorXd scale(d);
    for (Eigen::Index i = 0; i < d; ++i) scale(i) = 1.0 / std::sqrt(std::max(lambda(i), 0.0) + reg);
    const Eigen::MatrixXd w =
        eig.eigenvectors() * scale.asDiagonal() * eig.eigenvectors().transpose();

    ZcaState s;
    s.mean = Tensor(Shape{images.dim(1)});
    for (Eigen::Index i = 0; i < d; ++i) s.mean[i] = mu(i);
    s.whitening = Tensor(Shape{images.dim(1), images.dim(1)});
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) s.whitening[i * d + j] = 0.5 * (w(i, j) + w(j, i));
    return s;
}

Tensor zca_apply(const ZcaState& state, const Tensor& images) {
    const std::size_t d = state.mean.size();
    const bool single = images.rank() == 1;
    if (images.size() % d != 0 || (!single && (images.rank() != 2 || images.dim(1) != d))) {
        throw ShapeError("zca_apply: input " + shape_str(images.shape()) + " vs dimension " +
                         std::to_string(d));
    }
    const std::size_t rows = images.size() / d;
    Tensor centered(Shape{rows, d});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) centered[r * d + j] = images[r * d + j] - state.mean[j];
    Tensor out = ratlab::matmul(centered, state.whitening);
    return single ? out.reshaped(Shape{d}) : out;
}

// --- augmentation ------------------------------------------------------------------

std::string_view augment_name(AugmentKind k) {
    switch (k) {
        case AugmentKind::none: return "none";
        case AugmentKind::gaussian: return "gaussian";
        case AugmentKind::cifar_like: return "cifar_like";
        case AugmentKind::svhn_like: return "svhn_like";
    }
    return "?";
}

AugmentKind parse_augment(std::string_view s) {
    for (AugmentKind k : {AugmentKind::none, AugmentKind::gaussian, AugmentKind::cifar_like,
                          AugmentKind::svhn_like}) {
        if (augment_name(k) == s) return k;
    }
    throw std::invalid_argument("unknown augmentation policy '" + std::string(s) + "'");
}

namespace {

void check_image_batch(const Tensor& batch, const ImageGeometry& image, const char* what) {
    if (batch.rank() != 2 || batch.dim(1) != image.dim()) {
        throw ShapeError(std::string(what) + ": batch " + shape_str(batch.shape()) +
                         " does not match image dimension " + std::to_string(image.dim()));
    }
}

void translate_row(std::span<const double> in, std::span<double> out, const ImageGeometry& img,
                   int du, int dv) {
    const int h = static_cast<int>(img.height), w = static_cast<int>(img.width);
    for (std::size_t c = 0; c < img.channels; ++c) {
        const std::size_t off = c * img.pixels();
        for (int i = 0; i < h; ++i) {
            const int si = std::clamp(i - dv, 0, h - 1);
            for (int j = 0; j < w; ++j) {
                const int sj = std::clamp(j - du, 0, w - 1);
                out[off + i * w + j] = in[off + si * w + sj];
            }
        }
    }
}

void flip_row(std::span<double> row, const ImageGeometry& img) {
    for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t i = 0; i < img.height; ++i) {
            auto begin = row.begin() + static_cast<std::ptrdiff_t>(c * img.pixels() + i * img.width);
            std::reverse(begin, begin + static_cast<std::ptrdiff_t>(img.width));
        }
}

}  // namespace

Tensor translate(const Tensor& batch, const ImageGeometry& image, int du, int dv) {
    check_image_batch(batch, image, "translate");
    Tensor out(batch.shape());
    for (std::size_t b = 0; b < batch.dim(0); ++b) translate_row(batch.row(b), out.row(b), image, du, dv);
    return out;
}

Tensor flip_horizontal(const Tensor& batch, const ImageGeometry& image) {
    check_image_batch(batch, image, "flip_horizontal");
    Tensor out = batch;
    for (std::size_t b = 0; b < batch.dim(0); ++b) flip_row(out.row(b), image);
    return out;
}

Tensor augment(const Tensor& batch, const AugmentPolicy& policy, const ImageGeometry& image,
               Rng& rng) {
    if (policy.kind == AugmentKind::none) return batch;
    if (batch.rank() != 2) throw ShapeError("augment: expected a batch x D tensor");
    if (policy.kind == AugmentKind::gaussian) {
        Tensor out = batch;
        for (double& v : out.data()) v += policy.noise_sigma * rng.normal();
        return out;
    }
    check_image_batch(batch, image, "augment");
    Tensor out(batch.shape());
    const int s = policy.max_shift;
    for (std::size_t b = 0; b < batch.dim(0); ++b) {
        std::vector<double> src(batch.row(b).begin(), batch.row(b).end());
        if (policy.kind == AugmentKind::cifar_like && rng.coin()) flip_row(src, image);
        const int du = static_cast<int>(rng.index(2 * s + 1)) - s;
        const int dv = static_cast<int>(rng.index(2 * s + 1)) - s;
        translate_row(src, out.row(b), image, du, dv);
        if (policy.kind == AugmentKind::cifar_like) {
            for (double& v : out.row(b)) v += policy.noise_sigma * rng.normal();
        }
    }
    return out;
}

}  // namespace ratlab
