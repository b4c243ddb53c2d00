#include "ratlab/transforms.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ratlab {

std::string_view family_name(Family f) {
    switch (f) {
        case Family::noise: return "noise";
        case Family::affine: return "affine";
        case Family::tps: return "tps";
        case Family::flow: return "flow";
        case Family::channel: return "channel";
        case Family::rotation: return "rotation";
    }
    return "?";
}

Family parse_family(std::string_view name) {
    for (Family f : {Family::noise, Family::affine, Family::tps, Family::flow, Family::channel,
                     Family::rotation}) {
        if (family_name(f) == name) return f;
    }
    throw std::invalid_argument("unknown transform family '" + std::string(name) + "'");
}

NormKind norm_kind_of(Family f) {
    return (f == Family::affine || f == Family::channel) ? NormKind::operator_norm : NormKind::l2;
}

// --- arcs -------------------------------------------------------------------

double distance_to_circle(const Arc& arc, double x, double y) {
    return std::abs(std::hypot(x - arc.cx, y - arc.cy) - arc.radius);
}

double distance_to_arc(const Arc& arc, double x, double y) {
    constexpr double kDeg = 180.0 / std::numbers::pi;
    double ang = std::atan2(y - arc.cy, x - arc.cx) * kDeg;
    double rel = std::fmod(ang - arc.start_deg, 360.0);
    if (rel < 0.0) rel += 360.0;
    if (rel <= arc.end_deg - arc.start_deg) return distance_to_circle(arc, x, y);
    auto endpoint = [&](double deg) {
        const double r = deg / kDeg;
        return std::hypot(x - (arc.cx + arc.radius * std::cos(r)),
                          y - (arc.cy + arc.radius * std::sin(r)));
    };
    return std::min(endpoint(arc.start_deg), endpoint(arc.end_deg));
}

std::size_t nearest_arc(std::span<const Arc> arcs, double x, double y) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < arcs.size(); ++k) {
        const double d = distance_to_arc(arcs[k], x, y);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

// --- spec -------------------------------------------------------------------

namespace {

void check_epsilon(double eps) {
    if (!(eps > 0.0) || !std::isfinite(eps)) {
        throw std::invalid_argument("transform epsilon must be positive, got " +
                                    std::to_string(eps));
    }
}

void check_image(const ImageGeometry& g) {
    if (g.channels == 0 || g.height == 0 || g.width == 0) {
        throw std::invalid_argument("transform: empty image geometry");
    }
}

double pixel_u(std::size_t j, std::size_t width) {
    return (2.0 * static_cast<double>(j) + 1.0) / static_cast<double>(width) - 1.0;
}

double tps_kernel(double r2) { return r2 > 0.0 ? r2 * std::log(r2) : 0.0; }

// Rows: control points; columns: pixels. Maps control displacements to a
// dense displacement field by the interpolating thin-plate spline.
std::shared_ptr<const Tensor> build_tps_basis(const ImageGeometry& img, std::size_t grid) {
    const std::size_t m = grid * grid;
    std::vector<double> cu(m), cv(m);
    for (std::size_t a = 0; a < grid; ++a) {
        for (std::size_t b = 0; b < grid; ++b) {
            const double step = grid > 1 ? 2.0 / static_cast<double>(grid - 1) : 0.0;
            cu[a * grid + b] = -1.0 + step * static_cast<double>(b);
            cv[a * grid + b] = -1.0 + step * static_cast<double>(a);
        }
    }
    const std::size_t n = m + 3;
    Eigen::MatrixXd system = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                   static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t l = 0; l < m; ++l) {
            const double du = cu[k] - cu[l], dv = cv[k] - cv[l];
            system(k, l) = tps_kernel(du * du + dv * dv);
        }
        system(k, k) += 1e-10;
        system(k, m) = system(m, k) = 1.0;
        system(k, m + 1) = system(m + 1, k) = cu[k];
        system(k, m + 2) = system(m + 2, k) = cv[k];
    }
    // Columns of the inverse restricted to the control-value right-hand sides.
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                static_cast<Eigen::Index>(m));
    for (std::size_t k = 0; k < m; ++k) rhs(k, k) = 1.0;
    const Eigen::MatrixXd coef = system.partialPivLu().solve(rhs);  // n x m

    const std::size_t hw = img.pixels();
    auto basis = std::make_shared<Tensor>(Shape{m, hw});
    for (std::size_t i = 0; i < img.height; ++i) {
        const double v = pixel_u(i, img.height);
        for (std::size_t j = 0; j < img.width; ++j) {
            const double u = pixel_u(j, img.width);
            const std::size_t p = i * img.width + j;
            for (std::size_t c = 0; c < m; ++c) {
                double s = coef(m, c) + coef(m + 1, c) * u + coef(m + 2, c) * v;
                for (std::size_t k = 0; k < m; ++k) {
                    const double du = u - cu[k], dv = v - cv[k];
                    s += coef(k, c) * tps_kernel(du * du + dv * dv);
                }
                (*basis)[c * hw + p] = s;
            }
        }
    }
    return basis;
}

}  // namespace

TransformSpec::TransformSpec(Family f, double epsilon) : family_(f), epsilon_(epsilon) {
    check_epsilon(epsilon);
}

TransformSpec TransformSpec::noise(std::size_t dim, double epsilon) {
    if (dim == 0) throw std::invalid_argument("noise transform: zero dimension");
    TransformSpec s(Family::noise, epsilon);
    s.input_dim_ = s.param_dim_ = dim;
    return s;
}

TransformSpec TransformSpec::affine(ImageGeometry image, double epsilon) {
    check_image(image);
    TransformSpec s(Family::affine, epsilon);
    s.image_ = image;
    s.input_dim_ = image.dim();
    s.param_dim_ = 6;
    return s;
}

TransformSpec TransformSpec::tps(ImageGeometry image, double epsilon, std::size_t grid) {
    check_image(image);
    if (grid < 2) throw std::invalid_argument("tps transform: grid must be at least 2");
    TransformSpec s(Family::tps, epsilon);
    s.image_ = image;
    s.grid_ = grid;
    s.input_dim_ = image.dim();
    s.param_dim_ = 2 * grid * grid;
    s.tps_basis_ = build_tps_basis(image, grid);
    return s;
}

TransformSpec TransformSpec::flow(ImageGeometry image, double epsilon) {
    check_image(image);
    TransformSpec s(Family::flow, epsilon);
    s.image_ = image;
    s.input_dim_ = image.dim();
    s.param_dim_ = 2 * image.pixels();
    return s;
}

TransformSpec TransformSpec::channel(ImageGeometry image, double epsilon) {
    check_image(image);
    TransformSpec s(Family::channel, epsilon);
    s.image_ = image;
    s.input_dim_ = image.dim();
    s.param_dim_ = image.channels;
    return s;
}

TransformSpec TransformSpec::rotation(std::vector<Arc> arcs, double epsilon) {
    if (arcs.empty()) throw std::invalid_argument("rotation transform: no arcs");
    TransformSpec s(Family::rotation, epsilon);
    s.arcs_ = std::move(arcs);
    s.input_dim_ = 2;
    s.param_dim_ = 1;
    return s;
}

TransformSpec TransformSpec::with_epsilon(double epsilon) const {
    check_epsilon(epsilon);
    TransformSpec s = *this;
    s.epsilon_ = epsilon;
    return s;
}

bool operator==(const TransformSpec& a, const TransformSpec& b) {
    return a.family_ == b.family_ && a.epsilon_ == b.epsilon_ && a.input_dim_ == b.input_dim_ &&
           a.param_dim_ == b.param_dim_ && a.image_ == b.image_ && a.grid_ == b.grid_ &&
           a.arcs_ == b.arcs_;
}

// --- params and norms --------------------------------------------------------

Tensor identity_params(const TransformSpec& spec, std::size_t batch) {
    return Tensor(Shape{batch, spec.param_dim()}, 0.0);
}

double param_norm(const TransformSpec& spec, std::span<const double> phi) {
    if (phi.size() != spec.param_dim()) {
        throw ShapeError(std::string(family_name(spec.family())) + ": expected " +
                         std::to_string(spec.param_dim()) + " parameters, got " +
                         std::to_string(phi.size()));
    }
    switch (spec.family()) {
        case Family::affine: {
            // Largest singular value of the 2x3 deviation [A | t].
            const double a = phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2];
            const double b = phi[0] * phi[3] + phi[1] * phi[4] + phi[2] * phi[5];
            const double c = phi[3] * phi[3] + phi[4] * phi[4] + phi[5] * phi[5];
            const double half_diff = 0.5 * (a - c);
            const double lmax = 0.5 * (a + c) + std::hypot(half_diff, b);
            return std::sqrt(std::max(lmax, 0.0));
        }
        case Family::channel:
            return max_abs(phi);
        default:
            return l2_norm(phi);
    }
}

namespace {

void check_params(const TransformSpec& spec, const Tensor& params) {
    if (params.rank() != 2 || params.dim(1) != spec.param_dim()) {
        throw ShapeError(std::string(family_name(spec.family())) + ": params must be batch x " +
                         std::to_string(spec.param_dim()) + ", got " +
                         shape_str(params.shape()));
    }
}

}  // namespace

std::vector<double> param_norms(const TransformSpec& spec, const Tensor& params) {
    check_params(spec, params);
    std::vector<double> out(params.dim(0));
    for (std::size_t b = 0; b < out.size(); ++b) out[b] = param_norm(spec, params.row(b));
    return out;
}

bool normalize_row(const TransformSpec& spec, std::span<double> row, double eps) {
    if (eps < 0.0) throw std::invalid_argument("normalize_to: negative epsilon");
    if (eps == 0.0) {
        std::fill(row.begin(), row.end(), 0.0);
        return true;
    }
    const double n = param_norm(spec, row);
    if (!(n > 0.0)) return false;
    const double s = eps / n;
    for (double& v : row) v *= s;
    return true;
}

Tensor normalize_to(const TransformSpec& spec, const Tensor& params, double eps) {
    check_params(spec, params);
    Tensor out = params;
    for (std::size_t b = 0; b < out.dim(0); ++b) {
        if (!normalize_row(spec, out.row(b), eps)) {
            throw NumericError("normalize_to: zero-norm parameters in row " + std::to_string(b));
        }
    }
    return out;
}

// --- differentiable primitives ----------------------------------------------

Tensor identity_grid(std::size_t height, std::size_t width) {
    Tensor g(Shape{height, width, 2});
    for (std::size_t i = 0; i < height; ++i) {
        for (std::size_t j = 0; j < width; ++j) {
            g[(i * width + j) * 2] = pixel_u(j, width);
            g[(i * width + j) * 2 + 1] = pixel_u(i, height);
        }
    }
    return g;
}

ad::Var warp(ad::Var x, ad::Var displacement, const ImageGeometry& img) {
    const Tensor& xv = x.value();
    const Tensor& dv = displacement.value();
    const std::size_t c_n = img.channels, h = img.height, w = img.width, hw = img.pixels();
    if (xv.rank() != 2 || xv.dim(1) != img.dim()) {
        throw ShapeError("warp: image batch " + shape_str(xv.shape()) + " does not match " +
                         std::to_string(c_n) + "x" + std::to_string(h) + "x" + std::to_string(w));
    }
    if (dv.rank() != 2 || dv.dim(0) != xv.dim(0) || dv.dim(1) != 2 * hw) {
        throw ShapeError("warp: displacement " + shape_str(dv.shape()));
    }
    const std::size_t batch = xv.dim(0);
    const double half_w = 0.5 * static_cast<double>(w);
    const double half_h = 0.5 * static_cast<double>(h);
    const double max_x = static_cast<double>(w - 1);
    const double max_y = static_cast<double>(h - 1);

    // Per output pixel: the four taps, their weights, and clamp flags.
    struct Tap {
        std::size_t x0, x1, y0, y1;
        double wx, wy;
        bool free_x, free_y;
    };
    // Takes the displacement explicitly: node storage may move after recording.
    auto tap_at = [w, h, hw, half_w, half_h, max_x, max_y](const Tensor& dv, std::size_t b,
                                                          std::size_t i, std::size_t j) {
        const std::size_t p = i * w + j;
        const double px = static_cast<double>(j) + dv[b * 2 * hw + p] * half_w;
        const double py = static_cast<double>(i) + dv[b * 2 * hw + hw + p] * half_h;
        Tap t{};
        const double cx = std::clamp(px, 0.0, max_x);
        const double cy = std::clamp(py, 0.0, max_y);
        t.free_x = px > 0.0 && px < max_x;
        t.free_y = py > 0.0 && py < max_y;
        t.x0 = static_cast<std::size_t>(std::floor(cx));
        t.y0 = static_cast<std::size_t>(std::floor(cy));
        t.x1 = std::min(t.x0 + 1, w - 1);
        t.y1 = std::min(t.y0 + 1, h - 1);
        t.wx = cx - static_cast<double>(t.x0);
        t.wy = cy - static_cast<double>(t.y0);
        return t;
    };

    Tensor out(xv.shape());
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                const Tap t = tap_at(dv, b, i, j);
                for (std::size_t c = 0; c < c_n; ++c) {
                    const double* src = xv.data().data() + b * img.dim() + c * hw;
                    const double top = (1.0 - t.wx) * src[t.y0 * w + t.x0] + t.wx * src[t.y0 * w + t.x1];
                    const double bot = (1.0 - t.wx) * src[t.y1 * w + t.x0] + t.wx * src[t.y1 * w + t.x1];
                    out[b * img.dim() + c * hw + i * w + j] = (1.0 - t.wy) * top + t.wy * bot;
                }
            }
        }
    }

    ad::Var ins[] = {x, displacement};
    return x.graph().record(
        "warp", std::move(out), ins,
        [x, displacement, img, tap_at, half_w, half_h](ad::Graph& g, const Tensor& go) {
            const Tensor& xv = x.value();
            const std::size_t c_n = img.channels, h = img.height, w = img.width,
                              hw = img.pixels(), dim = img.dim();
            const std::size_t batch = xv.dim(0);
            const bool need_x = g.requires_grad(x);
            const bool need_d = g.requires_grad(displacement);
            Tensor gx(need_x ? xv.shape() : Shape{});
            Tensor gd(need_d ? displacement.shape() : Shape{});
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t i = 0; i < h; ++i) {
                    for (std::size_t j = 0; j < w; ++j) {
                        const Tap t = tap_at(displacement.value(), b, i, j);
                        const std::size_t p = i * w + j;
                        double gpx = 0.0, gpy = 0.0;
                        for (std::size_t c = 0; c < c_n; ++c) {
                            const double gout = go[b * dim + c * hw + p];
                            if (gout == 0.0) continue;
                            const double* src = xv.data().data() + b * dim + c * hw;
                            const double v00 = src[t.y0 * w + t.x0], v01 = src[t.y0 * w + t.x1];
                            const double v10 = src[t.y1 * w + t.x0], v11 = src[t.y1 * w + t.x1];
                            if (need_x) {
                                double* dst = gx.data().data() + b * dim + c * hw;
                                dst[t.y0 * w + t.x0] += gout * (1.0 - t.wx) * (1.0 - t.wy);
                                dst[t.y0 * w + t.x1] += gout * t.wx * (1.0 - t.wy);
                                dst[t.y1 * w + t.x0] += gout * (1.0 - t.wx) * t.wy;
                                dst[t.y1 * w + t.x1] += gout * t.wx * t.wy;
                            }
                            gpx += gout * ((1.0 - t.wy) * (v01 - v00) + t.wy * (v11 - v10));
                            gpy += gout * ((1.0 - t.wx) * (v10 - v00) + t.wx * (v11 - v01));
                        }
                        if (need_d) {
                            gd[b * 2 * hw + p] = t.free_x ? gpx * half_w : 0.0;
                            gd[b * 2 * hw + hw + p] = t.free_y ? gpy * half_h : 0.0;
                        }
                    }
                }
            }
            if (need_x) g.accumulate(x, gx);
            if (need_d) g.accumulate(displacement, gd);
        });
}

namespace {

// H x W x 2 interleaved absolute grid -> 1 x 2HW planar displacement.
ad::Var grid_to_displacement(ad::Var grid) {
    const Tensor& gv = grid.value();
    if (gv.rank() != 3 || gv.dim(2) != 2) {
        throw ShapeError("bilinear_sample: grid must be H x W x 2, got " + shape_str(gv.shape()));
    }
    const std::size_t h = gv.dim(0), w = gv.dim(1), hw = h * w;
    const Tensor base = identity_grid(h, w);
    Tensor out(Shape{1, 2 * hw});
    for (std::size_t p = 0; p < hw; ++p) {
        out[p] = gv[2 * p] - base[2 * p];
        out[hw + p] = gv[2 * p + 1] - base[2 * p + 1];
    }
    ad::Var ins[] = {grid};
    return grid.graph().record("grid_to_displacement", std::move(out), ins,
                               [grid, hw](ad::Graph& g, const Tensor& go) {
                                   Tensor gg(grid.shape());
                                   for (std::size_t p = 0; p < hw; ++p) {
                                       gg[2 * p] = go[p];
                                       gg[2 * p + 1] = go[hw + p];
                                   }
                                   g.accumulate(grid, gg);
                               });
}

ad::Var channel_scale(ad::Var x, ad::Var delta, const ImageGeometry& img) {
    const Tensor& xv = x.value();
    const Tensor& dv = delta.value();
    const std::size_t batch = xv.dim(0), c_n = img.channels, hw = img.pixels(), dim = img.dim();
    Tensor out(xv.shape());
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < c_n; ++c) {
            const double s = 1.0 + dv[b * c_n + c];
            for (std::size_t p = 0; p < hw; ++p)
                out[b * dim + c * hw + p] = s * xv[b * dim + c * hw + p];
        }
    ad::Var ins[] = {x, delta};
    return x.graph().record(
        "channel_scale", std::move(out), ins, [x, delta, img](ad::Graph& g, const Tensor& go) {
            const Tensor& xv = x.value();
            const Tensor& dv = delta.value();
            const std::size_t batch = xv.dim(0), c_n = img.channels, hw = img.pixels(),
                              dim = img.dim();
            if (g.requires_grad(x)) {
                Tensor gx(xv.shape());
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t c = 0; c < c_n; ++c) {
                        const double s = 1.0 + dv[b * c_n + c];
                        for (std::size_t p = 0; p < hw; ++p)
                            gx[b * dim + c * hw + p] = s * go[b * dim + c * hw + p];
                    }
                g.accumulate(x, gx);
            }
            if (g.requires_grad(delta)) {
                Tensor gdel(dv.shape());
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t c = 0; c < c_n; ++c) {
                        double s = 0.0;
                        for (std::size_t p = 0; p < hw; ++p)
                            s += go[b * dim + c * hw + p] * xv[b * dim + c * hw + p];
                        gdel[b * c_n + c] = s;
                    }
                g.accumulate(delta, gdel);
            }
        });
}

// x' = x + (R(theta) - I)(x - c), written as a displacement so theta = 0 is exact.
ad::Var rotate_points(ad::Var x, ad::Var degrees, const std::vector<Arc>& arcs) {
    const Tensor& xv = x.value();
    const Tensor& av = degrees.value();
    const std::size_t batch = xv.dim(0);
    constexpr double kRad = std::numbers::pi / 180.0;
    std::vector<double> cx(batch), cy(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        const Arc& arc = arcs[nearest_arc(arcs, xv[2 * b], xv[2 * b + 1])];
        cx[b] = arc.cx;
        cy[b] = arc.cy;
    }
    Tensor out(xv.shape());
    for (std::size_t b = 0; b < batch; ++b) {
        const double th = av[b] * kRad;
        const double s = std::sin(th);
        const double half = std::sin(0.5 * th);
        const double cm1 = -2.0 * half * half;
        const double dx = xv[2 * b] - cx[b], dy = xv[2 * b + 1] - cy[b];
        out[2 * b] = xv[2 * b] + (cm1 * dx - s * dy);
        out[2 * b + 1] = xv[2 * b + 1] + (s * dx + cm1 * dy);
    }
    ad::Var ins[] = {x, degrees};
    return x.graph().record(
        "rotate_points", std::move(out), ins,
        [x, degrees, cx = std::move(cx), cy = std::move(cy)](ad::Graph& g, const Tensor& go) {
            const Tensor& xv = x.value();
            const Tensor& av = degrees.value();
            const std::size_t batch = xv.dim(0);
            Tensor gx(xv.shape());
            Tensor ga(av.shape());
            for (std::size_t b = 0; b < batch; ++b) {
                const double th = av[b] * kRad;
                const double s = std::sin(th), c = std::cos(th);
                const double dx = xv[2 * b] - cx[b], dy = xv[2 * b + 1] - cy[b];
                const double g0 = go[2 * b], g1 = go[2 * b + 1];
                gx[2 * b] = c * g0 + s * g1;
                gx[2 * b + 1] = -s * g0 + c * g1;
                ga[b] = kRad * (g0 * (-s * dx - c * dy) + g1 * (c * dx - s * dy));
            }
            g.accumulate(x, gx);
            g.accumulate(degrees, ga);
        });
}

Tensor affine_basis(const ImageGeometry& img) {
    const std::size_t hw = img.pixels();
    Tensor p(Shape{3, hw});
    for (std::size_t i = 0; i < img.height; ++i)
        for (std::size_t j = 0; j < img.width; ++j) {
            p[i * img.width + j] = pixel_u(j, img.width);
            p[hw + i * img.width + j] = pixel_u(i, img.height);
            p[2 * hw + i * img.width + j] = 1.0;
        }
    return p;
}

}  // namespace

ad::Var apply(const TransformSpec& spec, ad::Var params, ad::Var x) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2 || xv.dim(1) != spec.input_dim()) {
        throw ShapeError(std::string(family_name(spec.family())) + ": input " +
                         shape_str(xv.shape()) + " does not match geometry of " +
                         std::to_string(spec.input_dim()) + " values per sample");
    }
    check_params(spec, params.value());
    if (params.value().dim(0) != xv.dim(0)) {
        throw ShapeError(std::string(family_name(spec.family())) +
                         ": params and input batch sizes differ");
    }
    ad::Graph& g = x.graph();
    const std::size_t batch = xv.dim(0);
    const ImageGeometry& img = spec.image();
    switch (spec.family()) {
        case Family::noise:
            return ad::add(x, params);
        case Family::channel:
            return channel_scale(x, params, img);
        case Family::rotation:
            return rotate_points(x, params, spec.arcs());
        case Family::flow:
            return warp(x, params, img);
        case Family::affine: {
            ad::Var rows = ad::reshape(params, Shape{2 * batch, 3});
            ad::Var disp = ad::matmul(rows, g.constant(affine_basis(img)));
            return warp(x, ad::reshape(disp, Shape{batch, 2 * img.pixels()}), img);
        }
        case Family::tps: {
            const std::size_t m = spec.grid() * spec.grid();
            ad::Var rows = ad::reshape(params, Shape{2 * batch, m});
            ad::Var disp = ad::matmul(rows, g.constant(*spec.tps_basis()));
            return warp(x, ad::reshape(disp, Shape{batch, 2 * img.pixels()}), img);
        }
    }
    throw std::logic_error("apply: unhandled family");
}

Tensor apply(const TransformSpec& spec, const Tensor& params, const Tensor& x) {
    ad::Graph g;
    return apply(spec, g.constant(params), g.constant(x)).value();
}

ad::Var compose(const Composite& specs, std::span<const ad::Var> params, ad::Var x) {
    if (specs.size() != params.size()) {
        throw std::invalid_argument("compose: " + std::to_string(specs.size()) +
                                    " transforms but " + std::to_string(params.size()) +
                                    " parameter sets");
    }
    ad::Var cur = x;
    for (std::size_t i = 0; i < specs.size(); ++i) cur = apply(specs[i], params[i], cur);
    return cur;
}

Tensor compose(const Composite& specs, const std::vector<Tensor>& params, const Tensor& x) {
    ad::Graph g;
    std::vector<ad::Var> ps;
    for (const auto& p : params) ps.push_back(g.constant(p));
    return compose(specs, ps, g.constant(x)).value();
}

ad::Var bilinear_sample(ad::Var image, ad::Var grid) {
    const Shape shape = image.shape();
    if (shape.size() != 3) throw ShapeError("bilinear_sample: image must be C x H x W");
    const ImageGeometry img{shape[0], shape[1], shape[2]};
    if (grid.value().rank() != 3 || grid.value().dim(0) != img.height ||
        grid.value().dim(1) != img.width) {
        throw ShapeError("bilinear_sample: grid " + shape_str(grid.shape()) +
                         " does not match image " + shape_str(shape));
    }
    ad::Var flat = ad::reshape(image, Shape{1, img.dim()});
    ad::Var out = warp(flat, grid_to_displacement(grid), img);
    return ad::reshape(out, shape);
}

Tensor bilinear_sample(const Tensor& image, const Tensor& grid) {
    ad::Graph g;
    return bilinear_sample(g.constant(image), g.constant(grid)).value();
}

}  // namespace ratlab
