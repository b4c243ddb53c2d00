#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ratlab/autodiff.hpp"
#include "ratlab/tensor.hpp"

namespace ratlab {

// Parameterized, identity-anchored transformations f_phi(x).
//
// Every family is parameterized as a deviation from identity, so the identity
// parameter is the zero vector and its norm is 0. Parameters are batched: one
// row of phi per sample, and norms are taken per row. Spatial families work in
// normalized image coordinates [-1, 1]^2 (pixel centers, align_corners=false)
// and move each output pixel's sampling position by a displacement field; the
// image is read back with bilinear interpolation and border replication.
enum class Family { noise, affine, tps, flow, channel, rotation };
enum class NormKind { l2, operator_norm };

std::string_view family_name(Family f);
Family parse_family(std::string_view name);
NormKind norm_kind_of(Family f);

struct ImageGeometry {
    std::size_t channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;
    std::size_t pixels() const { return height * width; }
    std::size_t dim() const { return channels * height * width; }
    friend bool operator==(const ImageGeometry&, const ImageGeometry&) = default;
};

// Circular arc; angles in degrees, traversed counter-clockwise from start to end.
struct Arc {
    double cx = 0.0;
    double cy = 0.0;
    double radius = 1.0;
    double start_deg = 0.0;
    double end_deg = 180.0;
    friend bool operator==(const Arc&, const Arc&) = default;
};

double distance_to_arc(const Arc& arc, double x, double y);
double distance_to_circle(const Arc& arc, double x, double y);
// Index of the arc closest to (x, y).
std::size_t nearest_arc(std::span<const Arc> arcs, double x, double y);

class TransformSpec {
public:
    // f(x) = x + phi on flat inputs of `dim` values.
    static TransformSpec noise(std::size_t dim, double epsilon);
    // Displacement A*(u, v) + t; phi = row-major [A | t] (2 x 3).
    static TransformSpec affine(ImageGeometry image, double epsilon);
    // Thin-plate spline over a grid x grid lattice of control points; phi holds
    // the control-point displacements, all u components then all v components.
    static TransformSpec tps(ImageGeometry image, double epsilon, std::size_t grid = 4);
    // Per-pixel displacement field; all u components then all v components.
    static TransformSpec flow(ImageGeometry image, double epsilon);
    // x_c -> (1 + phi_c) x_c.
    static TransformSpec channel(ImageGeometry image, double epsilon);
    // 2-D points rotated by phi degrees about the center of their nearest arc.
    static TransformSpec rotation(std::vector<Arc> arcs, double epsilon);

    Family family() const { return family_; }
    NormKind norm_kind() const { return norm_kind_of(family_); }
    double epsilon_max() const { return epsilon_; }
    std::size_t input_dim() const { return input_dim_; }
    std::size_t param_dim() const { return param_dim_; }
    const ImageGeometry& image() const { return image_; }
    std::size_t grid() const { return grid_; }
    const std::vector<Arc>& arcs() const { return arcs_; }

    TransformSpec with_epsilon(double epsilon) const;

    // TPS interpolation matrix (pixels x control points), null for other families.
    const Tensor* tps_basis() const { return tps_basis_.get(); }

    friend bool operator==(const TransformSpec& a, const TransformSpec& b);

private:
    TransformSpec(Family f, double epsilon);

    Family family_;
    double epsilon_;
    std::size_t input_dim_ = 0;
    std::size_t param_dim_ = 0;
    ImageGeometry image_{};
    std::size_t grid_ = 0;
    std::vector<Arc> arcs_;
    std::shared_ptr<const Tensor> tps_basis_;
};

using Composite = std::vector<TransformSpec>;

// Zero deviation for `batch` samples: apply() returns its input unchanged.
Tensor identity_params(const TransformSpec& spec, std::size_t batch = 1);

// Norm of a single sample's parameter vector under the family norm.
double param_norm(const TransformSpec& spec, std::span<const double> phi);
std::vector<double> param_norms(const TransformSpec& spec, const Tensor& params);

// Rescales each row to family norm `eps` (direction preserved). eps == 0
// yields identity params; a zero-norm row with eps > 0 throws.
Tensor normalize_to(const TransformSpec& spec, const Tensor& params, double eps);
// In-place single-row variant; returns false (row untouched) on a zero-norm row.
bool normalize_row(const TransformSpec& spec, std::span<double> row, double eps);

Tensor apply(const TransformSpec& spec, const Tensor& params, const Tensor& x);
ad::Var apply(const TransformSpec& spec, ad::Var params, ad::Var x);

// Applies components in list order: the first spec acts on x first.
Tensor compose(const Composite& specs, const std::vector<Tensor>& params, const Tensor& x);
ad::Var compose(const Composite& specs, std::span<const ad::Var> params, ad::Var x);

// Normalized-coordinate sampling grid of an unwarped image, H x W x 2 as (u, v).
Tensor identity_grid(std::size_t height, std::size_t width);

// Samples image (C x H x W) at grid (H x W x 2, normalized (u, v)) bilinearly.
Tensor bilinear_sample(const Tensor& image, const Tensor& grid);
ad::Var bilinear_sample(ad::Var image, ad::Var grid);

// Batched warp: x is B x (C*H*W), displacement is B x (2*H*W) with all u
// offsets followed by all v offsets, in normalized units.
ad::Var warp(ad::Var x, ad::Var displacement, const ImageGeometry& image);

}  // namespace ratlab
