#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ratlab/rng.hpp"
#include "ratlab/tensor.hpp"
#include "ratlab/transforms.hpp"

namespace ratlab {

struct DatasetSplit {
    Tensor x_labeled;
    std::vector<int> y_labeled;
    Tensor x_unlabeled;
    std::vector<int> y_unlabeled;  // ground truth, never used for training
    Tensor x_validation;
    std::vector<int> y_validation;
    Tensor x_test;
    std::vector<int> y_test;
    std::size_t num_classes = 2;
    ImageGeometry image{};  // for image data; {1,1,D} otherwise
    std::uint64_t seed = 0;
};

// Two interleaved semicircles with isotropic Gaussian noise. Class k is drawn
// from arcs[k].
struct MoonsGeometry {
    std::vector<Arc> arcs{{0.0, 0.0, 1.0, 0.0, 180.0}, {1.0, 0.5, 1.0, 180.0, 360.0}};
    double noise = 0.1;
    friend bool operator==(const MoonsGeometry&, const MoonsGeometry&) = default;
};

struct MoonsCounts {
    std::size_t labeled_per_class = 10;
    std::size_t unlabeled_per_class = 30;
    std::size_t validation_per_class = 100;
    std::size_t test_per_class = 1000;
};

DatasetSplit make_moons(const MoonsCounts& counts, const MoonsGeometry& geometry,
                        std::uint64_t seed);

// n points per arc, evenly spaced in angle, exactly on the arcs.
Tensor sample_arcs(const MoonsGeometry& geometry, std::size_t per_arc,
                   std::vector<int>* labels = nullptr);

// rotation(eps degrees) about the point's arc center, then noise(eps_noise).
Composite moons_rotation_transform(const MoonsGeometry& geometry, double rotation_eps = 10.0,
                                   double noise_eps = 0.3);

// CSV with header x1,x2,label,split (split: 0 labeled, 1 unlabeled,
// 2 validation, 3 test; unlabeled rows carry label -1).
void write_points_csv(std::ostream& os, const DatasetSplit& d);
DatasetSplit read_points_csv(std::istream& is);

// Random partition of an image pool (rows of `x`) into labeled / validation /
// test / unlabeled. Disjoint by construction.
DatasetSplit split_pool(const Tensor& x, const std::vector<int>& y, ImageGeometry image,
                        std::size_t num_classes, std::size_t n_labeled,
                        std::size_t n_validation, std::size_t n_test, std::uint64_t seed);

// --- preprocessing ------------------------------------------------------------

inline constexpr double kGcnStdFloor = 1e-8;

// Per-sample (x - mean) / max(std, floor). A constant row maps to zeros.
Tensor gcn(const Tensor& images);

struct ZcaState {
    Tensor mean;       // D
    Tensor whitening;  // D x D, symmetric
};

// zeta is relative to the mean eigenvalue of the fit-set covariance.
ZcaState zca_fit(const Tensor& images, double zeta = 1e-5);
Tensor zca_apply(const ZcaState& state, const Tensor& images);

// --- augmentation -------------------------------------------------------------

enum class AugmentKind { none, gaussian, cifar_like, svhn_like };
std::string_view augment_name(AugmentKind k);
AugmentKind parse_augment(std::string_view s);

struct AugmentPolicy {
    AugmentKind kind = AugmentKind::none;
    double noise_sigma = 0.15;
    int max_shift = 2;
    friend bool operator==(const AugmentPolicy&, const AugmentPolicy&) = default;
};

// Batched: one independent draw per row. Spatial policies need image geometry.
Tensor augment(const Tensor& batch, const AugmentPolicy& policy, const ImageGeometry& image,
               Rng& rng);
// Integer-pixel shift with border replication: out(i, j) = in(i - dv, j - du).
Tensor translate(const Tensor& batch, const ImageGeometry& image, int du, int dv);
Tensor flip_horizontal(const Tensor& batch, const ImageGeometry& image);

}  // namespace ratlab
