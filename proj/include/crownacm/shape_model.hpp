#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <vector>

#include "crownacm/raster.hpp"

namespace crownacm {

/// Centroid-aligned training shapes as signed distance fields, all frame x frame.
struct AlignedShapeSet {
    int frame = 92;
    std::vector<Grid> sdfs;
    int source_count = 0;  // shapes before augmentation
};

/// Linear statistical shape model: mean field plus orthonormal variation modes
/// with descending nonnegative eigenvalues. epsilon is the smoothed-step width
/// used when turning a level-set field into a soft interior indicator.
struct EigenshapeModel {
    int frame = 92;
    Grid mean;
    std::vector<Grid> modes;
    Eigen::VectorXd eigenvalues;
    double epsilon = 1.0;

    int mode_count() const { return static_cast<int>(modes.size()); }
};

using ShapeCoefficients = Eigen::VectorXd;

/// Nonparametric coefficient prior: Gaussian kernels of width `bandwidth`
/// centered on the training coefficient vectors (rows of `samples`).
struct KdePrior {
    Eigen::MatrixXd samples;  // N x k
    double bandwidth = 1.0;
};

/// Model + prior as persisted together in one container file.
struct ShapeModelBundle {
    EigenshapeModel model;
    KdePrior prior;
};

// --- smooth step -------------------------------------------------------------

/// 0.5 * (1 + (2/pi) * atan(z / eps)); strictly inside (0, 1).
inline double smooth_heaviside(double z, double eps) {
    return 0.5 * (1.0 + (2.0 / std::numbers::pi) * std::atan(z / eps));
}

/// d/dz smooth_heaviside = eps / (pi * (eps^2 + z^2)).
inline double smooth_heaviside_derivative(double z, double eps) {
    return eps / (std::numbers::pi * (eps * eps + z * z));
}

// --- operations --------------------------------------------------------------

/// Translates the mask by the nearest-integer shift that puts its centroid at
/// the frame center ((frame-1)/2, (frame-1)/2). Throws when the object's
/// bounding box does not fit the frame.
BinaryMask align_mask(const BinaryMask& mask, int frame);

/// Exact Euclidean signed distance to the mask boundary: negative inside,
/// positive outside, +-0.5 at pixels adjacent to the boundary, clamped to
/// +-max(width, height). Throws on empty or all-true masks.
Grid mask_to_sdf(const BinaryMask& mask);

/// Per input SDF, its 4 rotations (0/90/180/270 deg) and those of the
/// horizontal flip; bit-identical copies within one input's orbit collapse.
AlignedShapeSet augment(const AlignedShapeSet& set);

/// Snapshot PCA over the set's SDFs: mean field, top-k orthonormal modes and
/// eigenvalues of the (1/N-normalized) sample covariance. Variance-deficient
/// directions are filled with a deterministic orthonormal basis at eigenvalue
/// zero. Sign convention: each mode's largest-magnitude entry is positive.
EigenshapeModel learn_eigenshape_model(const AlignedShapeSet& set, int k);

/// alpha_j = <sdf - mean, psi_j> under the pixelwise inner product.
ShapeCoefficients project(const EigenshapeModel& model, const Grid& sdf);

/// Level-set field mean + sum_j alpha_j psi_j.
Grid level_set_field(const EigenshapeModel& model, const ShapeCoefficients& alpha);

/// Soft interior indicator H_eps(-field); values strictly inside (0, 1).
Grid generate(const EigenshapeModel& model, const ShapeCoefficients& alpha);

/// Coefficient vectors of the set's SDFs plus a bandwidth set to the mean
/// nearest-neighbour distance among them (floored at 1e-3).
KdePrior learn_kde_prior(const EigenshapeModel& model, const AlignedShapeSet& set);

struct KdeLogDensity {
    double value = 0.0;          // log[(1/N) sum_i exp(-|a - a_i|^2 / (2 sigma^2))]
    Eigen::VectorXd gradient;    // exact analytic gradient in a
};

KdeLogDensity kde_log_prior(const KdePrior& prior, const ShapeCoefficients& alpha);

// --- model container file ------------------------------------------------------

/// "ESM1 <frame> <k> <epsilon> <sigma>\n" followed by mean, modes, eigenvalues
/// and the N x k prior samples as little-endian f64 blocks. Byte-exact round
/// trip; N is recovered from the trailing block length.
void save_shape_model(const ShapeModelBundle& bundle, const std::filesystem::path& path);
ShapeModelBundle load_shape_model(const std::filesystem::path& path);

}  // namespace crownacm
