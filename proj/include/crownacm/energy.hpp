#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "crownacm/raster.hpp"
#include "crownacm/shape_model.hpp"

namespace crownacm {

/// Weights and relaxation constants of one refinement problem.
struct SceneParams {
    double shape_weight = 1.0;      // coefficient-prior term weight
    double image_weight = 1.0;      // cross-entropy term weight
    double overlap_weight = 5.0;    // pairwise-overlap term weight
    double union_sharpness = 20.0;  // soft-max sharpness of the union
    double seed_box_radius = 10.0;  // per-axis offset box half-width around each seed
};

/// One refinement problem: posterior raster, seed points, parameters and the
/// shape model/prior (borrowed, owned by the caller).
struct SceneConfig {
    ProbabilityMap posterior;
    std::vector<Point> seeds;
    SceneParams params;
    const EigenshapeModel* model = nullptr;
    const KdePrior* prior = nullptr;

    int contour_count() const { return static_cast<int>(seeds.size()); }
    void validate() const;
};

/// Optimization variables of one contour.
struct Contour {
    ShapeCoefficients alpha;
    Point offset;
};

using ContourState = std::vector<Contour>;

struct EnergyBreakdown {
    double shape_term = 0.0;    // unweighted
    double image_term = 0.0;    // unweighted
    double overlap_term = 0.0;  // unweighted
    double total = 0.0;         // weighted sum of the three
};

// --- individual terms (the tested contracts) ----------------------------------

/// Scene-sized soft indicator per contour: generate placed at each offset.
std::vector<Grid> place_shapes(const ContourState& state, const SceneConfig& config);

/// Pixelwise weighted soft maximum sum_i x_i e^{tau x_i} / sum_i e^{tau x_i};
/// writes exact partials d/dx_i when `partials` is non-empty.
double smooth_union_point(std::span<const double> values, double tau,
                          std::span<double> partials = {});

Grid smooth_union(const std::vector<Grid>& fields, double tau);

struct ImageTerm {
    double value = 0.0;
    Grid dvalue_dunion;  // -(log p - log(1-p)) per pixel
};

/// Full binary cross-entropy -sum [U log p + (1-U) log(1-p)].
ImageTerm image_term(const Grid& union_field, const ProbabilityMap& posterior);

struct OverlapTerm {
    double value = 0.0;
    std::vector<Grid> partials;  // d/dG_i = sum_{j != i} G_j
};

/// sum_{i<j} sum_px G_i G_j.
OverlapTerm overlap_term(const std::vector<Grid>& fields);

struct ShapeTerm {
    double value = 0.0;
    std::vector<Eigen::VectorXd> gradients;  // per contour, d/dalpha_i
};

/// -sum_i log P(alpha_i) under the KDE prior.
ShapeTerm shape_term(const KdePrior& prior, const ContourState& state);

// --- combined energy -------------------------------------------------------------

/// Weighted combination of the three terms. Throws std::invalid_argument when
/// any offset violates its seed box (the location term is a hard constraint).
EnergyBreakdown total_energy(const ContourState& state, const SceneConfig& config);

/// Exact analytic gradient over all (alpha_k, offset_k), packed per contour as
/// [alpha_0..alpha_{k-1}, t_x, t_y]; dimension M * (k + 2).
Eigen::VectorXd energy_gradient(const ContourState& state, const SceneConfig& config);

/// Central finite differences of total_energy, same packing; the verification
/// oracle for energy_gradient.
Eigen::VectorXd finite_difference_gradient(const ContourState& state, const SceneConfig& config,
                                           double h);

// --- state packing ----------------------------------------------------------------

Eigen::VectorXd pack_state(const ContourState& state);
ContourState unpack_state(const Eigen::VectorXd& x, const SceneConfig& config);

/// Caches the posterior's log grids so repeated evaluations of one scene skip
/// the per-pixel logs; the optimizer keeps one per refinement run.
class EnergyEvaluator {
  public:
    explicit EnergyEvaluator(const SceneConfig& config);

    EnergyBreakdown energy(const ContourState& state) const;
    EnergyBreakdown energy_and_gradient(const ContourState& state, Eigen::VectorXd& gradient) const;

    const SceneConfig& config() const { return config_; }

  private:
    const SceneConfig& config_;
    Grid log_p_;
    Grid log_one_minus_p_;
    double empty_union_image_term_ = 0.0;  // sum_px -log(1-p)
};

}  // namespace crownacm
