#pragma once

#include <iosfwd>
#include <utility>
#include <vector>

#include "crownacm/energy.hpp"

namespace crownacm {

struct OptimizerSettings {
    int memory = 10;              // L-BFGS history length
    int max_iters = 500;
    double rel_tol = 1e-6;        // relative energy decrease stop
    double grad_tol = 1e-5;       // projected-gradient norm stop
    double armijo_c = 1e-4;
    double backtrack_shrink = 0.5;
    int max_line_search = 30;
    double prune_area_min = 20.0;  // px^2; thresholded contours below are dropped

    void validate() const;
};

struct DetectionMask {
    BinaryMask mask;     // scene-sized, placed field >= 0.5
    Point centroid;
    int contour_index = -1;
};

struct RefinementResult {
    ContourState final_state;
    std::vector<EnergyBreakdown> energy_trace;  // initial state plus every accepted iterate
    int iterations = 0;
    bool converged = false;
    std::vector<int> pruned;
    std::vector<DetectionMask> detections;
};

/// Mean-shape coefficients (alpha = 0) with offsets at the seeds.
ContourState initialize_states(const SceneConfig& config);

/// Projected L-BFGS over all contours simultaneously. Offsets are clamped to
/// their seed boxes after every trial step; curvature pairs are discarded when
/// the projection activates or s.y is non-positive. When `log` is given, one
/// line per iterate is written: iter total shape image overlap grad_norm.
RefinementResult refine(const SceneConfig& config, const OptimizerSettings& settings,
                        std::ostream* log = nullptr);

/// Contour k is pruned iff its placed field thresholded at 0.5 covers strictly
/// fewer than area_min pixels. Returns (kept, pruned) index lists.
std::pair<std::vector<int>, std::vector<int>> prune_empty(const ContourState& state,
                                                          const SceneConfig& config,
                                                          double area_min);

/// Scene mask (placed field >= 0.5) and its centroid for one kept contour.
DetectionMask extract_detection(const ContourState& state, int contour_index,
                                const SceneConfig& config);

}  // namespace crownacm
