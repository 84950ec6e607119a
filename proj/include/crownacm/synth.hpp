#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "crownacm/evalkit.hpp"
#include "crownacm/raster.hpp"

namespace crownacm {

/// Parameters of one synthetic corpus; everything downstream is a pure
/// function of (spec, rng_seed).
struct SceneSpec {
    int scene_width = 256;
    int scene_height = 256;
    int crowns_min = 5;
    int crowns_max = 15;
    double radius_min = 8.0;
    double radius_max = 40.0;     // capped so shapes align into the model frame
    int fourier_orders = 5;
    double fourier_amp = 0.15;
    double min_gap = -4.0;        // boundary gap between crowns; negative allows overlap
    double blur_sigma = 2.0;
    double noise_sigma = 0.1;
    double seed_jitter_mean = 3.4;        // expected |seed - true centroid|
    double baseline_erode_min = -3.0;     // negative erodes, positive dilates
    double baseline_erode_max = 3.0;
    double baseline_miss_rate = 0.05;
    double seed_false_rate = 0.0;         // extra background seeds per crown
    uint64_t rng_seed = 1;

    int model_frame = 92;  // alignment frame the crowns must fit
    void validate() const;
};

struct SyntheticScene {
    std::vector<BinaryMask> gt_masks;  // scene-sized, one per crown
    std::vector<Point> gt_centroids;
    ProbabilityMap posterior;
    std::vector<Point> seeds;
    std::vector<Detection> baseline_detections;  // parallel to seeds
    int false_seed_count = 0;                    // trailing seeds with no crown
    SceneSpec spec_echo;
};

struct CorpusEntry {
    std::string scene_dir;  // "scene_%05d"
    int index = 0;
    uint64_t rng_seed = 0;
    int crowns = 0;
    int seeds = 0;
    int false_seeds = 0;
};

/// Star-convex crown from a radial Fourier series, rasterized into an odd
/// square local mask centered on the sampled origin. Resamples (bounded)
/// until the radius stays positive and every pixel lies within the model
/// frame's reach of the centroid.
BinaryMask sample_crown(std::mt19937_64& rng, const SceneSpec& spec);

/// Full scene: placed crowns, blurred/noised posterior, jittered seeds with
/// misses and optional background false positives, and baseline masks
/// (translated by the rounded jitter, then eroded/dilated).
SyntheticScene render_scene(const SceneSpec& spec, std::mt19937_64& rng);

/// Deterministic per-scene stream: mix of (rng_seed, scene index).
std::mt19937_64 scene_rng(uint64_t corpus_seed, int scene_index);

/// Writes scene_%05d/{posterior.fras, gt_*.pgm, baseline_*.pgm, seeds.txt}
/// plus manifest.jsonl carrying the per-scene rng seeds.
std::vector<CorpusEntry> emit_corpus(const SceneSpec& spec, int n_scenes,
                                     const std::filesystem::path& out_dir);

}  // namespace crownacm
