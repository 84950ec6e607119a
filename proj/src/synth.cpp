#include "crownacm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "crownacm/shape_model.hpp"

namespace crownacm {

void SceneSpec::validate() const {
    if (scene_width < 16 || scene_height < 16)
        throw std::invalid_argument("SceneSpec: scene must be at least 16x16");
    if (crowns_min < 1 || crowns_max < crowns_min)
        throw std::invalid_argument("SceneSpec: crown count range is empty");
    if (!(radius_min > 0.0) || radius_max < radius_min)
        throw std::invalid_argument("SceneSpec: radius range is empty");
    if (radius_max > 0.5 * model_frame - 2.0)
        throw std::invalid_argument("SceneSpec: radius_max exceeds the model frame cap " +
                                    std::to_string(0.5 * model_frame - 2.0));
    if (fourier_orders < 0 || fourier_amp < 0.0)
        throw std::invalid_argument("SceneSpec: bad fourier parameters");
    if (blur_sigma < 0.0 || noise_sigma < 0.0 || seed_jitter_mean < 0.0)
        throw std::invalid_argument("SceneSpec: sigmas must be >= 0");
    if (baseline_erode_max < baseline_erode_min)
        throw std::invalid_argument("SceneSpec: erode/dilate range is empty");
    if (baseline_miss_rate < 0.0 || baseline_miss_rate > 1.0 || seed_false_rate < 0.0 ||
        seed_false_rate > 1.0)
        throw std::invalid_argument("SceneSpec: rates must be in [0,1]");
}

std::mt19937_64 scene_rng(uint64_t corpus_seed, int scene_index) {
    // splitmix64 over the pair keeps per-scene streams decorrelated
    uint64_t z = corpus_seed + 0x9e3779b97f4a7c15ULL * (static_cast<uint64_t>(scene_index) + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return std::mt19937_64(z);
}

namespace {

struct RadialShape {
    double r0 = 0.0;
    std::vector<double> amp;
    std::vector<double> phase;

    double radius(double theta) const {
        double f = 1.0;
        for (size_t k = 0; k < amp.size(); ++k)
            f += amp[k] * std::cos((static_cast<double>(k) + 1.0) * theta + phase[k]);
        return r0 * f;
    }
};

BinaryMask rasterize_star(const RadialShape& shape, int side) {
    BinaryMask mask(side, side);
    const double c = 0.5 * (side - 1);
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            const double dx = x - c, dy = y - c;
            const double rr = std::hypot(dx, dy);
            if (rr == 0.0) {
                mask.set(x, y, true);
                continue;
            }
            if (rr <= shape.radius(std::atan2(dy, dx))) mask.set(x, y, true);
        }
    }
    return mask;
}

}  // namespace

BinaryMask sample_crown(std::mt19937_64& rng, const SceneSpec& spec) {
    spec.validate();
    const double cap = 0.5 * spec.model_frame - 2.0;
    const int side = 2 * static_cast<int>(std::floor(cap)) + 1;
    std::uniform_real_distribution<double> radius_dist(spec.radius_min, spec.radius_max);
    std::uniform_real_distribution<double> amp_dist(-spec.fourier_amp, spec.fourier_amp);
    std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);

    for (int attempt = 0; attempt < 100; ++attempt) {
        RadialShape shape;
        shape.r0 = radius_dist(rng);
        shape.amp.resize(spec.fourier_orders);
        shape.phase.resize(spec.fourier_orders);
        for (int k = 0; k < spec.fourier_orders; ++k) {
            shape.amp[k] = amp_dist(rng);
            shape.phase[k] = phase_dist(rng);
        }

        double min_r = shape.r0, max_r = 0.0;
        for (int s = 0; s < 1024; ++s) {
            const double r = shape.radius(2.0 * std::numbers::pi * s / 1024.0);
            min_r = std::min(min_r, r);
            max_r = std::max(max_r, r);
        }
        if (min_r <= 0.5) continue;  // radius must stay positive

        BinaryMask mask = rasterize_star(shape, side);
        if (mask.area() == 0) continue;

        // Every pixel must stay within the model frame's reach of the centroid,
        // otherwise the shape cannot be centroid-aligned for learning.
        const Point c = centroid(mask);
        double reach = 0.0;
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x)
                if (mask.get(x, y))
                    reach = std::max(reach, std::max(std::abs(x - c.x), std::abs(y - c.y)));
        if (reach > cap) continue;
        return mask;
    }
    throw std::runtime_error("sample_crown: no admissible shape after 100 attempts");
}

namespace {

struct PlacedCrown {
    BinaryMask local;
    int cx = 0, cy = 0;   // integer scene position of the local center
    double extent = 0.0;  // max Euclidean distance from the local center
};

double local_extent(const BinaryMask& local) {
    const double c = 0.5 * (local.width - 1);
    double ext = 0.0;
    for (int y = 0; y < local.height; ++y)
        for (int x = 0; x < local.width; ++x)
            if (local.get(x, y)) ext = std::max(ext, std::hypot(x - c, y - c));
    return ext;
}

BinaryMask place_local_mask(const BinaryMask& local, int cx, int cy, int sw, int sh) {
    BinaryMask scene(sw, sh);
    const int half = (local.width - 1) / 2;
    for (int v = 0; v < local.height; ++v)
        for (int u = 0; u < local.width; ++u) {
            if (!local.get(u, v)) continue;
            const int x = cx - half + u, y = cy - half + v;
            if (x >= 0 && x < sw && y >= 0 && y < sh) scene.set(x, y, true);
        }
    return scene;
}

BinaryMask shift_mask(const BinaryMask& mask, int dx, int dy) {
    BinaryMask out(mask.width, mask.height);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.get(x, y)) continue;
            const int nx = x + dx, ny = y + dy;
            if (nx >= 0 && nx < mask.width && ny >= 0 && ny < mask.height) out.set(nx, ny, true);
        }
    return out;
}

// Euclidean erosion (amount < 0) / dilation (amount > 0) by |amount| pixels.
BinaryMask erode_dilate(const BinaryMask& mask, double amount) {
    if (amount == 0.0) return mask;
    BinaryMask out(mask.width, mask.height);
    if (amount > 0.0) {
        const Grid d2 = squared_distance_to_true(mask);
        for (size_t i = 0; i < out.size(); ++i) out.bits[i] = d2.values[i] <= amount * amount ? 1 : 0;
    } else {
        BinaryMask inverse(mask.width, mask.height);
        for (size_t i = 0; i < mask.size(); ++i) inverse.bits[i] = mask.bits[i] ? 0 : 1;
        const Grid d2 = squared_distance_to_true(inverse);
        for (size_t i = 0; i < out.size(); ++i)
            out.bits[i] = (mask.bits[i] && d2.values[i] > amount * amount) ? 1 : 0;
    }
    return out;
}

BinaryMask rasterize_disk(int cx, int cy, double radius, int sw, int sh) {
    BinaryMask out(sw, sh);
    const int r = static_cast<int>(std::ceil(radius));
    for (int y = std::max(0, cy - r); y <= std::min(sh - 1, cy + r); ++y)
        for (int x = std::max(0, cx - r); x <= std::min(sw - 1, cx + r); ++x)
            if (std::hypot(x - cx, y - cy) <= radius) out.set(x, y, true);
    return out;
}

}  // namespace

SyntheticScene render_scene(const SceneSpec& spec, std::mt19937_64& rng) {
    spec.validate();
    const int sw = spec.scene_width, sh = spec.scene_height;

    std::uniform_int_distribution<int> crowns_dist(spec.crowns_min, spec.crowns_max);
    const int target_crowns = crowns_dist(rng);

    // Placement with bounded rejection; a stuck scene keeps the crowns placed
    // so far rather than failing the whole corpus.
    std::vector<PlacedCrown> placed;
    for (int c = 0; c < target_crowns; ++c) {
        bool ok = false;
        for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
            PlacedCrown cand;
            cand.local = sample_crown(rng, spec);
            cand.extent = local_extent(cand.local);
            const int margin = static_cast<int>(std::ceil(cand.extent)) + 2;
            if (2 * margin >= sw - 1 || 2 * margin >= sh - 1) continue;
            std::uniform_int_distribution<int> xd(margin, sw - 1 - margin);
            std::uniform_int_distribution<int> yd(margin, sh - 1 - margin);
            cand.cx = xd(rng);
            cand.cy = yd(rng);
            bool clash = false;
            for (const PlacedCrown& p : placed) {
                const double d = std::hypot(cand.cx - p.cx, cand.cy - p.cy);
                if (d < cand.extent + p.extent + spec.min_gap) {
                    clash = true;
                    break;
                }
            }
            if (!clash) {
                placed.push_back(std::move(cand));
                ok = true;
            }
        }
        if (!ok) break;
    }
    if (placed.empty()) throw std::runtime_error("render_scene: could not place any crown");

    SyntheticScene scene;
    scene.spec_echo = spec;
    Grid indicator(sw, sh, 0.0);
    for (const PlacedCrown& p : placed) {
        BinaryMask mask = place_local_mask(p.local, p.cx, p.cy, sw, sh);
        for (size_t i = 0; i < mask.size(); ++i)
            if (mask.bits[i]) indicator.values[i] = 1.0;
        scene.gt_centroids.push_back(centroid(mask));
        scene.gt_masks.push_back(std::move(mask));
    }

    Grid blurred = gaussian_blur(indicator, spec.blur_sigma);
    if (spec.noise_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, spec.noise_sigma);
        for (double& v : blurred.values) v += noise(rng);
    }
    scene.posterior = ProbabilityMap(std::move(blurred));

    // Seeds and baseline masks for the crowns the simulated detector found.
    const double jitter_sigma =
        spec.seed_jitter_mean > 0.0 ? spec.seed_jitter_mean / std::sqrt(std::numbers::pi / 2.0) : 0.0;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> jitter(0.0, 1.0);
    std::uniform_real_distribution<double> morph(spec.baseline_erode_min, spec.baseline_erode_max);

    for (size_t c = 0; c < scene.gt_masks.size(); ++c) {
        const bool missed = unit(rng) < spec.baseline_miss_rate;
        const double jx = jitter_sigma * jitter(rng);
        const double jy = jitter_sigma * jitter(rng);
        const double amount = morph(rng);
        if (missed) continue;

        Point seed{scene.gt_centroids[c].x + jx, scene.gt_centroids[c].y + jy};
        seed.x = std::clamp(seed.x, 0.0, static_cast<double>(sw - 1));
        seed.y = std::clamp(seed.y, 0.0, static_cast<double>(sh - 1));

        BinaryMask shifted = shift_mask(scene.gt_masks[c], static_cast<int>(std::lround(jx)),
                                        static_cast<int>(std::lround(jy)));
        if (shifted.area() == 0) continue;  // crown jittered fully out of view
        BinaryMask perturbed = erode_dilate(shifted, amount);
        if (perturbed.area() == 0) perturbed = shifted;

        scene.seeds.push_back(seed);
        scene.baseline_detections.push_back({"", std::move(perturbed), {0, 0}});
        scene.baseline_detections.back().centroid = centroid(scene.baseline_detections.back().mask);
    }

    // Background false positives: a crown-less seed with a disk-shaped
    // baseline mask, standing in for a detector false alarm.
    if (spec.seed_false_rate > 0.0) {
        std::uniform_real_distribution<double> false_radius(
            spec.radius_min, 0.5 * (spec.radius_min + spec.radius_max));
        for (size_t c = 0; c < scene.gt_masks.size(); ++c) {
            if (unit(rng) >= spec.seed_false_rate) continue;
            const double rf = false_radius(rng);
            const int margin = static_cast<int>(std::ceil(rf)) + 2;
            if (2 * margin >= sw - 1 || 2 * margin >= sh - 1) continue;
            std::uniform_int_distribution<int> xd(margin, sw - 1 - margin);
            std::uniform_int_distribution<int> yd(margin, sh - 1 - margin);
            for (int attempt = 0; attempt < 50; ++attempt) {
                const int fx = xd(rng), fy = yd(rng);
                bool clear = true;
                for (const PlacedCrown& p : placed)
                    if (std::hypot(fx - p.cx, fy - p.cy) < p.extent + rf + 4.0) {
                        clear = false;
                        break;
                    }
                if (!clear) continue;
                scene.seeds.push_back({static_cast<double>(fx), static_cast<double>(fy)});
                BinaryMask disk = rasterize_disk(fx, fy, rf, sw, sh);
                scene.baseline_detections.push_back({"", std::move(disk), {0, 0}});
                scene.baseline_detections.back().centroid =
                    centroid(scene.baseline_detections.back().mask);
                scene.false_seed_count += 1;
                break;
            }
        }
    }
    return scene;
}

std::vector<CorpusEntry> emit_corpus(const SceneSpec& spec, int n_scenes,
                                     const std::filesystem::path& out_dir) {
    spec.validate();
    if (n_scenes < 1) throw std::invalid_argument("emit_corpus: need at least one scene");
    std::filesystem::create_directories(out_dir);

    std::ofstream manifest(out_dir / "manifest.jsonl", std::ios::trunc);
    if (!manifest) throw IoError("cannot open manifest in " + out_dir.string());

    std::vector<CorpusEntry> entries;
    for (int index = 0; index < n_scenes; ++index) {
        std::mt19937_64 rng = scene_rng(spec.rng_seed, index);
        const uint64_t derived_seed = rng();  // recorded for exact regeneration
        rng.seed(derived_seed);
        const SyntheticScene scene = render_scene(spec, rng);

        char name[32];
        std::snprintf(name, sizeof(name), "scene_%05d", index);
        const std::filesystem::path dir = out_dir / name;
        std::filesystem::create_directories(dir);

        save_float_raster(scene.posterior.grid, dir / "posterior.fras");
        for (size_t i = 0; i < scene.gt_masks.size(); ++i) {
            char fn[32];
            std::snprintf(fn, sizeof(fn), "gt_%03zu.pgm", i);
            save_mask_pgm(scene.gt_masks[i], dir / fn);
        }
        for (size_t i = 0; i < scene.baseline_detections.size(); ++i) {
            char fn[32];
            std::snprintf(fn, sizeof(fn), "baseline_%03zu.pgm", i);
            save_mask_pgm(scene.baseline_detections[i].mask, dir / fn);
        }
        std::ofstream seeds(dir / "seeds.txt", std::ios::trunc);
        for (const Point& s : scene.seeds) {
            char line[80];
            std::snprintf(line, sizeof(line), "%.17g %.17g\n", s.x, s.y);
            seeds << line;
        }
        if (!seeds) throw IoError("write failure on seeds.txt in " + dir.string());

        CorpusEntry entry;
        entry.scene_dir = name;
        entry.index = index;
        entry.rng_seed = derived_seed;
        entry.crowns = static_cast<int>(scene.gt_masks.size());
        entry.seeds = static_cast<int>(scene.seeds.size());
        entry.false_seeds = scene.false_seed_count;

        nlohmann::ordered_json line = {
            {"scene", entry.scene_dir}, {"index", entry.index},   {"rng_seed", entry.rng_seed},
            {"crowns", entry.crowns},   {"seeds", entry.seeds},   {"false_seeds", entry.false_seeds},
        };
        manifest << line.dump() << "\n";
        entries.push_back(std::move(entry));
    }
    if (!manifest) throw IoError("write failure on manifest in " + out_dir.string());
    return entries;
}

}  // namespace crownacm
