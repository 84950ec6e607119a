#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace crownacm {

/// Thrown by file readers/writers; maps to exit code 3 in the CLI.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// Dense row-major scalar raster. Pixel (x, y) sits at integer coordinates
/// (pixel centers), index y * width + x.
struct Grid {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    Grid() = default;
    Grid(int w, int h, double fill = 0.0)
        : width(w), height(h), values(static_cast<size_t>(w) * h, fill) {
        if (w < 1 || h < 1) throw std::invalid_argument("Grid dimensions must be >= 1");
    }

    double& at(int x, int y) { return values[static_cast<size_t>(y) * width + x]; }
    double at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return values.size(); }
    bool same_shape(const Grid& o) const { return width == o.width && height == o.height; }
};

/// Row-major boolean raster sharing the Grid pixel convention.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> bits;  // 0 or 1

    BinaryMask() = default;
    BinaryMask(int w, int h, bool fill = false)
        : width(w), height(h), bits(static_cast<size_t>(w) * h, fill ? 1 : 0) {
        if (w < 1 || h < 1) throw std::invalid_argument("BinaryMask dimensions must be >= 1");
    }

    bool get(int x, int y) const { return bits[static_cast<size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) { bits[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
    size_t size() const { return bits.size(); }
    size_t area() const;
    bool same_shape(const BinaryMask& o) const { return width == o.width && height == o.height; }
    bool operator==(const BinaryMask& o) const = default;
};

/// Smallest admissible class probability; values are clamped to
/// [kProbabilityFloor, 1 - kProbabilityFloor] so log terms stay finite.
inline constexpr double kProbabilityFloor = 1e-6;

/// Grid whose values are clamped into [kProbabilityFloor, 1 - kProbabilityFloor].
struct ProbabilityMap {
    Grid grid;

    ProbabilityMap() = default;
    explicit ProbabilityMap(Grid g);

    int width() const { return grid.width; }
    int height() const { return grid.height; }
    double at(int x, int y) const { return grid.at(x, y); }
};

// --- file I/O ---------------------------------------------------------------

/// Binary PGM (P5, maxval 255). Pixels > 127 map to true.
BinaryMask load_mask_pgm(const std::filesystem::path& path);

/// Byte-deterministic P5 writer; true -> 255, false -> 0.
void save_mask_pgm(const BinaryMask& mask, const std::filesystem::path& path);

/// FRAS float raster: "FRAS1\n", "width height\n", then width*height
/// little-endian IEEE-754 f32, row-major. Non-finite payload rejected.
Grid load_float_raster(const std::filesystem::path& path);
void save_float_raster(const Grid& grid, const std::filesystem::path& path);

// --- mask measurements -------------------------------------------------------

/// Arithmetic mean of true-pixel coordinates. Throws on an empty mask.
Point centroid(const BinaryMask& mask);

/// 4-connected regions as full-size masks, disjoint, covering the true set,
/// ordered by each region's first pixel in scanline order.
std::vector<BinaryMask> connected_components(const BinaryMask& mask);

/// Exact squared Euclidean distance from every pixel center to the nearest
/// true pixel center (Felzenszwalb-Huttenlocher transform); ~1e18 when the
/// mask has no true pixel.
Grid squared_distance_to_true(const BinaryMask& mask);

// --- grid operations ---------------------------------------------------------

/// Separable Gaussian convolution, kernel truncated at 3*sigma and normalized,
/// replicate-edge handling. sigma == 0 is the identity.
Grid gaussian_blur(const Grid& grid, double sigma);

/// Places `local` into a scene_w x scene_h grid so that the local center
/// ((w-1)/2, (h-1)/2) lands at scene position `offset`, distributing each
/// local pixel over its 4 scene neighbours with bilinear weights. Values
/// splatting outside the scene are dropped; their mass is accumulated into
/// *clipped_mass when given.
Grid bilinear_place(const Grid& local, Point offset, int scene_w, int scene_h,
                    double* clipped_mass = nullptr);

/// Adjoint of bilinear_place: gathers a scene-sized field back onto the local
/// lattice with the same bilinear weights (out-of-scene taps read as 0).
Grid bilinear_gather(const Grid& scene, Point offset, int local_w, int local_h);

/// Per-local-pixel derivative of the placed-and-summed functional
/// sum_xy place(local)(xy) * scene(xy) with respect to offset.x / offset.y:
/// d/dt sum = sum_uv local(u,v) * gather_d{x,y}(scene)(u,v).
Grid bilinear_gather_dx(const Grid& scene, Point offset, int local_w, int local_h);
Grid bilinear_gather_dy(const Grid& scene, Point offset, int local_w, int local_h);

}  // namespace crownacm
