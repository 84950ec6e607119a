#pragma once

// Shared test helpers: deterministic rngs, independent reference
// implementations, and a generic central-difference oracle. Everything here
// is test-only and deliberately naive.

#include <Eigen/Dense>
#include <filesystem>
#include <random>
#include <vector>

#include "crownacm/raster.hpp"

namespace testutil {

inline std::mt19937_64 rng(uint64_t seed) { return std::mt19937_64(seed); }

inline crownacm::BinaryMask random_mask(std::mt19937_64& g, int w, int h, double density = 0.3) {
    crownacm::BinaryMask mask(w, h);
    std::bernoulli_distribution bit(density);
    for (auto& b : mask.bits) b = bit(g) ? 1 : 0;
    return mask;
}

inline crownacm::Grid random_grid(std::mt19937_64& g, int w, int h, double lo = 0.0,
                                  double hi = 1.0) {
    crownacm::Grid grid(w, h);
    std::uniform_real_distribution<double> value(lo, hi);
    for (auto& v : grid.values) v = value(g);
    return grid;
}

inline crownacm::BinaryMask disk_mask(int w, int h, double cx, double cy, double radius) {
    crownacm::BinaryMask mask(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (std::hypot(x - cx, y - cy) <= radius) mask.set(x, y, true);
    return mask;
}

// Generic central-difference gradient of any scalar function of a vector.
template <typename F>
Eigen::VectorXd central_difference(F&& f, const Eigen::VectorXd& x, double h) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double saved = probe(i);
        probe(i) = saved + h;
        const double fp = f(probe);
        probe(i) = saved - h;
        const double fm = f(probe);
        probe(i) = saved;
        g(i) = (fp - fm) / (2.0 * h);
    }
    return g;
}

// Scratch directory for file round-trip tests, cleaned per instance.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("crownacm_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
};

}  // namespace testutil
