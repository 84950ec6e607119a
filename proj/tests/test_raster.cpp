#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <deque>
#include <fstream>
#include <numbers>

#include "crownacm/raster.hpp"
#include "test_util.hpp"

using namespace crownacm;
using testutil::TempDir;

namespace {

std::vector<uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Independent flood fill used as the component-count oracle.
int bfs_component_count(const BinaryMask& mask) {
    std::vector<char> seen(mask.size(), 0);
    int count = 0;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.get(x, y) || seen[y * mask.width + x]) continue;
            ++count;
            std::deque<std::pair<int, int>> queue{{x, y}};
            seen[y * mask.width + x] = 1;
            while (!queue.empty()) {
                auto [cx, cy] = queue.front();
                queue.pop_front();
                const int nb[4][2] = {{cx + 1, cy}, {cx - 1, cy}, {cx, cy + 1}, {cx, cy - 1}};
                for (auto& n : nb) {
                    if (n[0] < 0 || n[0] >= mask.width || n[1] < 0 || n[1] >= mask.height) continue;
                    if (!mask.get(n[0], n[1]) || seen[n[1] * mask.width + n[0]]) continue;
                    seen[n[1] * mask.width + n[0]] = 1;
                    queue.push_back({n[0], n[1]});
                }
            }
        }
    return count;
}

}  // namespace

TEST_CASE("pgm threshold and round trips") {
    TempDir dir("pgm");

    SUBCASE("2x2 payload maps >127 to true") {
        write_bytes(dir.path() / "t.pgm", {'P', '5', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n',
                                           0, 255, 255, 0});
        const BinaryMask m = load_mask_pgm(dir.path() / "t.pgm");
        CHECK(m.width == 2);
        CHECK_FALSE(m.get(0, 0));
        CHECK(m.get(1, 0));
        CHECK(m.get(0, 1));
        CHECK_FALSE(m.get(1, 1));
    }

    SUBCASE("all-zero 8x8 loads all-false") {
        BinaryMask m(8, 8);
        save_mask_pgm(m, dir.path() / "z.pgm");
        CHECK(load_mask_pgm(dir.path() / "z.pgm").area() == 0);
    }

    SUBCASE("P2 magic rejected") {
        write_bytes(dir.path() / "p2.pgm", {'P', '2', '\n', '1', ' ', '1', '\n', '2', '5', '5',
                                            '\n', '0'});
        CHECK_THROWS_WITH_AS(load_mask_pgm(dir.path() / "p2.pgm"),
                             doctest::Contains("unsupported PGM variant"), IoError);
    }

    SUBCASE("maxval other than 255 rejected") {
        write_bytes(dir.path() / "mx.pgm",
                    {'P', '5', '\n', '1', ' ', '1', '\n', '6', '5', '\n', 60});
        CHECK_THROWS_WITH_AS(load_mask_pgm(dir.path() / "mx.pgm"),
                             doctest::Contains("maxval"), IoError);
    }

    SUBCASE("truncated payload rejected") {
        write_bytes(dir.path() / "tr.pgm", {'P', '5', '\n', '2', ' ', '2', '\n', '2', '5', '5',
                                            '\n', 0, 255});
        CHECK_THROWS_WITH_AS(load_mask_pgm(dir.path() / "tr.pgm"),
                             doctest::Contains("truncated"), IoError);
    }

    SUBCASE("1x1 true mask writes payload byte 255") {
        BinaryMask m(1, 1, true);
        save_mask_pgm(m, dir.path() / "one.pgm");
        const auto bytes = read_bytes(dir.path() / "one.pgm");
        CHECK(bytes.back() == 255);
        CHECK(load_mask_pgm(dir.path() / "one.pgm") == m);
    }

    SUBCASE("random 256x256 round trip is exact and byte-deterministic") {
        auto g = testutil::rng(42);
        const BinaryMask m = testutil::random_mask(g, 256, 256);
        save_mask_pgm(m, dir.path() / "a.pgm");
        save_mask_pgm(m, dir.path() / "b.pgm");
        CHECK(read_bytes(dir.path() / "a.pgm") == read_bytes(dir.path() / "b.pgm"));
        CHECK(load_mask_pgm(dir.path() / "a.pgm") == m);
    }

    SUBCASE("92x92 round trip") {
        auto g = testutil::rng(7);
        const BinaryMask m = testutil::random_mask(g, 92, 92, 0.5);
        save_mask_pgm(m, dir.path() / "f.pgm");
        CHECK(load_mask_pgm(dir.path() / "f.pgm") == m);
    }
}

TEST_CASE("fras float raster io") {
    TempDir dir("fras");

    SUBCASE("constant 256x256 round trip") {
        Grid g(256, 256, 0.5);
        save_float_raster(g, dir.path() / "c.fras");
        const Grid back = load_float_raster(dir.path() / "c.fras");
        CHECK(back.values == g.values);
    }

    SUBCASE("random grid round trips exactly at f32 precision") {
        auto rng = testutil::rng(3);
        Grid g = testutil::random_grid(rng, 64, 48);
        for (double& v : g.values) v = static_cast<float>(v);  // f32-representable input
        save_float_raster(g, dir.path() / "r.fras");
        const Grid back = load_float_raster(dir.path() / "r.fras");
        double max_diff = 0.0;
        for (size_t i = 0; i < g.size(); ++i)
            max_diff = std::max(max_diff, std::abs(back.values[i] - g.values[i]));
        CHECK(max_diff == 0.0);
    }

    SUBCASE("NaN payload rejected") {
        Grid g(2, 1, 0.0);
        save_float_raster(g, dir.path() / "n.fras");
        auto bytes = read_bytes(dir.path() / "n.fras");
        const uint32_t nan_bits = 0x7fc00000u;
        std::memcpy(bytes.data() + bytes.size() - 4, &nan_bits, 4);
        write_bytes(dir.path() / "n.fras", bytes);
        CHECK_THROWS_WITH_AS(load_float_raster(dir.path() / "n.fras"),
                             doctest::Contains("non-finite"), IoError);
    }

    SUBCASE("bad magic rejected") {
        write_bytes(dir.path() / "m.fras", {'F', 'R', 'A', 'S', '9', '\n', '1', ' ', '1', '\n',
                                            0, 0, 0, 0});
        CHECK_THROWS_WITH_AS(load_float_raster(dir.path() / "m.fras"),
                             doctest::Contains("magic"), IoError);
    }

    SUBCASE("payload shorter than dimensions rejected") {
        Grid g(4, 4, 1.0);
        save_float_raster(g, dir.path() / "s.fras");
        auto bytes = read_bytes(dir.path() / "s.fras");
        bytes.resize(bytes.size() - 8);
        write_bytes(dir.path() / "s.fras", bytes);
        CHECK_THROWS_AS(load_float_raster(dir.path() / "s.fras"), IoError);
    }
}

TEST_CASE("centroid") {
    SUBCASE("single pixel") {
        BinaryMask m(10, 10);
        m.set(3, 7, true);
        const Point c = centroid(m);
        CHECK(c.x == doctest::Approx(3.0));
        CHECK(c.y == doctest::Approx(7.0));
    }

    SUBCASE("2x2 block at origin") {
        BinaryMask m(4, 4);
        m.set(0, 0, true);
        m.set(1, 0, true);
        m.set(0, 1, true);
        m.set(1, 1, true);
        const Point c = centroid(m);
        CHECK(c.x == doctest::Approx(0.5));
        CHECK(c.y == doctest::Approx(0.5));
    }

    SUBCASE("random blob equals direct coordinate average") {
        auto g = testutil::rng(11);
        const BinaryMask m = testutil::random_mask(g, 37, 23, 0.4);
        double sx = 0, sy = 0;
        size_t n = 0;
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x)
                if (m.get(x, y)) {
                    sx += x;
                    sy += y;
                    ++n;
                }
        const Point c = centroid(m);
        CHECK(c.x == doctest::Approx(sx / n).epsilon(1e-12));
        CHECK(c.y == doctest::Approx(sy / n).epsilon(1e-12));
    }

    SUBCASE("empty mask throws") {
        CHECK_THROWS_WITH_AS(centroid(BinaryMask(3, 3)), doctest::Contains("empty mask"),
                             std::invalid_argument);
    }
}

TEST_CASE("connected components") {
    SUBCASE("two separated 2x2 blocks") {
        BinaryMask m(10, 4);
        for (int d = 0; d < 2; ++d)
            for (int y = 0; y < 2; ++y)
                for (int x = 0; x < 2; ++x) m.set(x + d * 6, y + 1, true);
        const auto regions = connected_components(m);
        REQUIRE(regions.size() == 2);
        CHECK(regions[0].area() == 4);
        CHECK(regions[1].area() == 4);
    }

    SUBCASE("all-false gives empty list") {
        CHECK(connected_components(BinaryMask(5, 5)).empty());
    }

    SUBCASE("random masks match the flood-fill oracle and partition the true set") {
        auto g = testutil::rng(99);
        for (int trial = 0; trial < 20; ++trial) {
            const BinaryMask m = testutil::random_mask(g, 40, 30, 0.35);
            const auto regions = connected_components(m);
            CHECK(static_cast<int>(regions.size()) == bfs_component_count(m));

            BinaryMask covered(m.width, m.height);
            for (const BinaryMask& r : regions) {
                for (size_t i = 0; i < r.size(); ++i) {
                    if (!r.bits[i]) continue;
                    CHECK(covered.bits[i] == 0);  // disjoint
                    covered.bits[i] = 1;
                }
            }
            CHECK(covered == m);  // coverage
        }
    }

    SUBCASE("deterministic scanline order") {
        BinaryMask m(6, 3);
        m.set(4, 0, true);
        m.set(0, 2, true);
        const auto regions = connected_components(m);
        REQUIRE(regions.size() == 2);
        CHECK(regions[0].get(4, 0));
        CHECK(regions[1].get(0, 2));
    }
}

TEST_CASE("squared distance transform matches brute force") {
    auto g = testutil::rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        BinaryMask m = testutil::random_mask(g, 21, 17, 0.1);
        if (m.area() == 0) m.set(10, 8, true);
        const Grid d2 = squared_distance_to_true(m);
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x) {
                double best = 1e18;
                for (int v = 0; v < m.height; ++v)
                    for (int u = 0; u < m.width; ++u)
                        if (m.get(u, v))
                            best = std::min(best, double((x - u) * (x - u) + (y - v) * (y - v)));
                CHECK(d2.at(x, y) == doctest::Approx(best).epsilon(1e-12));
            }
    }
}

TEST_CASE("gaussian blur") {
    SUBCASE("sigma zero is the identity") {
        auto g = testutil::rng(17);
        const Grid grid = testutil::random_grid(g, 12, 9);
        CHECK(gaussian_blur(grid, 0.0).values == grid.values);
    }

    SUBCASE("negative sigma throws") {
        CHECK_THROWS_AS(gaussian_blur(Grid(2, 2), -1.0), std::invalid_argument);
    }

    SUBCASE("delta impulse matches the dense convolution oracle and 2-D normalization") {
        const double sigma = 2.0;
        Grid grid(41, 41, 0.0);
        grid.at(20, 20) = 1.0;
        const Grid blurred = gaussian_blur(grid, sigma);

        // dense separable oracle with the same truncation
        const int radius = static_cast<int>(std::ceil(3.0 * sigma));
        std::vector<double> kernel(2 * radius + 1);
        double sum = 0.0;
        for (int i = -radius; i <= radius; ++i)
            sum += kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        for (double& k : kernel) k /= sum;
        double peak_oracle = 0.0;
        Grid oracle(41, 41, 0.0);
        for (int y = 0; y < 41; ++y)
            for (int x = 0; x < 41; ++x) {
                const int dx = x - 20, dy = y - 20;
                if (std::abs(dx) <= radius && std::abs(dy) <= radius)
                    oracle.at(x, y) = kernel[dx + radius] * kernel[dy + radius];
            }
        peak_oracle = oracle.at(20, 20);
        for (size_t i = 0; i < oracle.size(); ++i)
            CHECK(blurred.values[i] == doctest::Approx(oracle.values[i]).epsilon(1e-10));
        CHECK(std::abs(blurred.at(20, 20) - 1.0 / (2.0 * std::numbers::pi * sigma * sigma)) < 1e-3);
        CHECK(peak_oracle == doctest::Approx(blurred.at(20, 20)));
    }

    SUBCASE("constant grid is unchanged for any sigma") {
        const Grid grid(15, 11, 0.37);
        for (double sigma : {0.5, 1.0, 3.0}) {
            const Grid blurred = gaussian_blur(grid, sigma);
            for (double v : blurred.values) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
        }
    }

    SUBCASE("mass preserved on interior-supported input") {
        Grid grid(64, 64, 0.0);
        auto g = testutil::rng(23);
        std::uniform_real_distribution<double> val(0.0, 1.0);
        for (int y = 25; y < 40; ++y)
            for (int x = 25; x < 40; ++x) grid.at(x, y) = val(g);
        double before = 0.0, after = 0.0;
        const Grid blurred = gaussian_blur(grid, 2.0);
        for (double v : grid.values) before += v;
        for (double v : blurred.values) after += v;
        CHECK(std::abs(after - before) / before < 1e-6);
    }

    SUBCASE("value range preserved") {
        auto g = testutil::rng(31);
        const Grid grid = testutil::random_grid(g, 30, 30, 0.2, 0.9);
        const Grid blurred = gaussian_blur(grid, 1.5);
        const auto [lo, hi] = std::minmax_element(grid.values.begin(), grid.values.end());
        for (double v : blurred.values) {
            CHECK(v >= *lo - 1e-12);
            CHECK(v <= *hi + 1e-12);
        }
    }
}

TEST_CASE("bilinear placement") {
    SUBCASE("integer-aligned offset reproduces an exact copy") {
        auto g = testutil::rng(41);
        const Grid local = testutil::random_grid(g, 7, 5);  // odd: center at (3, 2)
        const Grid scene = bilinear_place(local, {10.0, 8.0}, 32, 24);
        for (int v = 0; v < 5; ++v)
            for (int u = 0; u < 7; ++u)
                CHECK(scene.at(10 - 3 + u, 8 - 2 + v) == doctest::Approx(local.at(u, v)));
        double placed = 0.0, original = 0.0;
        for (double x : scene.values) placed += x;
        for (double x : local.values) original += x;
        CHECK(placed == doctest::Approx(original).epsilon(1e-12));  // permutation of values
    }

    SUBCASE("even frame copies exactly at half-integer offsets") {
        auto g = testutil::rng(43);
        const Grid local = testutil::random_grid(g, 4, 4);  // center at (1.5, 1.5)
        const Grid scene = bilinear_place(local, {6.5, 5.5}, 16, 16);
        for (int v = 0; v < 4; ++v)
            for (int u = 0; u < 4; ++u)
                CHECK(scene.at(5 + u, 4 + v) == doctest::Approx(local.at(u, v)));
    }

    SUBCASE("half-pixel offset splits a delta into two half-weight pixels") {
        Grid local(1, 1, 1.0);
        const Grid scene = bilinear_place(local, {4.5, 3.0}, 10, 10);
        CHECK(scene.at(4, 3) == doctest::Approx(0.5));
        CHECK(scene.at(5, 3) == doctest::Approx(0.5));
        double total = 0.0;
        for (double v : scene.values) total += v;
        CHECK(total == doctest::Approx(1.0));
    }

    SUBCASE("clipping reports the lost mass") {
        const Grid local(5, 5, 1.0);
        double clipped = 0.0;
        const Grid scene = bilinear_place(local, {0.0, 0.0}, 12, 12, &clipped);
        double placed = 0.0;
        for (double v : scene.values) placed += v;
        CHECK(placed + clipped == doctest::Approx(25.0).epsilon(1e-12));
        CHECK(clipped > 0.0);
        CHECK(placed <= 25.0);
    }

    SUBCASE("offset derivative matches central differences") {
        auto g = testutil::rng(47);
        const Grid local = testutil::random_grid(g, 9, 9);
        const Grid weights = testutil::random_grid(g, 24, 24, -1.0, 1.0);
        const Point offset{11.37, 9.81};

        const auto functional = [&](Point t) {
            const Grid scene = bilinear_place(local, t, 24, 24);
            double acc = 0.0;
            for (size_t i = 0; i < scene.size(); ++i) acc += scene.values[i] * weights.values[i];
            return acc;
        };

        const Grid gx = bilinear_gather_dx(weights, offset, 9, 9);
        const Grid gy = bilinear_gather_dy(weights, offset, 9, 9);
        double dx = 0.0, dy = 0.0;
        for (size_t i = 0; i < local.size(); ++i) {
            dx += local.values[i] * gx.values[i];
            dy += local.values[i] * gy.values[i];
        }

        const double h = 1e-6;
        const double fd_x =
            (functional({offset.x + h, offset.y}) - functional({offset.x - h, offset.y})) / (2 * h);
        const double fd_y =
            (functional({offset.x, offset.y + h}) - functional({offset.x, offset.y - h})) / (2 * h);
        CHECK(std::abs(dx - fd_x) < 1e-5);
        CHECK(std::abs(dy - fd_y) < 1e-5);
    }

    SUBCASE("gather is the adjoint of place") {
        auto g = testutil::rng(53);
        const Grid local = testutil::random_grid(g, 6, 7);
        const Grid scene_field = testutil::random_grid(g, 20, 20);
        const Point offset{9.3, 10.7};

        const Grid placed = bilinear_place(local, offset, 20, 20);
        double lhs = 0.0;
        for (size_t i = 0; i < placed.size(); ++i) lhs += placed.values[i] * scene_field.values[i];

        const Grid gathered = bilinear_gather(scene_field, offset, 6, 7);
        double rhs = 0.0;
        for (size_t i = 0; i < gathered.size(); ++i) rhs += gathered.values[i] * local.values[i];

        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}
