#include "crownacm/raster.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

static_assert(std::endian::native == std::endian::little,
              "FRAS I/O assumes a little-endian host");

namespace crownacm {

size_t BinaryMask::area() const {
    size_t n = 0;
    for (uint8_t b : bits) n += b;
    return n;
}

ProbabilityMap::ProbabilityMap(Grid g) : grid(std::move(g)) {
    for (double& v : grid.values) {
        if (!std::isfinite(v)) throw std::invalid_argument("probability map has non-finite value");
        v = std::clamp(v, kProbabilityFloor, 1.0 - kProbabilityFloor);
    }
}

// --- PGM ---------------------------------------------------------------------

namespace {

// Reads one whitespace/comment-delimited token of a PGM header.
std::string next_pgm_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

int parse_header_int(const std::string& tok, const char* what) {
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
        throw IoError(std::string("malformed PGM header: bad ") + what);
    return std::stoi(tok);
}

}  // namespace

BinaryMask load_mask_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());

    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (!in || m0 != 'P') throw IoError("malformed PGM header in " + path.string());
    if (m1 != '5') {
        if (m1 == '2') throw IoError("unsupported PGM variant (P2) in " + path.string());
        throw IoError(std::string("unsupported PGM variant (P") + m1 + ") in " + path.string());
    }

    const int width = parse_header_int(next_pgm_token(in), "width");
    const int height = parse_header_int(next_pgm_token(in), "height");
    const int maxval = parse_header_int(next_pgm_token(in), "maxval");
    if (width < 1 || height < 1) throw IoError("malformed PGM header: bad dimensions in " + path.string());
    if (maxval != 255) throw IoError("unsupported PGM maxval " + std::to_string(maxval) + " in " + path.string());

    std::vector<uint8_t> raw(static_cast<size_t>(width) * height);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size())
        throw IoError("truncated PGM payload in " + path.string());

    BinaryMask mask(width, height);
    for (size_t i = 0; i < raw.size(); ++i) mask.bits[i] = raw[i] > 127 ? 1 : 0;
    return mask;
}

void save_mask_pgm(const BinaryMask& mask, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "P5\n" << mask.width << " " << mask.height << "\n255\n";
    std::vector<uint8_t> raw(mask.size());
    for (size_t i = 0; i < raw.size(); ++i) raw[i] = mask.bits[i] ? 255 : 0;
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError("write failure on " + path.string());
}

// --- FRAS --------------------------------------------------------------------

Grid load_float_raster(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());

    std::string magic;
    std::getline(in, magic);
    if (magic != "FRAS1") throw IoError("bad FRAS magic in " + path.string());
    std::string dims;
    std::getline(in, dims);
    int width = 0, height = 0;
    if (std::sscanf(dims.c_str(), "%d %d", &width, &height) != 2 || width < 1 || height < 1)
        throw IoError("bad FRAS dimensions in " + path.string());

    std::vector<float> payload(static_cast<size_t>(width) * height);
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (static_cast<size_t>(in.gcount()) != payload.size() * sizeof(float))
        throw IoError("FRAS payload length does not match dimensions in " + path.string());

    Grid grid(width, height);
    for (size_t i = 0; i < payload.size(); ++i) {
        if (!std::isfinite(payload[i]))
            throw IoError("non-finite value in FRAS payload of " + path.string());
        grid.values[i] = payload[i];
    }
    return grid;
}

void save_float_raster(const Grid& grid, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "FRAS1\n" << grid.width << " " << grid.height << "\n";
    std::vector<float> payload(grid.size());
    for (size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<float>(grid.values[i]);
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!out) throw IoError("write failure on " + path.string());
}

// --- mask measurements --------------------------------------------------------

Point centroid(const BinaryMask& mask) {
    double sx = 0.0, sy = 0.0;
    size_t n = 0;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.get(x, y)) {
                sx += x;
                sy += y;
                ++n;
            }
    if (n == 0) throw std::invalid_argument("empty mask has no centroid");
    return {sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

std::vector<BinaryMask> connected_components(const BinaryMask& mask) {
    std::vector<BinaryMask> regions;
    std::vector<uint8_t> seen(mask.size(), 0);
    std::vector<int> stack;
    const int w = mask.width, h = mask.height;

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int start = y * w + x;
            if (!mask.bits[start] || seen[start]) continue;
            BinaryMask region(w, h);
            stack.clear();
            stack.push_back(start);
            seen[start] = 1;
            while (!stack.empty()) {
                const int p = stack.back();
                stack.pop_back();
                region.bits[p] = 1;
                const int px = p % w, py = p / w;
                const int nbr[4][2] = {{px - 1, py}, {px + 1, py}, {px, py - 1}, {px, py + 1}};
                for (auto& nb : nbr) {
                    if (nb[0] < 0 || nb[0] >= w || nb[1] < 0 || nb[1] >= h) continue;
                    const int q = nb[1] * w + nb[0];
                    if (mask.bits[q] && !seen[q]) {
                        seen[q] = 1;
                        stack.push_back(q);
                    }
                }
            }
            regions.push_back(std::move(region));
        }
    }
    return regions;
}

// --- distance transform ---------------------------------------------------------

namespace {

// Felzenszwalb & Huttenlocher lower envelope of parabolas over one row of
// squared distances; result replaces f.
void edt_1d(std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
            std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
        while (s <= z[k]) {
            --k;
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        d[q] = (q - v[k]) * (q - v[k]) + f[v[k]];
    }
    f = d;
}

}  // namespace

Grid squared_distance_to_true(const BinaryMask& mask) {
    const int w = mask.width, h = mask.height;
    const double inf = 1e18;
    Grid sq(w, h);
    for (size_t i = 0; i < mask.size(); ++i) sq.values[i] = mask.bits[i] ? 0.0 : inf;

    const int longest = std::max(w, h);
    std::vector<double> f(longest), d(longest), z(longest + 1);
    std::vector<int> v(longest);

    for (int x = 0; x < w; ++x) {
        f.resize(h);
        d.resize(h);
        for (int y = 0; y < h; ++y) f[y] = sq.at(x, y);
        edt_1d(f, d, v, z);
        for (int y = 0; y < h; ++y) sq.at(x, y) = f[y];
    }
    for (int y = 0; y < h; ++y) {
        f.resize(w);
        d.resize(w);
        for (int x = 0; x < w; ++x) f[x] = sq.at(x, y);
        edt_1d(f, d, v, z);
        for (int x = 0; x < w; ++x) sq.at(x, y) = f[x];
    }
    return sq;
}

// --- blur ---------------------------------------------------------------------

Grid gaussian_blur(const Grid& grid, double sigma) {
    if (sigma < 0.0) throw std::invalid_argument("gaussian_blur: sigma must be >= 0");
    if (sigma == 0.0) return grid;

    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    const int w = grid.width, h = grid.height;
    Grid tmp(w, h), out(w, h);
    // horizontal pass, clamped indices
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int xi = std::clamp(x + i, 0, w - 1);
                acc += kernel[i + radius] * grid.at(xi, y);
            }
            tmp.at(x, y) = acc;
        }
    }
    // vertical pass
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int yi = std::clamp(y + i, 0, h - 1);
                acc += kernel[i + radius] * tmp.at(x, yi);
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

// --- bilinear placement ---------------------------------------------------------

namespace {

struct SplitShift {
    int base;     // integer part of the shift
    double frac;  // fractional part in [0, 1)
};

SplitShift split_shift(double s) {
    const double fl = std::floor(s);
    return {static_cast<int>(fl), s - fl};
}

// Scene coordinates of local pixel (0,0) for a given center offset.
Point origin_shift(const Grid& local, Point offset) {
    return {offset.x - 0.5 * (local.width - 1), offset.y - 0.5 * (local.height - 1)};
}

}  // namespace

Grid bilinear_place(const Grid& local, Point offset, int scene_w, int scene_h,
                    double* clipped_mass) {
    Grid scene(scene_w, scene_h, 0.0);
    const Point s = origin_shift(local, offset);
    const auto [bx, fx] = split_shift(s.x);
    const auto [by, fy] = split_shift(s.y);
    double clipped = 0.0;

    const double w00 = (1.0 - fx) * (1.0 - fy);
    const double w10 = fx * (1.0 - fy);
    const double w01 = (1.0 - fx) * fy;
    const double w11 = fx * fy;

    for (int v = 0; v < local.height; ++v) {
        const int y0 = v + by, y1 = y0 + 1;
        const bool y0in = y0 >= 0 && y0 < scene_h;
        const bool y1in = y1 >= 0 && y1 < scene_h;
        for (int u = 0; u < local.width; ++u) {
            const double val = local.at(u, v);
            if (val == 0.0) continue;
            const int x0 = u + bx, x1 = x0 + 1;
            const bool x0in = x0 >= 0 && x0 < scene_w;
            const bool x1in = x1 >= 0 && x1 < scene_w;
            if (x0in && y0in) scene.at(x0, y0) += val * w00; else clipped += val * w00;
            if (x1in && y0in) scene.at(x1, y0) += val * w10; else clipped += val * w10;
            if (x0in && y1in) scene.at(x0, y1) += val * w01; else clipped += val * w01;
            if (x1in && y1in) scene.at(x1, y1) += val * w11; else clipped += val * w11;
        }
    }
    if (clipped_mass) *clipped_mass = clipped;
    return scene;
}

namespace {

double scene_at_or_zero(const Grid& scene, int x, int y) {
    if (x < 0 || x >= scene.width || y < 0 || y >= scene.height) return 0.0;
    return scene.at(x, y);
}

}  // namespace

Grid bilinear_gather(const Grid& scene, Point offset, int local_w, int local_h) {
    Grid local(local_w, local_h, 0.0);
    const Point s{offset.x - 0.5 * (local_w - 1), offset.y - 0.5 * (local_h - 1)};
    const auto [bx, fx] = split_shift(s.x);
    const auto [by, fy] = split_shift(s.y);
    for (int v = 0; v < local_h; ++v) {
        const int y0 = v + by;
        for (int u = 0; u < local_w; ++u) {
            const int x0 = u + bx;
            const double s00 = scene_at_or_zero(scene, x0, y0);
            const double s10 = scene_at_or_zero(scene, x0 + 1, y0);
            const double s01 = scene_at_or_zero(scene, x0, y0 + 1);
            const double s11 = scene_at_or_zero(scene, x0 + 1, y0 + 1);
            local.at(u, v) = (1.0 - fx) * (1.0 - fy) * s00 + fx * (1.0 - fy) * s10 +
                             (1.0 - fx) * fy * s01 + fx * fy * s11;
        }
    }
    return local;
}

Grid bilinear_gather_dx(const Grid& scene, Point offset, int local_w, int local_h) {
    Grid local(local_w, local_h, 0.0);
    const Point s{offset.x - 0.5 * (local_w - 1), offset.y - 0.5 * (local_h - 1)};
    const auto [bx, fx] = split_shift(s.x);
    const auto [by, fy] = split_shift(s.y);
    (void)fx;  // d(1-fx)/dt = -1, dfx/dt = +1: the x-weights collapse to a difference
    for (int v = 0; v < local_h; ++v) {
        const int y0 = v + by;
        for (int u = 0; u < local_w; ++u) {
            const int x0 = u + bx;
            const double s00 = scene_at_or_zero(scene, x0, y0);
            const double s10 = scene_at_or_zero(scene, x0 + 1, y0);
            const double s01 = scene_at_or_zero(scene, x0, y0 + 1);
            const double s11 = scene_at_or_zero(scene, x0 + 1, y0 + 1);
            local.at(u, v) = (1.0 - fy) * (s10 - s00) + fy * (s11 - s01);
        }
    }
    return local;
}

Grid bilinear_gather_dy(const Grid& scene, Point offset, int local_w, int local_h) {
    Grid local(local_w, local_h, 0.0);
    const Point s{offset.x - 0.5 * (local_w - 1), offset.y - 0.5 * (local_h - 1)};
    const auto [bx, fx] = split_shift(s.x);
    const auto [by, fy] = split_shift(s.y);
    (void)fy;
    for (int v = 0; v < local_h; ++v) {
        const int y0 = v + by;
        for (int u = 0; u < local_w; ++u) {
            const int x0 = u + bx;
            const double s00 = scene_at_or_zero(scene, x0, y0);
            const double s10 = scene_at_or_zero(scene, x0 + 1, y0);
            const double s01 = scene_at_or_zero(scene, x0, y0 + 1);
            const double s11 = scene_at_or_zero(scene, x0 + 1, y0 + 1);
            local.at(u, v) = (1.0 - fx) * (s01 - s00) + fx * (s11 - s10);
        }
    }
    return local;
}

}  // namespace crownacm
