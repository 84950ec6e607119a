#include "crownacm/shape_model.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace crownacm {

// --- alignment ------------------------------------------------------------------

BinaryMask align_mask(const BinaryMask& mask, int frame) {
    int min_x = mask.width, max_x = -1, min_y = mask.height, max_y = -1;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.get(x, y)) {
                min_x = std::min(min_x, x);
                max_x = std::max(max_x, x);
                min_y = std::min(min_y, y);
                max_y = std::max(max_y, y);
            }
    if (max_x < 0) throw std::invalid_argument("align_mask: empty mask");
    const int bw = max_x - min_x + 1, bh = max_y - min_y + 1;
    if (bw > frame || bh > frame)
        throw std::invalid_argument("align_mask: object bounding box " + std::to_string(bw) + "x" +
                                    std::to_string(bh) + " exceeds frame " + std::to_string(frame));

    const Point c = centroid(mask);
    const double center = 0.5 * (frame - 1);
    const int dx = static_cast<int>(std::lround(center - c.x));
    const int dy = static_cast<int>(std::lround(center - c.y));

    BinaryMask out(frame, frame);
    for (int y = min_y; y <= max_y; ++y)
        for (int x = min_x; x <= max_x; ++x)
            if (mask.get(x, y)) {
                const int nx = x + dx, ny = y + dy;
                if (nx < 0 || nx >= frame || ny < 0 || ny >= frame)
                    throw std::invalid_argument("align_mask: object does not fit frame after centering");
                out.set(nx, ny, true);
            }
    return out;
}

// --- signed distance --------------------------------------------------------------

Grid mask_to_sdf(const BinaryMask& mask) {
    const size_t area = mask.area();
    if (area == 0) throw std::invalid_argument("mask_to_sdf: empty mask");
    if (area == mask.size()) throw std::invalid_argument("mask_to_sdf: all-true mask has no boundary");

    BinaryMask inverse(mask.width, mask.height);
    for (size_t i = 0; i < mask.size(); ++i) inverse.bits[i] = mask.bits[i] ? 0 : 1;

    const Grid dist_to_true = squared_distance_to_true(mask);      // 0 on true pixels
    const Grid dist_to_false = squared_distance_to_true(inverse);  // 0 on false pixels

    const double clamp = std::max(mask.width, mask.height);
    Grid sdf(mask.width, mask.height);
    for (size_t i = 0; i < mask.size(); ++i) {
        double v;
        if (mask.bits[i])
            v = -(std::sqrt(dist_to_false.values[i]) - 0.5);
        else
            v = std::sqrt(dist_to_true.values[i]) - 0.5;
        sdf.values[i] = std::clamp(v, -clamp, clamp);
    }
    return sdf;
}

// --- augmentation ---------------------------------------------------------------

namespace {

Grid rotate90(const Grid& g) {  // (x, y) -> (h-1-y, x)
    Grid out(g.height, g.width);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) out.at(g.height - 1 - y, x) = g.at(x, y);
    return out;
}

Grid hflip(const Grid& g) {
    Grid out(g.width, g.height);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) out.at(g.width - 1 - x, y) = g.at(x, y);
    return out;
}

}  // namespace

AlignedShapeSet augment(const AlignedShapeSet& set) {
    AlignedShapeSet out;
    out.frame = set.frame;
    out.source_count = set.source_count;
    for (const Grid& sdf : set.sdfs) {
        std::vector<Grid> orbit;
        Grid g = sdf;
        for (int r = 0; r < 4; ++r) {
            orbit.push_back(g);
            if (r < 3) g = rotate90(g);
        }
        Grid f = hflip(sdf);
        for (int r = 0; r < 4; ++r) {
            orbit.push_back(f);
            if (r < 3) f = rotate90(f);
        }
        std::vector<Grid> unique;
        for (Grid& candidate : orbit) {
            bool duplicate = false;
            for (const Grid& u : unique)
                if (u.values == candidate.values) {
                    duplicate = true;
                    break;
                }
            if (!duplicate) unique.push_back(std::move(candidate));
        }
        for (Grid& u : unique) out.sdfs.push_back(std::move(u));
    }
    return out;
}

// --- PCA ------------------------------------------------------------------------

EigenshapeModel learn_eigenshape_model(const AlignedShapeSet& set, int k) {
    const int n = static_cast<int>(set.sdfs.size());
    if (k < 1) throw std::invalid_argument("learn_eigenshape_model: k must be >= 1");
    if (n <= k)
        throw std::invalid_argument("learn_eigenshape_model: need more than k=" + std::to_string(k) +
                                    " samples, got " + std::to_string(n));
    const int frame = set.frame;
    const long p = static_cast<long>(frame) * frame;
    for (const Grid& g : set.sdfs)
        if (g.width != frame || g.height != frame)
            throw std::invalid_argument("learn_eigenshape_model: SDF dimensions do not match frame");

    EigenshapeModel model;
    model.frame = frame;
    model.mean = Grid(frame, frame, 0.0);
    for (const Grid& g : set.sdfs)
        for (long i = 0; i < p; ++i) model.mean.values[i] += g.values[i];
    for (long i = 0; i < p; ++i) model.mean.values[i] /= n;

    // Centered data, samples as columns (p x n): snapshot PCA through the
    // n x n Gram matrix instead of the p x p covariance.
    Eigen::MatrixXd data(p, n);
    for (int j = 0; j < n; ++j)
        for (long i = 0; i < p; ++i) data(i, j) = set.sdfs[j].values[i] - model.mean.values[i];

    const Eigen::MatrixXd gram = (data.transpose() * data) / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("learn_eigenshape_model: eigendecomposition failed");

    // Eigen returns eigenvalues ascending; walk from the back for descending.
    const Eigen::VectorXd evals = solver.eigenvalues();
    const Eigen::MatrixXd evecs = solver.eigenvectors();
    const double scale = std::max(evals.cwiseAbs().maxCoeff(), 1.0);
    const double rank_tol = 1e-12 * scale;

    model.modes.reserve(k);
    model.eigenvalues = Eigen::VectorXd::Zero(k);
    std::vector<Eigen::VectorXd> mode_vectors;
    int taken = 0;
    for (int idx = n - 1; idx >= 0 && taken < k; --idx) {
        const double lambda = evals(idx);
        if (lambda <= rank_tol) break;
        Eigen::VectorXd mode = data * evecs.col(idx);
        mode.normalize();
        model.eigenvalues(taken) = lambda;
        mode_vectors.push_back(std::move(mode));
        ++taken;
    }

    // Deterministic orthonormal filler for variance-deficient directions.
    for (long basis = 0; taken < k; ++basis) {
        if (basis >= p)
            throw std::runtime_error("learn_eigenshape_model: cannot complete orthonormal basis");
        Eigen::VectorXd cand = Eigen::VectorXd::Zero(p);
        cand(basis) = 1.0;
        for (const auto& m : mode_vectors) cand -= m.dot(cand) * m;
        const double norm = cand.norm();
        if (norm < 1e-6) continue;
        cand /= norm;
        model.eigenvalues(taken) = 0.0;
        mode_vectors.push_back(std::move(cand));
        ++taken;
    }

    for (auto& mode : mode_vectors) {
        // Sign convention: largest-magnitude entry positive, first index wins ties.
        long best = 0;
        double best_abs = -1.0;
        for (long i = 0; i < p; ++i)
            if (std::abs(mode(i)) > best_abs) {
                best_abs = std::abs(mode(i));
                best = i;
            }
        if (mode(best) < 0.0) mode = -mode;
        Grid g(frame, frame);
        for (long i = 0; i < p; ++i) g.values[i] = mode(i);
        model.modes.push_back(std::move(g));
    }
    model.epsilon = 1.0;

    // Invariants checked on every learn: orthonormal modes, descending
    // nonnegative eigenvalues.
    for (int a = 0; a < k; ++a) {
        for (int b = a; b < k; ++b) {
            double dot = 0.0;
            for (long i = 0; i < p; ++i) dot += model.modes[a].values[i] * model.modes[b].values[i];
            const double expected = a == b ? 1.0 : 0.0;
            if (std::abs(dot - expected) >= 1e-8)
                throw std::runtime_error("learn_eigenshape_model: modes not orthonormal");
        }
        if (model.eigenvalues(a) < 0.0 ||
            (a > 0 && model.eigenvalues(a) > model.eigenvalues(a - 1)))
            throw std::runtime_error("learn_eigenshape_model: eigenvalues not descending");
    }
    return model;
}

ShapeCoefficients project(const EigenshapeModel& model, const Grid& sdf) {
    if (sdf.width != model.frame || sdf.height != model.frame)
        throw std::invalid_argument("project: SDF dimensions do not match model frame");
    const long p = static_cast<long>(model.frame) * model.frame;
    ShapeCoefficients alpha(model.mode_count());
    for (int j = 0; j < model.mode_count(); ++j) {
        double dot = 0.0;
        const double* mode = model.modes[j].values.data();
        for (long i = 0; i < p; ++i) dot += (sdf.values[i] - model.mean.values[i]) * mode[i];
        alpha(j) = dot;
    }
    return alpha;
}

Grid level_set_field(const EigenshapeModel& model, const ShapeCoefficients& alpha) {
    if (alpha.size() != model.mode_count())
        throw std::invalid_argument("level_set_field: coefficient count does not match model");
    Grid field = model.mean;
    const long p = static_cast<long>(model.frame) * model.frame;
    for (int j = 0; j < model.mode_count(); ++j) {
        const double a = alpha(j);
        if (a == 0.0) continue;
        const double* mode = model.modes[j].values.data();
        for (long i = 0; i < p; ++i) field.values[i] += a * mode[i];
    }
    return field;
}

Grid generate(const EigenshapeModel& model, const ShapeCoefficients& alpha) {
    Grid field = level_set_field(model, alpha);
    for (double& v : field.values) v = smooth_heaviside(-v, model.epsilon);
    return field;
}

// --- KDE prior -------------------------------------------------------------------

KdePrior learn_kde_prior(const EigenshapeModel& model, const AlignedShapeSet& set) {
    const int n = static_cast<int>(set.sdfs.size());
    if (n < 2) throw std::invalid_argument("learn_kde_prior: need at least 2 samples");
    KdePrior prior;
    prior.samples.resize(n, model.mode_count());
    for (int i = 0; i < n; ++i) prior.samples.row(i) = project(model, set.sdfs[i]).transpose();

    double sum_nn = 0.0;
    for (int i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            best = std::min(best, (prior.samples.row(i) - prior.samples.row(j)).norm());
        }
        sum_nn += best;
    }
    prior.bandwidth = std::max(sum_nn / n, 1e-3);
    return prior;
}

KdeLogDensity kde_log_prior(const KdePrior& prior, const ShapeCoefficients& alpha) {
    const int n = static_cast<int>(prior.samples.rows());
    if (alpha.size() != prior.samples.cols())
        throw std::invalid_argument("kde_log_prior: coefficient count does not match prior");
    const double inv_two_sigma2 = 1.0 / (2.0 * prior.bandwidth * prior.bandwidth);

    Eigen::VectorXd exponents(n);
    for (int i = 0; i < n; ++i)
        exponents(i) = -(alpha.transpose() - prior.samples.row(i)).squaredNorm() * inv_two_sigma2;
    const double m = exponents.maxCoeff();

    double denom = 0.0;
    Eigen::VectorXd weights(n);
    for (int i = 0; i < n; ++i) {
        weights(i) = std::exp(exponents(i) - m);
        denom += weights(i);
    }

    KdeLogDensity out;
    out.value = m + std::log(denom) - std::log(static_cast<double>(n));
    out.gradient = Eigen::VectorXd::Zero(alpha.size());
    const double inv_sigma2 = 1.0 / (prior.bandwidth * prior.bandwidth);
    for (int i = 0; i < n; ++i)
        out.gradient -= (weights(i) / denom) * inv_sigma2 *
                        (alpha - prior.samples.row(i).transpose());
    return out;
}

// --- ESM1 container ----------------------------------------------------------------

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_f64_block(std::ofstream& out, const double* data, size_t count) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
}

void read_f64_block(std::ifstream& in, double* data, size_t count, const std::string& what) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
    if (static_cast<size_t>(in.gcount()) != count * sizeof(double))
        throw IoError("truncated ESM1 block: " + what);
}

}  // namespace

void save_shape_model(const ShapeModelBundle& bundle, const std::filesystem::path& path) {
    const EigenshapeModel& m = bundle.model;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "ESM1 " << m.frame << " " << m.mode_count() << " " << format_double(m.epsilon) << " "
        << format_double(bundle.prior.bandwidth) << "\n";

    const size_t p = static_cast<size_t>(m.frame) * m.frame;
    write_f64_block(out, m.mean.values.data(), p);
    for (const Grid& mode : m.modes) write_f64_block(out, mode.values.data(), p);
    write_f64_block(out, m.eigenvalues.data(), static_cast<size_t>(m.eigenvalues.size()));

    // Row-major sample dump so N is recoverable from the trailing length.
    const auto& s = bundle.prior.samples;
    std::vector<double> row(static_cast<size_t>(s.cols()));
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        for (Eigen::Index j = 0; j < s.cols(); ++j) row[static_cast<size_t>(j)] = s(i, j);
        write_f64_block(out, row.data(), row.size());
    }
    if (!out) throw IoError("write failure on " + path.string());
}

ShapeModelBundle load_shape_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    std::string magic;
    int frame = 0, k = 0;
    double epsilon = 0.0, sigma = 0.0;
    hs >> magic >> frame >> k >> epsilon >> sigma;
    if (magic != "ESM1" || frame < 1 || k < 1 || !(sigma > 0.0))
        throw IoError("bad ESM1 header in " + path.string());

    ShapeModelBundle bundle;
    bundle.model.frame = frame;
    bundle.model.epsilon = epsilon;
    bundle.prior.bandwidth = sigma;
    const size_t p = static_cast<size_t>(frame) * frame;

    bundle.model.mean = Grid(frame, frame);
    read_f64_block(in, bundle.model.mean.values.data(), p, "mean");
    bundle.model.modes.resize(k, Grid(frame, frame));
    for (int j = 0; j < k; ++j) read_f64_block(in, bundle.model.modes[j].values.data(), p, "mode");
    bundle.model.eigenvalues.resize(k);
    read_f64_block(in, bundle.model.eigenvalues.data(), static_cast<size_t>(k), "eigenvalues");

    const auto block_start = in.tellg();
    in.seekg(0, std::ios::end);
    const auto end = in.tellg();
    in.seekg(block_start);
    const size_t remaining = static_cast<size_t>(end - block_start);
    if (remaining % (sizeof(double) * static_cast<size_t>(k)) != 0)
        throw IoError("ESM1 sample block length is not a multiple of k in " + path.string());
    const size_t n = remaining / (sizeof(double) * static_cast<size_t>(k));
    if (n < 2) throw IoError("ESM1 prior needs at least 2 samples in " + path.string());

    bundle.prior.samples.resize(static_cast<Eigen::Index>(n), k);
    std::vector<double> row(static_cast<size_t>(k));
    for (size_t i = 0; i < n; ++i) {
        read_f64_block(in, row.data(), row.size(), "prior sample");
        for (int j = 0; j < k; ++j) bundle.prior.samples(static_cast<Eigen::Index>(i), j) = row[j];
    }
    return bundle;
}

}  // namespace crownacm
