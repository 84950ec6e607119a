#include "crownacm/energy.hpp"

#include <algorithm>
#include <cmath>

namespace crownacm {

void SceneConfig::validate() const {
    if (seeds.empty()) throw std::invalid_argument("SceneConfig: need at least one seed");
    if (!(params.seed_box_radius > 0.0)) throw std::invalid_argument("SceneConfig: delta must be > 0");
    if (!(params.union_sharpness > 0.0)) throw std::invalid_argument("SceneConfig: tau must be > 0");
    if (params.shape_weight < 0.0 || params.image_weight < 0.0 || params.overlap_weight < 0.0)
        throw std::invalid_argument("SceneConfig: weights must be >= 0");
    if (params.shape_weight == 0.0 && params.image_weight == 0.0 && params.overlap_weight == 0.0)
        throw std::invalid_argument("SceneConfig: at least one weight must be positive");
    if (!model || !prior) throw std::invalid_argument("SceneConfig: model and prior are required");
    for (const Point& s : seeds)
        if (s.x < 0.0 || s.x > posterior.width() - 1 || s.y < 0.0 || s.y > posterior.height() - 1)
            throw std::invalid_argument("SceneConfig: seed outside posterior raster");
}

namespace {

constexpr double kBoxSlack = 1e-9;

void check_feasible(const ContourState& state, const SceneConfig& config) {
    if (static_cast<int>(state.size()) != config.contour_count())
        throw std::invalid_argument("state contour count does not match config seeds");
    const double delta = config.params.seed_box_radius;
    for (size_t i = 0; i < state.size(); ++i) {
        if (state[i].alpha.size() != config.model->mode_count())
            throw std::invalid_argument("state coefficient count does not match model");
        const Point& seed = config.seeds[i];
        if (std::abs(state[i].offset.x - seed.x) > delta + kBoxSlack ||
            std::abs(state[i].offset.y - seed.y) > delta + kBoxSlack)
            throw std::invalid_argument("contour " + std::to_string(i) +
                                        " offset violates its seed box");
    }
}

}  // namespace

// --- individual terms -------------------------------------------------------------

std::vector<Grid> place_shapes(const ContourState& state, const SceneConfig& config) {
    std::vector<Grid> fields;
    fields.reserve(state.size());
    for (const Contour& c : state) {
        Grid local = generate(*config.model, c.alpha);
        fields.push_back(bilinear_place(local, c.offset, config.posterior.width(),
                                        config.posterior.height()));
    }
    return fields;
}

double smooth_union_point(std::span<const double> values, double tau, std::span<double> partials) {
    const size_t m = values.size();
    double xmax = values[0];
    for (size_t i = 1; i < m; ++i) xmax = std::max(xmax, values[i]);

    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < m; ++i) {
        const double e = std::exp(tau * (values[i] - xmax));
        num += values[i] * e;
        den += e;
    }
    const double u = num / den;
    if (!partials.empty()) {
        for (size_t i = 0; i < m; ++i) {
            const double w = std::exp(tau * (values[i] - xmax)) / den;
            partials[i] = w * (1.0 + tau * (values[i] - u));
        }
    }
    return u;
}

Grid smooth_union(const std::vector<Grid>& fields, double tau) {
    if (fields.empty()) throw std::invalid_argument("smooth_union: no fields");
    if (!(tau > 0.0)) throw std::invalid_argument("smooth_union: tau must be > 0");
    for (const Grid& f : fields)
        if (!f.same_shape(fields.front()))
            throw std::invalid_argument("smooth_union: field dimensions differ");

    const size_t m = fields.size();
    Grid out(fields.front().width, fields.front().height);
    std::vector<double> values(m);
    for (size_t p = 0; p < out.size(); ++p) {
        for (size_t i = 0; i < m; ++i) values[i] = fields[i].values[p];
        out.values[p] = smooth_union_point(values, tau);
    }
    return out;
}

ImageTerm image_term(const Grid& union_field, const ProbabilityMap& posterior) {
    if (!union_field.same_shape(posterior.grid))
        throw std::invalid_argument("image_term: dimensions differ");
    ImageTerm out;
    out.dvalue_dunion = Grid(union_field.width, union_field.height);
    for (size_t p = 0; p < union_field.size(); ++p) {
        const double prob = posterior.grid.values[p];
        const double lp = std::log(prob), l1p = std::log1p(-prob);
        const double u = union_field.values[p];
        out.value -= u * lp + (1.0 - u) * l1p;
        out.dvalue_dunion.values[p] = -(lp - l1p);
    }
    return out;
}

OverlapTerm overlap_term(const std::vector<Grid>& fields) {
    if (fields.empty()) throw std::invalid_argument("overlap_term: no fields");
    const size_t m = fields.size();
    OverlapTerm out;
    out.partials.assign(m, Grid(fields.front().width, fields.front().height));
    for (size_t p = 0; p < fields.front().size(); ++p) {
        double sum = 0.0, sumsq = 0.0;
        for (size_t i = 0; i < m; ++i) {
            const double v = fields[i].values[p];
            sum += v;
            sumsq += v * v;
        }
        out.value += 0.5 * (sum * sum - sumsq);
        for (size_t i = 0; i < m; ++i) out.partials[i].values[p] = sum - fields[i].values[p];
    }
    return out;
}

ShapeTerm shape_term(const KdePrior& prior, const ContourState& state) {
    ShapeTerm out;
    out.gradients.reserve(state.size());
    for (const Contour& c : state) {
        const KdeLogDensity kd = kde_log_prior(prior, c.alpha);
        out.value -= kd.value;
        out.gradients.push_back(-kd.gradient);
    }
    return out;
}

// --- state packing -----------------------------------------------------------------

Eigen::VectorXd pack_state(const ContourState& state) {
    if (state.empty()) return {};
    const int k = static_cast<int>(state.front().alpha.size());
    Eigen::VectorXd x(static_cast<Eigen::Index>(state.size()) * (k + 2));
    for (size_t i = 0; i < state.size(); ++i) {
        x.segment(static_cast<Eigen::Index>(i) * (k + 2), k) = state[i].alpha;
        x(static_cast<Eigen::Index>(i) * (k + 2) + k) = state[i].offset.x;
        x(static_cast<Eigen::Index>(i) * (k + 2) + k + 1) = state[i].offset.y;
    }
    return x;
}

ContourState unpack_state(const Eigen::VectorXd& x, const SceneConfig& config) {
    const int m = config.contour_count();
    const int k = config.model->mode_count();
    if (x.size() != static_cast<Eigen::Index>(m) * (k + 2))
        throw std::invalid_argument("unpack_state: vector length does not match M*(k+2)");
    ContourState state(m);
    for (int i = 0; i < m; ++i) {
        state[i].alpha = x.segment(static_cast<Eigen::Index>(i) * (k + 2), k);
        state[i].offset.x = x(static_cast<Eigen::Index>(i) * (k + 2) + k);
        state[i].offset.y = x(static_cast<Eigen::Index>(i) * (k + 2) + k + 1);
    }
    return state;
}

// --- evaluator ----------------------------------------------------------------------

EnergyEvaluator::EnergyEvaluator(const SceneConfig& config) : config_(config) {
    config.validate();
    const Grid& p = config.posterior.grid;
    log_p_ = Grid(p.width, p.height);
    log_one_minus_p_ = Grid(p.width, p.height);
    for (size_t i = 0; i < p.size(); ++i) {
        log_p_.values[i] = std::log(p.values[i]);
        log_one_minus_p_.values[i] = std::log1p(-p.values[i]);
        empty_union_image_term_ -= log_one_minus_p_.values[i];
    }
}

namespace {

struct UnionPass {
    Grid value;    // U
    Grid xmax;     // pixelwise max field value
    Grid expsum;   // sum_j exp(tau * (x_j - xmax))
    Grid fieldsum; // sum_j x_j  (overlap partials)
    double overlap = 0.0;
    double union_dot_dimage = 0.0;  // sum_px U * -(log p - log(1-p))
};

UnionPass run_union_pass(const std::vector<Grid>& fields, double tau, const Grid& log_p,
                         const Grid& log_1mp, bool keep_grids) {
    const size_t m = fields.size();
    const int w = fields.front().width, h = fields.front().height;
    UnionPass out;
    out.value = Grid(w, h);
    if (keep_grids) {
        out.xmax = Grid(w, h);
        out.expsum = Grid(w, h);
        out.fieldsum = Grid(w, h);
    }
    const size_t n = out.value.size();
    for (size_t p = 0; p < n; ++p) {
        double xmax = 0.0, sum = 0.0, sumsq = 0.0;
        for (size_t i = 0; i < m; ++i) {
            const double v = fields[i].values[p];
            xmax = std::max(xmax, v);
            sum += v;
            sumsq += v * v;
        }
        out.overlap += 0.5 * (sum * sum - sumsq);
        double u = 0.0, den = static_cast<double>(m);
        if (xmax > 0.0) {
            double num = 0.0;
            size_t zeros = 0;
            den = 0.0;
            for (size_t i = 0; i < m; ++i) {
                const double v = fields[i].values[p];
                if (v == 0.0) {
                    ++zeros;
                    continue;
                }
                const double e = std::exp(tau * (v - xmax));
                num += v * e;
                den += e;
            }
            if (zeros > 0) den += static_cast<double>(zeros) * std::exp(-tau * xmax);
            u = num / den;
            out.union_dot_dimage += u * -(log_p.values[p] - log_1mp.values[p]);
        }
        out.value.values[p] = u;
        if (keep_grids) {
            out.xmax.values[p] = xmax;
            out.expsum.values[p] = den;
            out.fieldsum.values[p] = sum;
        }
    }
    return out;
}

}  // namespace

EnergyBreakdown EnergyEvaluator::energy(const ContourState& state) const {
    check_feasible(state, config_);
    const std::vector<Grid> fields = place_shapes(state, config_);
    const UnionPass pass = run_union_pass(fields, config_.params.union_sharpness, log_p_,
                                          log_one_minus_p_, /*keep_grids=*/false);
    const ShapeTerm shp = shape_term(*config_.prior, state);

    EnergyBreakdown b;
    b.shape_term = shp.value;
    b.image_term = empty_union_image_term_ + pass.union_dot_dimage;
    b.overlap_term = pass.overlap;
    b.total = config_.params.shape_weight * b.shape_term +
              config_.params.image_weight * b.image_term +
              config_.params.overlap_weight * b.overlap_term;
    if (!std::isfinite(b.total)) throw std::runtime_error("non-finite energy encountered");
    return b;
}

EnergyBreakdown EnergyEvaluator::energy_and_gradient(const ContourState& state,
                                                     Eigen::VectorXd& gradient) const {
    check_feasible(state, config_);
    const int m = config_.contour_count();
    const int k = config_.model->mode_count();
    const int sw = config_.posterior.width(), sh = config_.posterior.height();
    const double tau = config_.params.union_sharpness;
    const int frame = config_.model->frame;

    std::vector<Grid> locals, phis;
    std::vector<Grid> fields;
    locals.reserve(m);
    phis.reserve(m);
    fields.reserve(m);
    for (const Contour& c : state) {
        Grid phi = level_set_field(*config_.model, c.alpha);
        Grid local(frame, frame);
        for (size_t i = 0; i < phi.size(); ++i)
            local.values[i] = smooth_heaviside(-phi.values[i], config_.model->epsilon);
        fields.push_back(bilinear_place(local, c.offset, sw, sh));
        phis.push_back(std::move(phi));
        locals.push_back(std::move(local));
    }

    const UnionPass pass =
        run_union_pass(fields, tau, log_p_, log_one_minus_p_, /*keep_grids=*/true);
    const ShapeTerm shp = shape_term(*config_.prior, state);

    EnergyBreakdown b;
    b.shape_term = shp.value;
    b.image_term = empty_union_image_term_ + pass.union_dot_dimage;
    b.overlap_term = pass.overlap;
    b.total = config_.params.shape_weight * b.shape_term +
              config_.params.image_weight * b.image_term +
              config_.params.overlap_weight * b.overlap_term;
    if (!std::isfinite(b.total)) throw std::runtime_error("non-finite energy encountered");

    gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m) * (k + 2));
    Grid scene_partial(sw, sh);  // dE/dF_i, filled per contour inside its splat window

    for (int i = 0; i < m; ++i) {
        const Point& t = state[i].offset;
        // splat window of contour i: local origin plus one-pixel bilinear apron
        const int bx = static_cast<int>(std::floor(t.x - 0.5 * (frame - 1)));
        const int by = static_cast<int>(std::floor(t.y - 0.5 * (frame - 1)));
        const int x_lo = std::max(0, bx), x_hi = std::min(sw - 1, bx + frame);
        const int y_lo = std::max(0, by), y_hi = std::min(sh - 1, by + frame);

        for (int y = y_lo; y <= y_hi; ++y) {
            for (int x = x_lo; x <= x_hi; ++x) {
                const size_t p = static_cast<size_t>(y) * sw + x;
                const double xi = fields[i].values[p];
                const double xmax = pass.xmax.values[p];
                const double u = pass.value.values[p];
                const double w =
                    (xmax > 0.0 ? std::exp(tau * (xi - xmax)) : 1.0) / pass.expsum.values[p];
                const double du_dxi = w * (1.0 + tau * (xi - u));
                const double dimg = -(log_p_.values[p] - log_one_minus_p_.values[p]);
                scene_partial.at(x, y) =
                    config_.params.image_weight * dimg * du_dxi +
                    config_.params.overlap_weight * (pass.fieldsum.values[p] - xi);
            }
        }

        const Grid local_partial = bilinear_gather(scene_partial, t, frame, frame);
        const Grid dx_partial = bilinear_gather_dx(scene_partial, t, frame, frame);
        const Grid dy_partial = bilinear_gather_dy(scene_partial, t, frame, frame);

        // chain through the soft step: dE/dphi = dE/dL * -H'(-phi)
        const size_t np = locals[i].size();
        std::vector<double> dphi(np);
        for (size_t q = 0; q < np; ++q)
            dphi[q] = local_partial.values[q] *
                      -smooth_heaviside_derivative(-phis[i].values[q], config_.model->epsilon);

        const Eigen::Index base = static_cast<Eigen::Index>(i) * (k + 2);
        for (int j = 0; j < k; ++j) {
            const double* mode = config_.model->modes[j].values.data();
            double acc = 0.0;
            for (size_t q = 0; q < np; ++q) acc += dphi[q] * mode[q];
            gradient(base + j) = acc;
        }
        gradient.segment(base, k) += config_.params.shape_weight * shp.gradients[i];

        double gx = 0.0, gy = 0.0;
        for (size_t q = 0; q < np; ++q) {
            gx += locals[i].values[q] * dx_partial.values[q];
            gy += locals[i].values[q] * dy_partial.values[q];
        }
        gradient(base + k) = gx;
        gradient(base + k + 1) = gy;
    }
    return b;
}

// --- free functions ------------------------------------------------------------------

EnergyBreakdown total_energy(const ContourState& state, const SceneConfig& config) {
    return EnergyEvaluator(config).energy(state);
}

Eigen::VectorXd energy_gradient(const ContourState& state, const SceneConfig& config) {
    Eigen::VectorXd g;
    EnergyEvaluator(config).energy_and_gradient(state, g);
    return g;
}

Eigen::VectorXd finite_difference_gradient(const ContourState& state, const SceneConfig& config,
                                           double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_difference_gradient: h must be > 0");
    const EnergyEvaluator eval(config);
    Eigen::VectorXd x = pack_state(state);
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double saved = x(i);
        x(i) = saved + h;
        const double fp = eval.energy(unpack_state(x, config)).total;
        x(i) = saved - h;
        const double fm = eval.energy(unpack_state(x, config)).total;
        x(i) = saved;
        g(i) = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace crownacm
