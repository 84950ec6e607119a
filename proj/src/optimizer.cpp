#include "crownacm/optimizer.hpp"

#include <cmath>
#include <deque>
#include <ostream>
#include <sstream>

namespace crownacm {

void OptimizerSettings::validate() const {
    if (memory < 1 || max_iters < 0 || max_line_search < 1)
        throw std::invalid_argument("OptimizerSettings: counts must be positive");
    if (!(rel_tol > 0.0) || !(grad_tol > 0.0) || !(armijo_c > 0.0))
        throw std::invalid_argument("OptimizerSettings: tolerances must be positive");
    if (!(backtrack_shrink > 0.0 && backtrack_shrink < 1.0))
        throw std::invalid_argument("OptimizerSettings: shrink must be in (0,1)");
    if (prune_area_min < 0.0)
        throw std::invalid_argument("OptimizerSettings: prune_area_min must be >= 0");
}

ContourState initialize_states(const SceneConfig& config) {
    config.validate();
    ContourState state(config.contour_count());
    for (int i = 0; i < config.contour_count(); ++i) {
        state[i].alpha = Eigen::VectorXd::Zero(config.model->mode_count());
        state[i].offset = config.seeds[i];
    }
    return state;
}

namespace {

struct CurvaturePair {
    Eigen::VectorXd s;
    Eigen::VectorXd y;
    double rho;
};

// Clamp every offset coordinate into its seed box; alphas pass through.
Eigen::VectorXd project_box(const Eigen::VectorXd& x, const SceneConfig& config) {
    const int k = config.model->mode_count();
    const double delta = config.params.seed_box_radius;
    Eigen::VectorXd out = x;
    for (int i = 0; i < config.contour_count(); ++i) {
        const Eigen::Index base = static_cast<Eigen::Index>(i) * (k + 2);
        out(base + k) = std::clamp(out(base + k), config.seeds[i].x - delta, config.seeds[i].x + delta);
        out(base + k + 1) =
            std::clamp(out(base + k + 1), config.seeds[i].y - delta, config.seeds[i].y + delta);
    }
    return out;
}

Eigen::VectorXd two_loop_direction(const Eigen::VectorXd& g,
                                   const std::deque<CurvaturePair>& history) {
    Eigen::VectorXd q = g;
    std::vector<double> a(history.size());
    for (size_t i = history.size(); i-- > 0;) {
        a[i] = history[i].rho * history[i].s.dot(q);
        q -= a[i] * history[i].y;
    }
    double gamma = 1.0;
    if (!history.empty()) {
        const auto& last = history.back();
        gamma = last.s.dot(last.y) / last.y.dot(last.y);
    }
    q *= gamma;
    for (size_t i = 0; i < history.size(); ++i) {
        const double b = history[i].rho * history[i].y.dot(q);
        q += (a[i] - b) * history[i].s;
    }
    return -q;
}

std::string dump_state(const Eigen::VectorXd& x) {
    std::ostringstream os;
    os.precision(17);
    for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? " " : "") << x(i);
    return os.str();
}

void log_iterate(std::ostream* log, int iter, const EnergyBreakdown& b, double grad_norm) {
    if (!log) return;
    char line[256];
    std::snprintf(line, sizeof(line), "%d %.10e %.10e %.10e %.10e %.10e\n", iter, b.total,
                  b.shape_term, b.image_term, b.overlap_term, grad_norm);
    *log << line;
}

}  // namespace

RefinementResult refine(const SceneConfig& config, const OptimizerSettings& settings,
                        std::ostream* log) {
    config.validate();
    settings.validate();
    const EnergyEvaluator eval(config);

    RefinementResult result;
    ContourState state = initialize_states(config);
    Eigen::VectorXd x = pack_state(state);

    Eigen::VectorXd g;
    EnergyBreakdown current;
    try {
        current = eval.energy_and_gradient(state, g);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string(e.what()) + " at initialization; state: " + dump_state(x));
    }
    result.energy_trace.push_back(current);
    if (log) *log << "# iter total shape image overlap grad_norm\n";

    std::deque<CurvaturePair> history;
    int iter = 0;
    while (iter < settings.max_iters) {
        const double pg_norm = (project_box(x - g, config) - x).norm();
        if (iter == 0) log_iterate(log, 0, current, pg_norm);
        if (pg_norm < settings.grad_tol) {
            result.converged = true;
            break;
        }

        Eigen::VectorXd d = two_loop_direction(g, history);
        if (d.dot(g) >= 0.0) d = -g;  // enforce a descent direction
        if (history.empty()) {
            const double gn = g.norm();
            if (gn > 1.0) d /= gn;  // unit first step; later steps inherit curvature scale
        }

        double step = 1.0;
        bool accepted = false;
        Eigen::VectorXd x_new;
        EnergyBreakdown next;
        for (int trial = 0; trial < settings.max_line_search; ++trial) {
            x_new = project_box(x + step * d, config);
            bool finite = true;
            try {
                next = eval.energy(unpack_state(x_new, config));
            } catch (const std::runtime_error&) {
                finite = false;  // treat a non-finite trial as a rejected step
            }
            if (finite && next.total < current.total &&
                next.total <= current.total + settings.armijo_c * g.dot(x_new - x)) {
                accepted = true;
                break;
            }
            step *= settings.backtrack_shrink;
        }
        if (!accepted) {
            result.converged = true;  // no admissible decrease left
            break;
        }

        Eigen::VectorXd g_new;
        try {
            next = eval.energy_and_gradient(unpack_state(x_new, config), g_new);
        } catch (const std::runtime_error& e) {
            throw std::runtime_error(std::string(e.what()) + " at iteration " +
                                     std::to_string(iter + 1) + "; state: " + dump_state(x_new));
        }

        const bool projection_active = (x_new - (x + step * d)).cwiseAbs().maxCoeff() > 0.0;
        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd yv = g_new - g;
        const double sy = s.dot(yv);
        if (!projection_active && sy > 1e-10) {
            history.push_back({s, yv, 1.0 / sy});
            if (static_cast<int>(history.size()) > settings.memory) history.pop_front();
        }

        const double decrease = current.total - next.total;
        x = x_new;
        g = g_new;
        current = next;
        ++iter;
        result.energy_trace.push_back(current);
        log_iterate(log, iter, current, (project_box(x - g, config) - x).norm());

        if (decrease < settings.rel_tol * std::max(1.0, std::abs(current.total))) {
            result.converged = true;
            break;
        }
    }
    result.iterations = iter;
    if (settings.max_iters == 0) result.converged = false;

    result.final_state = unpack_state(x, config);
    auto [kept, pruned] = prune_empty(result.final_state, config, settings.prune_area_min);
    result.pruned = std::move(pruned);
    for (int idx : kept) result.detections.push_back(extract_detection(result.final_state, idx, config));
    return result;
}

std::pair<std::vector<int>, std::vector<int>> prune_empty(const ContourState& state,
                                                          const SceneConfig& config,
                                                          double area_min) {
    if (area_min < 0.0) throw std::invalid_argument("prune_empty: area_min must be >= 0");
    std::vector<int> kept, pruned;
    for (size_t i = 0; i < state.size(); ++i) {
        const Grid field = bilinear_place(generate(*config.model, state[i].alpha), state[i].offset,
                                          config.posterior.width(), config.posterior.height());
        size_t area = 0;
        for (double v : field.values) area += v >= 0.5 ? 1 : 0;
        if (static_cast<double>(area) < area_min)
            pruned.push_back(static_cast<int>(i));
        else
            kept.push_back(static_cast<int>(i));
    }
    return {kept, pruned};
}

DetectionMask extract_detection(const ContourState& state, int contour_index,
                                const SceneConfig& config) {
    const Contour& c = state.at(static_cast<size_t>(contour_index));
    const Grid field = bilinear_place(generate(*config.model, c.alpha), c.offset,
                                      config.posterior.width(), config.posterior.height());
    DetectionMask det;
    det.contour_index = contour_index;
    det.mask = BinaryMask(field.width, field.height);
    for (size_t i = 0; i < field.size(); ++i) det.mask.bits[i] = field.values[i] >= 0.5 ? 1 : 0;
    if (det.mask.area() == 0)
        throw std::invalid_argument("extract_detection: contour " + std::to_string(contour_index) +
                                    " is empty after thresholding");
    det.centroid = centroid(det.mask);
    return det;
}

}  // namespace crownacm
