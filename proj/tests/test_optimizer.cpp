#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <sstream>

#include "crownacm/optimizer.hpp"
#include "test_util.hpp"

using namespace crownacm;

namespace {

struct Fixture {
    EigenshapeModel model;
    KdePrior prior;

    Fixture() {
        auto g = testutil::rng(301);
        std::uniform_real_distribution<double> radius(9.0, 14.0);
        std::uniform_real_distribution<double> shift(-1.5, 1.5);
        AlignedShapeSet set;
        set.frame = 40;
        set.source_count = 16;
        for (int i = 0; i < 16; ++i) {
            BinaryMask mask =
                testutil::disk_mask(40, 40, 19.5 + shift(g), 19.5 + shift(g), radius(g));
            set.sdfs.push_back(mask_to_sdf(align_mask(mask, 40)));
        }
        model = learn_eigenshape_model(set, 6);
        prior = learn_kde_prior(model, set);
    }
};

const Fixture& fixture() {
    static Fixture f;
    return f;
}

SceneConfig make_config(Grid posterior, std::vector<Point> seeds, SceneParams params = {}) {
    SceneConfig config;
    config.posterior = ProbabilityMap(std::move(posterior));
    config.seeds = std::move(seeds);
    config.params = params;
    config.model = &fixture().model;
    config.prior = &fixture().prior;
    return config;
}

BinaryMask threshold(const Grid& field) {
    BinaryMask mask(field.width, field.height);
    for (size_t i = 0; i < field.size(); ++i) mask.bits[i] = field.values[i] >= 0.5 ? 1 : 0;
    return mask;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
    size_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        inter += a.bits[i] && b.bits[i];
        uni += a.bits[i] || b.bits[i];
    }
    return uni ? double(inter) / double(uni) : 0.0;
}

}  // namespace

TEST_CASE("initialize_states") {
    const SceneConfig config = make_config(Grid(48, 48, 0.5), {{20.0, 22.0}, {33.5, 30.25}});
    const ContourState state = initialize_states(config);
    REQUIRE(state.size() == 2);
    for (size_t i = 0; i < 2; ++i) {
        CHECK(state[i].alpha.cwiseAbs().maxCoeff() == 0.0);
        CHECK(state[i].offset.x == config.seeds[i].x);
        CHECK(state[i].offset.y == config.seeds[i].y);
    }
    CHECK(std::isfinite(total_energy(state, config).total));
}

TEST_CASE("refine recovers a placed mean shape") {
    const auto& fx = fixture();
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(fx.model.mode_count());
    const Point truth{32.2, 31.7};
    const Grid truth_field = bilinear_place(generate(fx.model, zero), truth, 64, 64);
    const BinaryMask truth_mask = threshold(truth_field);

    SceneParams params;
    params.shape_weight = 0.0;
    params.image_weight = 1.0;
    params.overlap_weight = 5.0;
    // seed two pixels off the optimum, still inside the box
    SceneConfig config = make_config(truth_field, {{truth.x - 2.0, truth.y + 1.5}}, params);

    OptimizerSettings settings;
    settings.max_iters = 300;
    const RefinementResult result = refine(config, settings);

    REQUIRE(result.detections.size() == 1);
    CHECK(result.pruned.empty());
    CHECK(std::abs(result.final_state[0].offset.x - truth.x) <= 0.5);
    CHECK(std::abs(result.final_state[0].offset.y - truth.y) <= 0.5);
    CHECK(mask_iou(result.detections[0].mask, truth_mask) >= 0.95);
}

TEST_CASE("floor posterior shrinks the contour to nothing and prunes it") {
    SceneParams params;
    params.shape_weight = 0.05;
    params.image_weight = 1.0;
    SceneConfig config = make_config(Grid(64, 64, 0.0), {{32.0, 32.0}}, params);

    OptimizerSettings settings;
    settings.max_iters = 400;
    const RefinementResult result = refine(config, settings);

    CHECK(result.pruned == std::vector<int>{0});
    CHECK(result.detections.empty());
    // detections count = M - pruned count
    CHECK(result.detections.size() == config.seeds.size() - result.pruned.size());
}

TEST_CASE("max_iters = 0 returns the initialization") {
    const SceneConfig config = make_config(Grid(48, 48, 0.5), {{24.0, 24.0}});
    OptimizerSettings settings;
    settings.max_iters = 0;
    const RefinementResult result = refine(config, settings);
    CHECK(result.iterations == 0);
    CHECK_FALSE(result.converged);
    CHECK(result.final_state[0].alpha.cwiseAbs().maxCoeff() == 0.0);
    CHECK(result.final_state[0].offset.x == 24.0);
    CHECK(result.energy_trace.size() == 1);
}

TEST_CASE("trace is monotone and every iterate feasible") {
    auto g = testutil::rng(311);
    Grid raw = testutil::random_grid(g, 64, 64, 0.05, 0.95);
    SceneConfig config =
        make_config(gaussian_blur(raw, 2.0), {{22.0, 25.0}, {40.0, 38.0}});

    OptimizerSettings settings;
    settings.max_iters = 120;
    std::ostringstream log;
    const RefinementResult result = refine(config, settings, &log);

    REQUIRE(result.energy_trace.size() >= 2);
    for (size_t i = 1; i < result.energy_trace.size(); ++i)
        CHECK(result.energy_trace[i].total < result.energy_trace[i - 1].total);
    for (size_t i = 0; i < result.final_state.size(); ++i) {
        CHECK(std::abs(result.final_state[i].offset.x - config.seeds[i].x) <=
              config.params.seed_box_radius + 1e-12);
        CHECK(std::abs(result.final_state[i].offset.y - config.seeds[i].y) <=
              config.params.seed_box_radius + 1e-12);
    }
    // log has the documented column line plus one line per trace entry
    const std::string text = log.str();
    CHECK(text.find("# iter total shape image overlap grad_norm") != std::string::npos);
}

TEST_CASE("refinement is deterministic") {
    auto g = testutil::rng(313);
    Grid raw = testutil::random_grid(g, 56, 56, 0.05, 0.95);
    const Grid posterior = gaussian_blur(raw, 1.5);
    SceneConfig config = make_config(posterior, {{20.0, 20.0}, {36.0, 34.0}});

    OptimizerSettings settings;
    settings.max_iters = 60;
    const RefinementResult a = refine(config, settings);
    const RefinementResult b = refine(config, settings);

    REQUIRE(a.energy_trace.size() == b.energy_trace.size());
    for (size_t i = 0; i < a.energy_trace.size(); ++i)
        CHECK(a.energy_trace[i].total == b.energy_trace[i].total);  // bit identical
    for (size_t i = 0; i < a.final_state.size(); ++i) {
        CHECK(a.final_state[i].offset.x == b.final_state[i].offset.x);
        CHECK((a.final_state[i].alpha - b.final_state[i].alpha).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("converged run ends at a stationary point") {
    const auto& fx = fixture();
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(fx.model.mode_count());
    const Grid truth_field = bilinear_place(generate(fx.model, zero), {30.3, 29.8}, 60, 60);

    // the coefficient prior makes the energy coercive, so the minimum is
    // finite and isolated
    SceneParams params;
    params.shape_weight = 1.0;
    SceneConfig config = make_config(truth_field, {{29.0, 29.0}}, params);

    OptimizerSettings settings;
    settings.max_iters = 5000;
    settings.grad_tol = 1e-7;
    settings.rel_tol = 1e-16;
    const RefinementResult result = refine(config, settings);
    CHECK(result.converged);

    const Eigen::VectorXd g = energy_gradient(result.final_state, config);
    // interior minimum: the plain gradient norm is small
    CHECK(g.norm() < 1e-6);
}

TEST_CASE("prune_empty") {
    const auto& fx = fixture();
    const int k = fx.model.mode_count();
    SceneConfig config = make_config(Grid(64, 64, 0.5), {{30.0, 30.0}});

    SUBCASE("mean shape is kept") {
        ContourState state{{Eigen::VectorXd::Zero(k), {30.0, 30.0}}};
        const auto [kept, pruned] = prune_empty(state, config, 20.0);
        CHECK(kept == std::vector<int>{0});
        CHECK(pruned.empty());
    }

    SUBCASE("coefficients that empty the indicator get pruned") {
        // drive the level-set field positive using the dominant mode
        ContourState state{{Eigen::VectorXd::Zero(k), {30.0, 30.0}}};
        const Grid base = level_set_field(fx.model, state[0].alpha);
        size_t deepest = 0;
        for (size_t i = 0; i < base.size(); ++i)
            if (base.values[i] < base.values[deepest]) deepest = i;
        const double sign = fx.model.modes[0].values[deepest] >= 0.0 ? 1.0 : -1.0;
        state[0].alpha(0) = sign * 1e6;
        const auto [kept, pruned] = prune_empty(state, config, 20.0);
        CHECK(pruned == std::vector<int>{0});
    }

    SUBCASE("area exactly at the threshold is kept") {
        ContourState state{{Eigen::VectorXd::Zero(k), {30.0, 30.0}}};
        const Grid field = bilinear_place(generate(fx.model, state[0].alpha), state[0].offset,
                                          64, 64);
        size_t area = 0;
        for (double v : field.values) area += v >= 0.5 ? 1 : 0;
        const auto [kept_eq, pruned_eq] = prune_empty(state, config, static_cast<double>(area));
        CHECK(kept_eq == std::vector<int>{0});  // strict less-than prunes
        const auto [kept_above, pruned_above] =
            prune_empty(state, config, static_cast<double>(area) + 0.5);
        CHECK(pruned_above == std::vector<int>{0});
    }
}

TEST_CASE("extract_detection") {
    const auto& fx = fixture();
    const int k = fx.model.mode_count();
    SceneConfig config = make_config(Grid(64, 64, 0.5), {{30.5, 26.5}});

    SUBCASE("mean shape at a grid-aligned offset is the translated mean interior") {
        // frame 28: center (13.5, 13.5); a half-integer offset gives an exact copy
        ContourState state{{Eigen::VectorXd::Zero(k), {30.5, 26.5}}};
        const DetectionMask det = extract_detection(state, 0, config);

        size_t expected_area = 0;
        for (double v : fx.model.mean.values) expected_area += v <= 0.0 ? 1 : 0;
        CHECK(det.mask.area() == expected_area);
        for (int v = 0; v < fx.model.frame; ++v)
            for (int u = 0; u < fx.model.frame; ++u) {
                const bool inside = fx.model.mean.at(u, v) <= 0.0;
                CHECK(det.mask.get(30 - 13 + u, 26 - 13 + v) == inside);
            }
        // centroid agrees with the mask centroid
        const Point c = centroid(det.mask);
        CHECK(det.centroid.x == doctest::Approx(c.x));
        CHECK(det.centroid.y == doctest::Approx(c.y));
    }

    SUBCASE("area equals the count of field pixels at or above 0.5") {
        ContourState state{{Eigen::VectorXd::Zero(k), {30.5, 26.5}}};
        state[0].alpha(0) = 0.4 * std::sqrt(std::max(fx.model.eigenvalues(0), 1e-9));
        const DetectionMask det = extract_detection(state, 0, config);
        const Grid field =
            bilinear_place(generate(fx.model, state[0].alpha), state[0].offset, 64, 64);
        size_t count = 0;
        for (double v : field.values) count += v >= 0.5 ? 1 : 0;
        CHECK(det.mask.area() == count);
    }

    SUBCASE("empty-after-threshold contour is an error") {
        ContourState state{{Eigen::VectorXd::Zero(k), {30.5, 26.5}}};
        const Grid base = level_set_field(fx.model, state[0].alpha);
        size_t deepest = 0;
        for (size_t i = 0; i < base.size(); ++i)
            if (base.values[i] < base.values[deepest]) deepest = i;
        state[0].alpha(0) = (fx.model.modes[0].values[deepest] >= 0.0 ? 1.0 : -1.0) * 1e6;
        CHECK_THROWS_WITH_AS(extract_detection(state, 0, config), doctest::Contains("empty"),
                             std::invalid_argument);
    }
}
