#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "crownacm/commands.hpp"
#include "crownacm/energy.hpp"
#include "crownacm/evalkit.hpp"
#include "crownacm/optimizer.hpp"
#include "crownacm/shape_model.hpp"
#include "crownacm/synth.hpp"

namespace py = pybind11;
using namespace crownacm;

namespace {

Grid grid_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2) throw std::invalid_argument("expected a 2-D float array");
    Grid g(static_cast<int>(arr.shape(1)), static_cast<int>(arr.shape(0)));
    std::copy(arr.data(), arr.data() + g.size(), g.values.begin());
    return g;
}

py::array_t<double> array_from_grid(const Grid& g) {
    py::array_t<double> arr({g.height, g.width});
    std::copy(g.values.begin(), g.values.end(), arr.mutable_data());
    return arr;
}

BinaryMask mask_from_array(const py::array_t<bool, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2) throw std::invalid_argument("expected a 2-D bool array");
    BinaryMask m(static_cast<int>(arr.shape(1)), static_cast<int>(arr.shape(0)));
    for (size_t i = 0; i < m.size(); ++i) m.bits[i] = arr.data()[i] ? 1 : 0;
    return m;
}

py::array_t<bool> array_from_mask(const BinaryMask& m) {
    py::array_t<bool> arr({m.height, m.width});
    for (size_t i = 0; i < m.size(); ++i) arr.mutable_data()[i] = m.bits[i] != 0;
    return arr;
}

using MaskArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;
using GridArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

}  // namespace

PYBIND11_MODULE(_crownacm, m) {
    m.doc() = "multi-object active-contour refinement on class-probability rasters";
    m.attr("__version__") = cli::kVersion;

    py::class_<ShapeModelBundle>(m, "ShapeModel")
        .def_property_readonly("frame", [](const ShapeModelBundle& b) { return b.model.frame; })
        .def_property_readonly("mode_count",
                               [](const ShapeModelBundle& b) { return b.model.mode_count(); })
        .def_property_readonly("eigenvalues",
                               [](const ShapeModelBundle& b) { return b.model.eigenvalues; })
        .def_property_readonly("bandwidth",
                               [](const ShapeModelBundle& b) { return b.prior.bandwidth; })
        .def_property_readonly("mean",
                               [](const ShapeModelBundle& b) { return array_from_grid(b.model.mean); })
        .def("project",
             [](const ShapeModelBundle& b, const GridArray& sdf) {
                 return project(b.model, grid_from_array(sdf));
             },
             py::arg("sdf"), "Coefficients of an aligned SDF under the model.")
        .def("generate",
             [](const ShapeModelBundle& b, const Eigen::VectorXd& alpha) {
                 return array_from_grid(generate(b.model, alpha));
             },
             py::arg("alpha"), "Soft interior indicator of the shape with these coefficients.")
        .def("log_prior",
             [](const ShapeModelBundle& b, const Eigen::VectorXd& alpha) {
                 const KdeLogDensity d = kde_log_prior(b.prior, alpha);
                 return py::make_tuple(d.value, d.gradient);
             },
             py::arg("alpha"))
        .def("save", [](const ShapeModelBundle& b, const std::string& path) {
            save_shape_model(b, path);
        });

    m.def(
        "learn_shape_model",
        [](const std::vector<MaskArray>& masks, int modes, int frame) {
            AlignedShapeSet set;
            set.frame = frame;
            set.source_count = static_cast<int>(masks.size());
            for (const auto& arr : masks)
                set.sdfs.push_back(mask_to_sdf(align_mask(mask_from_array(arr), frame)));
            set = augment(set);
            ShapeModelBundle bundle;
            bundle.model = learn_eigenshape_model(set, modes);
            bundle.prior = learn_kde_prior(bundle.model, set);
            return bundle;
        },
        py::arg("masks"), py::arg("modes") = 32, py::arg("frame") = 92,
        "Align, augment and learn the eigenshape model plus its coefficient prior.");

    m.def("load_shape_model", [](const std::string& path) { return load_shape_model(path); });

    m.def(
        "mask_to_sdf",
        [](const MaskArray& mask) { return array_from_grid(mask_to_sdf(mask_from_array(mask))); },
        py::arg("mask"), "Exact Euclidean signed distance field, negative inside.");

    m.def(
        "gaussian_blur",
        [](const GridArray& grid, double sigma) {
            return array_from_grid(gaussian_blur(grid_from_array(grid), sigma));
        },
        py::arg("grid"), py::arg("sigma"));

    m.def(
        "smooth_union",
        [](const std::vector<GridArray>& fields, double tau) {
            std::vector<Grid> grids;
            for (const auto& f : fields) grids.push_back(grid_from_array(f));
            return array_from_grid(smooth_union(grids, tau));
        },
        py::arg("fields"), py::arg("tau"), "Differentiable pixelwise maximum approximation.");

    m.def(
        "iou",
        [](const MaskArray& a, const MaskArray& b) {
            return iou(mask_from_array(a), mask_from_array(b));
        },
        py::arg("a"), py::arg("b"));

    py::class_<SceneSpec>(m, "SceneSpec")
        .def(py::init<>())
        .def_readwrite("scene_width", &SceneSpec::scene_width)
        .def_readwrite("scene_height", &SceneSpec::scene_height)
        .def_readwrite("crowns_min", &SceneSpec::crowns_min)
        .def_readwrite("crowns_max", &SceneSpec::crowns_max)
        .def_readwrite("radius_min", &SceneSpec::radius_min)
        .def_readwrite("radius_max", &SceneSpec::radius_max)
        .def_readwrite("fourier_orders", &SceneSpec::fourier_orders)
        .def_readwrite("fourier_amp", &SceneSpec::fourier_amp)
        .def_readwrite("min_gap", &SceneSpec::min_gap)
        .def_readwrite("blur_sigma", &SceneSpec::blur_sigma)
        .def_readwrite("noise_sigma", &SceneSpec::noise_sigma)
        .def_readwrite("seed_jitter_mean", &SceneSpec::seed_jitter_mean)
        .def_readwrite("baseline_erode_min", &SceneSpec::baseline_erode_min)
        .def_readwrite("baseline_erode_max", &SceneSpec::baseline_erode_max)
        .def_readwrite("baseline_miss_rate", &SceneSpec::baseline_miss_rate)
        .def_readwrite("seed_false_rate", &SceneSpec::seed_false_rate)
        .def_readwrite("rng_seed", &SceneSpec::rng_seed)
        .def_readwrite("model_frame", &SceneSpec::model_frame);

    m.def(
        "render_scene",
        [](const SceneSpec& spec, int scene_index) {
            std::mt19937_64 rng = scene_rng(spec.rng_seed, scene_index);
            const SyntheticScene scene = render_scene(spec, rng);
            py::list gt, baselines;
            for (const BinaryMask& mask : scene.gt_masks) gt.append(array_from_mask(mask));
            for (const Detection& d : scene.baseline_detections) baselines.append(array_from_mask(d.mask));
            py::list seeds;
            for (const Point& s : scene.seeds) seeds.append(py::make_tuple(s.x, s.y));
            py::dict out;
            out["gt_masks"] = gt;
            out["posterior"] = array_from_grid(scene.posterior.grid);
            out["seeds"] = seeds;
            out["baseline_masks"] = baselines;
            out["false_seed_count"] = scene.false_seed_count;
            return out;
        },
        py::arg("spec"), py::arg("scene_index") = 0,
        "Deterministic synthetic scene for (spec, scene_index).");

    m.def(
        "refine",
        [](const GridArray& posterior, const std::vector<std::pair<double, double>>& seeds,
           const ShapeModelBundle& model, double shape_weight, double image_weight,
           double overlap_weight, double union_sharpness, double seed_box_radius, int max_iters) {
            SceneConfig config;
            config.posterior = ProbabilityMap(grid_from_array(posterior));
            for (const auto& [x, y] : seeds) config.seeds.push_back({x, y});
            config.params.shape_weight = shape_weight;
            config.params.image_weight = image_weight;
            config.params.overlap_weight = overlap_weight;
            config.params.union_sharpness = union_sharpness;
            config.params.seed_box_radius = seed_box_radius;
            config.model = &model.model;
            config.prior = &model.prior;
            OptimizerSettings settings;
            settings.max_iters = max_iters;
            const RefinementResult result = refine(config, settings);

            py::list detections;
            for (const DetectionMask& det : result.detections) {
                py::dict d;
                d["mask"] = array_from_mask(det.mask);
                d["centroid"] = py::make_tuple(det.centroid.x, det.centroid.y);
                d["contour_index"] = det.contour_index;
                detections.append(d);
            }
            py::list trace;
            for (const EnergyBreakdown& b : result.energy_trace) trace.append(b.total);
            py::dict out;
            out["detections"] = detections;
            out["pruned"] = result.pruned;
            out["iterations"] = result.iterations;
            out["converged"] = result.converged;
            out["energy_trace"] = trace;
            return out;
        },
        py::arg("posterior"), py::arg("seeds"), py::arg("model"), py::arg("shape_weight") = 1.0,
        py::arg("image_weight") = 1.0, py::arg("overlap_weight") = 5.0,
        py::arg("union_sharpness") = 20.0, py::arg("seed_box_radius") = 10.0,
        py::arg("max_iters") = 500,
        "Refine all seeds on one posterior raster; returns detections and the energy trace.");

    m.def(
        "total_energy",
        [](const GridArray& posterior, const std::vector<std::pair<double, double>>& seeds,
           const ShapeModelBundle& model, const std::vector<Eigen::VectorXd>& alphas,
           const std::vector<std::pair<double, double>>& offsets, double shape_weight,
           double image_weight, double overlap_weight, double union_sharpness,
           double seed_box_radius) {
            SceneConfig config;
            config.posterior = ProbabilityMap(grid_from_array(posterior));
            for (const auto& [x, y] : seeds) config.seeds.push_back({x, y});
            config.params = {shape_weight, image_weight, overlap_weight, union_sharpness,
                             seed_box_radius};
            config.model = &model.model;
            config.prior = &model.prior;
            ContourState state;
            for (size_t i = 0; i < alphas.size(); ++i)
                state.push_back({alphas[i], {offsets[i].first, offsets[i].second}});
            const EnergyBreakdown b = total_energy(state, config);
            py::dict out;
            out["shape"] = b.shape_term;
            out["image"] = b.image_term;
            out["overlap"] = b.overlap_term;
            out["total"] = b.total;
            return out;
        },
        py::arg("posterior"), py::arg("seeds"), py::arg("model"), py::arg("alphas"),
        py::arg("offsets"), py::arg("shape_weight") = 1.0, py::arg("image_weight") = 1.0,
        py::arg("overlap_weight") = 5.0, py::arg("union_sharpness") = 20.0,
        py::arg("seed_box_radius") = 10.0);
}
