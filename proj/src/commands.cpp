#include "crownacm/commands.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace crownacm::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// --- configuration -----------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as a number");
    }
}

long long parse_int(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const long long v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as an integer");
    }
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

const std::vector<std::string>& RunConfig::known_keys() {
    static const std::vector<std::string> keys = {
        // scene generator
        "scene_width", "scene_height", "crowns_min", "crowns_max", "radius_min", "radius_max",
        "fourier_orders", "fourier_amp", "min_gap", "blur_sigma", "noise_sigma",
        "seed_jitter_mean", "baseline_erode_min", "baseline_erode_max", "baseline_miss_rate",
        "seed_false_rate", "rng_seed", "model_frame",
        // energy
        "shape_weight", "image_weight", "overlap_weight", "union_sharpness", "seed_box_radius",
        // optimizer
        "memory", "max_iters", "rel_tol", "grad_tol", "armijo_c", "backtrack_shrink",
        "max_line_search", "prune_area_min",
        // execution
        "jobs"};
    return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "scene_width") scene.scene_width = static_cast<int>(parse_int(key, value));
    else if (key == "scene_height") scene.scene_height = static_cast<int>(parse_int(key, value));
    else if (key == "crowns_min") scene.crowns_min = static_cast<int>(parse_int(key, value));
    else if (key == "crowns_max") scene.crowns_max = static_cast<int>(parse_int(key, value));
    else if (key == "radius_min") scene.radius_min = parse_double(key, value);
    else if (key == "radius_max") scene.radius_max = parse_double(key, value);
    else if (key == "fourier_orders") scene.fourier_orders = static_cast<int>(parse_int(key, value));
    else if (key == "fourier_amp") scene.fourier_amp = parse_double(key, value);
    else if (key == "min_gap") scene.min_gap = parse_double(key, value);
    else if (key == "blur_sigma") scene.blur_sigma = parse_double(key, value);
    else if (key == "noise_sigma") scene.noise_sigma = parse_double(key, value);
    else if (key == "seed_jitter_mean") scene.seed_jitter_mean = parse_double(key, value);
    else if (key == "baseline_erode_min") scene.baseline_erode_min = parse_double(key, value);
    else if (key == "baseline_erode_max") scene.baseline_erode_max = parse_double(key, value);
    else if (key == "baseline_miss_rate") scene.baseline_miss_rate = parse_double(key, value);
    else if (key == "seed_false_rate") scene.seed_false_rate = parse_double(key, value);
    else if (key == "rng_seed") scene.rng_seed = static_cast<uint64_t>(parse_int(key, value));
    else if (key == "model_frame") scene.model_frame = static_cast<int>(parse_int(key, value));
    else if (key == "shape_weight") params.shape_weight = parse_double(key, value);
    else if (key == "image_weight") params.image_weight = parse_double(key, value);
    else if (key == "overlap_weight") params.overlap_weight = parse_double(key, value);
    else if (key == "union_sharpness") params.union_sharpness = parse_double(key, value);
    else if (key == "seed_box_radius") params.seed_box_radius = parse_double(key, value);
    else if (key == "memory") optimizer.memory = static_cast<int>(parse_int(key, value));
    else if (key == "max_iters") optimizer.max_iters = static_cast<int>(parse_int(key, value));
    else if (key == "rel_tol") optimizer.rel_tol = parse_double(key, value);
    else if (key == "grad_tol") optimizer.grad_tol = parse_double(key, value);
    else if (key == "armijo_c") optimizer.armijo_c = parse_double(key, value);
    else if (key == "backtrack_shrink") optimizer.backtrack_shrink = parse_double(key, value);
    else if (key == "max_line_search") optimizer.max_line_search = static_cast<int>(parse_int(key, value));
    else if (key == "prune_area_min") optimizer.prune_area_min = parse_double(key, value);
    else if (key == "jobs") jobs = static_cast<int>(parse_int(key, value));
    else throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::load_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + " is not key=value: '" +
                              line + "'");
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

std::string RunConfig::echo() const {
    std::ostringstream os;
    os << "scene_width=" << scene.scene_width << "\nscene_height=" << scene.scene_height
       << "\ncrowns_min=" << scene.crowns_min << "\ncrowns_max=" << scene.crowns_max
       << "\nradius_min=" << fmt_double(scene.radius_min)
       << "\nradius_max=" << fmt_double(scene.radius_max)
       << "\nfourier_orders=" << scene.fourier_orders
       << "\nfourier_amp=" << fmt_double(scene.fourier_amp)
       << "\nmin_gap=" << fmt_double(scene.min_gap)
       << "\nblur_sigma=" << fmt_double(scene.blur_sigma)
       << "\nnoise_sigma=" << fmt_double(scene.noise_sigma)
       << "\nseed_jitter_mean=" << fmt_double(scene.seed_jitter_mean)
       << "\nbaseline_erode_min=" << fmt_double(scene.baseline_erode_min)
       << "\nbaseline_erode_max=" << fmt_double(scene.baseline_erode_max)
       << "\nbaseline_miss_rate=" << fmt_double(scene.baseline_miss_rate)
       << "\nseed_false_rate=" << fmt_double(scene.seed_false_rate)
       << "\nrng_seed=" << scene.rng_seed << "\nmodel_frame=" << scene.model_frame
       << "\nshape_weight=" << fmt_double(params.shape_weight)
       << "\nimage_weight=" << fmt_double(params.image_weight)
       << "\noverlap_weight=" << fmt_double(params.overlap_weight)
       << "\nunion_sharpness=" << fmt_double(params.union_sharpness)
       << "\nseed_box_radius=" << fmt_double(params.seed_box_radius)
       << "\nmemory=" << optimizer.memory << "\nmax_iters=" << optimizer.max_iters
       << "\nrel_tol=" << fmt_double(optimizer.rel_tol)
       << "\ngrad_tol=" << fmt_double(optimizer.grad_tol)
       << "\narmijo_c=" << fmt_double(optimizer.armijo_c)
       << "\nbacktrack_shrink=" << fmt_double(optimizer.backtrack_shrink)
       << "\nmax_line_search=" << optimizer.max_line_search
       << "\nprune_area_min=" << fmt_double(optimizer.prune_area_min) << "\njobs=" << jobs << "\n";
    return os.str();
}

int RunConfig::effective_jobs() const {
    if (jobs > 0) return jobs;
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

// --- shared helpers ------------------------------------------------------------------

namespace {

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    jobs = std::max(1, std::min(jobs, n));
    if (jobs == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

struct SceneRef {
    std::string id;
    fs::path dir;
};

// A directory holding posterior.fras is one scene; otherwise its scene_*
// subdirectories, sorted by name.
std::vector<SceneRef> discover_scenes(const fs::path& dir) {
    if (fs::exists(dir / "posterior.fras")) return {{dir.filename().string(), dir}};
    std::vector<SceneRef> scenes;
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_directory()) continue;
        const std::string name = entry.path().filename().string();
        if (name.rfind("scene_", 0) == 0) scenes.push_back({name, entry.path()});
    }
    std::sort(scenes.begin(), scenes.end(),
              [](const SceneRef& a, const SceneRef& b) { return a.id < b.id; });
    if (scenes.empty()) throw IoError("no scenes found under " + dir.string());
    return scenes;
}

std::vector<Point> load_seeds(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open seeds file " + path.string());
    std::vector<Point> seeds;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        Point p;
        if (std::sscanf(line.c_str(), "%lf %lf", &p.x, &p.y) != 2)
            throw IoError("bad seeds line '" + line + "' in " + path.string());
        seeds.push_back(p);
    }
    return seeds;
}

// Masks matching `prefix` directly inside the scene directory, sorted by name.
std::vector<fs::path> scene_masks(const fs::path& dir, const std::string& prefix) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name.rfind(prefix, 0) == 0 && name.size() > 4 &&
            name.substr(name.size() - 4) == ".pgm")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<Detection> load_detections(const std::vector<SceneRef>& scenes,
                                       const std::string& prefix) {
    std::vector<Detection> dets;
    for (const SceneRef& scene : scenes) {
        if (!fs::exists(scene.dir)) continue;
        for (const fs::path& file : scene_masks(scene.dir, prefix)) {
            Detection d;
            d.image_id = scene.id;
            d.mask = load_mask_pgm(file);
            if (d.mask.area() == 0) continue;  // empty masks carry no detection
            d.centroid = centroid(d.mask);
            dets.push_back(std::move(d));
        }
    }
    return dets;
}

ordered_json report_to_json(const MatchReport& report, const CrowdingCurve& curve,
                            size_t n_refs, size_t n_dets) {
    ordered_json crowding = ordered_json::array();
    for (const CrowdingBin& bin : curve.bins)
        crowding.push_back({{"bin", bin.label},
                            {"images", bin.images},
                            {"refs", bin.refs},
                            {"dets", bin.dets},
                            {"matched", bin.matched},
                            {"recall", bin.recall},
                            {"precision", bin.precision}});
    ordered_json per_image = ordered_json::object();
    for (const auto& [id, tally] : report.per_image)
        per_image[id] = {{"refs", tally.refs}, {"dets", tally.dets}, {"matched", tally.matched}};
    return ordered_json{{"schema", "crownacm-report-v1"},
                        {"version", kVersion},
                        {"iou_threshold", report.iou_threshold},
                        {"references", n_refs},
                        {"detections", n_dets},
                        {"matched", report.pairs.size()},
                        {"unmatched_refs", report.unmatched_refs},
                        {"unmatched_dets", report.unmatched_dets},
                        {"recall", report.recall},
                        {"precision", report.precision},
                        {"mean_iou", report.mean_iou},
                        {"mean_centroid_distance", report.mean_centroid_distance},
                        {"no_detections", report.no_detections},
                        {"crowding", crowding},
                        {"per_image", per_image}};
}

std::string report_table(const MatchReport& report, const CrowdingCurve& curve, size_t n_refs,
                         size_t n_dets) {
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof(line), "%-12s %10s %10s %9s %11s %13s\n", "references",
                  "detections", "matched", "recall", "precision", "mean_iou");
    os << line;
    std::snprintf(line, sizeof(line), "%-12zu %10zu %10zu %9.4f %11.4f %13.4f\n", n_refs, n_dets,
                  report.pairs.size(), report.recall, report.precision, report.mean_iou);
    os << line;
    std::snprintf(line, sizeof(line), "mean centroid distance: %.4f px%s\n",
                  report.mean_centroid_distance, report.no_detections ? "  [no detections]" : "");
    os << line;
    os << "\ncrowding (by reference crowns per image):\n";
    std::snprintf(line, sizeof(line), "%-6s %8s %8s %8s %9s %11s\n", "bin", "images", "refs",
                  "matched", "recall", "precision");
    os << line;
    for (const CrowdingBin& bin : curve.bins) {
        std::snprintf(line, sizeof(line), "%-6s %8d %8d %8d %9.4f %11.4f\n", bin.label.c_str(),
                      bin.images, bin.refs, bin.matched, bin.recall, bin.precision);
        os << line;
    }
    return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failure on " + path.string());
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const IoError*>(&e)) return 3;
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const std::invalid_argument*>(&e)) return 2;
    return 1;
}

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

void print_banner(std::ostream& os, const RunConfig& config) {
    os << "# crownacm " << kVersion << "\n";
    std::istringstream echo(config.echo());
    std::string line;
    while (std::getline(echo, line)) os << "# " << line << "\n";
}

}  // namespace

// --- synth ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& config, int n_scenes, const fs::path& out_dir) {
    return guarded([&] {
        print_banner(std::cout, config);
        const auto entries = emit_corpus(config.scene, n_scenes, out_dir);
        int crowns = 0, seeds = 0;
        for (const auto& e : entries) {
            crowns += e.crowns;
            seeds += e.seeds;
        }
        std::cout << "wrote " << entries.size() << " scenes, " << crowns << " crowns, " << seeds
                  << " seeds to " << out_dir.string() << "\n";
        return 0;
    });
}

// --- learn ---------------------------------------------------------------------------

namespace {

std::vector<fs::path> collect_mask_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".pgm")
            files.push_back(entry.path());
    if (files.empty()) {
        // corpus layout: pick up the ground-truth masks of every scene
        for (const auto& entry : fs::recursive_directory_iterator(dir))
            if (entry.is_regular_file() && entry.path().extension() == ".pgm" &&
                entry.path().filename().string().rfind("gt_", 0) == 0)
                files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no .pgm masks found under " + dir.string());
    return files;
}

}  // namespace

int cmd_learn(const fs::path& masks_dir, int modes, const fs::path& out_model, int frame) {
    return guarded([&] {
        std::cout << "# crownacm " << kVersion << "\n";
        const std::vector<fs::path> files = collect_mask_files(masks_dir);

        AlignedShapeSet set;
        set.frame = frame;
        set.source_count = static_cast<int>(files.size());
        for (const fs::path& file : files) {
            const BinaryMask mask = load_mask_pgm(file);
            try {
                set.sdfs.push_back(mask_to_sdf(align_mask(mask, frame)));
            } catch (const std::invalid_argument& e) {
                throw std::invalid_argument(std::string(e.what()) + " (" + file.string() + ")");
            }
        }
        set = augment(set);
        std::cout << "learning from " << set.source_count << " masks (" << set.sdfs.size()
                  << " after augmentation), k=" << modes << "\n";

        ShapeModelBundle bundle;
        bundle.model = learn_eigenshape_model(set, modes);
        bundle.prior = learn_kde_prior(bundle.model, set);
        save_shape_model(bundle, out_model);

        std::cout << "eigenvalue spectrum:";
        for (int j = 0; j < bundle.model.mode_count(); ++j) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), " %.4g", bundle.model.eigenvalues(j));
            std::cout << buf;
        }
        std::cout << "\nkde bandwidth: " << fmt_double(bundle.prior.bandwidth) << "\n";
        std::cout << "wrote " << out_model.string() << "\n";
        return 0;
    });
}

// --- refine --------------------------------------------------------------------------

namespace {

struct SceneOutcome {
    std::string id;
    int seeds = 0;
    int kept = 0;
    int pruned = 0;
    int iterations = 0;
    bool converged = true;
};

SceneOutcome refine_scene(const SceneRef& scene, const ShapeModelBundle& bundle,
                          const RunConfig& config, const fs::path& out_dir) {
    const Grid posterior = load_float_raster(scene.dir / "posterior.fras");
    const fs::path seeds_path = scene.dir / "seeds.txt";
    if (!fs::exists(seeds_path)) throw IoError("missing seeds file " + seeds_path.string());
    const std::vector<Point> seeds = load_seeds(seeds_path);

    fs::create_directories(out_dir);
    std::ofstream log(out_dir / "refine.log", std::ios::trunc);
    log << "# crownacm " << kVersion << "\n# scene " << scene.id << "\n";
    std::istringstream echo(config.echo());
    std::string line;
    while (std::getline(echo, line)) log << "# " << line << "\n";

    SceneOutcome outcome;
    outcome.id = scene.id;
    outcome.seeds = static_cast<int>(seeds.size());

    std::ofstream index(out_dir / "detections.jsonl", std::ios::trunc);
    if (!index) throw IoError("cannot open detections index in " + out_dir.string());

    if (seeds.empty()) {
        log << "# no seeds; nothing to refine\n";
        return outcome;
    }

    SceneConfig scfg;
    scfg.posterior = ProbabilityMap(posterior);
    scfg.seeds = seeds;
    scfg.params = config.params;
    scfg.model = &bundle.model;
    scfg.prior = &bundle.prior;

    const RefinementResult result = refine(scfg, config.optimizer, &log);
    outcome.kept = static_cast<int>(result.detections.size());
    outcome.pruned = static_cast<int>(result.pruned.size());
    outcome.iterations = result.iterations;
    outcome.converged = result.converged;

    for (const DetectionMask& det : result.detections) {
        char fn[32];
        std::snprintf(fn, sizeof(fn), "det_%03d.pgm", det.contour_index);
        save_mask_pgm(det.mask, out_dir / fn);
        index << ordered_json{{"image", scene.id},
                              {"detection", det.contour_index},
                              {"x", det.centroid.x},
                              {"y", det.centroid.y},
                              {"area", det.mask.area()},
                              {"pruned", false}}
                     .dump()
              << "\n";
    }
    for (int idx : result.pruned) {
        index << ordered_json{{"image", scene.id},
                              {"detection", idx},
                              {"x", result.final_state[idx].offset.x},
                              {"y", result.final_state[idx].offset.y},
                              {"area", 0},
                              {"pruned", true}}
                     .dump()
              << "\n";
    }
    if (!index) throw IoError("write failure on detections index in " + out_dir.string());
    return outcome;
}

void refine_corpus(const fs::path& input_dir, const ShapeModelBundle& bundle,
                   const RunConfig& config, const fs::path& out_dir) {
    const std::vector<SceneRef> scenes = discover_scenes(input_dir);
    fs::create_directories(out_dir);
    std::vector<SceneOutcome> outcomes(scenes.size());
    parallel_for(static_cast<int>(scenes.size()), config.effective_jobs(), [&](int i) {
        outcomes[i] = refine_scene(scenes[i], bundle, config, out_dir / scenes[i].id);
    });
    int seeds = 0, kept = 0, pruned = 0;
    for (const SceneOutcome& o : outcomes) {
        seeds += o.seeds;
        kept += o.kept;
        pruned += o.pruned;
    }
    std::cout << "refined " << scenes.size() << " scenes: " << seeds << " seeds -> " << kept
              << " detections (" << pruned << " pruned)\n";
}

}  // namespace

int cmd_refine(const fs::path& input_dir, const fs::path& model_path, const RunConfig& config,
               const fs::path& out_dir) {
    return guarded([&] {
        print_banner(std::cout, config);
        const ShapeModelBundle bundle = load_shape_model(model_path);
        refine_corpus(input_dir, bundle, config, out_dir);
        return 0;
    });
}

// --- eval ----------------------------------------------------------------------------

int cmd_eval(const fs::path& gt_dir, const fs::path& det_dir, const std::string& det_prefix,
             const fs::path& report_path) {
    return guarded([&] {
        if (!fs::is_directory(det_dir)) throw IoError("not a directory: " + det_dir.string());
        const std::vector<SceneRef> gt_scenes = discover_scenes(gt_dir);
        const std::vector<Detection> refs = load_detections(gt_scenes, "gt_");

        std::vector<SceneRef> det_scenes;
        for (const SceneRef& scene : gt_scenes) {
            const fs::path candidate =
                fs::equivalent(gt_dir, det_dir) ? scene.dir : det_dir / scene.id;
            det_scenes.push_back({scene.id, candidate});
        }
        const std::vector<Detection> dets = load_detections(det_scenes, det_prefix);

        const MatchReport report = match_detections(refs, dets, 0.5);
        const CrowdingCurve curve = recall_vs_crowding(report);
        const std::string table = report_table(report, curve, refs.size(), dets.size());
        std::cout << "# crownacm " << kVersion << "\n" << table;

        if (!report_path.empty()) {
            write_text(report_path, report_to_json(report, curve, refs.size(), dets.size()).dump(2) + "\n");
            std::cout << "wrote " << report_path.string() << "\n";
        }
        return 0;
    });
}

// --- gradcheck -------------------------------------------------------------------------

namespace {

struct GradCheckOutcome {
    double max_rel_error = 0.0;
    int worst_trial = -1;
    int worst_coordinate = -1;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Relative error with a floor tied to the gradient scale, so near-zero
// components are judged against the vector's magnitude rather than 0/0 noise.
double gradient_rel_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric,
                          int* worst) {
    const double floor = 1e-3 * std::max(1e-8, numeric.cwiseAbs().maxCoeff());
    double worst_err = 0.0;
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
        const double denom = std::max({std::abs(analytic(i)), std::abs(numeric(i)), floor});
        const double err = std::abs(analytic(i) - numeric(i)) / denom;
        if (err > worst_err) {
            worst_err = err;
            if (worst) *worst = static_cast<int>(i);
        }
    }
    return worst_err;
}

}  // namespace

int cmd_gradcheck(const fs::path& model_path, const RunConfig& config, int trials) {
    return guarded([&] {
        print_banner(std::cout, config);
        const ShapeModelBundle bundle = load_shape_model(model_path);
        const int k = bundle.model.mode_count();
        const int scene_side = 128;
        const int contour_choices[3] = {1, 3, 8};

        GradCheckOutcome outcome;
        for (int trial = 0; trial < trials; ++trial) {
            std::mt19937_64 rng = scene_rng(config.scene.rng_seed, 1000 + trial);
            const int m = contour_choices[trial % 3];

            // Smooth random posterior keeps the image term informative.
            std::uniform_real_distribution<double> unit(0.05, 0.95);
            Grid raw(scene_side, scene_side);
            for (double& v : raw.values) v = unit(rng);
            SceneConfig scfg;
            scfg.posterior = ProbabilityMap(gaussian_blur(raw, 2.0));
            scfg.params = config.params;
            scfg.model = &bundle.model;
            scfg.prior = &bundle.prior;

            std::uniform_real_distribution<double> pos(40.0, scene_side - 40.0);
            for (int i = 0; i < m; ++i) scfg.seeds.push_back({pos(rng), pos(rng)});

            ContourState state(m);
            std::normal_distribution<double> gauss(0.0, 1.0);
            std::uniform_real_distribution<double> fraction(0.1, 0.9);
            std::uniform_int_distribution<int> whole(-3, 3);
            for (int i = 0; i < m; ++i) {
                state[i].alpha = Eigen::VectorXd(k);
                for (int j = 0; j < k; ++j)
                    state[i].alpha(j) =
                        0.5 * std::sqrt(std::max(bundle.model.eigenvalues(j), 0.0)) * gauss(rng);
                // fractional offsets keep a margin from bilinear kink lines
                state[i].offset.x = scfg.seeds[i].x + whole(rng) + fraction(rng) - 0.5;
                state[i].offset.y = scfg.seeds[i].y + whole(rng) + fraction(rng) - 0.5;
            }

            const Eigen::VectorXd analytic = energy_gradient(state, scfg);
            const Eigen::VectorXd numeric = finite_difference_gradient(state, scfg, 1e-4);
            int worst = -1;
            const double err = gradient_rel_error(analytic, numeric, &worst);
            if (err > outcome.max_rel_error) {
                outcome.max_rel_error = err;
                outcome.worst_trial = trial;
                outcome.worst_coordinate = worst;
                outcome.analytic = analytic(worst);
                outcome.numeric = numeric(worst);
            }
        }

        char buf[256];
        std::snprintf(buf, sizeof(buf),
                      "gradcheck: %d trials, max rel error %.3e (trial %d, coordinate %d: "
                      "analytic %.12e vs finite-difference %.12e)\n",
                      trials, outcome.max_rel_error, outcome.worst_trial, outcome.worst_coordinate,
                      outcome.analytic, outcome.numeric);
        std::cout << buf;
        if (outcome.max_rel_error < 1e-4) {
            std::cout << "gradcheck: PASS\n";
            return 0;
        }
        std::cout << "gradcheck: FAIL\n";
        return 1;
    });
}

// --- demo ----------------------------------------------------------------------------

int cmd_demo(const RunConfig& config, int n_scenes, const fs::path& out_dir) {
    return guarded([&] {
        print_banner(std::cout, config);
        fs::create_directories(out_dir);

        // Training shapes come from a disjoint rng stream of the same generator.
        RunConfig train_config = config;
        train_config.scene.rng_seed = config.scene.rng_seed ^ 0x747261696eULL;
        train_config.scene.baseline_miss_rate = 0.0;
        train_config.scene.seed_false_rate = 0.0;
        const int train_scenes = 8;

        std::cout << "[1/5] synthesizing training shapes\n";
        emit_corpus(train_config.scene, train_scenes, out_dir / "train_corpus");

        std::cout << "[2/5] learning eigenshape model\n";
        const fs::path model_path = out_dir / "model.esm";
        int rc = cmd_learn(out_dir / "train_corpus", 32, model_path, config.scene.model_frame);
        if (rc != 0) return rc;

        std::cout << "[3/5] synthesizing test corpus (" << n_scenes << " scenes)\n";
        emit_corpus(config.scene, n_scenes, out_dir / "test_corpus");

        std::cout << "[4/5] refining\n";
        const ShapeModelBundle bundle = load_shape_model(model_path);
        refine_corpus(out_dir / "test_corpus", bundle, config, out_dir / "detections");

        std::cout << "[5/5] evaluating\n";
        const std::vector<SceneRef> gt_scenes = discover_scenes(out_dir / "test_corpus");
        const std::vector<Detection> refs = load_detections(gt_scenes, "gt_");
        const std::vector<Detection> baseline = load_detections(gt_scenes, "baseline_");
        std::vector<SceneRef> det_scenes;
        for (const SceneRef& s : gt_scenes)
            det_scenes.push_back({s.id, out_dir / "detections" / s.id});
        const std::vector<Detection> refined = load_detections(det_scenes, "det_");

        const MatchReport baseline_report = match_detections(refs, baseline, 0.5);
        const MatchReport refined_report = match_detections(refs, refined, 0.5);
        const CrowdingCurve baseline_curve = recall_vs_crowding(baseline_report);
        const CrowdingCurve refined_curve = recall_vs_crowding(refined_report);

        std::ostringstream table;
        char line[256];
        std::snprintf(line, sizeof(line), "%-10s %8s %10s %9s %12s %11s\n", "method", "recall",
                      "precision", "mean_iou", "centroid_px", "detections");
        table << line;
        std::snprintf(line, sizeof(line), "%-10s %8.4f %10.4f %9.4f %12.4f %11zu\n", "baseline",
                      baseline_report.recall, baseline_report.precision, baseline_report.mean_iou,
                      baseline_report.mean_centroid_distance, baseline.size());
        table << line;
        std::snprintf(line, sizeof(line), "%-10s %8.4f %10.4f %9.4f %12.4f %11zu\n", "refined",
                      refined_report.recall, refined_report.precision, refined_report.mean_iou,
                      refined_report.mean_centroid_distance, refined.size());
        table << line;
        table << "\nrecall by crowding bin (refs per image):\n";
        std::snprintf(line, sizeof(line), "%-6s %16s %16s\n", "bin", "baseline", "refined");
        table << line;
        for (size_t i = 0; i < baseline_curve.bins.size(); ++i) {
            std::snprintf(line, sizeof(line), "%-6s %16.4f %16.4f\n",
                          baseline_curve.bins[i].label.c_str(), baseline_curve.bins[i].recall,
                          refined_curve.bins[i].recall);
            table << line;
        }

        fs::create_directories(out_dir / "report");
        write_text(out_dir / "report" / "comparison.txt", table.str());
        const ordered_json report = {
            {"schema", "crownacm-comparison-v1"},
            {"version", kVersion},
            {"baseline", report_to_json(baseline_report, baseline_curve, refs.size(), baseline.size())},
            {"refined", report_to_json(refined_report, refined_curve, refs.size(), refined.size())}};
        write_text(out_dir / "report" / "report.json", report.dump(2) + "\n");
        std::cout << table.str();
        std::cout << "wrote " << (out_dir / "report").string() << "\n";
        return 0;
    });
}

}  // namespace crownacm::cli
