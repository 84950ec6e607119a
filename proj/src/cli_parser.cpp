#include <CLI11.hpp>
#include <iostream>

#include "crownacm/commands.hpp"

namespace crownacm::cli {

namespace {

// Applies --config file first, then --set overrides in order.
RunConfig build_config(const std::string& config_file, const std::vector<std::string>& overrides) {
    RunConfig config;
    if (!config_file.empty()) config.load_file(config_file);
    for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return config;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"multi-object contour refinement on class-probability rasters"};
    app.set_version_flag("--version", std::string("crownacm ") + kVersion);
    app.require_subcommand(1);

    std::string config_file;
    std::vector<std::string> overrides;
    int jobs = 0;
    app.add_option("--config", config_file, "key=value config file")->expected(1);
    app.add_option("--set", overrides, "override one config key, e.g. --set rng_seed=7");
    app.add_option("--jobs", jobs, "worker threads over scenes (0 = all cores)");

    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    int synth_n = 10;
    std::string synth_out;
    synth->add_option("-n,--scenes", synth_n, "number of scenes")->check(CLI::PositiveNumber);
    synth->add_option("-o,--out", synth_out, "output corpus directory")->required();

    auto* learn = app.add_subcommand("learn", "learn the eigenshape model from crown masks");
    std::string learn_in, learn_out;
    int learn_modes = 32, learn_frame = 92;
    learn->add_option("-i,--masks", learn_in, "mask directory (flat .pgm or corpus gt_*)")->required();
    learn->add_option("-o,--out", learn_out, "output model file")->required();
    learn->add_option("-k,--modes", learn_modes, "number of eigenmodes");
    learn->add_option("--frame", learn_frame, "alignment frame in pixels");

    auto* refine = app.add_subcommand("refine", "refine seeds on posterior rasters");
    std::string refine_in, refine_model, refine_out;
    int refine_max_iters = -1;
    refine->add_option("-i,--scenes", refine_in, "scene or corpus directory")->required();
    refine->add_option("-m,--model", refine_model, "eigenshape model file")->required();
    refine->add_option("-o,--out", refine_out, "output detections directory")->required();
    refine->add_option("--max-iters", refine_max_iters, "override optimizer iteration cap");

    auto* eval = app.add_subcommand("eval", "match detections against ground truth");
    std::string eval_gt, eval_det, eval_prefix = "det_", eval_report;
    eval->add_option("--gt", eval_gt, "ground-truth corpus directory")->required();
    eval->add_option("--det", eval_det, "detections directory")->required();
    eval->add_option("--det-prefix", eval_prefix, "detection mask filename prefix");
    eval->add_option("--report", eval_report, "write the JSON report here");

    auto* gradcheck = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients");
    std::string gradcheck_model;
    int gradcheck_trials = 20;
    gradcheck->add_option("-m,--model", gradcheck_model, "eigenshape model file")->required();
    gradcheck->add_option("--trials", gradcheck_trials, "number of random states");

    auto* demo = app.add_subcommand("demo", "synth -> learn -> refine -> eval, end to end");
    std::string demo_out;
    int demo_n = 75;
    demo->add_option("-o,--out", demo_out, "output directory")->required();
    demo->add_option("-n,--scenes", demo_n, "test corpus size")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;  // usage errors map to the config exit code
    }

    try {
        RunConfig config = build_config(config_file, overrides);
        if (jobs > 0) config.jobs = jobs;
        if (synth->parsed()) return cmd_synth(config, synth_n, synth_out);
        if (learn->parsed()) return cmd_learn(learn_in, learn_modes, learn_out, learn_frame);
        if (refine->parsed()) {
            if (refine_max_iters >= 0) config.optimizer.max_iters = refine_max_iters;
            return cmd_refine(refine_in, refine_model, config, refine_out);
        }
        if (eval->parsed()) return cmd_eval(eval_gt, eval_det, eval_prefix, eval_report);
        if (gradcheck->parsed()) return cmd_gradcheck(gradcheck_model, config, gradcheck_trials);
        if (demo->parsed()) return cmd_demo(config, demo_n, demo_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (dynamic_cast<const IoError*>(&e)) return 3;
        return 2;
    }
    return 2;
}

}  // namespace crownacm::cli
