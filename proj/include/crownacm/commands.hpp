#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "crownacm/optimizer.hpp"
#include "crownacm/synth.hpp"

namespace crownacm::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Bad key/value or inconsistent settings; maps to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Flat key=value configuration covering every tunable of the pipeline.
/// Files use one `key = value` per line, '#' comments; unknown keys rejected.
/// Command-line --set overrides win over file values.
struct RunConfig {
    SceneSpec scene;
    SceneParams params;
    OptimizerSettings optimizer;
    int jobs = 0;  // 0 means available parallelism

    static const std::vector<std::string>& known_keys();
    void set(const std::string& key, const std::string& value);
    void load_file(const std::filesystem::path& path);
    std::string echo() const;  // lossless key=value dump, fixed key order
    int effective_jobs() const;
};

// Subcommand bodies; each returns the process exit code:
// 0 success, 1 check failure, 2 usage/config error, 3 I/O error.
int cmd_synth(const RunConfig& config, int n_scenes, const std::filesystem::path& out_dir);
int cmd_learn(const std::filesystem::path& masks_dir, int modes,
              const std::filesystem::path& out_model, int frame = 92);
int cmd_refine(const std::filesystem::path& input_dir, const std::filesystem::path& model_path,
               const RunConfig& config, const std::filesystem::path& out_dir);
int cmd_eval(const std::filesystem::path& gt_dir, const std::filesystem::path& det_dir,
             const std::string& det_prefix, const std::filesystem::path& report_path);
int cmd_gradcheck(const std::filesystem::path& model_path, const RunConfig& config, int trials);
int cmd_demo(const RunConfig& config, int n_scenes, const std::filesystem::path& out_dir);

/// Full argv surface (subcommands, flags, --version); used by tools/ and tests.
int run_cli(int argc, const char* const* argv);

}  // namespace crownacm::cli
