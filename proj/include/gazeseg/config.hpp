#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "gazeseg/synth.hpp"
#include "gazeseg/trainer.hpp"

namespace gazeseg {

// Unified run configuration. Sections: world, gaze, mix, model, train, eval.
// Every key is optional; unknown keys are rejected.
struct RunConfig {
    WorldConfig world;
    int samples = 200;
    double labeling_ratio = 0.1;

    GazeSimConfig gaze;
    TrainerConfig train;  // also holds the mix, model and filter settings

    int eval_samples = 64;
    std::vector<double> lambdas{0.0, 0.1, 0.5, 1.0};
    std::vector<std::uint64_t> seeds{0, 1, 2};
};

// `source` names the file in ConfigError messages.
RunConfig run_config_from_json(const nlohmann::json& j, const std::string& source = "<inline>");
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

// Cross-field checks; throws ConfigError naming the offending key.
void validate(const RunConfig& cfg, const std::string& source = "<resolved>");

// GAZESEG_SEED, when set, replaces train.seed.
void apply_env_overrides(RunConfig& cfg);

// Content hash over the given files (path-sorted, name and bytes), git-style hex.
std::string content_hash(const std::vector<std::filesystem::path>& inputs);

// Writes <dir>/run.json: command, resolved config, its hash and the inputs hash.
void write_run_record(const std::filesystem::path& dir, const std::string& command, const RunConfig& cfg,
                      const std::vector<std::filesystem::path>& inputs);

// Every regular file below `dir`, sorted.
std::vector<std::filesystem::path> files_under(const std::filesystem::path& dir);

}  // namespace gazeseg
