#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gazeseg/gaze.hpp"
#include "gazeseg/grid.hpp"

namespace gazeseg {

struct WorldConfig {
    Dims dims{64, 64};
    int num_classes = 3;  // class 0 is background; class c > 0 is drawn as shape kind (c-1) % 3
    int min_shapes = 1;
    int max_shapes = 2;
    double noise_level = 0.03;
    double texture_period = 16.0;
    std::uint64_t seed = 7;
};

struct GazeSimConfig {
    double rate_hz = 60.0;
    int min_points = 800;
    int max_points = 1200;
    double jitter_px = 1.0;
    int saccade_hops = 14;       // relocations between fixation clusters
    int flight_points = 2;       // off-target samples per relocation
    double min_flight_step_px = 8.0;
};

// Background intensity bounds of the textured backdrop (before noise).
inline constexpr double kBackgroundBase = 0.35;
inline constexpr double kBackgroundAmplitude = 0.08;
inline constexpr double kTextureCeiling = kBackgroundBase + kBackgroundAmplitude;
double class_offset(int cls);

struct Sample {
    std::string id;
    Image image;
    std::optional<LabelMap> label;  // present only in the labeled split
    GazeTrace trace;
};

struct Dataset {
    WorldConfig world;
    GazeSimConfig gaze;
    double labeling_ratio = 1.0;
    std::vector<Sample> labeled;
    std::vector<Sample> unlabeled;
    // Ground truth for unlabeled samples, keyed by id. Only evaluation reads it.
    std::map<std::string, LabelMap> hidden_labels;

    std::size_t size() const { return labeled.size() + unlabeled.size(); }
    nlohmann::json manifest() const;
};

// A rendered image and its exact mask, before any split or gaze is attached.
struct RenderedScene {
    Image image;
    LabelMap mask;
};

RenderedScene render_scene(const WorldConfig& cfg, std::uint64_t sample_index);

struct SimulatedGaze {
    GazeTrace trace;
    std::vector<PointClass> intended;  // generator's own fixation/saccade labels
};

// Fixation clusters on every target (centroid, then extreme pixels, then random
// interior pixels) joined by fast off-target flights.
SimulatedGaze simulate_gaze_labeled(const LabelMap& truth, const GazeSimConfig& cfg, std::uint64_t stream_seed);
GazeTrace simulate_gaze(const LabelMap& truth, const GazeSimConfig& cfg, std::uint64_t stream_seed);

Dataset generate_dataset(const WorldConfig& cfg, int n_samples, double labeling_ratio, const GazeSimConfig& gaze = {});
// Generates a disjoint evaluation set from an independent seed stream; all samples carry labels.
std::vector<Sample> generate_eval_samples(const WorldConfig& cfg, int n_samples, const GazeSimConfig& gaze = {});

// Per-sample RNG seed for (seed, index, stream tag); identical in serial and parallel generation.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t tag);

// Dataset directory: manifest.json, img_<id>.f32, lbl_<id>.u8, gaze_<id>.csv, hidden_lbl_<id>.u8.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// Ground truth for any sample: its own label or the hidden one.
const LabelMap& truth_of(const Dataset& ds, const Sample& s);

nlohmann::json to_json(const WorldConfig& cfg);
nlohmann::json to_json(const GazeSimConfig& cfg);
WorldConfig world_from_json(const nlohmann::json& j);
GazeSimConfig gaze_from_json(const nlohmann::json& j);

}  // namespace gazeseg
