#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gazeseg/gazemix.hpp"
#include "gazeseg/losses.hpp"
#include "gazeseg/metrics.hpp"
#include "gazeseg/model.hpp"
#include "gazeseg/synth.hpp"

namespace gazeseg {

struct TrainerConfig {
    int batch_size = 8;
    int iterations = 2000;
    double lr = 0.01;
    double ema_decay = 0.99;
    double lambda = 0.5;
    int pretrain_iterations = 500;
    std::uint64_t seed = 0;

    // Ablation switches. With gazemix off the step trains on flipped source
    // images (plain mean teacher); with gaze_loss off lambda is forced to 0.
    bool gazemix = true;
    bool gaze_loss = true;
    bool flips = true;

    // Pixels whose teacher confidence is below this are left unsupervised; 0 disables.
    double pseudo_confidence = 0.0;

    int val_every = 0;          // 0: validate only at the start and the end
    int checkpoint_every = 0;   // 0: only final checkpoints

    UNetConfig model;
    PrepareConfig prepare;

    double effective_lambda() const { return (gaze_loss && model.mgp) ? lambda : 0.0; }
};

nlohmann::json to_json(const TrainerConfig& cfg);

struct TrainerState {
    ParamSet student;
    ParamSet teacher;
    std::int64_t iteration = 0;
    std::vector<LossReport> history;
};

struct TrainingData {
    std::vector<PreparedSample> labeled;
    std::vector<PreparedSample> unlabeled;
};

TrainingData prepare_training_data(const Dataset& ds, const PrepareConfig& cfg);

struct StepBatch {
    std::vector<PreparedSample> labeled;        // x_f^l
    std::vector<PreparedSample> unlabeled_fg;   // x_f^u
    std::vector<PreparedSample> unlabeled_bg;   // x_b^u
};

// Draws the batch for `iteration` from an RNG stream keyed by (seed, iteration).
StepBatch sample_batch(const TrainingData& data, const TrainerConfig& cfg, std::int64_t iteration);

PreparedSample flipped(const PreparedSample& s, bool horizontal, bool vertical);

// The inputs and targets one student update is computed from.
struct StepInputs {
    nd::Tensor images;                  // 2B x 1 x H x W: labeled-side then unlabeled-side
    nd::Tensor heatmaps;                // 2B x 1 x H x W
    std::vector<std::uint8_t> targets;  // 2B*H*W
    std::vector<std::uint8_t> gt_mask;  // pixels supervised by l_gt
    std::vector<std::uint8_t> pse_mask; // pixels supervised by l_pse
    std::vector<std::string> ids;
};

StepInputs build_step_inputs(const StepBatch& batch, const ParamSet& teacher, const TrainerConfig& cfg);

struct StepLoss {
    nd::Tensor l_all;
    LossReport report;
};

// Student losses on prepared inputs (records a graph on the student).
StepLoss step_loss(const StepInputs& in, const ParamSet& student, const TrainerConfig& cfg);

// theta_t <- gamma * theta_t + (1 - gamma) * theta_s
void ema_update(ParamSet& teacher, const ParamSet& student, double gamma);
void sgd_update(ParamSet& params, double lr);

LossReport train_step(TrainerState& state, const StepBatch& batch, const TrainerConfig& cfg);

// Fresh weights for cfg.seed; pretraining starts here.
ParamSet initial_params(const TrainerConfig& cfg);

// Called after every pretraining update with the 1-based step, its loss and the params.
using PretrainCallback = std::function<void(int step, double loss, const ParamSet& params)>;

// Supervised teacher training on labeled samples plus labeled-labeled mixes.
ParamSet pretrain_teacher(const TrainingData& data, const TrainerConfig& cfg, const PretrainCallback& on_step = {});

// Argmax class maps, evaluated batch-wise without a graph.
std::vector<LabelMap> predict(const ParamSet& params, const UNetConfig& cfg, const std::vector<const Image*>& images);

struct EvalResult {
    std::vector<MetricReport> reports;
    ClassMetrics macro;
};

EvalResult evaluate_params(const ParamSet& params, const UNetConfig& cfg, const std::vector<Sample>& samples);

struct LogEntry {
    std::int64_t iter = 0;
    LossReport loss;
    std::optional<double> val_dice;
};

nlohmann::json to_json(const LogEntry& e);

struct TrainOptions {
    std::optional<std::filesystem::path> run_dir;  // log + checkpoints land here when set
    const std::vector<Sample>* validation = nullptr;
    std::function<void(const LogEntry&)> on_log;
};

struct TrainResult {
    TrainerState state;
    std::vector<LogEntry> log;
    std::optional<double> initial_val_dice;
    std::optional<double> final_val_dice;
};

TrainResult train(const Dataset& ds, const TrainerConfig& cfg, const TrainOptions& opts = {});

nd::Tensor images_to_tensor(const std::vector<const Image*>& images);

}  // namespace gazeseg
