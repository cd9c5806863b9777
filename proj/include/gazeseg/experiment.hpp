#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gazeseg/metrics.hpp"
#include "gazeseg/synth.hpp"
#include "gazeseg/trainer.hpp"

namespace gazeseg {

// One component-grid row: which of GazeMix, the perception head and the gaze loss are on.
struct AblationRow {
    std::string name;
    bool gazemix = false;
    bool mgp = false;
    bool gaze_loss = false;
};

// baseline, +GazeMix, +MGP, +MGP+L_gaze, +GazeMix+MGP, +GazeMix+MGP+L_gaze
const std::vector<AblationRow>& ablation_rows();
TrainerConfig apply_row(TrainerConfig cfg, const AblationRow& row);

struct Job {
    std::string name;
    TrainerConfig cfg;
    std::optional<std::filesystem::path> run_dir;
};

struct JobResult {
    std::string name;
    std::uint64_t seed = 0;
    double lambda = 0.0;
    std::optional<double> initial_dice;  // teacher right after pretraining
    ClassMetrics metrics;                // final teacher on the evaluation set
    double seconds = 0.0;
};

// Runs independent trainings on up to `threads` workers; results come back in job order.
std::vector<JobResult> run_jobs(const Dataset& ds, const std::vector<Sample>& eval, const std::vector<Job>& jobs,
                                int threads = 1, const std::function<void(const JobResult&)>& on_done = {});

// Mean of each metric over the results sharing `name`, in first-appearance order.
struct Summary {
    std::string name;
    double lambda = 0.0;
    ClassMetrics mean;
    std::size_t runs = 0;
};
std::vector<Summary> summarize(const std::vector<JobResult>& results);

// `config,dice,jaccard,hd95,asd` rows (and `lambda,...` for a sweep).
std::string ablation_csv(const std::vector<Summary>& rows);
std::string lambda_csv(const std::vector<Summary>& rows);
std::string runs_csv(const std::vector<JobResult>& results);

}  // namespace gazeseg
