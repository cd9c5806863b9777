#include "gazeseg/experiment.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

#include "gazeseg/error.hpp"

namespace gazeseg {

namespace {

std::string cell(const std::optional<double>& v) {
    if (!v) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return buf;
}

std::string metric_cells(const ClassMetrics& m) {
    return cell(m.dice) + "," + cell(m.jaccard) + "," + cell(m.hd95_px) + "," + cell(m.asd_px);
}

}  // namespace

const std::vector<AblationRow>& ablation_rows() {
    static const std::vector<AblationRow> rows{
        {"baseline", false, false, false},
        {"+GazeMix", true, false, false},
        {"+MGP", false, true, false},
        {"+MGP+L_gaze", false, true, true},
        {"+GazeMix+MGP", true, true, false},
        {"+GazeMix+MGP+L_gaze", true, true, true},
    };
    return rows;
}

TrainerConfig apply_row(TrainerConfig cfg, const AblationRow& row) {
    cfg.gazemix = row.gazemix;
    cfg.model.mgp = row.mgp;
    cfg.gaze_loss = row.gaze_loss;
    return cfg;
}

std::vector<JobResult> run_jobs(const Dataset& ds, const std::vector<Sample>& eval, const std::vector<Job>& jobs,
                                int threads, const std::function<void(const JobResult&)>& on_done) {
    std::vector<JobResult> results(jobs.size());
    std::atomic<std::size_t> next{0};
    std::mutex done_mutex;
    std::exception_ptr first_error;

    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            try {
                const auto& job = jobs[i];
                const auto t0 = std::chrono::steady_clock::now();
                TrainOptions opts;
                opts.run_dir = job.run_dir;
                opts.validation = &eval;
                const auto trained = train(ds, job.cfg, opts);
                JobResult r;
                r.name = job.name;
                r.seed = job.cfg.seed;
                r.lambda = job.cfg.effective_lambda();
                r.initial_dice = trained.initial_val_dice;
                r.metrics = evaluate_params(trained.state.teacher, job.cfg.model, eval).macro;
                r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                results[i] = r;
                std::lock_guard lock(done_mutex);
                if (on_done) on_done(r);
            } catch (...) {
                std::lock_guard lock(done_mutex);
                if (!first_error) first_error = std::current_exception();
                next = jobs.size();
            }
        }
    };

    const int n = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);
    return results;
}

std::vector<Summary> summarize(const std::vector<JobResult>& results) {
    std::vector<Summary> out;
    std::vector<std::array<int, 4>> counts;
    for (const auto& r : results) {
        auto it = std::find_if(out.begin(), out.end(), [&](const Summary& s) { return s.name == r.name; });
        if (it == out.end()) {
            out.push_back({r.name, r.lambda, {}, 0});
            counts.push_back({0, 0, 0, 0});
            it = out.end() - 1;
        }
        auto& c = counts[static_cast<std::size_t>(it - out.begin())];
        auto add = [](std::optional<double>& sum, int& n, const std::optional<double>& v) {
            if (!v) return;
            sum = sum.value_or(0.0) + *v;
            ++n;
        };
        add(it->mean.dice, c[0], r.metrics.dice);
        add(it->mean.jaccard, c[1], r.metrics.jaccard);
        add(it->mean.hd95_px, c[2], r.metrics.hd95_px);
        add(it->mean.asd_px, c[3], r.metrics.asd_px);
        ++it->runs;
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto& m = out[i].mean;
        if (m.dice) *m.dice /= counts[i][0];
        if (m.jaccard) *m.jaccard /= counts[i][1];
        if (m.hd95_px) *m.hd95_px /= counts[i][2];
        if (m.asd_px) *m.asd_px /= counts[i][3];
    }
    return out;
}

std::string ablation_csv(const std::vector<Summary>& rows) {
    std::string out = "config,dice,jaccard,hd95,asd\n";
    for (const auto& r : rows) out += r.name + "," + metric_cells(r.mean) + "\n";
    return out;
}

std::string lambda_csv(const std::vector<Summary>& rows) {
    std::string out = "lambda,dice,jaccard,hd95,asd\n";
    for (const auto& r : rows) out += cell(r.lambda) + "," + metric_cells(r.mean) + "\n";
    return out;
}

std::string runs_csv(const std::vector<JobResult>& results) {
    std::string out = "config,seed,lambda,initial_dice,dice,jaccard,hd95,asd,seconds\n";
    for (const auto& r : results) {
        out += r.name + "," + std::to_string(r.seed) + "," + cell(r.lambda) + "," + cell(r.initial_dice) + "," +
               metric_cells(r.metrics) + "," + cell(r.seconds) + "\n";
    }
    return out;
}

}  // namespace gazeseg
