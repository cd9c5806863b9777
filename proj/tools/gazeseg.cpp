// gazeseg command-line tool: data generation, gaze preprocessing, mixing,
// training, evaluation, ablation and plotting.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gazeseg/config.hpp"
#include "gazeseg/error.hpp"
#include "gazeseg/experiment.hpp"
#include "gazeseg/gaze.hpp"
#include "gazeseg/gazemix.hpp"
#include "gazeseg/io.hpp"
#include "gazeseg/metrics.hpp"
#include "gazeseg/model.hpp"
#include "gazeseg/plot.hpp"
#include "gazeseg/synth.hpp"
#include "gazeseg/trainer.hpp"

namespace fs = std::filesystem;
using namespace gazeseg;
using nlohmann::json;

namespace {

// Options shared by the commands that resolve a RunConfig.
struct ConfigFlags {
    std::string config_path;
    std::optional<int> samples;
    std::optional<double> ratio;
    std::optional<std::uint64_t> world_seed;
    std::optional<std::uint64_t> seed;
    std::optional<int> iterations;
    std::optional<int> pretrain_iterations;
    std::optional<int> batch_size;
    std::optional<double> lr;
    std::optional<double> lambda;
    bool no_gazemix = false;
    bool no_gaze_loss = false;
    bool no_mgp = false;
    bool all_points = false;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f, bool training) {
    cmd->add_option("-c,--config", f.config_path, "Run config JSON (sections world, gaze, mix, model, train, eval)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--samples", f.samples, "Override world.samples");
    cmd->add_option("--ratio", f.ratio, "Override world.labeling_ratio");
    cmd->add_option("--world-seed", f.world_seed, "Override world.seed");
    if (!training) return;
    cmd->add_option("--seed", f.seed, "Override train.seed (GAZESEG_SEED takes precedence over the file)");
    cmd->add_option("--iterations", f.iterations, "Override train.iterations");
    cmd->add_option("--pretrain-iterations", f.pretrain_iterations, "Override train.pretrain_iterations");
    cmd->add_option("--batch-size", f.batch_size, "Override train.batch_size");
    cmd->add_option("--lr", f.lr, "Override train.lr");
    cmd->add_option("--lambda", f.lambda, "Override train.lambda");
    cmd->add_flag("--no-gazemix", f.no_gazemix, "Disable GazeMix (train on flipped source images)");
    cmd->add_flag("--no-gaze-loss", f.no_gaze_loss, "Disable the gaze loss (lambda = 0)");
    cmd->add_flag("--no-mgp", f.no_mgp, "Drop the perception head");
    cmd->add_flag("--all-points", f.all_points, "Build gaze rectangles from all points, not fixations only");
}

RunConfig resolve(const ConfigFlags& f) {
    RunConfig c = f.config_path.empty() ? RunConfig{} : load_run_config(f.config_path);
    apply_env_overrides(c);
    if (f.samples) c.samples = *f.samples;
    if (f.ratio) c.labeling_ratio = *f.ratio;
    if (f.world_seed) c.world.seed = *f.world_seed;
    if (f.seed) c.train.seed = *f.seed;
    if (f.iterations) c.train.iterations = *f.iterations;
    if (f.pretrain_iterations) c.train.pretrain_iterations = *f.pretrain_iterations;
    if (f.batch_size) c.train.batch_size = *f.batch_size;
    if (f.lr) c.train.lr = *f.lr;
    if (f.lambda) c.train.lambda = *f.lambda;
    if (f.no_gazemix) c.train.gazemix = false;
    if (f.no_gaze_loss) c.train.gaze_loss = false;
    if (f.no_mgp) c.train.model.mgp = false;
    if (f.all_points) c.train.prepare.rect.all_points = true;
    validate(c, f.config_path.empty() ? "<flags>" : f.config_path);
    return c;
}

// Training data: a dataset directory when given, otherwise generated from the config.
Dataset load_or_generate(const std::string& data_dir, const RunConfig& cfg) {
    if (!data_dir.empty()) return load_dataset(data_dir);
    return generate_dataset(cfg.world, cfg.samples, cfg.labeling_ratio, cfg.gaze);
}

std::vector<Sample> load_or_generate_eval(const std::string& eval_dir, const RunConfig& cfg) {
    if (!eval_dir.empty()) {
        const auto ds = load_dataset(eval_dir);
        std::vector<Sample> out;
        for (const auto& s : ds.labeled) out.push_back(s);
        for (const auto& s : ds.unlabeled) {
            Sample v = s;
            v.label = truth_of(ds, s);
            out.push_back(std::move(v));
        }
        return out;
    }
    return generate_eval_samples(cfg.world, cfg.eval_samples, cfg.gaze);
}

std::vector<fs::path> inputs_of(const ConfigFlags& f, const std::vector<std::string>& dirs) {
    std::vector<fs::path> out;
    if (!f.config_path.empty()) out.push_back(f.config_path);
    for (const auto& d : dirs) {
        if (d.empty()) continue;
        for (auto& p : files_under(d)) out.push_back(std::move(p));
    }
    return out;
}

std::string num_cell(const std::optional<double>& v) {
    if (!v) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return buf;
}

json metrics_json(const ClassMetrics& m) {
    auto v = [](const std::optional<double>& x) { return x ? json(*x) : json(nullptr); };
    return {{"dice", v(m.dice)}, {"jaccard", v(m.jaccard)}, {"hd95", v(m.hd95_px)}, {"asd", v(m.asd_px)}};
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

// --- subcommands -----------------------------------------------------------

int cmd_gen(const ConfigFlags& f, const std::string& out, int eval_samples) {
    RunConfig cfg = resolve(f);
    if (eval_samples >= 0) cfg.eval_samples = eval_samples;
    const auto ds = generate_dataset(cfg.world, cfg.samples, cfg.labeling_ratio, cfg.gaze);
    save_dataset(ds, fs::path(out) / "train");
    Dataset ev;
    ev.world = cfg.world;
    ev.gaze = cfg.gaze;
    ev.labeled = generate_eval_samples(cfg.world, cfg.eval_samples, cfg.gaze);
    save_dataset(ev, fs::path(out) / "eval");
    write_run_record(out, "gen", cfg, inputs_of(f, {}));
    log_line("wrote " + std::to_string(ds.labeled.size()) + " labeled + " + std::to_string(ds.unlabeled.size()) +
             " unlabeled samples and " + std::to_string(ev.labeled.size()) + " evaluation samples to " + out);
    return 0;
}

int cmd_filter_gaze(const std::string& in, const std::string& out, double v_th, int w, int h) {
    const auto trace = classify_points(parse_trace_csv(in, Dims{w, h}), FilterConfig{v_th});
    std::string text = "t_ms,x,y,class\n";
    char buf[128];
    std::size_t fix = 0;
    for (std::size_t i = 0; i < trace.points.size(); ++i) {
        const auto& p = trace.points[i];
        const bool is_fix = trace.classification[i] == PointClass::Fixation;
        fix += is_fix;
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%s\n", p.t, p.x, p.y, is_fix ? "fixation" : "saccade");
        text += buf;
    }
    io::write_text(out, text);
    log_line(std::to_string(fix) + " of " + std::to_string(trace.points.size()) + " points are fixations");
    return 0;
}

int cmd_heatmap(const std::string& in, const std::string& out, double sigma, double v_th, int w, int h) {
    const Dims dims{w, h};
    const auto hm = trace_heatmap(parse_trace_csv(in, dims), FilterConfig{v_th}, sigma > 0 ? sigma : default_sigma(dims));
    write_heatmap(out, hm);
    return 0;
}

int cmd_mix(const std::string& data, const std::string& fg_id, const std::string& bg_id, const std::string& out,
            const RunConfig& cfg) {
    const auto ds = load_dataset(data);
    auto find = [&](const std::string& id) -> const Sample& {
        for (const auto* split : {&ds.labeled, &ds.unlabeled}) {
            for (const auto& s : *split) {
                if (s.id == id) return s;
            }
        }
        fail(ErrorCode::InvalidArgument, "no sample with id " + id + " in " + data);
    };
    const auto fg = prepare(find(fg_id), cfg.train.prepare);
    const auto bg = prepare(find(bg_id), cfg.train.prepare);
    const auto m = mix(fg, bg);
    const std::string id = fg_id + "_" + bg_id;
    const fs::path dir(out);
    fs::create_directories(dir);
    io::write_f32(dir / ("mix_" + id + ".f32"), m.image.values());
    write_heatmap(dir / ("mix_" + id + "_heat.f32"), GazeHeatmap{m.heatmap, 0.0});
    json meta = {{"id", id},
                 {"foreground", fg_id},
                 {"background", bg_id},
                 {"w", m.image.width()},
                 {"h", m.image.height()},
                 {"fg_rect", {fg.rect.x0, fg.rect.y0, fg.rect.x1, fg.rect.y1}},
                 {"paste_rect", {m.paste_rect.x0, m.paste_rect.y0, m.paste_rect.x1, m.paste_rect.y1}}};
    if (m.region_label && bg.label) {
        const auto lbl = compose_label(m, *bg.label);
        io::write_u8(dir / ("mix_" + id + ".u8"), lbl.values());
        meta["label"] = "mix_" + id + ".u8";
    }
    io::write_text(dir / ("mix_" + id + ".json"), meta.dump(2) + "\n");
    return 0;
}

int cmd_pretrain(const ConfigFlags& f, const std::string& data, const std::string& out) {
    const RunConfig cfg = resolve(f);
    const auto ds = load_or_generate(data, cfg);
    const fs::path dir(out);
    fs::create_directories(dir);
    write_run_record(dir, "pretrain", cfg, inputs_of(f, {data}));
    std::ofstream log(dir / "pretrain_log.jsonl", std::ios::binary);
    const auto params = pretrain_teacher(prepare_training_data(ds, cfg.train.prepare), cfg.train,
                                         [&](int step, double loss, const ParamSet&) {
                                             log << json{{"step", step}, {"loss", loss}}.dump() << '\n';
                                         });
    save_checkpoint(dir / "teacher.ckpt", {cfg.train.model, 0, "teacher", params});
    log_line("saved " + (dir / "teacher.ckpt").string());
    return 0;
}

int cmd_train(const ConfigFlags& f, const std::string& data, const std::string& eval_data, const std::string& out) {
    const RunConfig cfg = resolve(f);
    const auto ds = load_or_generate(data, cfg);
    const auto eval = load_or_generate_eval(eval_data, cfg);
    const fs::path dir(out);
    write_run_record(dir, "train", cfg, inputs_of(f, {data, eval_data}));
    TrainOptions opts;
    opts.run_dir = dir;
    opts.validation = &eval;
    opts.on_log = [](const LogEntry& e) {
        if (e.val_dice) log_line("iter " + std::to_string(e.iter) + " val_dice " + num_cell(e.val_dice));
    };
    const auto r = train(ds, cfg.train, opts);
    const json summary = {{"initial_val_dice", r.initial_val_dice ? json(*r.initial_val_dice) : json(nullptr)},
                          {"final_val_dice", r.final_val_dice ? json(*r.final_val_dice) : json(nullptr)},
                          {"iterations", r.state.iteration}};
    io::write_text(dir / "summary.json", summary.dump(2) + "\n");
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data, const std::string& out) {
    const auto ck = load_checkpoint(checkpoint);
    const auto ds = load_dataset(data);
    std::vector<Sample> samples;
    for (const auto* split : {&ds.labeled, &ds.unlabeled}) {
        for (const auto& s : *split) {
            Sample v = s;
            v.label = truth_of(ds, s);
            samples.push_back(std::move(v));
        }
    }
    const auto r = evaluate_params(ck.params, ck.config, samples);
    std::string csv = "sample_id,class,dice,jaccard,hd95,asd\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (const auto& [cls, m] : r.reports[i].per_class) {
            csv += samples[i].id + "," + std::to_string(cls) + "," + num_cell(m.dice) + "," + num_cell(m.jaccard) + "," +
                   num_cell(m.hd95_px) + "," + num_cell(m.asd_px) + "\n";
        }
    }
    const fs::path dir(out);
    fs::create_directories(dir);
    io::write_text(dir / "eval.csv", csv);
    const json summary = {{"checkpoint", checkpoint},
                          {"role", ck.role},
                          {"iteration", ck.iteration},
                          {"samples", samples.size()},
                          {"macro", metrics_json(r.macro)}};
    io::write_text(dir / "eval_summary.json", summary.dump(2) + "\n");
    std::cout << "macro dice " << num_cell(r.macro.dice) << " jaccard " << num_cell(r.macro.jaccard) << " hd95 "
              << num_cell(r.macro.hd95_px) << " asd " << num_cell(r.macro.asd_px) << "\n";
    return 0;
}

int cmd_ablation(const ConfigFlags& f, const std::string& data, const std::string& eval_data, const std::string& out,
                 bool lambda_sweep, int jobs, bool keep_runs) {
    const RunConfig cfg = resolve(f);
    const auto ds = load_or_generate(data, cfg);
    const auto eval = load_or_generate_eval(eval_data, cfg);
    const fs::path dir(out);
    write_run_record(dir, lambda_sweep ? "ablation --lambda-sweep" : "ablation", cfg, inputs_of(f, {data, eval_data}));

    auto run_dir = [&](const std::string& name, std::uint64_t seed) -> std::optional<fs::path> {
        if (!keep_runs) return std::nullopt;
        std::string safe;
        for (char c : name) safe += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
        return dir / "runs" / (safe + "_seed" + std::to_string(seed));
    };
    auto progress = [](const JobResult& r) {
        log_line(r.name + " seed " + std::to_string(r.seed) + ": dice " + num_cell(r.metrics.dice) + " (" +
                 num_cell(r.seconds) + " s)");
    };

    std::vector<Job> grid;
    for (const auto& row : ablation_rows()) {
        for (auto seed : cfg.seeds) {
            auto tc = apply_row(cfg.train, row);
            tc.seed = seed;
            grid.push_back({row.name, tc, run_dir(row.name, seed)});
        }
    }
    const auto results = run_jobs(ds, eval, grid, jobs, progress);
    io::write_text(dir / "ablation_runs.csv", runs_csv(results));
    const auto table = summarize(results);
    io::write_text(dir / "ablation_summary.csv", ablation_csv(table));
    std::cout << ablation_csv(table);

    if (lambda_sweep) {
        std::vector<Job> sweep;
        for (double lambda : cfg.lambdas) {
            for (auto seed : cfg.seeds) {
                auto tc = cfg.train;
                tc.gazemix = tc.model.mgp = tc.gaze_loss = true;
                tc.lambda = lambda;
                tc.seed = seed;
                sweep.push_back({"lambda=" + num_cell(lambda), tc, run_dir("lambda_" + num_cell(lambda), seed)});
            }
        }
        const auto sr = run_jobs(ds, eval, sweep, jobs, progress);
        io::write_text(dir / "lambda_runs.csv", runs_csv(sr));
        io::write_text(dir / "lambda_sweep.csv", lambda_csv(summarize(sr)));
        std::cout << lambda_csv(summarize(sr));
    }
    return 0;
}

int cmd_plot(const std::string& in, const std::string& out, const std::vector<std::string>& metrics) {
    const fs::path p(in);
    const Chart chart = p.extension() == ".csv" ? lambda_chart(p, metrics) : loss_chart(p);
    io::write_text(out, render_svg(chart));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaze-guided semi-supervised segmentation toolkit", "gazeseg"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.set_version_flag("--version", "gazeseg 0.1.0");

    ConfigFlags gen_flags, pre_flags, train_flags, abl_flags, mix_flags;

    auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset (train and eval splits)");
    add_config_flags(gen, gen_flags, false);
    std::string gen_out = "data";
    int gen_eval = -1;
    gen->add_option("-o,--out", gen_out, "Output directory");
    gen->add_option("--eval-samples", gen_eval, "Override eval.samples (-1 keeps the config value)");
    gen->add_option("--seed", gen_flags.world_seed, "Alias for --world-seed");

    auto* filt = app.add_subcommand("filter-gaze", "Classify gaze points into fixations and saccades");
    std::string filt_in, filt_out;
    double filt_vth = 300.0;
    int filt_w = 64, filt_h = 64;
    filt->add_option("-i,--in", filt_in, "Trace CSV (t_ms,x,y)")->required()->check(CLI::ExistingFile);
    filt->add_option("-o,--out", filt_out, "Output CSV (t_ms,x,y,class)")->required();
    filt->add_option("--v-th", filt_vth, "Velocity threshold in px/s")->check(CLI::PositiveNumber);
    filt->add_option("--width", filt_w, "Image width in pixels")->check(CLI::PositiveNumber);
    filt->add_option("--height", filt_h, "Image height in pixels")->check(CLI::PositiveNumber);

    auto* heat = app.add_subcommand("heatmap", "Render the fixation heatmap of a trace");
    std::string heat_in, heat_out;
    double heat_sigma = 0.0, heat_vth = 300.0;
    int heat_w = 64, heat_h = 64;
    heat->add_option("-i,--in", heat_in, "Trace CSV (t_ms,x,y)")->required()->check(CLI::ExistingFile);
    heat->add_option("-o,--out", heat_out, "Output float32 file (a .json sidecar is written next to it)")->required();
    heat->add_option("--sigma", heat_sigma, "Kernel sigma in pixels (0: 5% of the width)");
    heat->add_option("--v-th", heat_vth, "Velocity threshold in px/s")->check(CLI::PositiveNumber);
    heat->add_option("--width", heat_w, "Image width in pixels")->check(CLI::PositiveNumber);
    heat->add_option("--height", heat_h, "Image height in pixels")->check(CLI::PositiveNumber);

    auto* mixc = app.add_subcommand("mix", "Paste the gaze region of one sample into another");
    std::string mix_data, mix_fg, mix_bg, mix_out = "mix";
    add_config_flags(mixc, mix_flags, false);
    mixc->add_option("-d,--data", mix_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    mixc->add_option("--fg", mix_fg, "Foreground sample id")->required();
    mixc->add_option("--bg", mix_bg, "Background sample id")->required();
    mixc->add_option("-o,--out", mix_out, "Output directory");
    mixc->add_flag("--all-points", mix_flags.all_points, "Build gaze rectangles from all points, not fixations only");

    auto* pre = app.add_subcommand("pretrain", "Supervised teacher pre-training with GazeMix");
    add_config_flags(pre, pre_flags, true);
    std::string pre_data, pre_out = "runs/pretrain";
    pre->add_option("-d,--data", pre_data, "Dataset directory (generated from the config when omitted)")
        ->check(CLI::ExistingDirectory);
    pre->add_option("-o,--out", pre_out, "Run directory");

    auto* tr = app.add_subcommand("train", "Pre-train the teacher, then run the mean-teacher loop");
    add_config_flags(tr, train_flags, true);
    std::string tr_data, tr_eval, tr_out = "runs/train";
    tr->add_option("-d,--data", tr_data, "Dataset directory (generated from the config when omitted)")
        ->check(CLI::ExistingDirectory);
    tr->add_option("--eval-data", tr_eval, "Validation dataset directory (generated when omitted)")
        ->check(CLI::ExistingDirectory);
    tr->add_option("-o,--out", tr_out, "Run directory");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    std::string ev_ckpt, ev_data, ev_out = "eval";
    ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
    ev->add_option("-d,--data", ev_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    ev->add_option("-o,--out", ev_out, "Output directory for eval.csv and eval_summary.json");

    auto* abl = app.add_subcommand("ablation", "Run the six component configurations over the configured seeds");
    add_config_flags(abl, abl_flags, true);
    std::string abl_data, abl_eval, abl_out = "runs/ablation";
    bool abl_sweep = false, abl_keep = false;
    int abl_jobs = 1;
    abl->add_option("-d,--data", abl_data, "Dataset directory (generated from the config when omitted)")
        ->check(CLI::ExistingDirectory);
    abl->add_option("--eval-data", abl_eval, "Validation dataset directory (generated when omitted)")
        ->check(CLI::ExistingDirectory);
    abl->add_option("-o,--out", abl_out, "Output directory");
    abl->add_option("-j,--jobs", abl_jobs, "Concurrent training runs")->check(CLI::PositiveNumber);
    abl->add_flag("--lambda-sweep", abl_sweep, "Also sweep eval.lambdas with every component enabled");
    abl->add_flag("--keep-runs", abl_keep, "Keep per-run logs and checkpoints under <out>/runs");

    auto* plot = app.add_subcommand("plot", "Render a training log or a lambda sweep to SVG");
    std::string plot_in, plot_out = "plot.svg";
    std::vector<std::string> plot_metrics{"dice"};
    plot->add_option("-i,--in", plot_in, "train_log.jsonl or lambda_sweep.csv")->required()->check(CLI::ExistingFile);
    plot->add_option("-o,--out", plot_out, "Output SVG");
    plot->add_option("--metric", plot_metrics, "Metric columns for lambda charts");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ErrorCategory::Config);
    }

    try {
        if (*gen) return cmd_gen(gen_flags, gen_out, gen_eval);
        if (*filt) return cmd_filter_gaze(filt_in, filt_out, filt_vth, filt_w, filt_h);
        if (*heat) return cmd_heatmap(heat_in, heat_out, heat_sigma, heat_vth, heat_w, heat_h);
        if (*mixc) return cmd_mix(mix_data, mix_fg, mix_bg, mix_out, resolve(mix_flags));
        if (*pre) return cmd_pretrain(pre_flags, pre_data, pre_out);
        if (*tr) return cmd_train(train_flags, tr_data, tr_eval, tr_out);
        if (*ev) return cmd_eval(ev_ckpt, ev_data, ev_out);
        if (*abl) return cmd_ablation(abl_flags, abl_data, abl_eval, abl_out, abl_sweep, abl_jobs, abl_keep);
        if (*plot) return cmd_plot(plot_in, plot_out, plot_metrics);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return static_cast<int>(ErrorCategory::Config);
    } catch (const Error& e) {
        std::cerr << to_string(e.code()) << ": " << e.what() << "\n";
        return static_cast<int>(e.category());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return static_cast<int>(ErrorCategory::Data);
    } catch (const json::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return static_cast<int>(ErrorCategory::Data);
    }
    return 0;
}
