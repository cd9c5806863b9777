#include "gazeseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "gazeseg/error.hpp"
#include "gazeseg/io.hpp"

namespace gazeseg {

using nd::Tensor;

namespace {

constexpr std::uint64_t kStepTag = 0x53544550ULL;      // "STEP"
constexpr std::uint64_t kPretrainTag = 0x50524554ULL;  // "PRET"
constexpr std::uint64_t kInitTag = 0x494e4954ULL;      // "INIT"
constexpr int kPredictChunk = 16;

template <typename T>
Grid<T> flip_grid(const Grid<T>& g, bool horizontal, bool vertical) {
    Grid<T> out(g.dims());
    const int w = g.width(), h = g.height();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) out(x, y) = g(horizontal ? w - 1 - x : x, vertical ? h - 1 - y : y);
    }
    return out;
}

Tensor grids_to_tensor(const std::vector<const Grid<double>*>& grids) {
    if (grids.empty()) fail(ErrorCode::EmptyBatch, "no images");
    const Dims d = grids[0]->dims();
    std::vector<double> data;
    data.reserve(grids.size() * d.area());
    for (const auto* g : grids) {
        if (g->dims() != d) fail(ErrorCode::DimMismatch, "batch images differ in size");
        data.insert(data.end(), g->values().begin(), g->values().end());
    }
    return Tensor::from({static_cast<int>(grids.size()), 1, d.h, d.w}, std::move(data));
}

struct Pseudo {
    std::vector<LabelMap> labels;
    std::vector<double> confidence;  // per pixel, flattened over the batch
};

Pseudo teacher_pseudo_labels(const ParamSet& teacher, const UNetConfig& cfg, const Tensor& images) {
    const auto out = forward(images, teacher, cfg, Mode::Eval);
    const int n = out.logits.dim(0), k = out.logits.dim(1), h = out.logits.dim(2), w = out.logits.dim(3);
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    Pseudo p;
    p.confidence.resize(static_cast<std::size_t>(n) * hw);
    const auto z = out.logits.data();
    for (int b = 0; b < n; ++b) {
        LabelMap lbl(Dims{w, h}, 0);
        for (std::size_t i = 0; i < hw; ++i) {
            const std::size_t base = static_cast<std::size_t>(b) * k * hw + i;
            int best = 0;
            double mx = z[base];
            for (int c = 1; c < k; ++c) {
                if (z[base + c * hw] > mx) {
                    mx = z[base + c * hw];
                    best = c;
                }
            }
            double s = 0.0;
            for (int c = 0; c < k; ++c) s += std::exp(z[base + c * hw] - mx);
            lbl[i] = static_cast<std::uint8_t>(best);
            p.confidence[static_cast<std::size_t>(b) * hw + i] = 1.0 / s;
        }
        p.labels.push_back(std::move(lbl));
    }
    return p;
}

void check_finite(const LossReport& r, const std::vector<std::string>& ids) {
    for (double v : {r.l_gaze, r.l_gt, r.l_pse, r.l_seg, r.l_all}) {
        if (!std::isfinite(v)) {
            std::string msg = "non-finite loss; batch ids:";
            for (const auto& id : ids) msg += " " + id;
            fail(ErrorCode::NumericFailure, msg);
        }
    }
}

}  // namespace

nlohmann::json to_json(const TrainerConfig& cfg) {
    return {{"batch_size", cfg.batch_size},
            {"iterations", cfg.iterations},
            {"lr", cfg.lr},
            {"ema_decay", cfg.ema_decay},
            {"lambda", cfg.lambda},
            {"pretrain_iterations", cfg.pretrain_iterations},
            {"seed", cfg.seed},
            {"gazemix", cfg.gazemix},
            {"gaze_loss", cfg.gaze_loss},
            {"flips", cfg.flips},
            {"pseudo_confidence", cfg.pseudo_confidence},
            {"val_every", cfg.val_every},
            {"checkpoint_every", cfg.checkpoint_every}};
}

nlohmann::json to_json(const LogEntry& e) {
    nlohmann::json j = {{"iter", e.iter},         {"l_gaze", e.loss.l_gaze}, {"l_gt", e.loss.l_gt},
                        {"l_pse", e.loss.l_pse},  {"l_seg", e.loss.l_seg},   {"l_all", e.loss.l_all}};
    if (e.val_dice) j["val_dice"] = *e.val_dice;
    return j;
}

Tensor images_to_tensor(const std::vector<const Image*>& images) { return grids_to_tensor(images); }

TrainingData prepare_training_data(const Dataset& ds, const PrepareConfig& cfg) {
    TrainingData data;
    for (const auto& s : ds.labeled) data.labeled.push_back(prepare(s, cfg));
    for (const auto& s : ds.unlabeled) data.unlabeled.push_back(prepare(s, cfg));
    return data;
}

PreparedSample flipped(const PreparedSample& s, bool horizontal, bool vertical) {
    if (!horizontal && !vertical) return s;
    PreparedSample out;
    out.id = s.id;
    out.image = flip_grid(s.image, horizontal, vertical);
    out.heatmap = flip_grid(s.heatmap, horizontal, vertical);
    if (s.label) out.label = flip_grid(*s.label, horizontal, vertical);
    const Dims d = s.image.dims();
    out.rect = s.rect;
    if (horizontal) {
        out.rect.x0 = d.w - s.rect.x1;
        out.rect.x1 = d.w - s.rect.x0;
    }
    if (vertical) {
        out.rect.y0 = d.h - s.rect.y1;
        out.rect.y1 = d.h - s.rect.y0;
    }
    return out;
}

StepBatch sample_batch(const TrainingData& data, const TrainerConfig& cfg, std::int64_t iteration) {
    if (data.labeled.empty()) fail(ErrorCode::InsufficientLabeledData, "no labeled samples");
    if (data.unlabeled.size() < 2) fail(ErrorCode::EmptyBatch, "need at least 2 unlabeled samples");
    if (cfg.batch_size < 1) fail(ErrorCode::EmptyBatch, "batch_size must be >= 1");
    std::mt19937_64 rng(stream_seed(cfg.seed, static_cast<std::uint64_t>(iteration), kStepTag));
    auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
    auto coin = [&]() { return cfg.flips && std::uniform_int_distribution<int>(0, 1)(rng) == 1; };
    auto take = [&](const PreparedSample& s) {
        const bool h = coin();
        const bool v = coin();
        return flipped(s, h, v);
    };
    StepBatch b;
    for (int i = 0; i < cfg.batch_size; ++i) {
        b.labeled.push_back(take(data.labeled[pick(data.labeled.size())]));
        const std::size_t fg = pick(data.unlabeled.size());
        std::size_t bg = pick(data.unlabeled.size() - 1);
        if (bg >= fg) ++bg;
        b.unlabeled_fg.push_back(take(data.unlabeled[fg]));
        b.unlabeled_bg.push_back(take(data.unlabeled[bg]));
    }
    return b;
}

StepInputs build_step_inputs(const StepBatch& batch, const ParamSet& teacher, const TrainerConfig& cfg) {
    const std::size_t n = batch.labeled.size();
    if (n == 0) fail(ErrorCode::EmptyBatch, "empty labeled batch");
    if (batch.unlabeled_fg.size() != n || batch.unlabeled_bg.size() != n) {
        fail(ErrorCode::EmptyBatch, "labeled and unlabeled batches must have equal sizes");
    }

    std::vector<Image> images;
    std::vector<Heatmap> heats;
    std::vector<MixedSample> mixed_l;
    StepInputs in;
    if (cfg.gazemix) {
        for (std::size_t i = 0; i < n; ++i) {
            mixed_l.push_back(mix(batch.labeled[i], batch.unlabeled_bg[i]));
            images.push_back(mixed_l.back().image);
            heats.push_back(mixed_l.back().heatmap);
            in.ids.push_back(batch.labeled[i].id + "+" + batch.unlabeled_bg[i].id);
        }
        for (std::size_t i = 0; i < n; ++i) {
            auto m = mix(batch.unlabeled_fg[i], batch.unlabeled_bg[i]);
            images.push_back(std::move(m.image));
            heats.push_back(std::move(m.heatmap));
            in.ids.push_back(batch.unlabeled_fg[i].id + "+" + batch.unlabeled_bg[i].id);
        }
    } else {
        for (const auto* side : {&batch.labeled, &batch.unlabeled_fg}) {
            for (const auto& s : *side) {
                images.push_back(s.image);
                heats.push_back(s.heatmap);
                in.ids.push_back(s.id);
            }
        }
    }
    std::vector<const Image*> image_ptrs, heat_ptrs;
    for (const auto& im : images) image_ptrs.push_back(&im);
    for (const auto& hm : heats) heat_ptrs.push_back(&hm);
    in.images = grids_to_tensor(image_ptrs);
    in.heatmaps = grids_to_tensor(heat_ptrs);

    const auto pseudo = teacher_pseudo_labels(teacher, cfg.model, in.images);
    const std::size_t hw = images[0].size();
    in.targets.resize(2 * n * hw);
    in.gt_mask.assign(2 * n * hw, 0);
    in.pse_mask.assign(2 * n * hw, 0);
    auto confident = [&](std::size_t flat) {
        return cfg.pseudo_confidence <= 0.0 || pseudo.confidence[flat] >= cfg.pseudo_confidence;
    };
    for (std::size_t i = 0; i < n; ++i) {
        const auto& src = batch.labeled[i];
        if (!src.label) fail(ErrorCode::InvalidArgument, "labeled batch sample " + src.id + " has no label");
        LabelMap target;
        if (cfg.gazemix) {
            target = compose_label(mixed_l[i], pseudo.labels[i]);
        } else {
            target = *src.label;
        }
        const auto& rect = mixed_l.empty() ? GazeRect::full(target.dims()) : mixed_l[i].paste_rect;
        for (std::size_t p = 0; p < hw; ++p) {
            const std::size_t flat = i * hw + p;
            in.targets[flat] = target[p];
            const int x = static_cast<int>(p % static_cast<std::size_t>(target.width()));
            const int y = static_cast<int>(p / static_cast<std::size_t>(target.width()));
            in.gt_mask[flat] = rect.contains(x, y) || confident(flat) ? 1 : 0;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto& lbl = pseudo.labels[n + i];
        for (std::size_t p = 0; p < hw; ++p) {
            const std::size_t flat = (n + i) * hw + p;
            in.targets[flat] = lbl[p];
            in.pse_mask[flat] = confident(flat) ? 1 : 0;
        }
    }
    return in;
}

StepLoss step_loss(const StepInputs& in, const ParamSet& student, const TrainerConfig& cfg) {
    const auto out = forward(in.images, student, cfg.model, Mode::Train);
    const Tensor l_gt = dice_ce_loss(out.logits, in.targets, in.gt_mask);
    const Tensor l_pse = dice_ce_loss(out.logits, in.targets, in.pse_mask);
    const Tensor l_gaze = cfg.model.mgp ? gaze_loss(out.g_net, in.heatmaps) : Tensor{};
    auto combined = combine_losses(l_gt, l_pse, l_gaze, cfg.effective_lambda());
    return {combined.l_all, combined.report};
}

void ema_update(ParamSet& teacher, const ParamSet& student, double gamma) {
    if (teacher.size() != student.size()) fail(ErrorCode::ShapeMismatch, "teacher and student differ in layout");
    for (std::size_t i = 0; i < teacher.size(); ++i) {
        auto t = teacher[i].data();
        const auto s = student[i].data();
        if (t.size() != s.size()) fail(ErrorCode::ShapeMismatch, "parameter " + teacher.name(i) + " differs in size");
        for (std::size_t j = 0; j < t.size(); ++j) t[j] = gamma * t[j] + (1.0 - gamma) * s[j];
    }
}

void sgd_update(ParamSet& params, double lr) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (p.has_grad()) {
            auto d = p.data();
            const auto g = p.grad();
            for (std::size_t j = 0; j < d.size(); ++j) d[j] -= lr * g[j];
        }
        p.zero_grad();
    }
}

LossReport train_step(TrainerState& state, const StepBatch& batch, const TrainerConfig& cfg) {
    if (!(cfg.ema_decay >= 0.0 && cfg.ema_decay <= 1.0)) fail(ErrorCode::InvalidArgument, "ema_decay must be in [0, 1]");
    if (!(cfg.lr > 0.0)) fail(ErrorCode::InvalidArgument, "lr must be positive");
    const auto in = build_step_inputs(batch, state.teacher, cfg);
    auto loss = step_loss(in, state.student, cfg);
    check_finite(loss.report, in.ids);
    nd::backward(loss.l_all);
    sgd_update(state.student, cfg.lr);
    ema_update(state.teacher, state.student, cfg.ema_decay);
    ++state.iteration;
    state.history.push_back(loss.report);
    return loss.report;
}

ParamSet initial_params(const TrainerConfig& cfg) {
    return init_params(cfg.model, stream_seed(cfg.seed, 0, kInitTag));
}

ParamSet pretrain_teacher(const TrainingData& data, const TrainerConfig& cfg, const PretrainCallback& on_step) {
    if (data.labeled.size() < 2) fail(ErrorCode::InsufficientLabeledData, "pretraining needs at least 2 labeled samples");
    ParamSet params = initial_params(cfg);
    for (int it = 0; it < cfg.pretrain_iterations; ++it) {
        std::mt19937_64 rng(stream_seed(cfg.seed, static_cast<std::uint64_t>(it), kPretrainTag));
        auto pick = [&]() { return std::uniform_int_distribution<std::size_t>(0, data.labeled.size() - 1)(rng); };
        auto take = [&](std::size_t idx) {
            const bool h = cfg.flips && std::uniform_int_distribution<int>(0, 1)(rng) == 1;
            const bool v = cfg.flips && std::uniform_int_distribution<int>(0, 1)(rng) == 1;
            return flipped(data.labeled[idx], h, v);
        };
        std::vector<Image> images;
        std::vector<LabelMap> labels;
        std::vector<std::string> ids;
        for (int i = 0; i < cfg.batch_size; ++i) {
            auto s = take(pick());
            images.push_back(s.image);
            labels.push_back(*s.label);
            ids.push_back(s.id);
        }
        if (cfg.gazemix) {
            for (int i = 0; i < cfg.batch_size; ++i) {
                const std::size_t a = pick();
                std::size_t b = std::uniform_int_distribution<std::size_t>(0, data.labeled.size() - 2)(rng);
                if (b >= a) ++b;
                const auto fg = take(a);
                const auto bg = take(b);
                auto m = mix(fg, bg);
                labels.push_back(compose_label(m, *bg.label));
                images.push_back(std::move(m.image));
                ids.push_back(fg.id + "+" + bg.id);
            }
        }
        std::vector<const Image*> ptrs;
        for (const auto& im : images) ptrs.push_back(&im);
        std::vector<std::uint8_t> targets;
        for (const auto& l : labels) targets.insert(targets.end(), l.values().begin(), l.values().end());
        const auto out = forward(grids_to_tensor(ptrs), params, cfg.model, Mode::Train);
        const Tensor loss = dice_ce_loss(out.logits, targets);
        if (!std::isfinite(loss.item())) {
            std::string msg = "non-finite pretraining loss; batch ids:";
            for (const auto& id : ids) msg += " " + id;
            fail(ErrorCode::NumericFailure, msg);
        }
        nd::backward(loss);
        sgd_update(params, cfg.lr);
        if (on_step) on_step(it + 1, loss.item(), params);
    }
    return params.clone(false);
}

std::vector<LabelMap> predict(const ParamSet& params, const UNetConfig& cfg, const std::vector<const Image*>& images) {
    std::vector<LabelMap> out;
    for (std::size_t start = 0; start < images.size(); start += kPredictChunk) {
        const std::size_t end = std::min(images.size(), start + kPredictChunk);
        std::vector<const Image*> chunk(images.begin() + static_cast<std::ptrdiff_t>(start),
                                        images.begin() + static_cast<std::ptrdiff_t>(end));
        auto p = teacher_pseudo_labels(params, cfg, grids_to_tensor(chunk));
        for (auto& l : p.labels) out.push_back(std::move(l));
    }
    return out;
}

EvalResult evaluate_params(const ParamSet& params, const UNetConfig& cfg, const std::vector<Sample>& samples) {
    std::vector<const Image*> images;
    for (const auto& s : samples) {
        if (!s.label) fail(ErrorCode::InvalidArgument, "evaluation sample " + s.id + " has no label");
        images.push_back(&s.image);
    }
    const auto preds = predict(params, cfg, images);
    EvalResult r;
    for (std::size_t i = 0; i < samples.size(); ++i) r.reports.push_back(evaluate(preds[i], *samples[i].label, cfg.num_classes));
    r.macro = average_macro(r.reports);
    return r;
}

TrainResult train(const Dataset& ds, const TrainerConfig& cfg, const TrainOptions& opts) {
    if (ds.labeled.empty()) fail(ErrorCode::InsufficientLabeledData, "labeled split is empty");
    if (ds.unlabeled.size() < 2) fail(ErrorCode::EmptyBatch, "unlabeled split needs at least 2 samples");
    if (cfg.model.num_classes != ds.world.num_classes) {
        fail(ErrorCode::ConfigError, "model num_classes differs from the dataset's");
    }

    std::vector<Sample> fallback_val;
    const std::vector<Sample>* val = opts.validation;
    if (!val) {
        for (const auto& s : ds.unlabeled) {
            if (!ds.hidden_labels.count(s.id)) continue;
            Sample v = s;
            v.label = ds.hidden_labels.at(s.id);
            fallback_val.push_back(std::move(v));
        }
        if (!fallback_val.empty()) val = &fallback_val;
    }
    auto val_dice = [&](const ParamSet& p) -> std::optional<double> {
        if (!val || val->empty()) return std::nullopt;
        return evaluate_params(p, cfg.model, *val).macro.dice;
    };

    std::optional<std::ofstream> log_file;
    if (opts.run_dir) {
        std::filesystem::create_directories(*opts.run_dir);
        log_file.emplace(*opts.run_dir / "train_log.jsonl", std::ios::binary);
    }
    auto save = [&](const TrainerState& st, const std::string& tag) {
        if (!opts.run_dir) return;
        save_checkpoint(*opts.run_dir / ("student" + tag + ".ckpt"), {cfg.model, st.iteration, "student", st.student});
        save_checkpoint(*opts.run_dir / ("teacher" + tag + ".ckpt"), {cfg.model, st.iteration, "teacher", st.teacher});
    };

    const auto data = prepare_training_data(ds, cfg.prepare);
    TrainResult result;
    const ParamSet pretrained = pretrain_teacher(data, cfg);
    result.state.teacher = pretrained.clone(false);
    result.state.student = pretrained.clone(true);

    auto emit = [&](const LogEntry& e) {
        result.log.push_back(e);
        if (log_file) *log_file << to_json(e).dump() << '\n';
        if (opts.on_log) opts.on_log(e);
    };

    result.initial_val_dice = val_dice(result.state.teacher);
    emit({0, LossReport{.lambda = cfg.effective_lambda()}, result.initial_val_dice});
    for (int it = 1; it <= cfg.iterations; ++it) {
        const auto batch = sample_batch(data, cfg, it);
        LogEntry e{it, train_step(result.state, batch, cfg), std::nullopt};
        if (it == cfg.iterations || (cfg.val_every > 0 && it % cfg.val_every == 0)) e.val_dice = val_dice(result.state.teacher);
        emit(e);
        if (cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0 && it != cfg.iterations) {
            save(result.state, "_" + std::to_string(it));
        }
    }
    result.final_val_dice = cfg.iterations > 0 ? result.log.back().val_dice : result.initial_val_dice;
    save(result.state, "");
    return result;
}

}  // namespace gazeseg
