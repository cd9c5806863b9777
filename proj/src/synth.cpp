#include "gazeseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "gazeseg/io.hpp"

namespace gazeseg {

namespace {

constexpr std::uint64_t kSceneTag = 0x5343454e45ULL;  // "SCENE"
constexpr std::uint64_t kGazeTag = 0x47415a45ULL;     // "GAZE"
constexpr std::uint64_t kEvalOffset = 1ULL << 40;

enum class ShapeKind { Circle, Rectangle, Ellipse };

struct ShapeSpec {
    ShapeKind kind;
    double cx, cy, rx, ry;

    bool contains(int x, int y) const {
        const double dx = x - cx, dy = y - cy;
        switch (kind) {
            case ShapeKind::Circle: return dx * dx + dy * dy <= rx * rx;
            case ShapeKind::Rectangle: return std::abs(dx) <= rx && std::abs(dy) <= ry;
            case ShapeKind::Ellipse: return (dx * dx) / (rx * rx) + (dy * dy) / (ry * ry) <= 1.0;
        }
        return false;
    }
};

std::string sample_id(std::uint64_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "s%05llu", static_cast<unsigned long long>(index));
    return buf;
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

double truncated_normal(std::mt19937_64& rng, double bound) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < 64; ++i) {
        const double z = normal(rng);
        if (std::abs(z) <= bound) return z;
    }
    return 0.0;
}

struct Target {
    std::vector<std::pair<int, int>> pixels;
    double cx = 0, cy = 0;
};

// 4-connected components of the non-background mask.
std::vector<Target> find_targets(const LabelMap& truth) {
    const int w = truth.width(), h = truth.height();
    Grid<int> comp(truth.dims(), -1);
    std::vector<Target> targets;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (truth(x, y) == 0 || comp(x, y) >= 0) continue;
            Target t;
            const int id = static_cast<int>(targets.size());
            std::vector<std::pair<int, int>> stack{{x, y}};
            comp(x, y) = id;
            while (!stack.empty()) {
                auto [px, py] = stack.back();
                stack.pop_back();
                t.pixels.emplace_back(px, py);
                const int nx[4] = {px - 1, px + 1, px, px};
                const int ny[4] = {py, py, py - 1, py + 1};
                for (int k = 0; k < 4; ++k) {
                    if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w || ny[k] >= h) continue;
                    if (truth(nx[k], ny[k]) == 0 || comp(nx[k], ny[k]) >= 0) continue;
                    comp(nx[k], ny[k]) = id;
                    stack.emplace_back(nx[k], ny[k]);
                }
            }
            std::sort(t.pixels.begin(), t.pixels.end());
            for (auto [px, py] : t.pixels) {
                t.cx += px;
                t.cy += py;
            }
            t.cx /= static_cast<double>(t.pixels.size());
            t.cy /= static_cast<double>(t.pixels.size());
            targets.push_back(std::move(t));
        }
    }
    return targets;
}

// Centroid, the four extreme pixels, then random interior pixels.
std::vector<std::pair<double, double>> plan_clusters(const std::vector<Target>& targets, int count,
                                                     std::mt19937_64& rng) {
    std::vector<std::pair<double, double>> centers;
    for (const auto& t : targets) {
        centers.emplace_back(t.cx, t.cy);
        auto by_x = std::minmax_element(t.pixels.begin(), t.pixels.end());
        auto by_y = std::minmax_element(t.pixels.begin(), t.pixels.end(),
                                        [](auto a, auto b) { return std::tie(a.second, a.first) < std::tie(b.second, b.first); });
        for (auto it : {by_x.first, by_x.second, by_y.first, by_y.second}) centers.emplace_back(it->first, it->second);
    }
    while (static_cast<int>(centers.size()) < count) {
        const auto& t = targets[std::uniform_int_distribution<std::size_t>(0, targets.size() - 1)(rng)];
        const auto& p = t.pixels[std::uniform_int_distribution<std::size_t>(0, t.pixels.size() - 1)(rng)];
        centers.emplace_back(p.first, p.second);
    }
    centers.resize(static_cast<std::size_t>(count));
    return centers;
}

}  // namespace

double class_offset(int cls) { return cls <= 0 ? 0.0 : 0.10 + 0.05 * ((cls - 1) % 3); }

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

RenderedScene render_scene(const WorldConfig& cfg, std::uint64_t sample_index) {
    if (cfg.num_classes < 2) fail(ErrorCode::InvalidArgument, "num_classes must be >= 2");
    if (cfg.dims.w < 16 || cfg.dims.h < 16) fail(ErrorCode::InvalidArgument, "world dims must be at least 16x16");
    if (cfg.min_shapes < 1 || cfg.max_shapes < cfg.min_shapes) fail(ErrorCode::InvalidArgument, "bad shapes_per_image range");

    std::mt19937_64 rng(stream_seed(cfg.seed, sample_index, kSceneTag));
    const int w = cfg.dims.w, h = cfg.dims.h;
    const double side = std::min(w, h);
    const double phase_x = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double phase_y = uniform(rng, 0.0, 2.0 * std::numbers::pi);

    RenderedScene scene{Image(cfg.dims, 0.0), LabelMap(cfg.dims, 0)};
    const double k = 2.0 * std::numbers::pi / cfg.texture_period;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            scene.image(x, y) = kBackgroundBase + kBackgroundAmplitude * std::sin(k * x + phase_x) * std::cos(k * y + phase_y);
        }
    }

    // Occupied pixels dilated by a 2 px gap keep shapes from touching.
    Grid<std::uint8_t> blocked(cfg.dims, 0);
    const int n_shapes = uniform_int(rng, cfg.min_shapes, cfg.max_shapes);
    int placed = 0;
    for (int s = 0; s < n_shapes; ++s) {
        for (int attempt = 0; attempt < 200; ++attempt) {
            const int cls = uniform_int(rng, 1, cfg.num_classes - 1);
            ShapeSpec spec{static_cast<ShapeKind>((cls - 1) % 3), 0, 0, 0, 0};
            switch (spec.kind) {
                case ShapeKind::Circle: spec.rx = spec.ry = uniform(rng, 0.12 * side, 0.20 * side); break;
                case ShapeKind::Rectangle:
                    spec.rx = uniform(rng, 0.09 * side, 0.18 * side);
                    spec.ry = uniform(rng, 0.09 * side, 0.18 * side);
                    break;
                case ShapeKind::Ellipse:
                    spec.rx = uniform(rng, 0.08 * side, 0.22 * side);
                    spec.ry = spec.rx * uniform(rng, 0.45, 0.7);
                    if (uniform(rng, 0.0, 1.0) < 0.5) std::swap(spec.rx, spec.ry);
                    break;
            }
            spec.cx = uniform(rng, spec.rx + 2.0, w - 3.0 - spec.rx);
            spec.cy = uniform(rng, spec.ry + 2.0, h - 3.0 - spec.ry);
            std::vector<std::pair<int, int>> pixels;
            bool clash = false;
            for (int y = 0; y < h && !clash; ++y) {
                for (int x = 0; x < w; ++x) {
                    if (!spec.contains(x, y)) continue;
                    if (blocked(x, y)) {
                        clash = true;
                        break;
                    }
                    pixels.emplace_back(x, y);
                }
            }
            if (clash || pixels.size() < 9) continue;
            for (auto [x, y] : pixels) {
                scene.mask(x, y) = static_cast<std::uint8_t>(cls);
                scene.image(x, y) += class_offset(cls);
                for (int dy = -2; dy <= 2; ++dy) {
                    for (int dx = -2; dx <= 2; ++dx) {
                        const int bx = x + dx, by = y + dy;
                        if (bx >= 0 && by >= 0 && bx < w && by < h) blocked(bx, by) = 1;
                    }
                }
            }
            ++placed;
            break;
        }
    }
    if (placed == 0) fail(ErrorCode::NoTargetInSample, "could not place any shape");

    if (cfg.noise_level > 0.0) {
        std::normal_distribution<double> noise(0.0, cfg.noise_level);
        for (auto& v : scene.image.values()) v += noise(rng);
    }
    for (auto& v : scene.image.values()) v = std::clamp(v, 0.0, 1.0);
    return scene;
}

SimulatedGaze simulate_gaze_labeled(const LabelMap& truth, const GazeSimConfig& cfg, std::uint64_t seed) {
    if (cfg.rate_hz <= 0.0 || cfg.min_points < 2 || cfg.max_points < cfg.min_points || cfg.saccade_hops < 0 ||
        cfg.flight_points < 0 || cfg.jitter_px < 0.0) {
        fail(ErrorCode::InvalidArgument, "invalid gaze simulation config");
    }
    const auto targets = find_targets(truth);
    if (targets.empty()) fail(ErrorCode::NoTargetInSample, "mask has no foreground pixels");

    std::mt19937_64 rng(seed);
    const Dims dims = truth.dims();
    const int n_points = uniform_int(rng, cfg.min_points, cfg.max_points);
    const int clusters = cfg.saccade_hops + 1;
    const int flights = cfg.saccade_hops * cfg.flight_points;
    if (n_points - flights < clusters) fail(ErrorCode::InvalidArgument, "too many saccade samples for the point budget");
    const auto centers = plan_clusters(targets, clusters, rng);

    const int dwell_total = n_points - flights;
    const double dt = 1000.0 / cfg.rate_hz;
    SimulatedGaze out;
    out.trace.image_dims = dims;
    auto push = [&](double x, double y, PointClass cls) {
        const double t = static_cast<double>(out.trace.points.size()) * dt;
        out.trace.points.push_back(clamp_to({x, y, t}, dims));
        out.intended.push_back(cls);
    };
    const double slack = cfg.min_flight_step_px + 3.0 * cfg.jitter_px;
    for (int c = 0; c < clusters; ++c) {
        const auto [cx, cy] = centers[static_cast<std::size_t>(c)];
        const int dwell = dwell_total / clusters + (c < dwell_total % clusters ? 1 : 0);
        for (int i = 0; i < dwell; ++i) {
            push(cx + cfg.jitter_px * truncated_normal(rng, 1.5), cy + cfg.jitter_px * truncated_normal(rng, 1.5),
                 PointClass::Fixation);
        }
        if (c + 1 == clusters) break;
        const auto [nx, ny] = centers[static_cast<std::size_t>(c + 1)];
        for (int f = 0; f < cfg.flight_points; ++f) {
            const auto& prev = out.trace.points.back();
            const bool last = f + 1 == cfg.flight_points;
            double best_x = prev.x, best_y = prev.y, best_score = -1.0;
            for (int attempt = 0; attempt < 256; ++attempt) {
                const double x = uniform(rng, 0.0, dims.w - 1.0);
                const double y = uniform(rng, 0.0, dims.h - 1.0);
                double score = std::hypot(x - prev.x, y - prev.y) - slack;
                if (last) score = std::min(score, std::hypot(x - nx, y - ny) - slack);
                if (score > best_score) {
                    best_score = score;
                    best_x = x;
                    best_y = y;
                }
                if (score >= 0.0) break;
            }
            push(best_x, best_y, PointClass::Saccade);
        }
    }
    return out;
}

GazeTrace simulate_gaze(const LabelMap& truth, const GazeSimConfig& cfg, std::uint64_t seed) {
    return simulate_gaze_labeled(truth, cfg, seed).trace;
}

namespace {

Sample make_sample(const WorldConfig& cfg, const GazeSimConfig& gaze, std::uint64_t index, std::string id,
                   LabelMap& truth_out) {
    auto scene = render_scene(cfg, index);
    Sample s;
    s.id = std::move(id);
    s.image = std::move(scene.image);
    s.trace = simulate_gaze(scene.mask, gaze, stream_seed(cfg.seed, index, kGazeTag));
    truth_out = std::move(scene.mask);
    return s;
}

}  // namespace

Dataset generate_dataset(const WorldConfig& cfg, int n_samples, double labeling_ratio, const GazeSimConfig& gaze) {
    if (!(labeling_ratio > 0.0 && labeling_ratio <= 1.0)) {
        fail(ErrorCode::BadRatio, "labeling ratio must be in (0, 1], got " + std::to_string(labeling_ratio));
    }
    if (n_samples < 2) fail(ErrorCode::InvalidArgument, "need at least 2 samples");
    Dataset ds;
    ds.world = cfg;
    ds.gaze = gaze;
    ds.labeling_ratio = labeling_ratio;
    const auto n_labeled = static_cast<int>(std::lround(labeling_ratio * n_samples));
    for (int i = 0; i < n_samples; ++i) {
        LabelMap truth;
        auto s = make_sample(cfg, gaze, static_cast<std::uint64_t>(i), sample_id(static_cast<std::uint64_t>(i)), truth);
        if (i < n_labeled) {
            s.label = std::move(truth);
            ds.labeled.push_back(std::move(s));
        } else {
            ds.hidden_labels.emplace(s.id, std::move(truth));
            ds.unlabeled.push_back(std::move(s));
        }
    }
    return ds;
}

std::vector<Sample> generate_eval_samples(const WorldConfig& cfg, int n_samples, const GazeSimConfig& gaze) {
    std::vector<Sample> out;
    for (int i = 0; i < n_samples; ++i) {
        const auto index = kEvalOffset + static_cast<std::uint64_t>(i);
        LabelMap truth;
        auto s = make_sample(cfg, gaze, index, "e" + sample_id(static_cast<std::uint64_t>(i)).substr(1), truth);
        s.label = std::move(truth);
        out.push_back(std::move(s));
    }
    return out;
}

const LabelMap& truth_of(const Dataset& ds, const Sample& s) {
    if (s.label) return *s.label;
    auto it = ds.hidden_labels.find(s.id);
    if (it == ds.hidden_labels.end()) fail(ErrorCode::InvalidArgument, "no ground truth for sample " + s.id);
    return it->second;
}

nlohmann::json to_json(const WorldConfig& cfg) {
    return {{"w", cfg.dims.w},
            {"h", cfg.dims.h},
            {"num_classes", cfg.num_classes},
            {"min_shapes", cfg.min_shapes},
            {"max_shapes", cfg.max_shapes},
            {"noise_level", cfg.noise_level},
            {"texture_period", cfg.texture_period},
            {"seed", cfg.seed}};
}

nlohmann::json to_json(const GazeSimConfig& cfg) {
    return {{"rate_hz", cfg.rate_hz},
            {"min_points", cfg.min_points},
            {"max_points", cfg.max_points},
            {"jitter_px", cfg.jitter_px},
            {"saccade_hops", cfg.saccade_hops},
            {"flight_points", cfg.flight_points},
            {"min_flight_step_px", cfg.min_flight_step_px}};
}

WorldConfig world_from_json(const nlohmann::json& j) {
    WorldConfig c;
    c.dims.w = j.value("w", c.dims.w);
    c.dims.h = j.value("h", c.dims.h);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.min_shapes = j.value("min_shapes", c.min_shapes);
    c.max_shapes = j.value("max_shapes", c.max_shapes);
    c.noise_level = j.value("noise_level", c.noise_level);
    c.texture_period = j.value("texture_period", c.texture_period);
    c.seed = j.value("seed", c.seed);
    return c;
}

GazeSimConfig gaze_from_json(const nlohmann::json& j) {
    GazeSimConfig c;
    c.rate_hz = j.value("rate_hz", c.rate_hz);
    c.min_points = j.value("min_points", c.min_points);
    c.max_points = j.value("max_points", c.max_points);
    c.jitter_px = j.value("jitter_px", c.jitter_px);
    c.saccade_hops = j.value("saccade_hops", c.saccade_hops);
    c.flight_points = j.value("flight_points", c.flight_points);
    c.min_flight_step_px = j.value("min_flight_step_px", c.min_flight_step_px);
    return c;
}

nlohmann::json Dataset::manifest() const {
    nlohmann::json labeled_ids = nlohmann::json::array(), unlabeled_ids = nlohmann::json::array();
    for (const auto& s : labeled) labeled_ids.push_back(s.id);
    for (const auto& s : unlabeled) unlabeled_ids.push_back(s.id);
    return {{"dims", {{"w", world.dims.w}, {"h", world.dims.h}}},
            {"num_classes", world.num_classes},
            {"seed", world.seed},
            {"labeling_ratio", labeling_ratio},
            {"splits", {{"labeled", labeled_ids}, {"unlabeled", unlabeled_ids}}},
            {"world", to_json(world)},
            {"gaze", to_json(gaze)}};
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    io::write_text(dir / "manifest.json", ds.manifest().dump(2) + "\n");
    auto write_common = [&](const Sample& s) {
        io::write_f32(dir / ("img_" + s.id + ".f32"), s.image.values());
        write_trace_csv(dir / ("gaze_" + s.id + ".csv"), s.trace);
    };
    for (const auto& s : ds.labeled) {
        write_common(s);
        io::write_u8(dir / ("lbl_" + s.id + ".u8"), s.label->values());
    }
    for (const auto& s : ds.unlabeled) {
        write_common(s);
        io::write_u8(dir / ("hidden_lbl_" + s.id + ".u8"), truth_of(ds, s).values());
    }
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto manifest = nlohmann::json::parse(io::read_text(dir / "manifest.json"));
    Dataset ds;
    ds.world = world_from_json(manifest.at("world"));
    ds.gaze = gaze_from_json(manifest.at("gaze"));
    ds.labeling_ratio = manifest.at("labeling_ratio").get<double>();
    const Dims dims = ds.world.dims;
    auto load = [&](const std::string& id) {
        Sample s;
        s.id = id;
        s.image = Image(dims, io::read_f32(dir / ("img_" + id + ".f32")));
        s.trace = parse_trace_csv(dir / ("gaze_" + id + ".csv"), dims);
        return s;
    };
    for (const auto& id : manifest.at("splits").at("labeled")) {
        auto s = load(id.get<std::string>());
        s.label = LabelMap(dims, io::read_u8(dir / ("lbl_" + s.id + ".u8")));
        ds.labeled.push_back(std::move(s));
    }
    for (const auto& id : manifest.at("splits").at("unlabeled")) {
        auto s = load(id.get<std::string>());
        const auto hidden = dir / ("hidden_lbl_" + s.id + ".u8");
        if (std::filesystem::exists(hidden)) ds.hidden_labels.emplace(s.id, LabelMap(dims, io::read_u8(hidden)));
        ds.unlabeled.push_back(std::move(s));
    }
    return ds;
}

}  // namespace gazeseg
