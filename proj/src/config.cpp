#include "gazeseg/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>

#include "gazeseg/error.hpp"
#include "gazeseg/io.hpp"

namespace gazeseg {

namespace {

using nlohmann::json;

// Reads typed keys out of one config section and remembers which it saw, so
// leftovers can be reported as unknown.
class Section {
   public:
    Section(const json& root, std::string name, std::string source)
        : name_(std::move(name)), source_(std::move(source)) {
        if (!root.contains(name_)) return;
        node_ = &root.at(name_);
        if (!node_->is_object()) throw ConfigError(source_, name_, "section must be an object");
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        seen_.insert(key);
        if (!node_ || !node_->contains(key)) return;
        const json& v = node_->at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(source_, path(key), "expected a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError(source_, path(key), "expected an integer");
            if (std::is_unsigned_v<T> && !v.is_number_unsigned()) {
                throw ConfigError(source_, path(key), "expected a non-negative integer");
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(source_, path(key), "expected a number");
        } else {
            if (!v.is_array()) throw ConfigError(source_, path(key), "expected an array");
        }
        try {
            out = v.get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(source_, path(key), e.what());
        }
    }

    void finish() const {
        if (!node_) return;
        for (const auto& [key, value] : node_->items()) {
            if (!seen_.count(key)) throw ConfigError(source_, path(key), "unknown key");
        }
    }

   private:
    std::string path(const std::string& key) const { return name_ + "." + key; }

    std::string name_;
    std::string source_;
    const json* node_ = nullptr;
    std::set<std::string> seen_;
};

const std::set<std::string> kSections{"world", "gaze", "mix", "model", "train", "eval"};

}  // namespace

RunConfig run_config_from_json(const json& j, const std::string& source) {
    if (!j.is_object()) throw ConfigError(source, "", "top level must be an object");
    for (const auto& [key, value] : j.items()) {
        if (!kSections.count(key)) throw ConfigError(source, key, "unknown section");
    }
    RunConfig c;

    Section world(j, "world", source);
    world.read("w", c.world.dims.w);
    world.read("h", c.world.dims.h);
    world.read("num_classes", c.world.num_classes);
    world.read("min_shapes", c.world.min_shapes);
    world.read("max_shapes", c.world.max_shapes);
    world.read("noise_level", c.world.noise_level);
    world.read("texture_period", c.world.texture_period);
    world.read("seed", c.world.seed);
    world.read("samples", c.samples);
    world.read("labeling_ratio", c.labeling_ratio);
    world.finish();

    Section gaze(j, "gaze", source);
    gaze.read("rate_hz", c.gaze.rate_hz);
    gaze.read("min_points", c.gaze.min_points);
    gaze.read("max_points", c.gaze.max_points);
    gaze.read("jitter_px", c.gaze.jitter_px);
    gaze.read("saccade_hops", c.gaze.saccade_hops);
    gaze.read("flight_points", c.gaze.flight_points);
    gaze.read("min_flight_step_px", c.gaze.min_flight_step_px);
    gaze.read("v_th", c.train.prepare.filter.v_th);
    gaze.read("sigma_px", c.train.prepare.sigma_px);
    gaze.finish();

    Section mix(j, "mix", source);
    mix.read("enabled", c.train.gazemix);
    mix.read("margin_px", c.train.prepare.rect.margin_px);
    mix.read("min_side", c.train.prepare.rect.min_side);
    mix.read("all_points", c.train.prepare.rect.all_points);
    mix.finish();

    Section model(j, "model", source);
    model.read("in_channels", c.train.model.in_channels);
    model.read("base_channels", c.train.model.base_channels);
    model.read("depth", c.train.model.depth);
    model.read("mgp", c.train.model.mgp);
    model.read("mgp_reduction", c.train.model.mgp_reduction);
    model.finish();
    c.train.model.num_classes = c.world.num_classes;

    Section train(j, "train", source);
    train.read("batch_size", c.train.batch_size);
    train.read("iterations", c.train.iterations);
    train.read("pretrain_iterations", c.train.pretrain_iterations);
    train.read("lr", c.train.lr);
    train.read("ema_decay", c.train.ema_decay);
    train.read("lambda", c.train.lambda);
    train.read("seed", c.train.seed);
    train.read("gaze_loss", c.train.gaze_loss);
    train.read("flips", c.train.flips);
    train.read("pseudo_confidence", c.train.pseudo_confidence);
    train.read("val_every", c.train.val_every);
    train.read("checkpoint_every", c.train.checkpoint_every);
    train.finish();

    Section eval(j, "eval", source);
    eval.read("samples", c.eval_samples);
    eval.read("lambdas", c.lambdas);
    eval.read("seeds", c.seeds);
    eval.finish();

    validate(c, source);
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), "", "cannot open config file");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string(), "", std::string("invalid JSON: ") + e.what());
    }
    return run_config_from_json(j, path.string());
}

json to_json(const RunConfig& c) {
    json world = to_json(c.world);
    world["samples"] = c.samples;
    world["labeling_ratio"] = c.labeling_ratio;
    json gaze = to_json(c.gaze);
    gaze["v_th"] = c.train.prepare.filter.v_th;
    gaze["sigma_px"] = c.train.prepare.sigma_px;
    json model = to_json(c.train.model);
    model.erase("num_classes");
    const auto& t = c.train;
    return {{"world", world},
            {"gaze", gaze},
            {"mix",
             {{"enabled", t.gazemix},
              {"margin_px", t.prepare.rect.margin_px},
              {"min_side", t.prepare.rect.min_side},
              {"all_points", t.prepare.rect.all_points}}},
            {"model", model},
            {"train",
             {{"batch_size", t.batch_size},
              {"iterations", t.iterations},
              {"pretrain_iterations", t.pretrain_iterations},
              {"lr", t.lr},
              {"ema_decay", t.ema_decay},
              {"lambda", t.lambda},
              {"seed", t.seed},
              {"gaze_loss", t.gaze_loss},
              {"flips", t.flips},
              {"pseudo_confidence", t.pseudo_confidence},
              {"val_every", t.val_every},
              {"checkpoint_every", t.checkpoint_every}}},
            {"eval", {{"samples", c.eval_samples}, {"lambdas", c.lambdas}, {"seeds", c.seeds}}}};
}

void validate(const RunConfig& c, const std::string& source) {
    auto check = [&](bool ok, const char* key, const char* detail) {
        if (!ok) throw ConfigError(source, key, detail);
    };
    check(c.world.dims.w >= 16 && c.world.dims.h >= 16, "world.w", "image sides must be >= 16");
    check(c.world.num_classes >= 2, "world.num_classes", "must be >= 2");
    check(c.world.min_shapes >= 1 && c.world.max_shapes >= c.world.min_shapes, "world.max_shapes",
          "need 1 <= min_shapes <= max_shapes");
    check(c.world.noise_level >= 0.0, "world.noise_level", "must be >= 0");
    check(c.world.texture_period > 0.0, "world.texture_period", "must be positive");
    check(c.samples >= 2, "world.samples", "must be >= 2");
    check(c.labeling_ratio > 0.0 && c.labeling_ratio <= 1.0, "world.labeling_ratio", "must be in (0, 1]");
    check(c.gaze.rate_hz > 0.0, "gaze.rate_hz", "must be positive");
    check(c.gaze.min_points >= 2 && c.gaze.max_points >= c.gaze.min_points, "gaze.max_points",
          "need 2 <= min_points <= max_points");
    check(c.train.prepare.filter.v_th > 0.0, "gaze.v_th", "must be positive");
    check(c.train.prepare.rect.margin_px >= 0, "mix.margin_px", "must be >= 0");
    check(c.train.prepare.rect.min_side >= 1, "mix.min_side", "must be >= 1");
    check(c.train.model.base_channels >= 4, "model.base_channels", "must be >= 4");
    check(c.train.model.depth >= 1, "model.depth", "must be >= 1");
    check(c.train.model.mgp_reduction >= 1 && c.train.model.base_channels % c.train.model.mgp_reduction == 0,
          "model.mgp_reduction", "must divide base_channels");
    const int scale = 1 << c.train.model.depth;
    check(c.world.dims.w % scale == 0 && c.world.dims.h % scale == 0, "model.depth",
          "image sides must be divisible by 2^depth");
    check(c.train.batch_size >= 1, "train.batch_size", "must be >= 1");
    check(c.train.iterations >= 0, "train.iterations", "must be >= 0");
    check(c.train.pretrain_iterations >= 0, "train.pretrain_iterations", "must be >= 0");
    check(c.train.lr > 0.0, "train.lr", "must be positive");
    check(c.train.ema_decay >= 0.0 && c.train.ema_decay <= 1.0, "train.ema_decay", "must be in [0, 1]");
    check(c.train.lambda >= 0.0, "train.lambda", "must be >= 0");
    check(c.train.pseudo_confidence >= 0.0 && c.train.pseudo_confidence <= 1.0, "train.pseudo_confidence",
          "must be in [0, 1]");
    check(c.train.val_every >= 0 && c.train.checkpoint_every >= 0, "train.val_every", "must be >= 0");
    check(c.eval_samples >= 1, "eval.samples", "must be >= 1");
    check(!c.seeds.empty(), "eval.seeds", "must not be empty");
    check(!c.lambdas.empty(), "eval.lambdas", "must not be empty");
}

void apply_env_overrides(RunConfig& cfg) {
    const char* seed = std::getenv("GAZESEG_SEED");
    if (!seed || !*seed) return;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(seed, &end, 10);
    if (*end != '\0' || seed[0] == '-') throw ConfigError("GAZESEG_SEED", "train.seed", "not a non-negative integer");
    cfg.train.seed = v;
}

std::vector<std::filesystem::path> files_under(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> out;
    if (std::filesystem::is_regular_file(dir)) return {dir};
    if (!std::filesystem::is_directory(dir)) return out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string content_hash(const std::vector<std::filesystem::path>& inputs) {
    auto sorted = inputs;
    std::sort(sorted.begin(), sorted.end());
    std::uint64_t h = io::fnv1a(std::string("inputs"));
    for (const auto& p : sorted) {
        const std::string bytes = io::read_text(p);
        h = io::fnv1a("blob " + std::to_string(bytes.size()) + '\0' + p.filename().string() + '\0', h);
        h = io::fnv1a(bytes, h);
    }
    return io::hex64(h);
}

void write_run_record(const std::filesystem::path& dir, const std::string& command, const RunConfig& cfg,
                      const std::vector<std::filesystem::path>& inputs) {
    std::filesystem::create_directories(dir);
    const json resolved = to_json(cfg);
    const json record = {{"command", command},
                         {"config", resolved},
                         {"config_hash", io::hex64(io::fnv1a(resolved.dump()))},
                         {"inputs_hash", content_hash(inputs)}};
    io::write_text(dir / "run.json", record.dump(2) + "\n");
}

}  // namespace gazeseg
