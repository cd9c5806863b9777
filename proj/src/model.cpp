#include "gazeseg/model.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <random>

#include "gazeseg/error.hpp"
#include "gazeseg/io.hpp"

namespace gazeseg {

using nd::Tensor;

namespace {

std::string conv_name(const std::string& block, int i) { return block + ".conv" + std::to_string(i); }

Tensor conv_relu(const Tensor& x, const ParamSet& p, const std::string& name) {
    return nd::relu(nd::conv2d(x, p.at(name + ".w"), p.at(name + ".b")));
}

int channels_at(const UNetConfig& cfg, int level) { return cfg.base_channels << level; }

void validate(const UNetConfig& cfg) {
    if (cfg.depth < 1) fail(ErrorCode::InvalidArgument, "depth must be >= 1");
    if (cfg.base_channels < 4) fail(ErrorCode::InvalidArgument, "base_channels must be >= 4");
    if (cfg.num_classes < 2) fail(ErrorCode::InvalidArgument, "num_classes must be >= 2");
    if (cfg.mgp && (cfg.mgp_reduction < 1 || cfg.base_channels % cfg.mgp_reduction != 0)) {
        fail(ErrorCode::InvalidArgument, "base_channels must be divisible by mgp_reduction");
    }
}

}  // namespace

nlohmann::json to_json(const UNetConfig& cfg) {
    return {{"in_channels", cfg.in_channels}, {"base_channels", cfg.base_channels}, {"depth", cfg.depth},
            {"num_classes", cfg.num_classes}, {"mgp", cfg.mgp},                     {"mgp_reduction", cfg.mgp_reduction}};
}

UNetConfig unet_from_json(const nlohmann::json& j) {
    UNetConfig c;
    c.in_channels = j.value("in_channels", c.in_channels);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.depth = j.value("depth", c.depth);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.mgp = j.value("mgp", c.mgp);
    c.mgp_reduction = j.value("mgp_reduction", c.mgp_reduction);
    return c;
}

void ParamSet::add(std::string name, nd::Tensor t) {
    if (index_.count(name)) fail(ErrorCode::InvalidArgument, "duplicate parameter " + name);
    index_.emplace(name, tensors_.size());
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(t));
}

const nd::Tensor& ParamSet::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) fail(ErrorCode::InvalidArgument, "unknown parameter " + name);
    return tensors_[it->second];
}

std::size_t ParamSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
}

ParamSet ParamSet::clone(bool trainable) const {
    ParamSet out;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        auto t = tensors_[i].detach();
        t.set_requires_grad(trainable);
        out.add(names_[i], std::move(t));
    }
    return out;
}

void ParamSet::zero_grad() {
    for (auto& t : tensors_) t.zero_grad();
}

MgpParams mgp_params(const ParamSet& p) {
    return {p.at("mgp.fc1.w"),   p.at("mgp.fc2.w"),   p.at("mgp.conv1.w"), p.at("mgp.conv1.b"), p.at("mgp.conv3.w"),
            p.at("mgp.conv3.b"), p.at("mgp.conv7.w"), p.at("mgp.conv7.b"), p.at("mgp.fuse.w")};
}

Tensor mgp(const Tensor& feat, const MgpParams& p) {
    if (feat.rank() != 4) fail(ErrorCode::ShapeMismatch, "mgp: feat must be N x C x h x w");
    if (p.fc1.rank() != 2 || p.fc1.dim(1) != feat.dim(1) || feat.dim(1) % p.fc1.dim(0) != 0) {
        fail(ErrorCode::ShapeMismatch, "mgp: channel attention weights do not match feat channels");
    }
    const Tensor alpha = nd::sigmoid(nd::linear(nd::relu(nd::linear(nd::global_avg_pool_spatial(feat), p.fc1, {})), p.fc2, {}));
    const Tensor feat_c = nd::mul_channelwise(feat, alpha);
    const Tensor pooled = nd::channel_mean_pool(feat_c);
    auto branch = [&](const Tensor& w, const Tensor& b) { return nd::sigmoid(nd::relu(nd::conv2d(pooled, w, b))); };
    const Tensor fused = nd::concat_channel({branch(p.conv1_w, p.conv1_b), branch(p.conv3_w, p.conv3_b),
                                            branch(p.conv7_w, p.conv7_b)});
    return nd::sigmoid(nd::conv2d(fused, p.fuse_w, {}));
}

ModelOutput forward(const Tensor& images, const ParamSet& p, const UNetConfig& cfg, Mode mode) {
    validate(cfg);
    if (images.rank() != 4 || images.dim(1) != cfg.in_channels) {
        fail(ErrorCode::ShapeMismatch, "forward: expected N x " + std::to_string(cfg.in_channels) + " x H x W input");
    }
    const int h = images.dim(2), w = images.dim(3);
    const int factor = 1 << cfg.depth;
    if (h % factor != 0 || w % factor != 0) {
        fail(ErrorCode::BadSpatialDims, "H and W must be divisible by " + std::to_string(factor));
    }
    std::optional<nd::NoGradGuard> no_grad;
    if (mode == Mode::Eval) no_grad.emplace();

    Tensor x = images;
    std::vector<Tensor> skips;
    for (int l = 0; l < cfg.depth; ++l) {
        const std::string block = "enc" + std::to_string(l);
        x = conv_relu(x, p, conv_name(block, 1));
        x = conv_relu(x, p, conv_name(block, 2));
        skips.push_back(x);
        x = nd::maxpool2d(x, 2);
    }
    x = conv_relu(x, p, "bottleneck.conv1");
    x = conv_relu(x, p, "bottleneck.conv2");
    for (int l = cfg.depth - 1; l >= 0; --l) {
        const auto& skip = skips[static_cast<std::size_t>(l)];
        x = nd::upsample_bilinear2d(x, skip.dim(2), skip.dim(3));
        x = nd::concat_channel({x, skip});
        const std::string block = "dec" + std::to_string(l);
        x = conv_relu(x, p, conv_name(block, 1));
        x = conv_relu(x, p, conv_name(block, 2));
    }

    ModelOutput out;
    out.feat = x;
    out.logits = nd::conv2d(x, p.at("head.w"), p.at("head.b"));
    if (cfg.mgp) {
        Tensor g = mgp(x, mgp_params(p));
        if (g.dim(2) != h || g.dim(3) != w) g = nd::upsample_bilinear2d(g, h, w);
        out.g_net = g;
    }
    return out;
}

ParamSet init_params(const UNetConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    std::mt19937_64 rng(seed);
    ParamSet p;
    auto he = [&](nd::Shape shape, int fan_in) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        std::vector<double> data(nd::numel(shape));
        for (auto& v : data) v = dist(rng);
        return Tensor::from(std::move(shape), std::move(data), true);
    };
    auto conv = [&](const std::string& name, int ci, int co, int k) {
        p.add(name + ".w", he({co, ci, k, k}, ci * k * k));
        p.add(name + ".b", Tensor::zeros({co}, true));
    };

    int in = cfg.in_channels;
    for (int l = 0; l < cfg.depth; ++l) {
        const std::string block = "enc" + std::to_string(l);
        conv(conv_name(block, 1), in, channels_at(cfg, l), 3);
        conv(conv_name(block, 2), channels_at(cfg, l), channels_at(cfg, l), 3);
        in = channels_at(cfg, l);
    }
    conv("bottleneck.conv1", in, channels_at(cfg, cfg.depth), 3);
    conv("bottleneck.conv2", channels_at(cfg, cfg.depth), channels_at(cfg, cfg.depth), 3);
    for (int l = cfg.depth - 1; l >= 0; --l) {
        const std::string block = "dec" + std::to_string(l);
        conv(conv_name(block, 1), channels_at(cfg, l + 1) + channels_at(cfg, l), channels_at(cfg, l), 3);
        conv(conv_name(block, 2), channels_at(cfg, l), channels_at(cfg, l), 3);
    }
    conv("head", cfg.base_channels, cfg.num_classes, 1);
    if (cfg.mgp) {
        const int c = cfg.base_channels, r = c / cfg.mgp_reduction;
        p.add("mgp.fc1.w", he({r, c}, c));
        p.add("mgp.fc2.w", he({c, r}, r));
        conv("mgp.conv1", 1, 1, 1);
        conv("mgp.conv3", 1, 1, 3);
        conv("mgp.conv7", 1, 1, 7);
        p.add("mgp.fuse.w", he({1, 3, 1, 1}, 3));
    }
    return p;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    nlohmann::json params = nlohmann::json::array();
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
        params.push_back({{"name", ckpt.params.name(i)}, {"shape", ckpt.params[i].shape()}});
    }
    const nlohmann::json header = {{"format", "gazeseg-checkpoint-v1"},
                                   {"config", to_json(ckpt.config)},
                                   {"iteration", ckpt.iteration},
                                   {"role", ckpt.role},
                                   {"params", params}};
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write checkpoint " + path.string());
    out << header.dump() << '\n';
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) io::write_f64(out, ckpt.params[i].data());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot read checkpoint " + path.string());
    std::string line;
    std::getline(in, line);
    const auto header = nlohmann::json::parse(line);
    Checkpoint ck;
    ck.config = unet_from_json(header.at("config"));
    ck.iteration = header.at("iteration").get<std::int64_t>();
    ck.role = header.at("role").get<std::string>();
    for (const auto& entry : header.at("params")) {
        auto shape = entry.at("shape").get<nd::Shape>();
        auto t = Tensor::zeros(shape, false);
        io::read_f64(in, t.data());
        ck.params.add(entry.at("name").get<std::string>(), std::move(t));
    }
    return ck;
}

}  // namespace gazeseg
