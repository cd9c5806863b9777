#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "gazeseg/tensor.hpp"

namespace gazeseg {

struct UNetConfig {
    int in_channels = 1;
    int base_channels = 16;
    int depth = 3;
    int num_classes = 3;
    bool mgp = true;         // attach the multi-scale perception head
    int mgp_reduction = 4;   // channel bottleneck of the attention MLP
};

nlohmann::json to_json(const UNetConfig& cfg);
UNetConfig unet_from_json(const nlohmann::json& j);

// Named parameter tensors in declaration order.
class ParamSet {
   public:
    void add(std::string name, nd::Tensor t);
    const nd::Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t size() const { return tensors_.size(); }
    const std::string& name(std::size_t i) const { return names_[i]; }
    nd::Tensor& operator[](std::size_t i) { return tensors_[i]; }
    const nd::Tensor& operator[](std::size_t i) const { return tensors_[i]; }
    std::size_t scalar_count() const;

    // Deep copy; the copies require grad iff `trainable`.
    ParamSet clone(bool trainable) const;
    void zero_grad();

   private:
    std::vector<std::string> names_;
    std::vector<nd::Tensor> tensors_;
    std::map<std::string, std::size_t> index_;
};

struct MgpParams {
    nd::Tensor fc1;     // C/r x C
    nd::Tensor fc2;     // C x C/r
    nd::Tensor conv1_w, conv1_b;
    nd::Tensor conv3_w, conv3_b;
    nd::Tensor conv7_w, conv7_b;
    nd::Tensor fuse_w;  // 1 x 3 x 1 x 1
};

MgpParams mgp_params(const ParamSet& params);

// Multi-scale perception map at feature resolution:
//   alpha  = sigmoid(fc2(relu(fc1(spatial_mean(feat)))))
//   feat_c = alpha (x) feat                       per channel
//   beta_k = sigmoid(relu(conv_k(channel_mean(feat_c)) + b_k)),  k = 1, 3, 7
//   g      = sigmoid(conv_1x1(beta_1 ++ beta_3 ++ beta_7))
nd::Tensor mgp(const nd::Tensor& feat, const MgpParams& p);

enum class Mode { Train, Eval };

struct ModelOutput {
    nd::Tensor logits;  // N x K x H x W
    nd::Tensor g_net;   // N x 1 x H x W, undefined when the head is disabled
    nd::Tensor feat;    // decoder output feeding both heads
};

// Eval mode records no graph.
ModelOutput forward(const nd::Tensor& images, const ParamSet& params, const UNetConfig& cfg, Mode mode);

// He-normal weights (std sqrt(2 / fan_in)), zero biases, deterministic per seed.
ParamSet init_params(const UNetConfig& cfg, std::uint64_t seed);

struct Checkpoint {
    UNetConfig config;
    std::int64_t iteration = 0;
    std::string role;  // "student" | "teacher"
    ParamSet params;
};

// One JSON header line, then the parameters as raw little-endian float64 in declaration order.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gazeseg
