#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

#include "gazeseg/tensor.hpp"

namespace gazeseg {

struct LossReport {
    double l_gaze = 0.0;
    double l_gt = 0.0;
    double l_pse = 0.0;
    double l_seg = 0.0;
    double l_all = 0.0;
    double lambda = 0.5;
};

nlohmann::json to_json(const LossReport& r);

struct DiceCeOptions {
    double dice_weight = 0.5;
    double ce_weight = 0.5;
    double smooth = 1e-5;
};

// Mean squared error over every element.
nd::Tensor gaze_loss(const nd::Tensor& g_net, const nd::Tensor& g_human);

// Soft Dice (per class over the whole batch, averaged over all K classes) plus
// mean pixel cross-entropy. `target` is N*H*W class indices; `region_mask`,
// when non-empty, selects the supervised pixels for both terms. An empty
// selection yields 0.
nd::Tensor dice_ce_loss(const nd::Tensor& logits, std::span<const std::uint8_t> target,
                        std::span<const std::uint8_t> region_mask = {}, const DiceCeOptions& opts = {});

// l_seg = (l_gt + l_pse) / 2 and l_all = l_seg + lambda * l_gaze.
LossReport total_loss(double l_gt, double l_pse, double l_gaze, double lambda);

struct CombinedLoss {
    nd::Tensor l_all;
    LossReport report;
};

// Differentiable form of total_loss; `l_gaze` may be undefined (no perception head).
CombinedLoss combine_losses(const nd::Tensor& l_gt, const nd::Tensor& l_pse, const nd::Tensor& l_gaze, double lambda);

}  // namespace gazeseg
