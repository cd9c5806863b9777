#include "gazeseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gazeseg/error.hpp"

namespace gazeseg {

using nd::Tensor;

nlohmann::json to_json(const LossReport& r) {
    return {{"l_gaze", r.l_gaze}, {"l_gt", r.l_gt}, {"l_pse", r.l_pse},
            {"l_seg", r.l_seg},   {"l_all", r.l_all}, {"lambda", r.lambda}};
}

Tensor gaze_loss(const Tensor& g_net, const Tensor& g_human) {
    if (g_net.shape() != g_human.shape()) {
        fail(ErrorCode::ShapeMismatch, "gaze_loss: " + nd::shape_str(g_net.shape()) + " vs " + nd::shape_str(g_human.shape()));
    }
    return nd::mse_mean(g_net, g_human);
}

Tensor dice_ce_loss(const Tensor& logits, std::span<const std::uint8_t> target, std::span<const std::uint8_t> region_mask,
                    const DiceCeOptions& opts) {
    if (logits.rank() != 4) fail(ErrorCode::ShapeMismatch, "dice_ce_loss: logits must be N x K x H x W");
    const int n = logits.dim(0), k = logits.dim(1);
    const std::size_t hw = static_cast<std::size_t>(logits.dim(2)) * logits.dim(3);
    const std::size_t pixels = static_cast<std::size_t>(n) * hw;
    if (target.size() != pixels) fail(ErrorCode::ShapeMismatch, "dice_ce_loss: target size does not match logits");
    if (!region_mask.empty() && region_mask.size() != pixels) {
        fail(ErrorCode::ShapeMismatch, "dice_ce_loss: region mask size does not match logits");
    }
    for (auto t : target) {
        if (t >= k) fail(ErrorCode::ClassOutOfRange, "target class " + std::to_string(t) + " >= K=" + std::to_string(k));
    }
    auto selected = [&](std::size_t i) { return region_mask.empty() || region_mask[i] != 0; };

    // Channel softmax and log-softmax per pixel.
    const auto z = logits.data();
    auto prob = std::make_shared<std::vector<double>>(logits.numel());
    double ce = 0.0;
    std::size_t count = 0;
    for (int b = 0; b < n; ++b) {
        for (std::size_t p = 0; p < hw; ++p) {
            const std::size_t base = static_cast<std::size_t>(b) * k * hw + p;
            double mx = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) mx = std::max(mx, z[base + c * hw]);
            double s = 0.0;
            for (int c = 0; c < k; ++c) s += std::exp(z[base + c * hw] - mx);
            for (int c = 0; c < k; ++c) (*prob)[base + c * hw] = std::exp(z[base + c * hw] - mx) / s;
            const std::size_t pix = static_cast<std::size_t>(b) * hw + p;
            if (selected(pix)) {
                ce -= z[base + target[pix] * hw] - mx - std::log(s);
                ++count;
            }
        }
    }
    if (count == 0) {
        return nd::make_result({}, {0.0}, {logits}, [](const nd::TensorImpl&) {});
    }
    ce /= static_cast<double>(count);

    // Per-class soft Dice over the selected pixels of the whole batch.
    std::vector<double> inter(static_cast<std::size_t>(k), 0.0), psum(static_cast<std::size_t>(k), 0.0),
        ysum(static_cast<std::size_t>(k), 0.0);
    for (int b = 0; b < n; ++b) {
        for (std::size_t p = 0; p < hw; ++p) {
            const std::size_t pix = static_cast<std::size_t>(b) * hw + p;
            if (!selected(pix)) continue;
            for (int c = 0; c < k; ++c) {
                const double pr = (*prob)[static_cast<std::size_t>(b) * k * hw + c * hw + p];
                const double y = target[pix] == c ? 1.0 : 0.0;
                inter[static_cast<std::size_t>(c)] += pr * y;
                psum[static_cast<std::size_t>(c)] += pr;
                ysum[static_cast<std::size_t>(c)] += y;
            }
        }
    }
    double dice_mean = 0.0;
    for (int c = 0; c < k; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        dice_mean += (2.0 * inter[ci] + opts.smooth) / (psum[ci] + ysum[ci] + opts.smooth);
    }
    dice_mean /= k;
    const double loss = opts.dice_weight * (1.0 - dice_mean) + opts.ce_weight * ce;

    std::vector<std::uint8_t> tgt(target.begin(), target.end());
    std::vector<std::uint8_t> msk(region_mask.begin(), region_mask.end());
    auto li = logits.shared();
    return nd::make_result({}, {loss}, {logits}, [=](const nd::TensorImpl& o) {
        const double g = o.grad[0];
        auto& gl = li->grad_buffer();
        std::vector<double> dprob(static_cast<std::size_t>(k));
        for (int b = 0; b < n; ++b) {
            for (std::size_t p = 0; p < hw; ++p) {
                const std::size_t pix = static_cast<std::size_t>(b) * hw + p;
                if (!msk.empty() && msk[pix] == 0) continue;
                const std::size_t base = static_cast<std::size_t>(b) * k * hw + p;
                // Dice part, d/dprob.
                double dot = 0.0;
                for (int c = 0; c < k; ++c) {
                    const auto ci = static_cast<std::size_t>(c);
                    const double den = psum[ci] + ysum[ci] + opts.smooth;
                    const double y = tgt[pix] == c ? 1.0 : 0.0;
                    const double dd = (2.0 * y * den - (2.0 * inter[ci] + opts.smooth)) / (den * den);
                    dprob[ci] = -opts.dice_weight * dd / k;
                    dot += dprob[ci] * (*prob)[base + c * hw];
                }
                for (int c = 0; c < k; ++c) {
                    const auto ci = static_cast<std::size_t>(c);
                    const double pr = (*prob)[base + c * hw];
                    const double y = tgt[pix] == c ? 1.0 : 0.0;
                    const double dice_part = pr * (dprob[ci] - dot);
                    const double ce_part = opts.ce_weight * (pr - y) / static_cast<double>(count);
                    gl[base + c * hw] += g * (dice_part + ce_part);
                }
            }
        }
    });
}

LossReport total_loss(double l_gt, double l_pse, double l_gaze, double lambda) {
    LossReport r;
    r.l_gt = l_gt;
    r.l_pse = l_pse;
    r.l_gaze = l_gaze;
    r.lambda = lambda;
    r.l_seg = (l_gt + l_pse) * 0.5;
    r.l_all = r.l_seg + lambda * l_gaze;
    return r;
}

CombinedLoss combine_losses(const Tensor& l_gt, const Tensor& l_pse, const Tensor& l_gaze, double lambda) {
    const Tensor seg = nd::scale(nd::add(l_gt, l_pse), 0.5);
    CombinedLoss out;
    out.l_all = l_gaze.defined() ? nd::add(seg, nd::scale(l_gaze, lambda)) : seg;
    out.report = total_loss(l_gt.item(), l_pse.item(), l_gaze.defined() ? l_gaze.item() : 0.0, lambda);
    return out;
}

}  // namespace gazeseg
