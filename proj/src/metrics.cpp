#include "gazeseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gazeseg/error.hpp"

namespace gazeseg {

namespace {

void check_shapes(const LabelMap& a, const LabelMap& b) {
    if (a.dims() != b.dims()) fail(ErrorCode::ShapeMismatch, "prediction and ground truth differ in size");
}

// For every point in `from`, distance to the nearest point of `to`.
void directed(const std::vector<std::pair<int, int>>& from, const std::vector<std::pair<int, int>>& to,
              std::vector<double>& out) {
    for (auto [fx, fy] : from) {
        double best = std::numeric_limits<double>::infinity();
        for (auto [tx, ty] : to) {
            const double dx = fx - tx, dy = fy - ty;
            best = std::min(best, dx * dx + dy * dy);
        }
        out.push_back(std::sqrt(best));
    }
}

void accumulate(std::optional<double>& sum, int& count, const std::optional<double>& v) {
    if (!v) return;
    sum = sum.value_or(0.0) + *v;
    ++count;
}

ClassMetrics mean_of(const std::vector<const ClassMetrics*>& items) {
    ClassMetrics out;
    int nd = 0, nj = 0, nh = 0, na = 0;
    for (const auto* m : items) {
        accumulate(out.dice, nd, m->dice);
        accumulate(out.jaccard, nj, m->jaccard);
        accumulate(out.hd95_px, nh, m->hd95_px);
        accumulate(out.asd_px, na, m->asd_px);
    }
    if (out.dice) *out.dice /= nd;
    if (out.jaccard) *out.jaccard /= nj;
    if (out.hd95_px) *out.hd95_px /= nh;
    if (out.asd_px) *out.asd_px /= na;
    return out;
}

}  // namespace

OverlapScores dice_jaccard(const LabelMap& pred, const LabelMap& gt, int cls) {
    check_shapes(pred, gt);
    std::size_t p = 0, g = 0, both = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool in_p = pred[i] == cls, in_g = gt[i] == cls;
        p += in_p;
        g += in_g;
        both += in_p && in_g;
    }
    if (p + g == 0) return {1.0, 1.0};
    const double union_size = static_cast<double>(p + g - both);
    return {2.0 * static_cast<double>(both) / static_cast<double>(p + g), static_cast<double>(both) / union_size};
}

std::vector<std::pair<int, int>> boundary_pixels(const LabelMap& labels, int cls) {
    std::vector<std::pair<int, int>> out;
    const int w = labels.width(), h = labels.height();
    auto inside = [&](int x, int y) { return x >= 0 && y >= 0 && x < w && y < h && labels(x, y) == cls; };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!inside(x, y)) continue;
            if (!inside(x - 1, y) || !inside(x + 1, y) || !inside(x, y - 1) || !inside(x, y + 1)) out.emplace_back(x, y);
        }
    }
    return out;
}

double percentile_linear(std::vector<double> values, double q) {
    if (values.empty()) fail(ErrorCode::InvalidArgument, "percentile of an empty set");
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + (values[hi] - values[lo]) * frac;
}

SurfaceScores surface_distances(const LabelMap& pred, const LabelMap& gt, int cls) {
    check_shapes(pred, gt);
    const auto bp = boundary_pixels(pred, cls);
    const auto bg = boundary_pixels(gt, cls);
    if (bp.empty()) fail(ErrorCode::EmptyMask, "prediction has no pixels of class " + std::to_string(cls));
    if (bg.empty()) fail(ErrorCode::EmptyMask, "ground truth has no pixels of class " + std::to_string(cls));
    std::vector<double> pooled;
    pooled.reserve(bp.size() + bg.size());
    directed(bp, bg, pooled);
    directed(bg, bp, pooled);
    double total = 0.0;
    for (double d : pooled) total += d;
    return {percentile_linear(pooled, 95.0), total / static_cast<double>(pooled.size())};
}

MetricReport evaluate(const LabelMap& pred, const LabelMap& gt, int num_classes) {
    check_shapes(pred, gt);
    MetricReport report;
    std::vector<const ClassMetrics*> items;
    for (int c = 1; c < num_classes; ++c) {
        bool in_p = false, in_g = false;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            in_p = in_p || pred[i] == c;
            in_g = in_g || gt[i] == c;
        }
        ClassMetrics m;
        if (in_p || in_g) {
            const auto o = dice_jaccard(pred, gt, c);
            m.dice = o.dice;
            m.jaccard = o.jaccard;
        }
        if (in_p && in_g) {
            const auto s = surface_distances(pred, gt, c);
            m.hd95_px = s.hd95_px;
            m.asd_px = s.asd_px;
        }
        report.per_class[c] = m;
    }
    for (const auto& [c, m] : report.per_class) items.push_back(&m);
    report.macro = mean_of(items);
    return report;
}

ClassMetrics average_macro(const std::vector<MetricReport>& reports) {
    std::vector<const ClassMetrics*> items;
    for (const auto& r : reports) items.push_back(&r.macro);
    return mean_of(items);
}

}  // namespace gazeseg
