#pragma once

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "gazeseg/grid.hpp"

namespace gazeseg {

struct ClassMetrics {
    std::optional<double> dice;
    std::optional<double> jaccard;
    std::optional<double> hd95_px;
    std::optional<double> asd_px;
};

struct MetricReport {
    std::map<int, ClassMetrics> per_class;  // foreground classes only
    // Means over foreground classes where the value is defined.
    ClassMetrics macro;
};

struct OverlapScores {
    double dice = 1.0;
    double jaccard = 1.0;
};

struct SurfaceScores {
    double hd95_px = 0.0;
    double asd_px = 0.0;
};

// Both scores are 1 when the class is absent from both maps.
OverlapScores dice_jaccard(const LabelMap& pred, const LabelMap& gt, int cls);

// Border pixels: in the mask with at least one 4-neighbour outside it (the
// image edge counts as outside).
std::vector<std::pair<int, int>> boundary_pixels(const LabelMap& labels, int cls);

// Pooled directed nearest-boundary distances in both directions; hd95 is their
// 95th percentile (linear interpolation) and asd their mean.
SurfaceScores surface_distances(const LabelMap& pred, const LabelMap& gt, int cls);

double percentile_linear(std::vector<double> values, double q);

// Classes absent from both maps are left undefined; surface distances are
// undefined unless the class is present in both.
MetricReport evaluate(const LabelMap& pred, const LabelMap& gt, int num_classes);

// Mean of the per-sample macro values (ignoring undefined entries).
ClassMetrics average_macro(const std::vector<MetricReport>& reports);

}  // namespace gazeseg
