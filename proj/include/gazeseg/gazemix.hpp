#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gazeseg/gaze.hpp"
#include "gazeseg/grid.hpp"
#include "gazeseg/synth.hpp"

namespace gazeseg {

// Integer pixel rectangle [x0, x1) x [y0, y1).
struct GazeRect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
    static GazeRect full(Dims dims) { return {0, 0, dims.w, dims.h}; }
    Grid<std::uint8_t> mask(Dims dims) const;

    friend bool operator==(const GazeRect&, const GazeRect&) = default;
};

struct RectConfig {
    int margin_px = 2;
    int min_side = 4;
    bool all_points = false;  // use every gaze point instead of fixations only
};

// Tightest rectangle around the points, grown by the margin, clipped to the
// image, then widened symmetrically to the minimum side.
GazeRect gaze_rect_from_points(const std::vector<GazePoint>& points, Dims dims, const RectConfig& cfg = {});
GazeRect gaze_rect(const GazeTrace& classified, const RectConfig& cfg = {});

// Crop-space resizes used by the paste. Bilinear uses half-pixel centres.
Image resize_bilinear(const Image& src, const GazeRect& crop, int out_w, int out_h);
LabelMap resize_nearest(const LabelMap& src, const GazeRect& crop, int out_w, int out_h);
// Source index (within the crop) that nearest-neighbour resizing reads for `dst`.
int nearest_source(int dst, int src_len, int dst_len);

// A sample with its gaze products precomputed.
struct PreparedSample {
    std::string id;
    Image image;
    Heatmap heatmap;
    std::optional<LabelMap> label;
    GazeRect rect;
};

struct PrepareConfig {
    FilterConfig filter;
    RectConfig rect;
    double sigma_px = 0.0;  // <= 0: 5% of the image width
};

PreparedSample prepare(const Sample& s, const PrepareConfig& cfg = {});

struct MixedSample {
    Image image;
    Heatmap heatmap;
    // Resized foreground label, meaningful only inside paste_rect.
    std::optional<LabelMap> region_label;
    GazeRect paste_rect;
    std::string foreground_id;
    std::string background_id;
};

MixedSample mix(const PreparedSample& fg, const PreparedSample& bg, const GazeRect& fg_rect, const GazeRect& bg_rect);
inline MixedSample mix(const PreparedSample& fg, const PreparedSample& bg) { return mix(fg, bg, fg.rect, bg.rect); }

// Full-field label: resized foreground label inside the paste rect, `outside` elsewhere.
LabelMap compose_label(const MixedSample& m, const LabelMap& outside);

}  // namespace gazeseg
