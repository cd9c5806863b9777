#include "gazeseg/gazemix.hpp"

#include <algorithm>
#include <cmath>

namespace gazeseg {

namespace {

void fit_axis(int& lo, int& hi, int limit, int min_side) {
    lo = std::max(lo, 0);
    hi = std::min(hi, limit);
    const int side = std::min(min_side, limit);
    if (hi - lo < side) {
        const int deficit = side - (hi - lo);
        lo -= deficit / 2;
        hi += deficit - deficit / 2;
        if (lo < 0) {
            hi -= lo;
            lo = 0;
        }
        if (hi > limit) {
            lo -= hi - limit;
            hi = limit;
        }
    }
}

void check_rect(const GazeRect& r, Dims dims, const char* which) {
    if (!(0 <= r.x0 && r.x0 < r.x1 && r.x1 <= dims.w && 0 <= r.y0 && r.y0 < r.y1 && r.y1 <= dims.h)) {
        fail(ErrorCode::InvalidArgument, std::string(which) + " rect is outside the image or empty");
    }
}

}  // namespace

Grid<std::uint8_t> GazeRect::mask(Dims dims) const {
    Grid<std::uint8_t> m(dims, 0);
    for (int y = std::max(y0, 0); y < std::min(y1, dims.h); ++y) {
        for (int x = std::max(x0, 0); x < std::min(x1, dims.w); ++x) m(x, y) = 1;
    }
    return m;
}

GazeRect gaze_rect_from_points(const std::vector<GazePoint>& points, Dims dims, const RectConfig& cfg) {
    if (points.empty()) fail(ErrorCode::NoFixations, "no points to bound");
    double xmin = points[0].x, xmax = points[0].x, ymin = points[0].y, ymax = points[0].y;
    for (const auto& p : points) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    GazeRect r{static_cast<int>(std::floor(xmin)) - cfg.margin_px, static_cast<int>(std::floor(ymin)) - cfg.margin_px,
               static_cast<int>(std::floor(xmax)) + 1 + cfg.margin_px,
               static_cast<int>(std::floor(ymax)) + 1 + cfg.margin_px};
    fit_axis(r.x0, r.x1, dims.w, cfg.min_side);
    fit_axis(r.y0, r.y1, dims.h, cfg.min_side);
    return r;
}

GazeRect gaze_rect(const GazeTrace& classified, const RectConfig& cfg) {
    if (cfg.all_points) return gaze_rect_from_points(classified.points, classified.image_dims, cfg);
    const auto fix = classified.fixations();
    if (fix.empty()) fail(ErrorCode::NoFixations, "trace has no fixations");
    return gaze_rect_from_points(fix, classified.image_dims, cfg);
}

int nearest_source(int dst, int src_len, int dst_len) {
    const double scale = static_cast<double>(src_len) / dst_len;
    const int s = static_cast<int>(std::floor((dst + 0.5) * scale));
    return std::clamp(s, 0, src_len - 1);
}

Image resize_bilinear(const Image& src, const GazeRect& crop, int out_w, int out_h) {
    check_rect(crop, src.dims(), "crop");
    const int cw = crop.width(), ch = crop.height();
    Image out(Dims{out_w, out_h}, 0.0);
    if (cw == out_w && ch == out_h) {
        for (int y = 0; y < out_h; ++y) {
            for (int x = 0; x < out_w; ++x) out(x, y) = src(crop.x0 + x, crop.y0 + y);
        }
        return out;
    }
    auto axis = [](int dst, int src_len, int dst_len, int& lo, int& hi, double& frac) {
        double s = (dst + 0.5) * (static_cast<double>(src_len) / dst_len) - 0.5;
        if (s < 0.0) s = 0.0;
        lo = std::min(static_cast<int>(std::floor(s)), src_len - 1);
        hi = std::min(lo + 1, src_len - 1);
        frac = s - lo;
    };
    for (int y = 0; y < out_h; ++y) {
        int y0, y1;
        double fy;
        axis(y, ch, out_h, y0, y1, fy);
        for (int x = 0; x < out_w; ++x) {
            int x0, x1;
            double fx;
            axis(x, cw, out_w, x0, x1, fx);
            const double a = src(crop.x0 + x0, crop.y0 + y0), b = src(crop.x0 + x1, crop.y0 + y0);
            const double c = src(crop.x0 + x0, crop.y0 + y1), d = src(crop.x0 + x1, crop.y0 + y1);
            out(x, y) = (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * d);
        }
    }
    return out;
}

LabelMap resize_nearest(const LabelMap& src, const GazeRect& crop, int out_w, int out_h) {
    check_rect(crop, src.dims(), "crop");
    LabelMap out(Dims{out_w, out_h}, 0);
    for (int y = 0; y < out_h; ++y) {
        const int sy = crop.y0 + nearest_source(y, crop.height(), out_h);
        for (int x = 0; x < out_w; ++x) out(x, y) = src(crop.x0 + nearest_source(x, crop.width(), out_w), sy);
    }
    return out;
}

PreparedSample prepare(const Sample& s, const PrepareConfig& cfg) {
    const auto classified = s.trace.classified() ? s.trace : classify_points(s.trace, cfg.filter);
    const double sigma = cfg.sigma_px > 0.0 ? cfg.sigma_px : default_sigma(s.image.dims());
    PreparedSample p;
    p.id = s.id;
    p.image = s.image;
    p.heatmap = render_heatmap(classified.fixations(), s.image.dims(), sigma).values;
    p.label = s.label;
    p.rect = gaze_rect(classified, cfg.rect);
    return p;
}

MixedSample mix(const PreparedSample& fg, const PreparedSample& bg, const GazeRect& fg_rect, const GazeRect& bg_rect) {
    if (fg.image.dims() != bg.image.dims() || fg.heatmap.dims() != fg.image.dims() ||
        bg.heatmap.dims() != bg.image.dims()) {
        fail(ErrorCode::DimMismatch, "foreground and background must share dims");
    }
    const Dims dims = bg.image.dims();
    check_rect(fg_rect, dims, "foreground");
    check_rect(bg_rect, dims, "background");
    const int tw = bg_rect.width(), th = bg_rect.height();

    MixedSample m;
    m.image = bg.image;
    m.heatmap = bg.heatmap;
    m.paste_rect = bg_rect;
    m.foreground_id = fg.id;
    m.background_id = bg.id;

    const auto img = resize_bilinear(fg.image, fg_rect, tw, th);
    const auto heat = resize_bilinear(fg.heatmap, fg_rect, tw, th);
    for (int y = 0; y < th; ++y) {
        for (int x = 0; x < tw; ++x) {
            m.image(bg_rect.x0 + x, bg_rect.y0 + y) = img(x, y);
            m.heatmap(bg_rect.x0 + x, bg_rect.y0 + y) = heat(x, y);
        }
    }
    if (fg.label) {
        const auto lbl = resize_nearest(*fg.label, fg_rect, tw, th);
        LabelMap region(dims, 0);
        for (int y = 0; y < th; ++y) {
            for (int x = 0; x < tw; ++x) region(bg_rect.x0 + x, bg_rect.y0 + y) = lbl(x, y);
        }
        m.region_label = std::move(region);
    }
    return m;
}

LabelMap compose_label(const MixedSample& m, const LabelMap& outside) {
    if (!m.region_label) fail(ErrorCode::InvalidArgument, "mixed sample carries no foreground label");
    if (outside.dims() != m.image.dims()) fail(ErrorCode::DimMismatch, "outside label dims differ");
    LabelMap out = outside;
    for (int y = m.paste_rect.y0; y < m.paste_rect.y1; ++y) {
        for (int x = m.paste_rect.x0; x < m.paste_rect.x1; ++x) out(x, y) = (*m.region_label)(x, y);
    }
    return out;
}

}  // namespace gazeseg
