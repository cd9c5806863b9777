#pragma once

#include <filesystem>
#include <vector>

#include "gazeseg/grid.hpp"

namespace gazeseg {

struct GazePoint {
    double x = 0.0;  // column, pixels
    double y = 0.0;  // row, pixels
    double t = 0.0;  // milliseconds

    friend bool operator==(const GazePoint&, const GazePoint&) = default;
};

enum class PointClass : std::uint8_t { Fixation, Saccade };

struct GazeTrace {
    std::vector<GazePoint> points;
    std::vector<PointClass> classification;  // empty until classify_points has run
    Dims image_dims{};

    bool classified() const { return !points.empty() && classification.size() == points.size(); }
    std::vector<GazePoint> fixations() const;
    std::vector<GazePoint> saccades() const;
};

struct FilterConfig {
    double v_th = 300.0;  // px/s
};

struct GazeHeatmap {
    Heatmap values;
    double sigma_px = 0.0;
};

// Velocity-threshold fixation filter. Interior points need both neighbour
// velocities below v_th to be a fixation; any neighbour at or above v_th makes
// the point a saccade. Endpoints use their single neighbour.
GazeTrace classify_points(const GazeTrace& trace, const FilterConfig& cfg = {});

// Gaussian density of the fixations, rescaled so the peak cell is exactly 1.
// Cell (x, y) sits at integer pixel coordinates.
GazeHeatmap render_heatmap(const std::vector<GazePoint>& fixations, Dims dims, double sigma_px);

// Default kernel width: 5% of the image width.
inline double default_sigma(Dims dims) { return 0.05 * dims.w; }

// Convenience: classify, then render the fixations.
GazeHeatmap trace_heatmap(const GazeTrace& trace, const FilterConfig& cfg, double sigma_px);

GazePoint clamp_to(GazePoint p, Dims dims);

// CSV with header `t_ms,x,y`; the header line is optional on input.
GazeTrace parse_trace_csv(const std::filesystem::path& path, Dims dims);
GazeTrace parse_trace_csv_text(const std::string& text, Dims dims);
void write_trace_csv(const std::filesystem::path& path, const GazeTrace& trace);
std::string format_trace_csv(const GazeTrace& trace);

// Raw little-endian float32 values plus `<path>.json` sidecar {w, h, sigma_px}.
void write_heatmap(const std::filesystem::path& path, const GazeHeatmap& heatmap);
GazeHeatmap read_heatmap(const std::filesystem::path& path);

}  // namespace gazeseg
