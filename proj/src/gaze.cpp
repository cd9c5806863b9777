#include "gazeseg/gaze.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

#include "gazeseg/io.hpp"

namespace gazeseg {

namespace {

std::vector<GazePoint> select(const GazeTrace& trace, PointClass which) {
    if (!trace.classified()) fail(ErrorCode::InvalidArgument, "trace has not been classified");
    std::vector<GazePoint> out;
    for (std::size_t i = 0; i < trace.points.size(); ++i) {
        if (trace.classification[i] == which) out.push_back(trace.points[i]);
    }
    return out;
}

// Speed between two points in px/s; timestamps are in milliseconds.
double speed(const GazePoint& a, const GazePoint& b) {
    const double dt_s = (b.t - a.t) / 1000.0;
    return std::hypot(b.x - a.x, b.y - a.y) / dt_s;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::vector<GazePoint> GazeTrace::fixations() const { return select(*this, PointClass::Fixation); }
std::vector<GazePoint> GazeTrace::saccades() const { return select(*this, PointClass::Saccade); }

GazeTrace classify_points(const GazeTrace& trace, const FilterConfig& cfg) {
    if (!(cfg.v_th > 0.0)) fail(ErrorCode::InvalidArgument, "v_th must be positive");
    const auto& pts = trace.points;
    if (pts.size() < 2) fail(ErrorCode::TraceTooShort, "need at least 2 points, got " + std::to_string(pts.size()));
    for (std::size_t i = 1; i < pts.size(); ++i) {
        if (!(pts[i].t > pts[i - 1].t)) {
            fail(ErrorCode::NonMonotoneTimestamps, "timestamp at index " + std::to_string(i) + " does not increase");
        }
    }

    // fast[i] describes the step between point i and point i+1.
    std::vector<bool> fast(pts.size() - 1);
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) fast[i] = speed(pts[i], pts[i + 1]) >= cfg.v_th;

    GazeTrace out = trace;
    out.classification.assign(pts.size(), PointClass::Fixation);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const bool before = i > 0 && fast[i - 1];
        const bool after = i + 1 < pts.size() && fast[i];
        if (before || after) out.classification[i] = PointClass::Saccade;
    }
    return out;
}

GazeHeatmap render_heatmap(const std::vector<GazePoint>& fixations, Dims dims, double sigma_px) {
    if (fixations.empty()) fail(ErrorCode::EmptyFixationSet, "no fixations to render");
    if (!(sigma_px > 0.0)) fail(ErrorCode::InvalidArgument, "sigma_px must be positive");
    if (dims.w <= 0 || dims.h <= 0) fail(ErrorCode::InvalidArgument, "heatmap dims must be positive");

    // The kernel is separable: exp(-(dx^2+dy^2)/2s^2) = exp(-dx^2/2s^2) * exp(-dy^2/2s^2).
    const double inv = 1.0 / (2.0 * sigma_px * sigma_px);
    Heatmap values(dims, 0.0);
    std::vector<double> kx(static_cast<std::size_t>(dims.w));
    std::vector<double> ky(static_cast<std::size_t>(dims.h));
    for (const auto& f : fixations) {
        for (int x = 0; x < dims.w; ++x) kx[static_cast<std::size_t>(x)] = std::exp(-(x - f.x) * (x - f.x) * inv);
        for (int y = 0; y < dims.h; ++y) ky[static_cast<std::size_t>(y)] = std::exp(-(y - f.y) * (y - f.y) * inv);
        for (int y = 0; y < dims.h; ++y) {
            const double wy = ky[static_cast<std::size_t>(y)];
            for (int x = 0; x < dims.w; ++x) values(x, y) += wy * kx[static_cast<std::size_t>(x)];
        }
    }
    const double peak = *std::max_element(values.values().begin(), values.values().end());
    if (peak > 0.0) {
        for (auto& v : values.values()) v /= peak;
    }
    return {std::move(values), sigma_px};
}

GazeHeatmap trace_heatmap(const GazeTrace& trace, const FilterConfig& cfg, double sigma_px) {
    const auto classified = trace.classified() ? trace : classify_points(trace, cfg);
    return render_heatmap(classified.fixations(), trace.image_dims, sigma_px);
}

GazePoint clamp_to(GazePoint p, Dims dims) {
    const double xmax = std::nextafter(static_cast<double>(dims.w), 0.0);
    const double ymax = std::nextafter(static_cast<double>(dims.h), 0.0);
    p.x = std::clamp(p.x, 0.0, xmax);
    p.y = std::clamp(p.y, 0.0, ymax);
    return p;
}

GazeTrace parse_trace_csv_text(const std::string& text, Dims dims) {
    GazeTrace trace;
    trace.image_dims = dims;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto body = trim(line);
        if (body.empty()) continue;
        if (line_no == 1 && body == "t_ms,x,y") continue;
        const auto c1 = body.find(',');
        const auto c2 = c1 == std::string_view::npos ? c1 : body.find(',', c1 + 1);
        if (c2 == std::string_view::npos || body.find(',', c2 + 1) != std::string_view::npos) {
            throw MalformedLineError(line_no, "expected 3 comma-separated fields");
        }
        GazePoint p;
        if (!parse_double(body.substr(0, c1), p.t) || !parse_double(body.substr(c1 + 1, c2 - c1 - 1), p.x) ||
            !parse_double(body.substr(c2 + 1), p.y)) {
            throw MalformedLineError(line_no, "non-numeric field");
        }
        trace.points.push_back(clamp_to(p, dims));
    }
    if (trace.points.empty()) fail(ErrorCode::EmptyFile, "no gaze points");
    return trace;
}

GazeTrace parse_trace_csv(const std::filesystem::path& path, Dims dims) {
    return parse_trace_csv_text(io::read_text(path), dims);
}

std::string format_trace_csv(const GazeTrace& trace) {
    std::string out = "t_ms,x,y\n";
    for (const auto& p : trace.points) {
        out += fmt_double(p.t) + "," + fmt_double(p.x) + "," + fmt_double(p.y) + "\n";
    }
    return out;
}

void write_trace_csv(const std::filesystem::path& path, const GazeTrace& trace) {
    io::write_text(path, format_trace_csv(trace));
}

void write_heatmap(const std::filesystem::path& path, const GazeHeatmap& heatmap) {
    io::write_f32(path, heatmap.values.values());
    nlohmann::json side = {{"w", heatmap.values.width()}, {"h", heatmap.values.height()}, {"sigma_px", heatmap.sigma_px}};
    io::write_text(path.string() + ".json", side.dump() + "\n");
}

GazeHeatmap read_heatmap(const std::filesystem::path& path) {
    const auto side = nlohmann::json::parse(io::read_text(path.string() + ".json"));
    const Dims dims{side.at("w").get<int>(), side.at("h").get<int>()};
    auto values = io::read_f32(path);
    return {Heatmap(dims, std::move(values)), side.at("sigma_px").get<double>()};
}

}  // namespace gazeseg
