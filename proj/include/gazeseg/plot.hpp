#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace gazeseg {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

struct Chart {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
    int width = 640;
    int height = 400;
    bool markers = false;
};

// Plain SVG line chart; non-finite points are skipped.
std::string render_svg(const Chart& chart);

// Loss curves (l_all, l_seg, l_gaze) and val_dice from a JSON-lines training log.
Chart loss_chart(const std::filesystem::path& log_path);

// Metric-vs-lambda chart from a CSV with a `lambda` column; one series per metric column.
Chart lambda_chart(const std::filesystem::path& csv_path, const std::vector<std::string>& metrics = {"dice"});

}  // namespace gazeseg
