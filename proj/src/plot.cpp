#include "gazeseg/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "gazeseg/error.hpp"
#include "gazeseg/io.hpp"

namespace gazeseg {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string esc(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string coord(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

std::string render_svg(const Chart& chart) {
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : chart.series) {
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;

    const double left = 64, right = 150, top = 36, bottom = 48;
    const double pw = chart.width - left - right, ph = chart.height - top - bottom;
    auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto sy = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << chart.width << "\" height=\"" << chart.height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << coord(left + pw / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << esc(chart.title)
      << "</text>\n";
    o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << coord(pw) << "\" height=\"" << coord(ph)
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double xv = x0 + (x1 - x0) * t / 4.0, yv = y0 + (y1 - y0) * t / 4.0;
        o << "<text x=\"" << coord(sx(xv)) << "\" y=\"" << coord(top + ph + 16) << "\" text-anchor=\"middle\">" << num(xv)
          << "</text>\n";
        o << "<text x=\"" << coord(left - 6) << "\" y=\"" << coord(sy(yv) + 4) << "\" text-anchor=\"end\">" << num(yv)
          << "</text>\n";
        o << "<line x1=\"" << left << "\" x2=\"" << coord(left + pw) << "\" y1=\"" << coord(sy(yv)) << "\" y2=\""
          << coord(sy(yv)) << "\" stroke=\"#ddd\"/>\n";
    }
    o << "<text x=\"" << coord(left + pw / 2) << "\" y=\"" << chart.height - 8 << "\" text-anchor=\"middle\">"
      << esc(chart.x_label) << "</text>\n";
    o << "<text transform=\"translate(14," << coord(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << esc(chart.y_label) << "</text>\n";

    for (std::size_t k = 0; k < chart.series.size(); ++k) {
        const auto& s = chart.series[k];
        const char* color = kPalette[k % std::size(kPalette)];
        std::string pts;
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            pts += coord(sx(s.x[i])) + "," + coord(sy(s.y[i])) + " ";
            if (chart.markers) {
                o << "<circle cx=\"" << coord(sx(s.x[i])) << "\" cy=\"" << coord(sy(s.y[i])) << "\" r=\"3\" fill=\"" << color
                  << "\"/>\n";
            }
        }
        if (!pts.empty()) pts.pop_back();
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << pts << "\"/>\n";
        const double ly = top + 14 + 16.0 * static_cast<double>(k);
        o << "<line x1=\"" << coord(left + pw + 10) << "\" x2=\"" << coord(left + pw + 30) << "\" y1=\"" << coord(ly)
          << "\" y2=\"" << coord(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << coord(left + pw + 34) << "\" y=\"" << coord(ly + 4) << "\">" << esc(s.name) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

Chart loss_chart(const std::filesystem::path& log_path) {
    std::ifstream in(log_path);
    if (!in) fail(ErrorCode::IoError, "cannot open " + log_path.string());
    Series all{"l_all", {}, {}}, seg{"l_seg", {}, {}}, gaze{"l_gaze", {}, {}}, dice{"val_dice", {}, {}};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw MalformedLineError(line_no, e.what());
        }
        const double it = j.at("iter").get<double>();
        if (it > 0) {
            all.x.push_back(it);
            all.y.push_back(j.at("l_all").get<double>());
            seg.x.push_back(it);
            seg.y.push_back(j.at("l_seg").get<double>());
            gaze.x.push_back(it);
            gaze.y.push_back(j.at("l_gaze").get<double>());
        }
        if (j.contains("val_dice")) {
            dice.x.push_back(it);
            dice.y.push_back(j.at("val_dice").get<double>());
        }
    }
    if (line_no == 0) fail(ErrorCode::EmptyFile, log_path.string() + " is empty");
    Chart c;
    c.title = "Training losses";
    c.x_label = "iteration";
    c.y_label = "value";
    c.series = {all, seg, gaze};
    if (!dice.x.empty()) c.series.push_back(dice);
    return c;
}

Chart lambda_chart(const std::filesystem::path& csv_path, const std::vector<std::string>& metrics) {
    std::istringstream in(io::read_text(csv_path));
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::EmptyFile, csv_path.string() + " is empty");
    const auto header = split_csv(line);
    auto column = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) fail(ErrorCode::MalformedLine, csv_path.string() + " has no column " + name);
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t lc = column("lambda");
    Chart c;
    c.title = "Metric vs lambda";
    c.x_label = "lambda";
    c.y_label = metrics.size() == 1 ? metrics[0] : "value";
    c.markers = true;
    std::vector<std::size_t> cols;
    for (const auto& m : metrics) {
        cols.push_back(column(m));
        c.series.push_back({m, {}, {}});
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) throw MalformedLineError(line_no, "expected " + std::to_string(header.size()) + " cells");
        try {
            for (std::size_t k = 0; k < cols.size(); ++k) {
                c.series[k].x.push_back(std::stod(cells[lc]));
                c.series[k].y.push_back(cells[cols[k]].empty() ? NAN : std::stod(cells[cols[k]]));
            }
        } catch (const std::logic_error&) {
            throw MalformedLineError(line_no, "non-numeric cell");
        }
    }
    for (auto& s : c.series) {
        std::vector<std::size_t> idx(s.x.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s.x[a] < s.x[b]; });
        Series sorted{s.name, {}, {}};
        for (auto i : idx) {
            sorted.x.push_back(s.x[i]);
            sorted.y.push_back(s.y[i]);
        }
        s = std::move(sorted);
    }
    return c;
}

}  // namespace gazeseg
