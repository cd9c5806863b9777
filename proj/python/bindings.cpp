#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "gazeseg/error.hpp"
#include "gazeseg/gaze.hpp"
#include "gazeseg/gazemix.hpp"
#include "gazeseg/metrics.hpp"
#include "gazeseg/model.hpp"
#include "gazeseg/synth.hpp"
#include "gazeseg/trainer.hpp"

namespace py = pybind11;
using namespace gazeseg;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

template <typename T>
Grid<T> to_grid(const py::array_t<T, py::array::c_style | py::array::forcecast>& a, const char* name) {
    if (a.ndim() != 2) throw py::value_error(std::string(name) + " must be a 2-D array");
    const Dims dims{static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0))};
    return Grid<T>(dims, std::vector<T>(a.data(), a.data() + a.size()));
}

template <typename T>
py::array_t<T> to_array(const Grid<T>& g) {
    py::array_t<T> out({g.height(), g.width()});
    std::memcpy(out.mutable_data(), g.raw().data(), g.size() * sizeof(T));
    return out;
}

// Accepts an (N, 3) array of (x, y, t_ms) rows.
GazeTrace to_trace(const F64Array& pts, int width, int height) {
    if (pts.ndim() != 2 || pts.shape(1) != 3) throw py::value_error("points must have shape (N, 3): x, y, t_ms");
    GazeTrace trace;
    trace.image_dims = {width, height};
    const double* p = pts.data();
    for (py::ssize_t i = 0; i < pts.shape(0); ++i) trace.points.push_back({p[3 * i], p[3 * i + 1], p[3 * i + 2]});
    return trace;
}

std::vector<GazePoint> to_points(const F64Array& pts) {
    return to_trace(pts, 0, 0).points;
}

GazeRect to_rect(const std::tuple<int, int, int, int>& r) {
    return {std::get<0>(r), std::get<1>(r), std::get<2>(r), std::get<3>(r)};
}

std::tuple<int, int, int, int> from_rect(const GazeRect& r) { return {r.x0, r.y0, r.x1, r.y1}; }

py::dict metrics_dict(const ClassMetrics& m) {
    py::dict d;
    d["dice"] = m.dice;
    d["jaccard"] = m.jaccard;
    d["hd95_px"] = m.hd95_px;
    d["asd_px"] = m.asd_px;
    return d;
}

}  // namespace

PYBIND11_MODULE(_gazeseg, m) {
    m.doc() = "Gaze-supervised semi-supervised segmentation core";

    static py::exception<Error> error(m, "GazesegError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = error;
            py::object inst = exc(e.what());
            inst.attr("code") = std::string(to_string(e.code()));
            inst.attr("category") = static_cast<int>(e.category());
            PyErr_SetObject(exc.ptr(), inst.ptr());
        }
    });

    m.def(
        "classify_points",
        [](const F64Array& points, int width, int height, double v_th) {
            const GazeTrace out = classify_points(to_trace(points, width, height), FilterConfig{v_th});
            py::array_t<bool> saccade(static_cast<py::ssize_t>(out.points.size()));
            auto s = saccade.mutable_unchecked<1>();
            for (std::size_t i = 0; i < out.points.size(); ++i) {
                s(i) = out.classification[i] == PointClass::Saccade;
            }
            return saccade;
        },
        py::arg("points"), py::arg("width"), py::arg("height"), py::arg("v_th") = 300.0,
        "Velocity-threshold filter over (N, 3) rows of x, y, t_ms. Returns True for saccade points.");

    m.def(
        "render_heatmap",
        [](const F64Array& fixations, int width, int height, double sigma_px) {
            const Dims dims{width, height};
            if (sigma_px <= 0.0) sigma_px = default_sigma(dims);
            return to_array(render_heatmap(to_points(fixations), dims, sigma_px).values);
        },
        py::arg("fixations"), py::arg("width"), py::arg("height"), py::arg("sigma_px") = 0.0,
        "Peak-normalized Gaussian heatmap (H, W) of the fixation rows; sigma_px <= 0 uses 5% of the width.");

    m.def(
        "gaze_rect",
        [](const F64Array& points, int width, int height, int margin_px, int min_side) {
            return from_rect(gaze_rect_from_points(to_points(points), {width, height}, RectConfig{margin_px, min_side}));
        },
        py::arg("points"), py::arg("width"), py::arg("height"), py::arg("margin_px") = 2, py::arg("min_side") = 4,
        "Bounding rectangle (x0, y0, x1, y1), half-open, around the points.");

    m.def(
        "mix",
        [](const F64Array& fg_image, const F64Array& fg_heatmap, std::tuple<int, int, int, int> fg_rect,
           const F64Array& bg_image, const F64Array& bg_heatmap, std::tuple<int, int, int, int> bg_rect,
           std::optional<U8Array> fg_label) {
            PreparedSample fg{"fg", to_grid(fg_image, "fg_image"), to_grid(fg_heatmap, "fg_heatmap"), std::nullopt,
                              to_rect(fg_rect)};
            if (fg_label) fg.label = to_grid(*fg_label, "fg_label");
            PreparedSample bg{"bg", to_grid(bg_image, "bg_image"), to_grid(bg_heatmap, "bg_heatmap"), std::nullopt,
                              to_rect(bg_rect)};
            const MixedSample out = mix(fg, bg);
            py::dict d;
            d["image"] = to_array(out.image);
            d["heatmap"] = to_array(out.heatmap);
            d["paste_rect"] = from_rect(out.paste_rect);
            d["region_label"] = out.region_label ? py::object(to_array(*out.region_label)) : py::none();
            return d;
        },
        py::arg("fg_image"), py::arg("fg_heatmap"), py::arg("fg_rect"), py::arg("bg_image"), py::arg("bg_heatmap"),
        py::arg("bg_rect"), py::arg("fg_label") = py::none(),
        "Paste the foreground rectangle over the background rectangle (images and heatmaps).");

    m.def(
        "render_scene",
        [](int width, int height, int num_classes, std::uint64_t seed, std::uint64_t index) {
            WorldConfig cfg;
            cfg.dims = {width, height};
            cfg.num_classes = num_classes;
            cfg.seed = seed;
            const RenderedScene s = render_scene(cfg, index);
            return py::make_tuple(to_array(s.image), to_array(s.mask));
        },
        py::arg("width") = 64, py::arg("height") = 64, py::arg("num_classes") = 3, py::arg("seed") = 7,
        py::arg("index") = 0, "Synthetic (image, mask) pair for one world sample.");

    m.def(
        "simulate_gaze",
        [](const U8Array& mask, std::uint64_t seed) {
            const GazeTrace t = simulate_gaze(to_grid(mask, "mask"), GazeSimConfig{}, seed);
            py::array_t<double> out({static_cast<py::ssize_t>(t.points.size()), py::ssize_t{3}});
            auto o = out.mutable_unchecked<2>();
            for (std::size_t i = 0; i < t.points.size(); ++i) {
                o(i, 0) = t.points[i].x;
                o(i, 1) = t.points[i].y;
                o(i, 2) = t.points[i].t;
            }
            return out;
        },
        py::arg("mask"), py::arg("seed") = 0, "Simulated gaze trace (N, 3) of x, y, t_ms over the mask's targets.");

    m.def(
        "evaluate",
        [](const U8Array& pred, const U8Array& gt, int num_classes) {
            const MetricReport r = evaluate(to_grid(pred, "pred"), to_grid(gt, "gt"), num_classes);
            py::dict per_class;
            for (const auto& [cls, cm] : r.per_class) per_class[py::int_(cls)] = metrics_dict(cm);
            py::dict d;
            d["per_class"] = per_class;
            d["macro"] = metrics_dict(r.macro);
            return d;
        },
        py::arg("pred"), py::arg("gt"), py::arg("num_classes"),
        "Dice, Jaccard, HD95 and ASD per foreground class plus their macro means.");

    m.def(
        "predict",
        [](const std::string& checkpoint, const F64Array& image) {
            const Checkpoint ckpt = load_checkpoint(checkpoint);
            const Image img = to_grid(image, "image");
            const auto labels = predict(ckpt.params, ckpt.config, {&img});
            return to_array(labels.front());
        },
        py::arg("checkpoint"), py::arg("image"), "Argmax class map of one (H, W) image under a saved checkpoint.");
}
