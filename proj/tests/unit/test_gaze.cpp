#include <cmath>
#include <filesystem>
#include <random>

#include "criteria.hpp"
#include "doctest.h"
#include "gazeseg/gaze.hpp"

using namespace gazeseg;

namespace {

GazeTrace make_trace(std::vector<GazePoint> pts) {
    GazeTrace t;
    t.points = std::move(pts);
    t.image_dims = {256, 256};
    return t;
}

}  // namespace

TEST_SUITE("gaze") {
    TEST_CASE("slow middle point is a fixation") {
        // |d| = 1 px over 16.67 ms -> 59.99 px/s on both sides.
        const auto c = classify_points(make_trace({{0, 0, 0}, {0, 1, 16.67}, {0, 2, 33.33}}), {100.0});
        CHECK(c.classification[1] == PointClass::Fixation);
    }

    TEST_CASE("fast middle point is a saccade") {
        // |d| = 141.42 px over 16.67 ms -> 8484 px/s.
        const auto c = classify_points(make_trace({{0, 0, 0}, {100, 100, 16.67}, {200, 200, 33.33}}), {100.0});
        CHECK(c.classification[1] == PointClass::Saccade);
        CHECK(c.classification[0] == PointClass::Saccade);
    }

    TEST_CASE("velocity exactly at threshold counts as saccade") {
        // 300 px in 1 s is exactly 300 px/s.
        const auto c = classify_points(make_trace({{0, 0, 0}, {300, 0, 1000}}), {300.0});
        CHECK(c.classification[0] == PointClass::Saccade);
        CHECK(c.classification[1] == PointClass::Saccade);
    }

    TEST_CASE("mixed neighbours make a saccade, endpoints use one neighbour") {
        const auto c = classify_points(make_trace({{0, 0, 0}, {0, 0.1, 10}, {50, 0.1, 20}}), {300.0});
        CHECK(c.classification[0] == PointClass::Fixation);
        CHECK(c.classification[1] == PointClass::Saccade);
        CHECK(c.classification[2] == PointClass::Saccade);
    }

    TEST_CASE("zero motion is all fixation") {
        std::vector<GazePoint> pts;
        for (int i = 0; i < 30; ++i) pts.push_back({7, 9, i * 16.7});
        for (double v : {1e-6, 1.0, 300.0}) {
            const auto c = classify_points(make_trace(pts), {v});
            CHECK(c.fixations().size() == pts.size());
        }
    }

    TEST_CASE("filter errors") {
        CHECK_THROWS_AS(classify_points(make_trace({{0, 0, 0}})), Error);
        try {
            classify_points(make_trace({{0, 0, 5}, {1, 1, 5}}));
            FAIL("expected NonMonotoneTimestamps");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::NonMonotoneTimestamps);
        }
    }

    TEST_CASE("filter matches known labels and is monotone in the threshold") {
        const auto acc = criteria::filter_accuracy(50);
        CHECK_MESSAGE(acc.pass, acc.detail);
        const auto mono = criteria::filter_monotonicity(100);
        CHECK_MESSAGE(mono.pass, mono.detail);
    }

    TEST_CASE("heatmap peak is exactly one and non-negative") {
        const Dims d{32, 24};
        const auto h = render_heatmap({{16, 12, 0}}, d, default_sigma(d));
        CHECK(h.values(16, 12) == 1.0);
        double mx = 0;
        for (double v : h.values.values()) {
            CHECK(v >= 0.0);
            mx = std::max(mx, v);
        }
        CHECK(mx == 1.0);
        CHECK(h.values(17, 12) < 1.0);
        CHECK(h.values(18, 12) < h.values(17, 12));
        CHECK(h.values(17, 12) == doctest::Approx(h.values(15, 12)).epsilon(1e-12));
    }

    TEST_CASE("duplicated fixation gives the same heatmap") {
        const Dims d{20, 20};
        const auto one = render_heatmap({{5, 7, 0}}, d, 2.0);
        const auto two = render_heatmap({{5, 7, 0}, {5, 7, 1}}, d, 2.0);
        for (std::size_t i = 0; i < one.values.size(); ++i) CHECK(one.values[i] == doctest::Approx(two.values[i]).epsilon(1e-14));
    }

    TEST_CASE("8x8 heatmap matches a dense double loop") {
        const auto h = render_heatmap({{2, 2, 0}, {5, 5, 1}}, {8, 8}, 1.0);
        std::vector<double> want(64);
        double mx = 0;
        for (int y = 0; y < 8; ++y) {
            for (int x = 0; x < 8; ++x) {
                double s = 0;
                for (auto [fx, fy] : {std::pair{2.0, 2.0}, std::pair{5.0, 5.0}}) {
                    s += std::exp(-((x - fx) * (x - fx) + (y - fy) * (y - fy)) / 2.0);
                }
                want[y * 8 + x] = s;
                mx = std::max(mx, s);
            }
        }
        for (int i = 0; i < 64; ++i) CHECK(h.values[i] == doctest::Approx(want[i] / mx).epsilon(1e-12));
    }

    TEST_CASE("heatmap is translation equivariant on the interior") {
        const Dims d{48, 48};
        const double sigma = 2.0;
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> u(16, 24);
        std::vector<GazePoint> pts, moved;
        for (int i = 0; i < 6; ++i) pts.push_back({u(rng), u(rng), double(i)});
        for (auto p : pts) moved.push_back({p.x + 5, p.y - 3, p.t});
        const auto a = render_heatmap(pts, d, sigma), b = render_heatmap(moved, d, sigma);
        const int m = static_cast<int>(3 * sigma);
        for (int y = m + 3; y < d.h - m - 5; ++y) {
            for (int x = m; x < d.w - m - 5; ++x) CHECK(std::abs(b.values(x + 5, y - 3) - a.values(x, y)) < 1e-6);
        }
    }

    TEST_CASE("csv parsing") {
        const auto t = parse_trace_csv_text("0,1.0,2.0\n16.7,1.5,2.5", {8, 8});
        REQUIRE(t.points.size() == 2);
        CHECK(t.points[1].x == 1.5);
        CHECK(t.points[1].t == 16.7);
        CHECK(parse_trace_csv_text("t_ms,x,y\n0,1,2\n1,2,3\n", {8, 8}).points.size() == 2);
        try {
            parse_trace_csv_text("", {8, 8});
            FAIL("expected EmptyFile");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::EmptyFile);
        }
        try {
            parse_trace_csv_text("abc,1,2", {8, 8});
            FAIL("expected MalformedLine");
        } catch (const MalformedLineError& e) {
            CHECK(e.code() == ErrorCode::MalformedLine);
            CHECK(e.line_no() == 1);
        }
    }

    TEST_CASE("csv round trip") {
        std::mt19937_64 rng(9);
        std::uniform_real_distribution<double> u(0, 100);
        GazeTrace t = make_trace({});
        double time = 0;
        for (int i = 0; i < 50; ++i) t.points.push_back({u(rng), u(rng), time += 1 + u(rng) / 10});
        const auto path = std::filesystem::temp_directory_path() / "gazeseg_roundtrip.csv";
        write_trace_csv(path, t);
        const auto back = parse_trace_csv(path, t.image_dims);
        REQUIRE(back.points.size() == t.points.size());
        for (std::size_t i = 0; i < t.points.size(); ++i) {
            CHECK(back.points[i].x == doctest::Approx(t.points[i].x).epsilon(1e-9));
            CHECK(back.points[i].y == doctest::Approx(t.points[i].y).epsilon(1e-9));
            CHECK(back.points[i].t == doctest::Approx(t.points[i].t).epsilon(1e-9));
        }
        std::filesystem::remove(path);
    }

    TEST_CASE("heatmap file round trip") {
        const auto h = render_heatmap({{3, 4, 0}}, {10, 6}, 1.5);
        const auto path = std::filesystem::temp_directory_path() / "gazeseg_heat.f32";
        write_heatmap(path, h);
        const auto back = read_heatmap(path);
        CHECK(back.values.dims() == h.values.dims());
        CHECK(back.sigma_px == 1.5);
        for (std::size_t i = 0; i < h.values.size(); ++i) CHECK(back.values[i] == doctest::Approx(h.values[i]).epsilon(1e-6));
    }
}
