#include <algorithm>
#include <filesystem>

#include "doctest.h"
#include "gazeseg/gazemix.hpp"
#include "gazeseg/io.hpp"
#include "gazeseg/synth.hpp"

using namespace gazeseg;

namespace {

WorldConfig small_world(std::uint64_t seed = 7) {
    WorldConfig w;
    w.dims = {32, 32};
    w.seed = seed;
    return w;
}

LabelMap disc(Dims d, int cx, int cy, int r, std::uint8_t cls, LabelMap m = {}) {
    if (m.empty()) m = LabelMap(d, 0);
    for (int y = 0; y < d.h; ++y) {
        for (int x = 0; x < d.w; ++x) {
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m(x, y) = cls;
        }
    }
    return m;
}

struct Box {
    double x0 = 1e9, y0 = 1e9, x1 = -1e9, y1 = -1e9;
    void add(double x, double y) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
    }
    bool contains(double x, double y, double pad = 0) const {
        return x >= x0 - pad && x <= x1 + pad && y >= y0 - pad && y <= y1 + pad;
    }
};

}  // namespace

TEST_SUITE("synth") {
    TEST_CASE("same config gives identical datasets and files") {
        const auto a = generate_dataset(small_world(), 20, 0.25);
        const auto b = generate_dataset(small_world(), 20, 0.25);
        REQUIRE(a.labeled.size() == 5);
        REQUIRE(a.unlabeled.size() == 15);
        for (std::size_t i = 0; i < a.labeled.size(); ++i) {
            CHECK(a.labeled[i].image == b.labeled[i].image);
            CHECK(*a.labeled[i].label == *b.labeled[i].label);
            CHECK(a.labeled[i].trace.points == b.labeled[i].trace.points);
        }
        const auto root = std::filesystem::temp_directory_path() / "gazeseg_synth_det";
        std::filesystem::remove_all(root);
        save_dataset(a, root / "a");
        save_dataset(b, root / "b");
        for (const auto& e : std::filesystem::directory_iterator(root / "a")) {
            CHECK(io::read_text(e.path()) == io::read_text(root / "b" / e.path().filename()));
        }
        const auto back = load_dataset(root / "a");
        CHECK(back.labeled.size() == a.labeled.size());
        CHECK(back.hidden_labels.size() == a.unlabeled.size());
        std::filesystem::remove_all(root);
    }

    TEST_CASE("different seeds differ") {
        const auto a = generate_dataset(small_world(1), 4, 1.0);
        const auto b = generate_dataset(small_world(2), 4, 1.0);
        CHECK_FALSE(a.labeled[0].image == b.labeled[0].image);
    }

    TEST_CASE("full labeling leaves the unlabeled split empty") {
        const auto ds = generate_dataset(small_world(), 10, 1.0);
        CHECK(ds.unlabeled.empty());
        CHECK(ds.labeled.size() == 10);
    }

    TEST_CASE("bad ratio") {
        for (double r : {0.0, -0.1, 1.5}) {
            try {
                generate_dataset(small_world(), 10, r);
                FAIL("expected BadRatio");
            } catch (const Error& e) {
                CHECK(e.code() == ErrorCode::BadRatio);
            }
        }
    }

    TEST_CASE("noise-free bright pixels lie inside the mask") {
        auto w = small_world(3);
        w.noise_level = 0.0;
        w.num_classes = 2;
        for (std::uint64_t i = 0; i < 20; ++i) {
            const auto scene = render_scene(w, i);
            for (int y = 0; y < w.dims.h; ++y) {
                for (int x = 0; x < w.dims.w; ++x) {
                    if (scene.image(x, y) > kTextureCeiling + 1e-12) CHECK(scene.mask(x, y) != 0);
                    if (scene.mask(x, y) == 0) CHECK(scene.image(x, y) <= kTextureCeiling + 1e-12);
                }
            }
        }
    }

    TEST_CASE("fixation box covers the target") {
        const auto ds = generate_dataset(small_world(11), 40, 1.0);
        int good = 0;
        for (const auto& s : ds.labeled) {
            const auto c = classify_points(s.trace);
            Box box;
            for (const auto& p : c.fixations()) box.add(p.x, p.y);
            std::size_t inside = 0, total = 0;
            for (int y = 0; y < 32; ++y) {
                for (int x = 0; x < 32; ++x) {
                    if ((*s.label)(x, y) == 0) continue;
                    ++total;
                    inside += box.contains(x, y);
                }
            }
            good += inside >= 0.95 * total;
            // The mixing rect (integer, with margin) must hold the target as well.
            const auto rect = gaze_rect(c);
            std::size_t in_rect = 0;
            for (int y = 0; y < 32; ++y) {
                for (int x = 0; x < 32; ++x) in_rect += (*s.label)(x, y) != 0 && rect.contains(x, y);
            }
            CHECK(in_rect >= 0.95 * total);
        }
        CHECK(good == static_cast<int>(ds.labeled.size()));
    }

    TEST_CASE("single centred target keeps most points near it") {
        const Dims d{64, 64};
        const auto mask = disc(d, 32, 32, 6, 1);
        GazeSimConfig g;
        g.jitter_px = 1.0;
        Box box;
        box.add(26, 26);
        box.add(38, 38);
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const auto t = simulate_gaze(mask, g, seed);
            const auto near = std::count_if(t.points.begin(), t.points.end(),
                                            [&](const GazePoint& p) { return box.contains(p.x, p.y, 3 * g.jitter_px); });
            CHECK(near >= 0.8 * t.points.size());
        }
    }

    TEST_CASE("two targets are both fixated") {
        const Dims d{64, 64};
        const auto mask = disc(d, 48, 44, 5, 2, disc(d, 14, 16, 4, 1));
        const auto t = classify_points(simulate_gaze(mask, {}, 5));
        Box box;
        for (const auto& p : t.fixations()) box.add(p.x, p.y);
        CHECK(box.contains(10, 12));
        CHECK(box.contains(18, 20));
        CHECK(box.contains(43, 39));
        CHECK(box.contains(53, 49));
        const auto fixes = t.fixations();
        CHECK(std::any_of(fixes.begin(), fixes.end(), [](const GazePoint& p) { return std::hypot(p.x - 14, p.y - 16) < 2.5; }));
        CHECK(std::any_of(fixes.begin(), fixes.end(), [](const GazePoint& p) { return std::hypot(p.x - 48, p.y - 44) < 2.5; }));
    }

    TEST_CASE("no saccade hops means all fixations") {
        GazeSimConfig g;
        g.saccade_hops = 0;
        const auto mask = disc({32, 32}, 16, 16, 5, 1);
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto t = classify_points(simulate_gaze(mask, g, seed));
            CHECK(t.fixations().size() == t.points.size());
        }
    }

    TEST_CASE("the filter recovers the simulated fixations") {
        const auto mask = disc({64, 64}, 20, 30, 7, 1);
        std::size_t agree = 0, fix = 0;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const auto sim = simulate_gaze_labeled(mask, {}, seed);
            const auto c = classify_points(sim.trace);
            for (std::size_t i = 0; i < sim.intended.size(); ++i) {
                if (sim.intended[i] != PointClass::Fixation) continue;
                ++fix;
                agree += c.classification[i] == PointClass::Fixation;
            }
        }
        CHECK(agree >= 0.95 * fix);
    }

    TEST_CASE("empty mask has no target") {
        try {
            simulate_gaze(LabelMap({16, 16}, 0), {}, 1);
            FAIL("expected NoTargetInSample");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::NoTargetInSample);
        }
    }
}
