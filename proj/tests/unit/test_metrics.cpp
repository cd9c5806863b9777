#include <random>

#include "criteria.hpp"
#include "doctest.h"
#include "gazeseg/metrics.hpp"

using namespace gazeseg;

namespace {

LabelMap from_points(Dims d, std::initializer_list<std::pair<int, int>> pts, std::uint8_t cls = 1) {
    LabelMap m(d, 0);
    for (auto [x, y] : pts) m(x, y) = cls;
    return m;
}

LabelMap random_mask(std::mt19937_64& rng, Dims d, double p) {
    std::bernoulli_distribution b(p);
    LabelMap m(d, 0);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = b(rng);
    return m;
}

}  // namespace

TEST_SUITE("metrics") {
    TEST_CASE("overlap examples") {
        const Dims d{8, 8};
        const auto a = from_points(d, {{0, 0}, {1, 0}, {2, 0}, {3, 0}});
        CHECK(dice_jaccard(a, a, 1).dice == 1.0);
        CHECK(dice_jaccard(a, a, 1).jaccard == 1.0);
        const auto b = from_points(d, {{0, 5}, {1, 5}, {2, 5}, {3, 5}});
        CHECK(dice_jaccard(a, b, 1).dice == 0.0);
        CHECK(dice_jaccard(a, b, 1).jaccard == 0.0);
        const auto c = from_points(d, {{2, 0}, {3, 0}, {4, 0}, {5, 0}});
        CHECK(dice_jaccard(a, c, 1).dice == 0.5);
        CHECK(dice_jaccard(a, c, 1).jaccard == doctest::Approx(2.0 / 6.0).epsilon(1e-15));
    }

    TEST_CASE("surface examples") {
        const Dims d{8, 8};
        const auto a = from_points(d, {{1, 1}, {2, 1}, {2, 2}});
        const auto s = surface_distances(a, a, 1);
        CHECK(s.hd95_px == 0.0);
        CHECK(s.asd_px == 0.0);
        const auto t = surface_distances(from_points(d, {{0, 0}}), from_points(d, {{3, 4}}), 1);
        CHECK(t.hd95_px == 5.0);
        CHECK(t.asd_px == 5.0);
        try {
            surface_distances(a, LabelMap(d, 0), 1);
            FAIL("expected EmptyMask");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::EmptyMask);
        }
    }

    TEST_CASE("exhaustive oracle on random masks") {
        const auto c = criteria::metrics_oracle(50);
        CHECK_MESSAGE(c.pass, c.detail);
    }

    TEST_CASE("symmetry, translation invariance and the jaccard identity") {
        std::mt19937_64 rng(7);
        for (int i = 0; i < 30; ++i) {
            const Dims d{16, 16};
            LabelMap a(Dims{24, 24}, 0), b(Dims{24, 24}, 0);
            const auto ra = random_mask(rng, d, 0.4), rb = random_mask(rng, d, 0.4);
            LabelMap sa(Dims{24, 24}, 0), sb(Dims{24, 24}, 0);
            const int dx = 1 + i % 6, dy = 2 + i % 5;
            for (int y = 0; y < 16; ++y) {
                for (int x = 0; x < 16; ++x) {
                    a(x + 1, y + 1) = ra(x, y);
                    b(x + 1, y + 1) = rb(x, y);
                    sa(x + dx, y + dy) = ra(x, y);
                    sb(x + dx, y + dy) = rb(x, y);
                }
            }
            const auto ab = surface_distances(a, b, 1), ba = surface_distances(b, a, 1);
            CHECK(ab.hd95_px == ba.hd95_px);
            CHECK(ab.asd_px == doctest::Approx(ba.asd_px).epsilon(1e-12));
            const auto shifted = surface_distances(sa, sb, 1);
            CHECK(shifted.hd95_px == ab.hd95_px);
            CHECK(shifted.asd_px == ab.asd_px);
            const auto o = dice_jaccard(a, b, 1), os = dice_jaccard(sa, sb, 1);
            CHECK(o.dice == os.dice);
            CHECK(o.jaccard == os.jaccard);
            CHECK(std::abs(o.jaccard - o.dice / (2 - o.dice)) < 1e-12);
        }
    }

    TEST_CASE("evaluate skips absent classes") {
        const Dims d{6, 6};
        auto gt = from_points(d, {{1, 1}, {2, 1}});
        auto pred = from_points(d, {{1, 1}});
        const auto r = evaluate(pred, gt, 4);
        CHECK(r.per_class.at(1).dice.has_value());
        CHECK(*r.per_class.at(1).dice == doctest::Approx(2.0 / 3.0));
        CHECK_FALSE(r.per_class.at(2).dice.has_value());
        CHECK(*r.macro.dice == *r.per_class.at(1).dice);
        pred(4, 4) = 3;
        const auto r2 = evaluate(pred, gt, 4);
        CHECK(*r2.per_class.at(3).dice == 0.0);
        CHECK_FALSE(r2.per_class.at(3).hd95_px.has_value());
        CHECK(*r2.macro.dice == doctest::Approx((2.0 / 3.0) / 2));
    }

    TEST_CASE("percentile interpolation") {
        CHECK(percentile_linear({1, 2, 3, 4, 5}, 50) == 3.0);
        CHECK(percentile_linear({0, 10}, 95) == doctest::Approx(9.5));
        CHECK(percentile_linear({7}, 95) == 7.0);
    }
}
