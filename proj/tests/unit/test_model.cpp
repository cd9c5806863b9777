#include <cmath>
#include <filesystem>
#include <random>

#include "criteria.hpp"
#include "doctest.h"
#include "gazeseg/model.hpp"
#include "oracles.hpp"

using namespace gazeseg;
using nd::Tensor;

namespace {

UNetConfig small(bool mgp = true) { return {1, 8, 2, 3, mgp, 4}; }

}  // namespace

TEST_SUITE("model") {
    TEST_CASE("output shapes") {
        const auto p = init_params(small(), 1);
        const auto out = forward(Tensor::zeros({4, 1, 32, 32}), p, small(), Mode::Eval);
        CHECK(out.logits.shape() == nd::Shape{4, 3, 32, 32});
        CHECK(out.g_net.shape() == nd::Shape{4, 1, 32, 32});
        const auto no_head = forward(Tensor::zeros({2, 1, 16, 16}), init_params(small(false), 1), small(false), Mode::Eval);
        CHECK_FALSE(no_head.g_net.defined());
    }

    TEST_CASE("zero weights give uniform softmax and g_net 0.5") {
        auto p = init_params(small(), 1);
        for (std::size_t i = 0; i < p.size(); ++i) {
            for (auto& v : p[i].data()) v = 0.0;
        }
        std::mt19937_64 rng(2);
        const auto x = oracle::random_tensor({2, 1, 16, 16}, rng, 0, 1, false);
        const auto out = forward(x, p, small(), Mode::Eval);
        for (double v : out.logits.data()) CHECK(v == 0.0);
        for (double v : out.g_net.data()) CHECK(v == 0.5);
        const auto sm = nd::softmax_channel(out.logits);
        for (double v : sm.data()) CHECK(v == doctest::Approx(1.0 / 3));
    }

    TEST_CASE("constant features with zero attention weights halve the map") {
        std::mt19937_64 rng(3);
        MgpParams p{Tensor::zeros({2, 8}), Tensor::zeros({8, 2}), Tensor::full({1, 1, 1, 1}, 1.0), Tensor::zeros({1}),
                    Tensor::zeros({1, 1, 3, 3}), Tensor::zeros({1}), Tensor::zeros({1, 1, 7, 7}), Tensor::zeros({1}),
                    Tensor::from({1, 3, 1, 1}, {1.0, 0.0, 0.0})};
        const auto feat = Tensor::full({1, 8, 4, 4}, 0.8);
        // alpha = 0.5 so channel_mean(feat_c) = 0.4; beta_1 = sigmoid(0.4).
        const double want = 1.0 / (1.0 + std::exp(-1.0 / (1.0 + std::exp(-0.4))));
        const auto g = mgp(feat, p);
        for (double v : g.data()) CHECK(v == doctest::Approx(want).epsilon(1e-14));
    }

    TEST_CASE("mgp matches the straight-line transcription") {
        const auto c = criteria::mgp_oracle(10);
        CHECK_MESSAGE(c.pass, c.detail);
    }

    TEST_CASE("g_net stays inside (0, 1)") {
        std::mt19937_64 rng(4);
        const auto p = init_params(small(), 9);
        const auto x = oracle::random_tensor({2, 1, 16, 16}, rng, -20, 20, false);
        const auto out = forward(x, p, small(), Mode::Eval);
        for (double v : out.g_net.data()) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }
    }

    TEST_CASE("init is deterministic, He-scaled, with zero biases") {
        UNetConfig cfg{1, 16, 2, 3, true, 4};
        const auto a = init_params(cfg, 5), b = init_params(cfg, 5), c = init_params(cfg, 6);
        bool differs = false;
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a.name(i) == b.name(i));
            for (std::size_t k = 0; k < a[i].numel(); ++k) {
                CHECK(a[i].data()[k] == b[i].data()[k]);
                differs |= a[i].data()[k] != c[i].data()[k];
            }
            const auto& n = a.name(i);
            if (n.size() > 2 && n.substr(n.size() - 2) == ".b") {
                for (double v : a[i].data()) CHECK(v == 0.0);
                continue;
            }
            if (a[i].numel() < 500) continue;
            const auto& s = a[i].shape();
            const std::size_t fan_in = a[i].numel() / static_cast<std::size_t>(s[0]);
            double ss = 0;
            for (double v : a[i].data()) ss += v * v;
            const double std_dev = std::sqrt(ss / a[i].numel());
            CHECK(std_dev == doctest::Approx(std::sqrt(2.0 / fan_in)).epsilon(0.2));
        }
        CHECK(differs);
    }

    TEST_CASE("train mode records a graph, eval mode does not") {
        const auto p = init_params(small(), 1).clone(true);
        {
            const auto out = forward(Tensor::zeros({1, 1, 16, 16}), p, small(), Mode::Eval);
            CHECK(nd::graph_node_count() == 0);
        }
        const auto out = forward(Tensor::zeros({1, 1, 16, 16}), p, small(), Mode::Train);
        CHECK(nd::graph_node_count() > 0);
    }

    TEST_CASE("spatial dims must divide by 2^depth") {
        const auto p = init_params(small(), 1);
        try {
            forward(Tensor::zeros({1, 1, 18, 16}), p, small(), Mode::Eval);
            FAIL("expected BadSpatialDims");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::BadSpatialDims);
        }
    }

    TEST_CASE("checkpoint round trip") {
        Checkpoint ck{small(), 123, "teacher", init_params(small(), 8)};
        const auto path = std::filesystem::temp_directory_path() / "gazeseg_ck.ckpt";
        save_checkpoint(path, ck);
        const auto back = load_checkpoint(path);
        CHECK(back.iteration == 123);
        CHECK(back.role == "teacher");
        CHECK(to_json(back.config) == to_json(ck.config));
        REQUIRE(back.params.size() == ck.params.size());
        for (std::size_t i = 0; i < ck.params.size(); ++i) {
            CHECK(back.params.name(i) == ck.params.name(i));
            for (std::size_t k = 0; k < ck.params[i].numel(); ++k) CHECK(back.params[i].data()[k] == ck.params[i].data()[k]);
        }
        std::filesystem::remove(path);
    }
}
