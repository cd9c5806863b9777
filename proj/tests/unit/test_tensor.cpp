#include <random>

#include "criteria.hpp"
#include "doctest.h"
#include "gazeseg/error.hpp"
#include "gazeseg/tensor.hpp"
#include "oracles.hpp"

using namespace gazeseg;
using nd::Tensor;

TEST_SUITE("tensor") {
    TEST_CASE("1x1 unit kernel is the identity") {
        std::mt19937_64 rng(1);
        const auto x = oracle::random_tensor({2, 1, 4, 5}, rng, -1, 1, false);
        const auto y = nd::conv2d(x, Tensor::full({1, 1, 1, 1}, 1.0), Tensor::zeros({1}));
        for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
    }

    TEST_CASE("ones kernel on a delta") {
        auto x = Tensor::zeros({1, 1, 5, 5});
        x.data()[2 * 5 + 2] = 1.0;
        const auto y = nd::conv2d(x, Tensor::full({1, 1, 3, 3}, 1.0), {});
        for (int r = 0; r < 5; ++r) {
            for (int c = 0; c < 5; ++c) {
                const bool inside = r >= 1 && r <= 3 && c >= 1 && c <= 3;
                CHECK(y.at({0, 0, r, c}) == (inside ? 1.0 : 0.0));
            }
        }
    }

    TEST_CASE("conv2d matches the direct loop") {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            std::mt19937_64 rng(seed);
            for (auto [stride, pad] : {std::pair{1, 1}, std::pair{2, 1}, std::pair{1, 0}, std::pair{2, 0}}) {
                const auto x = oracle::random_tensor({2, 2, 4 + int(seed), 5}, rng, -1, 1, false);
                const auto w = oracle::random_tensor({3, 2, 3, 3}, rng, -1, 1, false);
                const auto b = oracle::random_tensor({3}, rng, -1, 1, false);
                const auto y = nd::conv2d(x, w, b, {stride, pad});
                const auto want = oracle::conv2d_naive({x.data().begin(), x.data().end()}, 2, 2, x.dim(2), 5,
                                                       {w.data().begin(), w.data().end()}, 3, 3, 3,
                                                       {b.data().begin(), b.data().end()}, stride, pad);
                REQUIRE(y.numel() == want.size());
                for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(y.data()[i] - want[i]) < 1e-6);
            }
        }
    }

    TEST_CASE("simple values") {
        const auto s = nd::sigmoid(Tensor::zeros({2, 3}));
        for (double v : s.data()) CHECK(v == 0.5);
        auto a = Tensor::from({3}, {1, 2, 3}, true);
        auto loss = nd::mse_mean(a, a);
        CHECK(loss.item() == 0.0);
        nd::backward(loss);
        for (double g : a.grad()) CHECK(g == 0.0);
    }

    TEST_CASE("grad of sum(w * x) is x") {
        auto w = Tensor::from({4}, {0.3, -1, 2, 5}, true);
        const auto x = Tensor::from({4}, {1, 2, 3, 4});
        nd::backward(nd::sum(nd::mul_elementwise(w, x)));
        for (int i = 0; i < 4; ++i) CHECK(w.grad()[i] == x.data()[i]);
        CHECK_FALSE(x.has_grad());
    }

    TEST_CASE("gradients match finite differences") {
        const auto c = criteria::gradient_suite(20);
        MESSAGE(c.detail);
        CHECK_MESSAGE(c.pass, c.detail);
    }

    TEST_CASE("backward errors") {
        auto w = Tensor::from({2}, {1, 2}, true);
        try {
            nd::backward(nd::scale(w, 2.0));
            FAIL("expected NotScalar");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::NotScalar);
        }
        const auto loss = nd::sum(nd::scale(w, 2.0));
        nd::backward(loss);
        try {
            nd::backward(loss);
            FAIL("expected GraphConsumed");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::GraphConsumed);
        }
    }

    TEST_CASE("shape errors") {
        CHECK_THROWS_AS(nd::add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), Error);
        CHECK_THROWS_AS(nd::conv2d(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), {}), Error);
    }

    TEST_CASE("detached tensors and no-grad mode") {
        auto w = Tensor::from({2}, {1, 2}, true);
        const auto d = w.detach();
        CHECK_FALSE(d.requires_grad());
        CHECK(nd::graph_node_count() == 0);
        {
            nd::NoGradGuard guard;
            CHECK_FALSE(nd::grad_enabled());
            const auto y = nd::sum(nd::relu(nd::scale(w, 3.0)));
            CHECK(nd::graph_node_count() == 0);
            CHECK(y.is_leaf());
        }
        CHECK(nd::grad_enabled());
        {
            const auto y = nd::sum(nd::scale(w, 3.0));
            CHECK(nd::graph_node_count() == 2);
        }
        CHECK(nd::graph_node_count() == 0);
    }

    TEST_CASE("ops are deterministic") {
        std::mt19937_64 r1(5), r2(5);
        const auto a = oracle::random_tensor({2, 3, 6, 6}, r1, -1, 1, false);
        const auto b = oracle::random_tensor({2, 3, 6, 6}, r2, -1, 1, false);
        const auto w = Tensor::full({4, 3, 3, 3}, 0.1);
        const auto ya = nd::upsample_bilinear2d(nd::maxpool2d(nd::conv2d(a, w, {})), 6, 6);
        const auto yb = nd::upsample_bilinear2d(nd::maxpool2d(nd::conv2d(b, w, {})), 6, 6);
        for (std::size_t i = 0; i < ya.numel(); ++i) CHECK(ya.data()[i] == yb.data()[i]);
    }
}
