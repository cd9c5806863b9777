#pragma once

// Independent reference implementations for the test suites. Nothing here
// calls into the library code it is compared against.

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "gazeseg/grid.hpp"
#include "gazeseg/model.hpp"
#include "gazeseg/tensor.hpp"

namespace gazeseg::oracle {

// Direct quadruple loop, zero padding, cross-correlation.
std::vector<double> conv2d_naive(const std::vector<double>& x, int n, int ci, int h, int w, const std::vector<double>& wt,
                                 int co, int kh, int kw, const std::vector<double>& bias, int stride, int pad);

// Straight-line transcription of the perception head for one batch, plain arrays.
std::vector<double> mgp_dense(const std::vector<double>& feat, int n, int c, int h, int w, const MgpParams& p);

// 2x2 [[1,2],[3,4]] upsampled to 4x4 with half-pixel centres, written out by hand.
const std::vector<std::vector<double>>& bilinear_2x2_to_4x4();

// 0.5 * (1 - mean_k dice_k) + 0.5 * mean CE, pixel by pixel.
double dice_ce_loop(const std::vector<double>& logits, int n, int k, int h, int w, const std::vector<std::uint8_t>& target,
                    const std::vector<std::uint8_t>& mask, double eps = 1e-5);

struct MetricOracle {
    double dice = 0, jaccard = 0, hd95 = 0, asd = 0;
};
// Exhaustive double loops; surface values only meaningful if both masks are non-empty.
MetricOracle metrics_brute(const LabelMap& pred, const LabelMap& gt, int cls);

struct FdResult {
    double max_rel_error = 0.0;  // max |a - fd| / max(1, |fd|)
    int checked = 0;
    int skipped = 0;  // elements whose step straddled a non-differentiable point
};

inline constexpr double kKinkTolerance = 0.05;

// Central finite differences of f(inputs) against its analytic gradient, for
// every element of every input that requires grad.
FdResult fd_check(const std::function<nd::Tensor(const std::vector<nd::Tensor>&)>& f, std::vector<nd::Tensor> inputs,
                  double eps = 1e-4);

// Reduces any tensor to a scalar with fixed random weights so every output
// element carries a distinct gradient.
nd::Tensor weighted_sum(const nd::Tensor& t, std::uint64_t seed);

nd::Tensor random_tensor(const nd::Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                         bool requires_grad = true);

}  // namespace gazeseg::oracle
