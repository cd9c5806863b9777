#include "gazeseg/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include <Eigen/Core>

#include "gazeseg/error.hpp"

namespace gazeseg::nd {

namespace {

std::atomic<long> live_nodes{0};
thread_local bool grad_mode = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require(bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::ShapeMismatch, what);
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    require(t.defined() && t.rank() == rank,
            std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
    require(a.shape() == b.shape(), std::string(op) + ": shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

bool wants_grad(const std::shared_ptr<TensorImpl>& t) { return t && t->requires_grad; }

template <typename F>
Tensor unary(const Tensor& x, F&& forward, std::function<void(const TensorImpl&, TensorImpl&)> grad_rule) {
    std::vector<double> out(x.numel());
    auto in = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(in[i]);
    auto xi = x.shared();
    return make_result(x.shape(), std::move(out), {x}, [xi, grad_rule](const TensorImpl& o) {
        if (xi->requires_grad) grad_rule(o, *xi);
    });
}

// Unfold one N-slice of the input into a (Ci*kh*kw) x (Ho*Wo) patch matrix.
// Column matrix is K x (ld) row-major; this writes the P columns of one image
// starting at `cols`.
void im2col(const double* x, int ci, int h, int w, int kh, int kw, int stride, int ph, int pw, int ho, int wo,
            double* cols, std::size_t ld) {
    for (int c = 0; c < ci; ++c) {
        const double* xc = x + static_cast<std::size_t>(c) * h * w;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                double* row = cols + (static_cast<std::size_t>((c * kh + ki) * kw + kj)) * ld;
                // Output columns whose source x lies inside the image.
                const int lo = std::clamp((pw - kj + stride - 1) / stride, 0, wo);
                const int last = w - 1 + pw - kj;
                const int hi = last < 0 ? lo : std::clamp(last / stride + 1, lo, wo);
                // Zero the whole block once; per-row border fills become millions of tiny memsets.
                std::fill(row, row + static_cast<std::size_t>(ho) * wo, 0.0);
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - ph + ki;
                    if (iy < 0 || iy >= h) continue;
                    double* dst = row + static_cast<std::size_t>(oy) * wo;
                    const double* src = xc + static_cast<std::size_t>(iy) * w - pw + kj;
                    for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * stride];
                }
            }
        }
    }
}

void col2im_add(const double* cols, int ci, int h, int w, int kh, int kw, int stride, int ph, int pw, int ho, int wo,
                double* gx, std::size_t ld) {
    for (int c = 0; c < ci; ++c) {
        double* gc = gx + static_cast<std::size_t>(c) * h * w;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                const double* row = cols + (static_cast<std::size_t>((c * kh + ki) * kw + kj)) * ld;
                const int lo = std::clamp((pw - kj + stride - 1) / stride, 0, wo);
                const int last = w - 1 + pw - kj;
                const int hi = last < 0 ? lo : std::clamp(last / stride + 1, lo, wo);
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - ph + ki;
                    if (iy < 0 || iy >= h) continue;
                    const double* src = row + static_cast<std::size_t>(oy) * wo;
                    double* dst = gc + static_cast<std::size_t>(iy) * w - pw + kj;
                    for (int ox = lo; ox < hi; ++ox) dst[ox * stride] += src[ox];
                }
            }
        }
    }
}

}  // namespace

// ---- bookkeeping -------------------------------------------------------------

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Node::Node() { live_nodes.fetch_add(1, std::memory_order_relaxed); }
Node::~Node() { live_nodes.fetch_sub(1, std::memory_order_relaxed); }

long graph_node_count() { return live_nodes.load(std::memory_order_relaxed); }
bool grad_enabled() { return grad_mode; }

NoGradGuard::NoGradGuard() : previous_(grad_mode) { grad_mode = false; }
NoGradGuard::~NoGradGuard() { grad_mode = previous_; }

std::vector<double>& TensorImpl::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

void TensorImpl::accumulate(std::size_t i, double g) { grad_buffer()[i] += g; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> data(nd::numel(shape), value);
    return from(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    for (int d : shape) require(d > 0, "tensor dimensions must be positive: " + shape_str(shape));
    require(data.size() == nd::numel(shape), "data length " + std::to_string(data.size()) + " does not match shape " +
                                                 shape_str(shape));
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return impl_->shape; }
int Tensor::dim(std::size_t axis) const { return impl_->shape.at(axis); }
std::size_t Tensor::numel() const { return impl_->data.size(); }
std::span<double> Tensor::data() { return impl_->data; }
std::span<const double> Tensor::data() const { return impl_->data; }

double Tensor::item() const {
    if (numel() != 1) fail(ErrorCode::NotScalar, "item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

double Tensor::at(std::initializer_list<int> index) const {
    require(index.size() == rank(), "index rank mismatch");
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (int i : index) {
        require(i >= 0 && i < impl_->shape[axis], "index out of range");
        flat = flat * static_cast<std::size_t>(impl_->shape[axis]) + static_cast<std::size_t>(i);
        ++axis;
    }
    return impl_->data[flat];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { impl_->requires_grad = flag; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }
void Tensor::zero_grad() {
    impl_->grad.clear();
    impl_->graph_consumed = false;
}
bool Tensor::is_leaf() const { return impl_->grad_fn == nullptr; }

Tensor Tensor::detach() const { return from(shape(), impl_->data, false); }

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl& out)> fn) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    const bool track = grad_mode && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) {
                           return t.defined() && t.requires_grad();
                       });
    if (track) {
        impl->requires_grad = true;
        auto node = std::make_shared<Node>();
        for (auto& t : inputs) {
            if (t.defined() && t.requires_grad()) node->inputs.push_back(t.shared());
        }
        node->backward = std::move(fn);
        impl->grad_fn = std::move(node);
    }
    return Tensor(std::move(impl));
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        fail(ErrorCode::NotScalar, "backward needs a scalar loss, got " +
                                       (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    }
    TensorImpl* root = loss.impl();
    if (root->graph_consumed) fail(ErrorCode::GraphConsumed, "graph already consumed by a previous backward()");
    if (!root->grad_fn && !root->requires_grad) {
        fail(ErrorCode::InvalidArgument, "loss does not depend on any tensor that requires grad");
    }

    // Post-order DFS gives a topological order (inputs before outputs).
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> seen;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack{{root, 0}};
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        const auto* fn = node->grad_fn.get();
        if (fn && next < fn->inputs.size()) {
            TensorImpl* child = fn->inputs[next++].get();
            if (seen.insert(child).second) stack.emplace_back(child, 0);
            continue;
        }
        order.push_back(node);
        stack.pop_back();
    }

    root->accumulate(0, 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* node = *it;
        if (node->grad_fn && !node->grad.empty()) node->grad_fn->backward(*node);
    }
    for (TensorImpl* node : order) {
        if (node->grad_fn) {
            node->grad_fn.reset();
            node->grad.clear();
            node->graph_consumed = true;
        }
    }
    root->graph_consumed = true;
}

// ---- ops -------------------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, Conv2dOptions opts) {
    require_rank(input, 4, "conv2d input");
    require_rank(weight, 4, "conv2d weight");
    const int n = input.dim(0), ci = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int co = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    require(weight.dim(1) == ci, "conv2d: weight expects " + std::to_string(weight.dim(1)) + " input channels, got " +
                                     std::to_string(ci));
    if (bias.defined()) require(bias.rank() == 1 && bias.dim(0) == co, "conv2d: bias must have Co entries");
    require(opts.stride >= 1, "conv2d: stride must be >= 1");
    if (opts.padding < 0) require(kh % 2 == 1 && kw % 2 == 1, "conv2d: 'same' padding needs odd kernels");
    const int ph = opts.padding < 0 ? kh / 2 : opts.padding;
    const int pw = opts.padding < 0 ? kw / 2 : opts.padding;
    const int stride = opts.stride;
    const int ho = (h + 2 * ph - kh) / stride + 1;
    const int wo = (w + 2 * pw - kw) / stride + 1;
    require(ho > 0 && wo > 0, "conv2d: kernel larger than padded input");

    const std::size_t k = static_cast<std::size_t>(ci) * kh * kw;
    const std::size_t p = static_cast<std::size_t>(ho) * wo;
    const std::size_t in_stride = static_cast<std::size_t>(ci) * h * w;
    const std::size_t out_stride = static_cast<std::size_t>(co) * p;

    // One GEMM over the whole batch: cols is K x (N*P).
    const std::size_t ld = static_cast<std::size_t>(n) * p;
    auto cols = std::make_shared<std::vector<double>>(k * ld);
    for (int b = 0; b < n; ++b) {
        im2col(input.data().data() + b * in_stride, ci, h, w, kh, kw, stride, ph, pw, ho, wo, cols->data() + b * p, ld);
    }
    ConstMapMat wm(weight.data().data(), co, static_cast<Eigen::Index>(k));
    ConstMapMat cm(cols->data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(ld));
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> prod = wm * cm;
    std::vector<double> out(static_cast<std::size_t>(n) * out_stride);
    for (int b = 0; b < n; ++b) {
        for (int c = 0; c < co; ++c) {
            const double bv = bias.defined() ? bias.data()[static_cast<std::size_t>(c)] : 0.0;
            const double* src = prod.data() + static_cast<std::size_t>(c) * ld + b * p;
            double* dst = out.data() + b * out_stride + static_cast<std::size_t>(c) * p;
            for (std::size_t i = 0; i < p; ++i) dst[i] = src[i] + bv;
        }
    }

    auto xi = input.shared();
    auto wi = weight.shared();
    auto bi = bias.defined() ? bias.shared() : nullptr;
    return make_result({n, co, ho, wo}, std::move(out), {input, weight, bias}, [=](const TensorImpl& o) {
        // Gather the output gradient into Co x (N*P).
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> go(co, static_cast<Eigen::Index>(ld));
        for (int b = 0; b < n; ++b) {
            for (int c = 0; c < co; ++c) {
                const double* src = o.grad.data() + b * out_stride + static_cast<std::size_t>(c) * p;
                std::copy(src, src + p, go.data() + static_cast<std::size_t>(c) * ld + b * p);
            }
        }
        ConstMapMat cm(cols->data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(ld));
        if (wants_grad(wi)) {
            MapMat gw(wi->grad_buffer().data(), co, static_cast<Eigen::Index>(k));
            gw.noalias() += go * cm.transpose();
        }
        if (wants_grad(bi)) {
            auto& gb = bi->grad_buffer();
            for (int c = 0; c < co; ++c) gb[static_cast<std::size_t>(c)] += go.row(c).sum();
        }
        if (wants_grad(xi)) {
            ConstMapMat wm(wi->data.data(), co, static_cast<Eigen::Index>(k));
            Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dc = wm.transpose() * go;
            auto& gx = xi->grad_buffer();
            for (int b = 0; b < n; ++b) {
                col2im_add(dc.data() + b * p, ci, h, w, kh, kw, stride, ph, pw, ho, wo, gx.data() + b * in_stride, ld);
            }
        }
    });
}

Tensor maxpool2d(const Tensor& input, int kernel) {
    require_rank(input, 4, "maxpool2d");
    require(kernel >= 1, "maxpool2d: kernel must be >= 1");
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int ho = h / kernel, wo = w / kernel;
    require(ho > 0 && wo > 0, "maxpool2d: input smaller than kernel");
    std::vector<double> out(static_cast<std::size_t>(n) * c * ho * wo);
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
    const auto x = input.data();
    std::size_t o = 0;
    for (int plane = 0; plane < n * c; ++plane) {
        const std::size_t base = static_cast<std::size_t>(plane) * h * w;
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox, ++o) {
                std::size_t best = base + static_cast<std::size_t>(oy * kernel) * w + static_cast<std::size_t>(ox * kernel);
                for (int dy = 0; dy < kernel; ++dy) {
                    for (int dx = 0; dx < kernel; ++dx) {
                        const std::size_t idx =
                            base + static_cast<std::size_t>(oy * kernel + dy) * w + static_cast<std::size_t>(ox * kernel + dx);
                        if (x[idx] > x[best]) best = idx;
                    }
                }
                out[o] = x[best];
                (*argmax)[o] = best;
            }
        }
    }
    auto xi = input.shared();
    return make_result({n, c, ho, wo}, std::move(out), {input}, [xi, argmax](const TensorImpl& o) {
        auto& g = xi->grad_buffer();
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[(*argmax)[i]] += o.grad[i];
    });
}

namespace {

struct LerpAxis {
    std::vector<int> lo, hi;
    std::vector<double> frac;
};

LerpAxis lerp_axis(int in, int out) {
    LerpAxis a;
    a.lo.resize(static_cast<std::size_t>(out));
    a.hi.resize(static_cast<std::size_t>(out));
    a.frac.resize(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
        double src = (i + 0.5) * scale - 0.5;
        if (src < 0.0) src = 0.0;
        int lo = static_cast<int>(std::floor(src));
        if (lo > in - 1) lo = in - 1;
        const int hi = std::min(lo + 1, in - 1);
        a.lo[static_cast<std::size_t>(i)] = lo;
        a.hi[static_cast<std::size_t>(i)] = hi;
        a.frac[static_cast<std::size_t>(i)] = src - lo;
    }
    return a;
}

}  // namespace

Tensor upsample_bilinear2d(const Tensor& input, int out_h, int out_w) {
    require_rank(input, 4, "upsample_bilinear2d");
    require(out_h > 0 && out_w > 0, "upsample_bilinear2d: output size must be positive");
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    auto ay = std::make_shared<LerpAxis>(lerp_axis(h, out_h));
    auto ax = std::make_shared<LerpAxis>(lerp_axis(w, out_w));
    std::vector<double> out(static_cast<std::size_t>(n) * c * out_h * out_w);
    const auto x = input.data();
    for (int plane = 0; plane < n * c; ++plane) {
        const double* src = x.data() + static_cast<std::size_t>(plane) * h * w;
        double* dst = out.data() + static_cast<std::size_t>(plane) * out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
            const auto yi = static_cast<std::size_t>(oy);
            const double fy = ay->frac[yi];
            const double* r0 = src + static_cast<std::size_t>(ay->lo[yi]) * w;
            const double* r1 = src + static_cast<std::size_t>(ay->hi[yi]) * w;
            for (int ox = 0; ox < out_w; ++ox) {
                const auto xi = static_cast<std::size_t>(ox);
                const double fx = ax->frac[xi];
                const int x0 = ax->lo[xi], x1 = ax->hi[xi];
                dst[static_cast<std::size_t>(oy) * out_w + xi] =
                    (1 - fy) * ((1 - fx) * r0[x0] + fx * r0[x1]) + fy * ((1 - fx) * r1[x0] + fx * r1[x1]);
            }
        }
    }
    auto in = input.shared();
    return make_result({n, c, out_h, out_w}, std::move(out), {input}, [=](const TensorImpl& o) {
        auto& g = in->grad_buffer();
        for (int plane = 0; plane < n * c; ++plane) {
            double* dst = g.data() + static_cast<std::size_t>(plane) * h * w;
            const double* go = o.grad.data() + static_cast<std::size_t>(plane) * out_h * out_w;
            for (int oy = 0; oy < out_h; ++oy) {
                const auto yi = static_cast<std::size_t>(oy);
                const double fy = ay->frac[yi];
                double* r0 = dst + static_cast<std::size_t>(ay->lo[yi]) * w;
                double* r1 = dst + static_cast<std::size_t>(ay->hi[yi]) * w;
                for (int ox = 0; ox < out_w; ++ox) {
                    const auto xi = static_cast<std::size_t>(ox);
                    const double fx = ax->frac[xi];
                    const double v = go[static_cast<std::size_t>(oy) * out_w + xi];
                    r0[ax->lo[xi]] += (1 - fy) * (1 - fx) * v;
                    r0[ax->hi[xi]] += (1 - fy) * fx * v;
                    r1[ax->lo[xi]] += fy * (1 - fx) * v;
                    r1[ax->hi[xi]] += fy * fx * v;
                }
            }
        }
    });
}

Tensor relu(const Tensor& x) {
    return unary(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](const TensorImpl& o, TensorImpl& in) {
            auto& g = in.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (in.data[i] > 0.0) g[i] += o.grad[i];
            }
        });
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](const TensorImpl& o, TensorImpl& in) {
            auto& g = in.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * o.data[i] * (1.0 - o.data[i]);
        });
}

Tensor log(const Tensor& x) {
    return unary(
        x, [](double v) { return std::log(v); },
        [](const TensorImpl& o, TensorImpl& in) {
            auto& g = in.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] / in.data[i];
        });
}

Tensor softmax_channel(const Tensor& x) {
    require_rank(x, 4, "softmax_channel");
    const int n = x.dim(0), c = x.dim(1);
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    std::vector<double> out(x.numel());
    const auto in = x.data();
    for (int b = 0; b < n; ++b) {
        const std::size_t base = static_cast<std::size_t>(b) * c * hw;
        for (std::size_t p = 0; p < hw; ++p) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int k = 0; k < c; ++k) mx = std::max(mx, in[base + k * hw + p]);
            double z = 0.0;
            for (int k = 0; k < c; ++k) {
                const double e = std::exp(in[base + k * hw + p] - mx);
                out[base + k * hw + p] = e;
                z += e;
            }
            for (int k = 0; k < c; ++k) out[base + k * hw + p] /= z;
        }
    }
    auto xi = x.shared();
    return make_result(x.shape(), std::move(out), {x}, [=](const TensorImpl& o) {
        auto& g = xi->grad_buffer();
        for (int b = 0; b < n; ++b) {
            const std::size_t base = static_cast<std::size_t>(b) * c * hw;
            for (std::size_t p = 0; p < hw; ++p) {
                double dot = 0.0;
                for (int k = 0; k < c; ++k) dot += o.grad[base + k * hw + p] * o.data[base + k * hw + p];
                for (int k = 0; k < c; ++k) {
                    const std::size_t i = base + k * hw + p;
                    g[i] += o.data[i] * (o.grad[i] - dot);
                }
            }
        }
    });
}

Tensor concat_channel(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_channel: no inputs");
    for (const auto& t : parts) require_rank(t, 4, "concat_channel");
    const int n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
    int total = 0;
    for (const auto& t : parts) {
        require(t.dim(0) == n && t.dim(2) == h && t.dim(3) == w,
                "concat_channel: mismatched " + shape_str(t.shape()) + " vs " + shape_str(parts[0].shape()));
        total += t.dim(1);
    }
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    std::vector<double> out(static_cast<std::size_t>(n) * total * hw);
    std::vector<int> offsets;
    int off = 0;
    for (const auto& t : parts) {
        offsets.push_back(off);
        const std::size_t chunk = static_cast<std::size_t>(t.dim(1)) * hw;
        for (int b = 0; b < n; ++b) {
            std::copy_n(t.data().data() + b * chunk, chunk,
                        out.data() + (static_cast<std::size_t>(b) * total + off) * hw);
        }
        off += t.dim(1);
    }
    std::vector<std::shared_ptr<TensorImpl>> impls;
    for (const auto& t : parts) impls.push_back(t.shared());
    return make_result({n, total, h, w}, std::move(out), parts, [=](const TensorImpl& o) {
        for (std::size_t j = 0; j < impls.size(); ++j) {
            if (!impls[j]->requires_grad) continue;
            auto& g = impls[j]->grad_buffer();
            const std::size_t chunk = static_cast<std::size_t>(impls[j]->shape[1]) * hw;
            for (int b = 0; b < n; ++b) {
                const double* src = o.grad.data() + (static_cast<std::size_t>(b) * total + offsets[j]) * hw;
                double* dst = g.data() + b * chunk;
                for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
            }
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same(a, b, "add");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto ai = a.shared(), bi = b.shared();
    return make_result(a.shape(), std::move(out), {a, b}, [ai, bi](const TensorImpl& o) {
        for (auto* t : {ai.get(), bi.get()}) {
            if (!t->requires_grad) continue;
            auto& g = t->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        }
    });
}

Tensor mul_elementwise(const Tensor& a, const Tensor& b) {
    require_same(a, b, "mul_elementwise");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto ai = a.shared(), bi = b.shared();
    return make_result(a.shape(), std::move(out), {a, b}, [ai, bi](const TensorImpl& o) {
        if (ai->requires_grad) {
            auto& g = ai->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bi->data[i];
        }
        if (bi->requires_grad) {
            auto& g = bi->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * ai->data[i];
        }
    });
}

Tensor mul_channelwise(const Tensor& x, const Tensor& s) {
    require_rank(x, 4, "mul_channelwise input");
    require_rank(s, 2, "mul_channelwise scale");
    const int n = x.dim(0), c = x.dim(1);
    require(s.dim(0) == n && s.dim(1) == c, "mul_channelwise: scale must be NxC, got " + shape_str(s.shape()));
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    std::vector<double> out(x.numel());
    for (std::size_t nc = 0; nc < static_cast<std::size_t>(n) * c; ++nc) {
        const double f = s.data()[nc];
        for (std::size_t p = 0; p < hw; ++p) out[nc * hw + p] = x.data()[nc * hw + p] * f;
    }
    auto xi = x.shared(), si = s.shared();
    return make_result(x.shape(), std::move(out), {x, s}, [=](const TensorImpl& o) {
        for (std::size_t nc = 0; nc < static_cast<std::size_t>(n) * c; ++nc) {
            if (xi->requires_grad) {
                auto& g = xi->grad_buffer();
                const double f = si->data[nc];
                for (std::size_t p = 0; p < hw; ++p) g[nc * hw + p] += o.grad[nc * hw + p] * f;
            }
            if (si->requires_grad) {
                double acc = 0.0;
                for (std::size_t p = 0; p < hw; ++p) acc += o.grad[nc * hw + p] * xi->data[nc * hw + p];
                si->grad_buffer()[nc] += acc;
            }
        }
    });
}

Tensor scale(const Tensor& x, double factor) {
    return unary(
        x, [factor](double v) { return v * factor; },
        [factor](const TensorImpl& o, TensorImpl& in) {
            auto& g = in.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * factor;
        });
}

Tensor global_avg_pool_spatial(const Tensor& x) {
    require_rank(x, 4, "global_avg_pool_spatial");
    const int n = x.dim(0), c = x.dim(1);
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    std::vector<double> out(static_cast<std::size_t>(n) * c);
    for (std::size_t nc = 0; nc < out.size(); ++nc) {
        double acc = 0.0;
        for (std::size_t p = 0; p < hw; ++p) acc += x.data()[nc * hw + p];
        out[nc] = acc / static_cast<double>(hw);
    }
    auto xi = x.shared();
    return make_result({n, c}, std::move(out), {x}, [xi, hw](const TensorImpl& o) {
        auto& g = xi->grad_buffer();
        for (std::size_t nc = 0; nc < o.grad.size(); ++nc) {
            const double v = o.grad[nc] / static_cast<double>(hw);
            for (std::size_t p = 0; p < hw; ++p) g[nc * hw + p] += v;
        }
    });
}

Tensor channel_mean_pool(const Tensor& x) {
    require_rank(x, 4, "channel_mean_pool");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    std::vector<double> out(static_cast<std::size_t>(n) * hw, 0.0);
    for (int b = 0; b < n; ++b) {
        for (int k = 0; k < c; ++k) {
            const double* src = x.data().data() + (static_cast<std::size_t>(b) * c + k) * hw;
            double* dst = out.data() + static_cast<std::size_t>(b) * hw;
            for (std::size_t p = 0; p < hw; ++p) dst[p] += src[p];
        }
        for (std::size_t p = 0; p < hw; ++p) out[static_cast<std::size_t>(b) * hw + p] /= c;
    }
    auto xi = x.shared();
    return make_result({n, 1, h, w}, std::move(out), {x}, [=](const TensorImpl& o) {
        auto& g = xi->grad_buffer();
        for (int b = 0; b < n; ++b) {
            const double* go = o.grad.data() + static_cast<std::size_t>(b) * hw;
            for (int k = 0; k < c; ++k) {
                double* dst = g.data() + (static_cast<std::size_t>(b) * c + k) * hw;
                for (std::size_t p = 0; p < hw; ++p) dst[p] += go[p] / c;
            }
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_rank(x, 2, "linear input");
    require_rank(weight, 2, "linear weight");
    const int n = x.dim(0), in = x.dim(1), out_f = weight.dim(0);
    require(weight.dim(1) == in, "linear: weight expects " + std::to_string(weight.dim(1)) + " features, got " +
                                     std::to_string(in));
    if (bias.defined()) require(bias.rank() == 1 && bias.dim(0) == out_f, "linear: bias must have Out entries");
    std::vector<double> out(static_cast<std::size_t>(n) * out_f);
    for (int b = 0; b < n; ++b) {
        for (int o = 0; o < out_f; ++o) {
            double acc = bias.defined() ? bias.data()[static_cast<std::size_t>(o)] : 0.0;
            for (int i = 0; i < in; ++i) {
                acc += x.data()[static_cast<std::size_t>(b) * in + i] * weight.data()[static_cast<std::size_t>(o) * in + i];
            }
            out[static_cast<std::size_t>(b) * out_f + o] = acc;
        }
    }
    auto xi = x.shared(), wi = weight.shared();
    auto bi = bias.defined() ? bias.shared() : nullptr;
    return make_result({n, out_f}, std::move(out), {x, weight, bias}, [=](const TensorImpl& o) {
        for (int b = 0; b < n; ++b) {
            for (int of = 0; of < out_f; ++of) {
                const double g = o.grad[static_cast<std::size_t>(b) * out_f + of];
                if (wants_grad(bi)) bi->grad_buffer()[static_cast<std::size_t>(of)] += g;
                for (int i = 0; i < in; ++i) {
                    const std::size_t xi_idx = static_cast<std::size_t>(b) * in + i;
                    const std::size_t wi_idx = static_cast<std::size_t>(of) * in + i;
                    if (xi->requires_grad) xi->grad_buffer()[xi_idx] += g * wi->data[wi_idx];
                    if (wi->requires_grad) wi->grad_buffer()[wi_idx] += g * xi->data[xi_idx];
                }
            }
        }
    });
}

Tensor mse_mean(const Tensor& a, const Tensor& b) {
    require_same(a, b, "mse_mean");
    const std::size_t count = a.numel();
    double acc = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double d = a.data()[i] - b.data()[i];
        acc += d * d;
    }
    auto ai = a.shared(), bi = b.shared();
    return make_result({}, {acc / static_cast<double>(count)}, {a, b}, [ai, bi, count](const TensorImpl& o) {
        const double k = 2.0 * o.grad[0] / static_cast<double>(count);
        for (std::size_t i = 0; i < count; ++i) {
            const double d = ai->data[i] - bi->data[i];
            if (ai->requires_grad) ai->grad_buffer()[i] += k * d;
            if (bi->requires_grad) bi->grad_buffer()[i] -= k * d;
        }
    });
}

Tensor sum(const Tensor& x) {
    const double total = std::accumulate(x.data().begin(), x.data().end(), 0.0);
    auto xi = x.shared();
    return make_result({}, {total}, {x}, [xi](const TensorImpl& o) {
        auto& g = xi->grad_buffer();
        for (auto& v : g) v += o.grad[0];
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

}  // namespace gazeseg::nd
