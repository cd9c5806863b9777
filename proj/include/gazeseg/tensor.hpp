#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gazeseg::nd {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;

// Backward closure of one recorded op. `inputs` keeps the operands alive until
// the graph is consumed.
struct Node {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::function<void(const TensorImpl& out)> backward;

    Node();
    ~Node();
    Node(const Node&) = delete;
    Node& operator=(const Node&) = delete;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a gradient is accumulated
    bool requires_grad = false;
    bool graph_consumed = false;
    std::shared_ptr<Node> grad_fn;

    void accumulate(std::size_t i, double g);
    std::vector<double>& grad_buffer();
};

// Dense row-major float64 tensor, up to 4-D (N, C, H, W). Copies share storage.
class Tensor {
   public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    int dim(std::size_t axis) const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;

    std::span<double> data();
    std::span<const double> data() const;
    double item() const;
    double at(std::initializer_list<int> index) const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();

    bool is_leaf() const;
    // Copy of the values, cut from any graph.
    Tensor detach() const;

    TensorImpl* impl() const { return impl_.get(); }
    const std::shared_ptr<TensorImpl>& shared() const { return impl_; }

   private:
    std::shared_ptr<TensorImpl> impl_;
};

// Number of live recorded graph nodes, across all threads.
long graph_node_count();

bool grad_enabled();

// While alive, ops on this thread record no graph.
class NoGradGuard {
   public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

   private:
    bool previous_;
};

// Reverse-mode sweep from a scalar loss. Leaves accumulate into their grad;
// the graph is released afterwards and a second call raises GraphConsumed.
void backward(const Tensor& loss);

// Helper used by op implementations: allocates the output and, when any input
// requires a gradient and grad mode is on, attaches `fn` as its backward rule.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl& out)> fn);

// ---- ops -------------------------------------------------------------------

struct Conv2dOptions {
    int stride = 1;
    int padding = -1;  // -1: "same" (k/2) for odd kernels
};

// Cross-correlation. input N×Ci×H×W, weight Co×Ci×kh×kw, bias Co (may be undefined).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, Conv2dOptions opts = {});
Tensor maxpool2d(const Tensor& input, int kernel = 2);
// align_corners=false (half-pixel centres).
Tensor upsample_bilinear2d(const Tensor& input, int out_h, int out_w);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor log(const Tensor& x);
Tensor softmax_channel(const Tensor& x);
Tensor concat_channel(const std::vector<Tensor>& parts);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul_elementwise(const Tensor& a, const Tensor& b);
// x: N×C×H×W, scale: N×C.
Tensor mul_channelwise(const Tensor& x, const Tensor& scale);
Tensor scale(const Tensor& x, double factor);
// N×C×H×W -> N×C
Tensor global_avg_pool_spatial(const Tensor& x);
// N×C×H×W -> N×1×H×W
Tensor channel_mean_pool(const Tensor& x);
// x: N×In, weight: Out×In, bias: Out (may be undefined).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor mse_mean(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace gazeseg::nd
