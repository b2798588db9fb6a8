#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace mvdepth {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major n-d tensor of 64-bit floats with an optional gradient
// slot and reverse-mode graph hooks. Every op validates that its output is
// finite and throws std::domain_error otherwise; NaN/Inf never propagates
// silently. Gradients accumulate with += until zero_grad().
struct Tensor : std::enable_shared_from_this<Tensor> {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until backward touches this node
    bool track_grad = false;

    std::vector<TensorPtr> parents;
    std::function<void(const Tensor&)> backward_fn;  // empty on leaves

    Tensor(std::vector<int> s, std::vector<double> d, bool track);
    Tensor(const Tensor&) = delete;
    Tensor& operator=(const Tensor&) = delete;

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    bool is_scalar() const { return numel() == 1; }
    double value() const;  // scalar tensors only

    void ensure_grad();
    void zero_grad();
};

std::int64_t shape_numel(const std::vector<int>& shape);
std::vector<std::int64_t> row_major_strides(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Leaf constructors. `constant` never tracks gradients.
TensorPtr make_leaf(std::vector<int> shape, std::vector<double> data, bool track_grad);
TensorPtr constant(std::vector<int> shape, std::vector<double> data);
TensorPtr scalar(double v);
TensorPtr zeros(std::vector<int> shape, bool track_grad = false);
TensorPtr full(std::vector<int> shape, double v, bool track_grad = false);

// Generic graph-node constructor used by every op, including custom ops
// registered by other modules (warping, selective scan). The node tracks
// gradients iff any parent does; otherwise parents and the closure are
// dropped so constant subgraphs fold away.
TensorPtr make_node(std::vector<int> shape, std::vector<double> data,
                    std::vector<TensorPtr> parents,
                    std::function<void(const Tensor&)> backward_fn,
                    const char* op_name);

enum class EwKind { kAdd, kSub, kMul, kDiv };

// Elementwise with trailing-dimension broadcasting: shapes are aligned at
// their last dimension, missing leading dims act as 1, and aligned dims must
// be equal or 1. Richer broadcasting is intentionally rejected.
TensorPtr ew_op(const TensorPtr& a, const TensorPtr& b, EwKind kind);
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr div(const TensorPtr& a, const TensorPtr& b);
std::vector<int> broadcast_shape(const std::vector<int>& a, const std::vector<int>& b);

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);

// Cross-correlation convention (no kernel flip), zero padding, odd k.
TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w, int stride, int pad);
TensorPtr conv3d(const TensorPtr& x, const TensorPtr& w, int stride, int pad);
// Per-channel 3x3-style conv: x [C,H,W], w [C,k,k], stride 1.
TensorPtr depthwise_conv2d(const TensorPtr& x, const TensorPtr& w, int pad);

TensorPtr softmax(const TensorPtr& x, int axis);

enum class Activation { kRelu, kSilu, kSigmoid };
TensorPtr activation(const TensorPtr& x, Activation kind);
TensorPtr relu(const TensorPtr& x);
TensorPtr silu(const TensorPtr& x);
TensorPtr sigmoid(const TensorPtr& x);
TensorPtr softplus(const TensorPtr& x);
TensorPtr exp_op(const TensorPtr& x);
TensorPtr abs_op(const TensorPtr& x);
TensorPtr neg(const TensorPtr& x);
TensorPtr scale(const TensorPtr& x, double c);

TensorPtr sum_all(const TensorPtr& x);  // -> shape {1}
TensorPtr sum_axis(const TensorPtr& x, int axis, bool keepdim);
TensorPtr reshape(const TensorPtr& x, std::vector<int> new_shape);
TensorPtr concat(const std::vector<TensorPtr>& parts, int axis);
TensorPtr slice_axis(const TensorPtr& x, int axis, int start, int len);
TensorPtr transpose01(const TensorPtr& x);
// Stack rank-r tensors into rank-(r+1) along a new leading axis.
TensorPtr stack0(const std::vector<TensorPtr>& parts);

// out[..., i, j] = x[..., i/f, j/f]; the last two dims are spatial.
TensorPtr upsample_nearest2d(const TensorPtr& x, int factor);
// x [C,D,H,W] -> [C,td,th,tw] with source index min(i/f, n-1) per dim.
TensorPtr upsample_nearest3d(const TensorPtr& x, int factor, int td, int th, int tw);

// Sequence <-> spatial permutation ops used by the 2-D scan paths.
// perm has length H*W and must be a bijection of flat positions.
TensorPtr gather_spatial(const TensorPtr& f, const std::vector<int>& perm);   // [C,H,W] -> [L,C]
TensorPtr scatter_spatial(const TensorPtr& y, const std::vector<int>& perm,  // [L,C] -> [C,H,W]
                          int h, int w);

// Reverse-mode sweep from a scalar loss: one traversal per call, gradients
// accumulate on every tracked ancestor.
void backward(const TensorPtr& loss);

// Central-difference gradient audit. `fn` must be a pure function of the
// input data and return a scalar tensor. Returns the max relative error
// |analytic - numeric| / max(|numeric|, 1e-3) over all input elements.
double grad_check(const std::function<TensorPtr(const std::vector<TensorPtr>&)>& fn,
                  const std::vector<TensorPtr>& inputs, double eps = 1e-5);

// Ordered registry of named parameters; registration order is the
// serialization and optimizer order, so runs are reproducible.
class ParamStore {
public:
    TensorPtr create(const std::string& name, std::vector<int> shape,
                     std::vector<double> values);
    TensorPtr find(const std::string& name) const;  // nullptr when absent
    const std::vector<std::pair<std::string, TensorPtr>>& entries() const { return entries_; }
    void zero_grads();
    std::int64_t total_elements() const;

private:
    std::vector<std::pair<std::string, TensorPtr>> entries_;
};

}  // namespace mvdepth
