#include "mvdepth/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace mvdepth {

namespace {

void check_finite(const std::vector<double>& v, const char* op_name) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw std::domain_error(std::string("non-finite value produced by op '") +
                                    op_name + "'");
        }
    }
}

[[noreturn]] void shape_error(const char* op_name, const std::string& detail) {
    throw std::invalid_argument(std::string(op_name) + ": " + detail);
}

double sigmoid_scalar(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Tensor::Tensor(std::vector<int> s, std::vector<double> d, bool track)
    : shape(std::move(s)), data(std::move(d)), track_grad(track) {
    for (int dim : shape) {
        if (dim <= 0) throw std::invalid_argument("tensor dims must be positive");
    }
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw std::invalid_argument("tensor data length does not match shape");
    }
}

double Tensor::value() const {
    if (!is_scalar()) throw std::invalid_argument("value() requires a scalar tensor");
    return data[0];
}

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
}

std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::vector<std::int64_t> row_major_strides(const std::vector<int>& shape) {
    std::vector<std::int64_t> strides(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    return strides;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

TensorPtr make_leaf(std::vector<int> shape, std::vector<double> data, bool track_grad) {
    check_finite(data, "leaf");
    return std::make_shared<Tensor>(std::move(shape), std::move(data), track_grad);
}

TensorPtr constant(std::vector<int> shape, std::vector<double> data) {
    return make_leaf(std::move(shape), std::move(data), false);
}

TensorPtr scalar(double v) { return constant({1}, {v}); }

TensorPtr zeros(std::vector<int> shape, bool track_grad) {
    auto n = shape_numel(shape);
    return make_leaf(std::move(shape), std::vector<double>(n, 0.0), track_grad);
}

TensorPtr full(std::vector<int> shape, double v, bool track_grad) {
    auto n = shape_numel(shape);
    return make_leaf(std::move(shape), std::vector<double>(n, v), track_grad);
}

TensorPtr make_node(std::vector<int> shape, std::vector<double> data,
                    std::vector<TensorPtr> parents,
                    std::function<void(const Tensor&)> backward_fn,
                    const char* op_name) {
    check_finite(data, op_name);
    bool track = false;
    for (const auto& p : parents) track = track || p->track_grad;
    auto out = std::make_shared<Tensor>(std::move(shape), std::move(data), track);
    if (track) {
        out->parents = std::move(parents);
        out->backward_fn = std::move(backward_fn);
    }
    return out;
}

// ---------------------------------------------------------------------------
// broadcasting

std::vector<int> broadcast_shape(const std::vector<int>& a, const std::vector<int>& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    std::vector<int> out(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        const int da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const int db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1) {
            shape_error("broadcast", "incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
        }
        out[i] = std::max(da, db);
    }
    return out;
}

namespace {

// Strides of `shape` lifted into a broadcast output of rank `out_rank`;
// broadcast dims get stride 0.
std::vector<std::int64_t> broadcast_strides(const std::vector<int>& shape,
                                            const std::vector<int>& out_shape) {
    const std::size_t rank = out_shape.size();
    const auto own = row_major_strides(shape);
    std::vector<std::int64_t> st(rank, 0);
    const std::size_t off = rank - shape.size();
    for (std::size_t i = 0; i < shape.size(); ++i) {
        st[off + i] = (shape[i] == 1 && out_shape[off + i] != 1) ? 0 : own[i];
    }
    return st;
}

}  // namespace

TensorPtr ew_op(const TensorPtr& a, const TensorPtr& b, EwKind kind) {
    const auto out_shape = broadcast_shape(a->shape, b->shape);
    const std::int64_t n = shape_numel(out_shape);
    std::vector<double> out(n);

    const bool same = a->shape == b->shape;
    const char* name = kind == EwKind::kAdd   ? "add"
                       : kind == EwKind::kSub ? "sub"
                       : kind == EwKind::kMul ? "mul"
                                              : "div";
    auto apply = [kind](double x, double y) {
        switch (kind) {
            case EwKind::kAdd: return x + y;
            case EwKind::kSub: return x - y;
            case EwKind::kMul: return x * y;
            default: return x / y;
        }
    };

    std::vector<std::int64_t> amap(n), bmap(n);
    if (same) {
        for (std::int64_t i = 0; i < n; ++i) {
            out[i] = apply(a->data[i], b->data[i]);
            amap[i] = bmap[i] = i;
        }
    } else {
        const auto ast = broadcast_strides(a->shape, out_shape);
        const auto bst = broadcast_strides(b->shape, out_shape);
        const std::size_t rank = out_shape.size();
        std::vector<int> idx(rank, 0);
        for (std::int64_t flat = 0; flat < n; ++flat) {
            std::int64_t ia = 0, ib = 0;
            for (std::size_t i = 0; i < rank; ++i) {
                ia += idx[i] * ast[i];
                ib += idx[i] * bst[i];
            }
            out[flat] = apply(a->data[ia], b->data[ib]);
            amap[flat] = ia;
            bmap[flat] = ib;
            for (int i = static_cast<int>(rank) - 1; i >= 0; --i) {
                if (++idx[i] < out_shape[i]) break;
                idx[i] = 0;
            }
        }
    }

    auto pa = a, pb = b;
    auto bwd = [pa, pb, kind, amap, bmap](const Tensor& self) {
        const auto& g = self.grad;
        if (pa->track_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                double gi = g[i];
                switch (kind) {
                    case EwKind::kAdd:
                    case EwKind::kSub: break;
                    case EwKind::kMul: gi *= pb->data[bmap[i]]; break;
                    case EwKind::kDiv: gi /= pb->data[bmap[i]]; break;
                }
                pa->grad[amap[i]] += gi;
            }
        }
        if (pb->track_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                double gi = g[i];
                switch (kind) {
                    case EwKind::kAdd: break;
                    case EwKind::kSub: gi = -gi; break;
                    case EwKind::kMul: gi *= pa->data[amap[i]]; break;
                    case EwKind::kDiv: {
                        const double bv = pb->data[bmap[i]];
                        gi *= -pa->data[amap[i]] / (bv * bv);
                        break;
                    }
                }
                pb->grad[bmap[i]] += gi;
            }
        }
    };
    return make_node(out_shape, std::move(out), {a, b}, std::move(bwd), name);
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) { return ew_op(a, b, EwKind::kAdd); }
TensorPtr sub(const TensorPtr& a, const TensorPtr& b) { return ew_op(a, b, EwKind::kSub); }
TensorPtr mul(const TensorPtr& a, const TensorPtr& b) { return ew_op(a, b, EwKind::kMul); }
TensorPtr div(const TensorPtr& a, const TensorPtr& b) { return ew_op(a, b, EwKind::kDiv); }

// ---------------------------------------------------------------------------
// matmul

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape.size() != 2 || b->shape.size() != 2) {
        shape_error("matmul", "expects rank-2 operands");
    }
    const int m = a->shape[0], k = a->shape[1];
    const int k2 = b->shape[0], n = b->shape[1];
    if (k != k2) {
        shape_error("matmul", "inner dims differ: " + shape_str(a->shape) + " vs " +
                                  shape_str(b->shape));
    }
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double av = a->data[i * k + p];
            for (int j = 0; j < n; ++j) out[i * n + j] += av * b->data[p * n + j];
        }
    }
    auto pa = a, pb = b;
    auto bwd = [pa, pb, m, k, n](const Tensor& self) {
        const auto& g = self.grad;
        if (pa->track_grad) {
            pa->ensure_grad();  // dA = dC * B^T
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    const double gv = g[i * n + j];
                    for (int p = 0; p < k; ++p) pa->grad[i * k + p] += gv * pb->data[p * n + j];
                }
        }
        if (pb->track_grad) {
            pb->ensure_grad();  // dB = A^T * dC
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    const double av = pa->data[i * k + p];
                    for (int j = 0; j < n; ++j) pb->grad[p * n + j] += av * g[i * n + j];
                }
        }
    };
    return make_node({m, n}, std::move(out), {a, b}, std::move(bwd), "matmul");
}

// ---------------------------------------------------------------------------
// convolutions (cross-correlation convention, zero padding)

TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w, int stride, int pad) {
    if (x->shape.size() != 3 || w->shape.size() != 4) {
        shape_error("conv2d", "expects x [C,H,W], w [Co,Ci,k,k]");
    }
    const int ci = x->shape[0], h = x->shape[1], wd = x->shape[2];
    const int co = w->shape[0], wci = w->shape[1], kh = w->shape[2], kw = w->shape[3];
    if (wci != ci) shape_error("conv2d", "channel mismatch");
    if (kh != kw || kh % 2 == 0) shape_error("conv2d", "kernel must be square and odd");
    if (stride < 1) shape_error("conv2d", "stride must be >= 1");
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (wd + 2 * pad - kw) / stride + 1;
    if (oh < 1 || ow < 1) shape_error("conv2d", "output dims would be < 1");

    std::vector<double> out(static_cast<std::size_t>(co) * oh * ow, 0.0);
    for (int c = 0; c < co; ++c)
        for (int y = 0; y < oh; ++y)
            for (int xo = 0; xo < ow; ++xo) {
                double acc = 0.0;
                for (int ic = 0; ic < ci; ++ic)
                    for (int dy = 0; dy < kh; ++dy) {
                        const int iy = y * stride - pad + dy;
                        if (iy < 0 || iy >= h) continue;
                        for (int dx = 0; dx < kw; ++dx) {
                            const int ix = xo * stride - pad + dx;
                            if (ix < 0 || ix >= wd) continue;
                            acc += x->data[(ic * h + iy) * wd + ix] *
                                   w->data[((c * ci + ic) * kh + dy) * kw + dx];
                        }
                    }
                out[(c * oh + y) * ow + xo] = acc;
            }

    auto px = x, pw = w;
    auto bwd = [px, pw, ci, h, wd, co, kh, kw, oh, ow, stride, pad](const Tensor& self) {
        const auto& g = self.grad;
        const bool gx = px->track_grad, gw = pw->track_grad;
        if (gx) px->ensure_grad();
        if (gw) pw->ensure_grad();
        for (int c = 0; c < co; ++c)
            for (int y = 0; y < oh; ++y)
                for (int xo = 0; xo < ow; ++xo) {
                    const double gv = g[(c * oh + y) * ow + xo];
                    if (gv == 0.0) continue;
                    for (int ic = 0; ic < ci; ++ic)
                        for (int dy = 0; dy < kh; ++dy) {
                            const int iy = y * stride - pad + dy;
                            if (iy < 0 || iy >= h) continue;
                            for (int dx = 0; dx < kw; ++dx) {
                                const int ix = xo * stride - pad + dx;
                                if (ix < 0 || ix >= wd) continue;
                                const std::size_t xi = (ic * h + iy) * wd + ix;
                                const std::size_t wi = ((c * ci + ic) * kh + dy) * kw + dx;
                                if (gx) px->grad[xi] += gv * pw->data[wi];
                                if (gw) pw->grad[wi] += gv * px->data[xi];
                            }
                        }
                }
    };
    return make_node({co, oh, ow}, std::move(out), {x, w}, std::move(bwd), "conv2d");
}

TensorPtr conv3d(const TensorPtr& x, const TensorPtr& w, int stride, int pad) {
    if (x->shape.size() != 4 || w->shape.size() != 5) {
        shape_error("conv3d", "expects x [C,D,H,W], w [Co,Ci,k,k,k]");
    }
    const int ci = x->shape[0], d = x->shape[1], h = x->shape[2], wd = x->shape[3];
    const int co = w->shape[0], wci = w->shape[1], k = w->shape[2];
    if (wci != ci) shape_error("conv3d", "channel mismatch");
    if (w->shape[3] != k || w->shape[4] != k || k % 2 == 0) {
        shape_error("conv3d", "kernel must be cubic and odd");
    }
    if (stride < 1) shape_error("conv3d", "stride must be >= 1");
    const int od = (d + 2 * pad - k) / stride + 1;
    const int oh = (h + 2 * pad - k) / stride + 1;
    const int ow = (wd + 2 * pad - k) / stride + 1;
    if (od < 1 || oh < 1 || ow < 1) shape_error("conv3d", "output dims would be < 1");

    std::vector<double> out(static_cast<std::size_t>(co) * od * oh * ow, 0.0);
    for (int c = 0; c < co; ++c)
        for (int z = 0; z < od; ++z)
            for (int y = 0; y < oh; ++y)
                for (int xo = 0; xo < ow; ++xo) {
                    double acc = 0.0;
                    for (int ic = 0; ic < ci; ++ic)
                        for (int dz = 0; dz < k; ++dz) {
                            const int iz = z * stride - pad + dz;
                            if (iz < 0 || iz >= d) continue;
                            for (int dy = 0; dy < k; ++dy) {
                                const int iy = y * stride - pad + dy;
                                if (iy < 0 || iy >= h) continue;
                                for (int dx = 0; dx < k; ++dx) {
                                    const int ix = xo * stride - pad + dx;
                                    if (ix < 0 || ix >= wd) continue;
                                    acc += x->data[((ic * d + iz) * h + iy) * wd + ix] *
                                           w->data[(((c * ci + ic) * k + dz) * k + dy) * k + dx];
                                }
                            }
                        }
                    out[((c * od + z) * oh + y) * ow + xo] = acc;
                }

    auto px = x, pw = w;
    auto bwd = [px, pw, ci, d, h, wd, co, k, od, oh, ow, stride, pad](const Tensor& self) {
        const auto& g = self.grad;
        const bool gx = px->track_grad, gw = pw->track_grad;
        if (gx) px->ensure_grad();
        if (gw) pw->ensure_grad();
        for (int c = 0; c < co; ++c)
            for (int z = 0; z < od; ++z)
                for (int y = 0; y < oh; ++y)
                    for (int xo = 0; xo < ow; ++xo) {
                        const double gv = g[((c * od + z) * oh + y) * ow + xo];
                        if (gv == 0.0) continue;
                        for (int ic = 0; ic < ci; ++ic)
                            for (int dz = 0; dz < k; ++dz) {
                                const int iz = z * stride - pad + dz;
                                if (iz < 0 || iz >= d) continue;
                                for (int dy = 0; dy < k; ++dy) {
                                    const int iy = y * stride - pad + dy;
                                    if (iy < 0 || iy >= h) continue;
                                    for (int dx = 0; dx < k; ++dx) {
                                        const int ix = xo * stride - pad + dx;
                                        if (ix < 0 || ix >= wd) continue;
                                        const std::size_t xi = ((ic * d + iz) * h + iy) * wd + ix;
                                        const std::size_t wi =
                                            (((c * ci + ic) * k + dz) * k + dy) * k + dx;
                                        if (gx) px->grad[xi] += gv * pw->data[wi];
                                        if (gw) pw->grad[wi] += gv * px->data[xi];
                                    }
                                }
                            }
                    }
    };
    return make_node({co, od, oh, ow}, std::move(out), {x, w}, std::move(bwd), "conv3d");
}

TensorPtr depthwise_conv2d(const TensorPtr& x, const TensorPtr& w, int pad) {
    if (x->shape.size() != 3 || w->shape.size() != 3) {
        shape_error("depthwise_conv2d", "expects x [C,H,W], w [C,k,k]");
    }
    const int c = x->shape[0], h = x->shape[1], wd = x->shape[2];
    const int k = w->shape[1];
    if (w->shape[0] != c || w->shape[2] != k || k % 2 == 0) {
        shape_error("depthwise_conv2d", "kernel must be [C,k,k] with odd k");
    }
    const int oh = h + 2 * pad - k + 1;
    const int ow = wd + 2 * pad - k + 1;
    if (oh < 1 || ow < 1) shape_error("depthwise_conv2d", "output dims would be < 1");

    std::vector<double> out(static_cast<std::size_t>(c) * oh * ow, 0.0);
    for (int ic = 0; ic < c; ++ic)
        for (int y = 0; y < oh; ++y)
            for (int xo = 0; xo < ow; ++xo) {
                double acc = 0.0;
                for (int dy = 0; dy < k; ++dy) {
                    const int iy = y - pad + dy;
                    if (iy < 0 || iy >= h) continue;
                    for (int dx = 0; dx < k; ++dx) {
                        const int ix = xo - pad + dx;
                        if (ix < 0 || ix >= wd) continue;
                        acc += x->data[(ic * h + iy) * wd + ix] * w->data[(ic * k + dy) * k + dx];
                    }
                }
                out[(ic * oh + y) * ow + xo] = acc;
            }

    auto px = x, pw = w;
    auto bwd = [px, pw, c, h, wd, k, oh, ow, pad](const Tensor& self) {
        const auto& g = self.grad;
        const bool gx = px->track_grad, gw = pw->track_grad;
        if (gx) px->ensure_grad();
        if (gw) pw->ensure_grad();
        for (int ic = 0; ic < c; ++ic)
            for (int y = 0; y < oh; ++y)
                for (int xo = 0; xo < ow; ++xo) {
                    const double gv = g[(ic * oh + y) * ow + xo];
                    if (gv == 0.0) continue;
                    for (int dy = 0; dy < k; ++dy) {
                        const int iy = y - pad + dy;
                        if (iy < 0 || iy >= h) continue;
                        for (int dx = 0; dx < k; ++dx) {
                            const int ix = xo - pad + dx;
                            if (ix < 0 || ix >= wd) continue;
                            const std::size_t xi = (ic * h + iy) * wd + ix;
                            const std::size_t wi = (ic * k + dy) * k + dx;
                            if (gx) px->grad[xi] += gv * pw->data[wi];
                            if (gw) pw->grad[wi] += gv * px->data[xi];
                        }
                    }
                }
    };
    return make_node({c, oh, ow}, std::move(out), {x, w}, std::move(bwd), "depthwise_conv2d");
}

// ---------------------------------------------------------------------------
// softmax / unary ops

TensorPtr softmax(const TensorPtr& x, int axis) {
    const int rank = static_cast<int>(x->shape.size());
    if (axis < 0 || axis >= rank) shape_error("softmax", "axis out of range");
    const int n = x->shape[axis];
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x->shape[i];
    for (int i = axis + 1; i < rank; ++i) inner *= x->shape[i];

    std::vector<double> out(x->data.size());
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * n * inner + in;
            double mx = -1e308;
            for (int j = 0; j < n; ++j) mx = std::max(mx, x->data[base + j * inner]);
            double sum = 0.0;
            for (int j = 0; j < n; ++j) {
                const double e = std::exp(x->data[base + j * inner] - mx);
                out[base + j * inner] = e;
                sum += e;
            }
            for (int j = 0; j < n; ++j) out[base + j * inner] /= sum;
        }

    auto px = x;
    auto bwd = [px, n, outer, inner](const Tensor& self) {
        if (!px->track_grad) return;
        px->ensure_grad();
        const auto& y = self.data;
        const auto& g = self.grad;
        for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t in = 0; in < inner; ++in) {
                const std::int64_t base = o * n * inner + in;
                double dot = 0.0;
                for (int j = 0; j < n; ++j) dot += g[base + j * inner] * y[base + j * inner];
                for (int j = 0; j < n; ++j) {
                    const std::int64_t idx = base + j * inner;
                    px->grad[idx] += y[idx] * (g[idx] - dot);
                }
            }
    };
    return make_node(x->shape, std::move(out), {x}, std::move(bwd), "softmax");
}

namespace {

// dfdx receives (x, y) so activations can reuse the forward value.
TensorPtr unary_op(const TensorPtr& x, double (*f)(double), double (*dfdx)(double, double),
                   const char* name) {
    std::vector<double> out(x->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x->data[i]);
    auto px = x;
    auto bwd = [px, dfdx](const Tensor& self) {
        if (!px->track_grad) return;
        px->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            px->grad[i] += self.grad[i] * dfdx(px->data[i], self.data[i]);
        }
    };
    return make_node(x->shape, std::move(out), {x}, std::move(bwd), name);
}

}  // namespace

TensorPtr relu(const TensorPtr& x) {
    return unary_op(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; }, "relu");
}

TensorPtr silu(const TensorPtr& x) {
    return unary_op(
        x, [](double v) { return v * sigmoid_scalar(v); },
        [](double v, double) {
            const double s = sigmoid_scalar(v);
            return s * (1.0 + v * (1.0 - s));
        },
        "silu");
}

TensorPtr sigmoid(const TensorPtr& x) {
    return unary_op(
        x, [](double v) { return sigmoid_scalar(v); },
        [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

TensorPtr activation(const TensorPtr& x, Activation kind) {
    switch (kind) {
        case Activation::kRelu: return relu(x);
        case Activation::kSilu: return silu(x);
        case Activation::kSigmoid: return sigmoid(x);
    }
    throw std::invalid_argument("activation: unknown kind");
}

TensorPtr softplus(const TensorPtr& x) {
    return unary_op(
        x, [](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); },
        [](double v, double) { return sigmoid_scalar(v); }, "softplus");
}

TensorPtr exp_op(const TensorPtr& x) {
    return unary_op(
        x, [](double v) { return std::exp(v); }, [](double, double y) { return y; }, "exp");
}

TensorPtr abs_op(const TensorPtr& x) {
    return unary_op(
        x, [](double v) { return std::fabs(v); },
        [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }, "abs");
}

TensorPtr neg(const TensorPtr& x) {
    return unary_op(
        x, [](double v) { return -v; }, [](double, double) { return -1.0; }, "neg");
}

TensorPtr scale(const TensorPtr& x, double c) {
    std::vector<double> out(x->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x->data[i];
    auto px = x;
    auto bwd = [px, c](const Tensor& self) {
        if (!px->track_grad) return;
        px->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += c * self.grad[i];
    };
    return make_node(x->shape, std::move(out), {x}, std::move(bwd), "scale");
}

// ---------------------------------------------------------------------------
// reductions and layout ops

TensorPtr sum_all(const TensorPtr& x) {
    double s = 0.0;
    for (double v : x->data) s += v;
    auto px = x;
    auto bwd = [px](const Tensor& self) {
        if (!px->track_grad) return;
        px->ensure_grad();
        const double g = self.grad[0];
        for (auto& gv : px->grad) gv += g;
    };
    return make_node({1}, {s}, {x}, std::move(bwd), "sum_all");
}

TensorPtr sum_axis(const TensorPtr& x, int axis, bool keepdim) {
    const int rank = static_cast<int>(x->shape.size());
    if (axis < 0 || axis >= rank) shape_error("sum_axis", "axis out of range");
    const int n = x->shape[axis];
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x->shape[i];
    for (int i = axis + 1; i < rank; ++i) inner *= x->shape[i];

    std::vector<double> out(outer * inner, 0.0);
    for (std::int64_t o = 0; o < outer; ++o)
        for (int j = 0; j < n; ++j)
            for (std::int64_t in = 0; in < inner; ++in) {
                out[o * inner + in] += x->data[(o * n + j) * inner + in];
            }

    std::vector<int> out_shape;
    for (int i = 0; i < rank; ++i) {
        if (i == axis) {
            if (keepdim) out_shape.push_back(1);
        } else {
            out_shape.push_back(x->shape[i]);
        }
    }
    if (out_shape.empty()) out_shape = {1};

    auto px = x;
    auto bwd = [px, n, outer, inner](const Tensor& self) {
        if (!px->track_grad) return;
        px->ensure_grad();
        for (std::int64_t o = 0; o < outer; ++o)
            for (int j = 0; j < n; ++j)
                for (std::int64_t in = 0; in < inner; ++in) {
                    px->grad[(o * n + j) * inner + in] += self.grad[o * inner + in];
                }
    };
    return make_node(std::move(out_shape), std::move(out), {x}, std::move(bwd), "sum_axis");
}

TensorPtr reshape(const TensorPtr& x, std::vector<int> new_shape) {
    if (shape_numel(new_shape) != x->numel()) {
        shape_error("reshape", "element count mismatch " + shape_str(x->shape) + " -> " +
                                   shape_str(new_shape));
    }
    auto px = x;
    auto bwd = [px](const Tensor& self) {
        if (!px->track_grad) return;
        px->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i];
    };
    return make_node(std::move(new_shape), x->data, {x}, std::move(bwd), "reshape");
}

TensorPtr concat(const std::vector<TensorPtr>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const int rank = static_cast<int>(parts[0]->shape.size());
    if (axis < 0 || axis >= rank) shape_error("concat", "axis out of range");
    std::vector<int> out_shape = parts[0]->shape;
    int total = parts[0]->shape[axis];
    for (std::size_t p = 1; p < parts.size(); ++p) {
        if (static_cast<int>(parts[p]->shape.size()) != rank) {
            shape_error("concat", "rank mismatch");
        }
        for (int i = 0; i < rank; ++i) {
            if (i != axis && parts[p]->shape[i] != out_shape[i]) {
                shape_error("concat", "non-axis dims must match");
            }
        }
        total += parts[p]->shape[axis];
    }
    out_shape[axis] = total;

    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= out_shape[i];
    for (int i = axis + 1; i < rank; ++i) inner *= out_shape[i];

    std::vector<double> out(shape_numel(out_shape));
    std::vector<int> offsets(parts.size());
    int off = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        offsets[p] = off;
        const int np = parts[p]->shape[axis];
        for (std::int64_t o = 0; o < outer; ++o)
            for (int j = 0; j < np; ++j)
                for (std::int64_t in = 0; in < inner; ++in) {
                    out[(o * total + off + j) * inner + in] =
                        parts[p]->data[(o * np + j) * inner + in];
                }
        off += np;
    }

    auto ps = parts;
    auto bwd = [ps, offsets, outer, inner, total](const Tensor& self) {
        for (std::size_t p = 0; p < ps.size(); ++p) {
            if (!ps[p]->track_grad) continue;
            ps[p]->ensure_grad();
            const int np = static_cast<int>(ps[p]->numel() / (outer * inner));
            for (std::int64_t o = 0; o < outer; ++o)
                for (int j = 0; j < np; ++j)
                    for (std::int64_t in = 0; in < inner; ++in) {
                        ps[p]->grad[(o * np + j) * inner + in] +=
                            self.grad[(o * total + offsets[p] + j) * inner + in];
                    }
        }
    };
    return make_node(std::move(out_shape), std::move(out), parts, std::move(bwd), "concat");
}

TensorPtr slice_axis(const TensorPtr& x, int axis, int start, int len) {
    const int rank = static_cast<int>(x->shape.size());
    if (axis < 0 || axis >= rank) shape_error("slice_axis", "axis out of range");
    const int n = x->shape[axis];
    if (start < 0 || len < 1 || start + len > n) shape_error("slice_axis", "range out of bounds");
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x->shape[i];
    for (int i = axis + 1; i < rank; ++i) inner *= x->shape[i];

    std::vector<int> out_shape = x->shape;
    out_shape[axis] = len;
    std::vector<double> out(shape_numel(out_shape));
    for (std::int64_t o = 0; o < outer; ++o)
        for (int j = 0; j < len; ++j)
            for (std::int64_t in = 0; in < inner; ++in) {
                out[(o * len + j) * inner + in] = x->data[(o * n + start + j) * inner + in];
            }

    auto px = x;
    auto bwd = [px, n, start, len, outer, inner](const Tensor& self) {
        if (!px->track_grad) return;
        px->ensure_grad();
        for (std::int64_t o = 0; o < outer; ++o)
            for (int j = 0; j < len; ++j)
                for (std::int64_t in = 0; in < inner; ++in) {
                    px->grad[(o * n + start + j) * inner + in] +=
                        self.grad[(o * len + j) * inner + in];
                }
    };
    return make_node(std::move(out_shape), std::move(out), {x}, std::move(bwd), "slice_axis");
}

TensorPtr transpose01(const TensorPtr& x) {
    const int rank = static_cast<int>(x->shape.size());
    if (rank < 2) shape_error("transpose01", "needs rank >= 2");
    const int d0 = x->shape[0], d1 = x->shape[1];
    std::int64_t inner = 1;
    for (int i = 2; i < rank; ++i) inner *= x->shape[i];

    std::vector<int> out_shape = x->shape;
    std::swap(out_shape[0], out_shape[1]);
    std::vector<double> out(x->data.size());
    for (int a = 0; a < d0; ++a)
        for (int b = 0; b < d1; ++b)
            for (std::int64_t in = 0; in < inner; ++in) {
                out[(static_cast<std::int64_t>(b) * d0 + a) * inner + in] =
                    x->data[(static_cast<std::int64_t>(a) * d1 + b) * inner + in];
            }
    auto px = x;
    auto bwd = [px, d0, d1, inner](const Tensor& self) {
        if (!px->track_grad) return;
        px->ensure_grad();
        for (int a = 0; a < d0; ++a)
            for (int b = 0; b < d1; ++b)
                for (std::int64_t in = 0; in < inner; ++in) {
                    px->grad[(static_cast<std::int64_t>(a) * d1 + b) * inner + in] +=
                        self.grad[(static_cast<std::int64_t>(b) * d0 + a) * inner + in];
                }
    };
    return make_node(std::move(out_shape), std::move(out), {x}, std::move(bwd), "transpose01");
}

TensorPtr stack0(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw std::invalid_argument("stack0: no inputs");
    std::vector<TensorPtr> lifted;
    lifted.reserve(parts.size());
    for (const auto& p : parts) {
        std::vector<int> s = p->shape;
        s.insert(s.begin(), 1);
        lifted.push_back(reshape(p, std::move(s)));
    }
    return concat(lifted, 0);
}

TensorPtr upsample_nearest2d(const TensorPtr& x, int factor) {
    const int rank = static_cast<int>(x->shape.size());
    if (rank < 2) shape_error("upsample_nearest2d", "needs rank >= 2");
    if (factor < 1) shape_error("upsample_nearest2d", "factor must be >= 1");
    const int h = x->shape[rank - 2], w = x->shape[rank - 1];
    std::int64_t batch = 1;
    for (int i = 0; i < rank - 2; ++i) batch *= x->shape[i];
    const int oh = h * factor, ow = w * factor;

    std::vector<int> out_shape = x->shape;
    out_shape[rank - 2] = oh;
    out_shape[rank - 1] = ow;
    std::vector<double> out(batch * static_cast<std::int64_t>(oh) * ow);
    for (std::int64_t b = 0; b < batch; ++b)
        for (int y = 0; y < oh; ++y)
            for (int xo = 0; xo < ow; ++xo) {
                out[(b * oh + y) * ow + xo] = x->data[(b * h + y / factor) * w + xo / factor];
            }
    auto px = x;
    auto bwd = [px, batch, h, w, oh, ow, factor](const Tensor& self) {
        if (!px->track_grad) return;
        px->ensure_grad();
        for (std::int64_t b = 0; b < batch; ++b)
            for (int y = 0; y < oh; ++y)
                for (int xo = 0; xo < ow; ++xo) {
                    px->grad[(b * h + y / factor) * w + xo / factor] +=
                        self.grad[(b * oh + y) * ow + xo];
                }
    };
    return make_node(std::move(out_shape), std::move(out), {x}, std::move(bwd),
                     "upsample_nearest2d");
}

TensorPtr upsample_nearest3d(const TensorPtr& x, int factor, int td, int th, int tw) {
    if (x->shape.size() != 4) shape_error("upsample_nearest3d", "expects x [C,D,H,W]");
    if (factor < 1 || td < 1 || th < 1 || tw < 1) {
        shape_error("upsample_nearest3d", "factor and target dims must be >= 1");
    }
    const int c = x->shape[0], d = x->shape[1], h = x->shape[2], w = x->shape[3];
    std::vector<double> out(static_cast<std::size_t>(c) * td * th * tw);
    auto src = [factor](int i, int n) { return std::min(i / factor, n - 1); };
    for (int ic = 0; ic < c; ++ic)
        for (int z = 0; z < td; ++z)
            for (int y = 0; y < th; ++y)
                for (int xo = 0; xo < tw; ++xo) {
                    out[((ic * td + z) * th + y) * tw + xo] =
                        x->data[((ic * d + src(z, d)) * h + src(y, h)) * w + src(xo, w)];
                }
    auto px = x;
    auto bwd = [px, c, d, h, w, td, th, tw, factor](const Tensor& self) {
        if (!px->track_grad) return;
        px->ensure_grad();
        auto src = [factor](int i, int n) { return std::min(i / factor, n - 1); };
        for (int ic = 0; ic < c; ++ic)
            for (int z = 0; z < td; ++z)
                for (int y = 0; y < th; ++y)
                    for (int xo = 0; xo < tw; ++xo) {
                        px->grad[((ic * d + src(z, d)) * h + src(y, h)) * w + src(xo, w)] +=
                            self.grad[((ic * td + z) * th + y) * tw + xo];
                    }
    };
    return make_node({c, td, th, tw}, std::move(out), {x}, std::move(bwd), "upsample_nearest3d");
}

// ---------------------------------------------------------------------------
// scan permutation ops

namespace {

void validate_perm(const std::vector<int>& perm, std::int64_t hw, const char* name) {
    if (static_cast<std::int64_t>(perm.size()) != hw) shape_error(name, "perm length mismatch");
    std::vector<char> seen(hw, 0);
    for (int p : perm) {
        if (p < 0 || p >= hw || seen[p]) shape_error(name, "perm is not a bijection");
        seen[p] = 1;
    }
}

}  // namespace

TensorPtr gather_spatial(const TensorPtr& f, const std::vector<int>& perm) {
    if (f->shape.size() != 3) shape_error("gather_spatial", "expects f [C,H,W]");
    const int c = f->shape[0];
    const std::int64_t hw = static_cast<std::int64_t>(f->shape[1]) * f->shape[2];
    validate_perm(perm, hw, "gather_spatial");
    const int l = static_cast<int>(hw);

    std::vector<double> out(static_cast<std::size_t>(l) * c);
    for (int i = 0; i < l; ++i)
        for (int ch = 0; ch < c; ++ch) out[i * c + ch] = f->data[ch * hw + perm[i]];

    auto pf = f;
    auto bwd = [pf, perm, c, hw, l](const Tensor& self) {
        if (!pf->track_grad) return;
        pf->ensure_grad();
        for (int i = 0; i < l; ++i)
            for (int ch = 0; ch < c; ++ch) pf->grad[ch * hw + perm[i]] += self.grad[i * c + ch];
    };
    return make_node({l, c}, std::move(out), {f}, std::move(bwd), "gather_spatial");
}

TensorPtr scatter_spatial(const TensorPtr& y, const std::vector<int>& perm, int h, int w) {
    if (y->shape.size() != 2) shape_error("scatter_spatial", "expects y [L,C]");
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    const int l = y->shape[0], c = y->shape[1];
    if (l != hw) shape_error("scatter_spatial", "sequence length must equal H*W");
    validate_perm(perm, hw, "scatter_spatial");

    std::vector<double> out(static_cast<std::size_t>(c) * hw);
    for (int i = 0; i < l; ++i)
        for (int ch = 0; ch < c; ++ch) out[ch * hw + perm[i]] = y->data[i * c + ch];

    auto py = y;
    auto bwd = [py, perm, c, hw, l](const Tensor& self) {
        if (!py->track_grad) return;
        py->ensure_grad();
        for (int i = 0; i < l; ++i)
            for (int ch = 0; ch < c; ++ch) py->grad[i * c + ch] += self.grad[ch * hw + perm[i]];
    };
    return make_node({c, h, w}, std::move(out), {y}, std::move(bwd), "scatter_spatial");
}

// ---------------------------------------------------------------------------
// backward sweep

void backward(const TensorPtr& loss) {
    if (!loss->is_scalar()) throw std::invalid_argument("backward: loss must be scalar");
    if (!loss->track_grad) return;

    // Iterative post-order DFS over tracked parents; each node visited once.
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> visited;
    std::vector<std::pair<Tensor*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Tensor* p = node->parents[next++].get();
            if (p->track_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss->ensure_grad();
    loss->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor* node = *it;
        node->ensure_grad();
        if (node->backward_fn) node->backward_fn(*node);
    }
}

// ---------------------------------------------------------------------------
// finite-difference audit

double grad_check(const std::function<TensorPtr(const std::vector<TensorPtr>&)>& fn,
                  const std::vector<TensorPtr>& inputs, double eps) {
    for (const auto& in : inputs) {
        if (!in->track_grad) throw std::invalid_argument("grad_check: inputs must track grads");
        in->grad.clear();
    }
    auto out = fn(inputs);
    if (!out->is_scalar()) throw std::invalid_argument("grad_check: fn must return a scalar");
    backward(out);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (const auto& in : inputs) {
        in->ensure_grad();
        analytic.push_back(in->grad);
    }

    double max_rel = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        auto& t = *inputs[i];
        for (std::size_t j = 0; j < t.data.size(); ++j) {
            const double saved = t.data[j];
            t.data[j] = saved + eps;
            const double fp = fn(inputs)->value();
            t.data[j] = saved - eps;
            const double fm = fn(inputs)->value();
            t.data[j] = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double rel =
                std::fabs(analytic[i][j] - numeric) / std::max(std::fabs(numeric), 1e-3);
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

// ---------------------------------------------------------------------------
// parameter registry

TensorPtr ParamStore::create(const std::string& name, std::vector<int> shape,
                             std::vector<double> values) {
    if (find(name)) throw std::invalid_argument("ParamStore: duplicate name '" + name + "'");
    auto t = make_leaf(std::move(shape), std::move(values), true);
    entries_.emplace_back(name, t);
    return t;
}

TensorPtr ParamStore::find(const std::string& name) const {
    for (const auto& [n, t] : entries_) {
        if (n == name) return t;
    }
    return nullptr;
}

void ParamStore::zero_grads() {
    for (auto& [n, t] : entries_) t->zero_grad();
}

std::int64_t ParamStore::total_elements() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : entries_) n += t->numel();
    return n;
}

}  // namespace mvdepth
