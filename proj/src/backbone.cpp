#include "mvdepth/backbone.hpp"

#include <cmath>
#include <stdexcept>

namespace mvdepth {

BackboneKind backbone_kind_from_string(const std::string& s) {
    if (s == "conv_only") return BackboneKind::kConvOnly;
    if (s == "mamba_plain") return BackboneKind::kMambaPlain;
    if (s == "depth_mamba") return BackboneKind::kDepthMamba;
    throw std::invalid_argument("unknown backbone kind '" + s + "'");
}

std::string to_string(BackboneKind k) {
    switch (k) {
        case BackboneKind::kConvOnly: return "conv_only";
        case BackboneKind::kMambaPlain: return "mamba_plain";
        case BackboneKind::kDepthMamba: return "depth_mamba";
    }
    return "?";
}

namespace {

std::vector<double> normal_values(Rng& rng, std::int64_t n, double stddev) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal(0.0, stddev);
    return v;
}

TensorPtr conv_weight(ParamStore& store, const std::string& name, int co, int ci, int k,
                      Rng& rng) {
    const double stddev = std::sqrt(2.0 / (static_cast<double>(ci) * k * k));
    return store.create(name, {co, ci, k, k},
                        normal_values(rng, static_cast<std::int64_t>(co) * ci * k * k, stddev));
}

TensorPtr conv_bias(ParamStore& store, const std::string& name, int co) {
    return store.create(name, {co, 1, 1}, std::vector<double>(co, 0.0));
}

}  // namespace

SsmBlockParams make_ssm_params(ParamStore& store, const std::string& prefix, int channels,
                               int state_dim, double skip_init, Rng& rng) {
    SsmBlockParams p;
    p.state_dim = state_dim;
    const double proj_std = 1.0 / std::sqrt(static_cast<double>(channels));
    p.w_delta = store.create(prefix + ".w_delta", {channels, channels},
                             normal_values(rng, static_cast<std::int64_t>(channels) * channels,
                                           proj_std));
    // softplus(b_delta) lands in roughly [0.01, 0.1]
    std::vector<double> bd(channels);
    for (auto& v : bd) {
        const double target = rng.uniform(0.01, 0.1);
        v = std::log(std::expm1(target));
    }
    p.b_delta = store.create(prefix + ".b_delta", {channels}, std::move(bd));
    p.w_b = store.create(prefix + ".w_b", {channels, state_dim},
                         normal_values(rng, static_cast<std::int64_t>(channels) * state_dim,
                                       proj_std));
    p.w_c = store.create(prefix + ".w_c", {channels, state_dim},
                         normal_values(rng, static_cast<std::int64_t>(channels) * state_dim,
                                       proj_std));
    std::vector<double> al(state_dim);
    for (int s = 0; s < state_dim; ++s) al[s] = std::log(static_cast<double>(s + 1));
    p.a_log = store.create(prefix + ".a_log", {state_dim}, std::move(al));
    p.skip = store.create(prefix + ".skip", {channels},
                          std::vector<double>(channels, skip_init));
    return p;
}

TensorPtr selective_scan_core(const TensorPtr& x, const TensorPtr& delta, const TensorPtr& bseq,
                              const TensorPtr& cseq, const TensorPtr& a, const TensorPtr& skip) {
    if (x->shape.size() != 2 || delta->shape != x->shape) {
        throw std::invalid_argument("selective_scan_core: x and delta must be [L,C]");
    }
    const int l = x->shape[0], c = x->shape[1];
    if (bseq->shape.size() != 2 || bseq->shape[0] != l || cseq->shape != bseq->shape) {
        throw std::invalid_argument("selective_scan_core: B and C sequences must be [L,S]");
    }
    const int s = bseq->shape[1];
    if (a->shape != std::vector<int>{s} || skip->shape != std::vector<int>{c}) {
        throw std::invalid_argument("selective_scan_core: A must be [S], skip must be [C]");
    }
    for (double av : a->data) {
        if (!(av < 0.0)) throw std::domain_error("selective_scan_core: A entries must be < 0");
    }
    for (double dv : delta->data) {
        if (!(dv > 0.0)) throw std::domain_error("selective_scan_core: Delta must be > 0");
    }

    // h[t,c,s] kept for the backward pass
    std::vector<double> h(static_cast<std::size_t>(l) * c * s, 0.0);
    std::vector<double> y(static_cast<std::size_t>(l) * c, 0.0);
    for (int t = 0; t < l; ++t) {
        for (int ch = 0; ch < c; ++ch) {
            const double dt = delta->data[t * c + ch];
            const double xv = x->data[t * c + ch];
            double acc = 0.0;
            for (int st = 0; st < s; ++st) {
                const double abar = std::exp(dt * a->data[st]);
                const double hprev = t > 0 ? h[((t - 1) * c + ch) * s + st] : 0.0;
                const double hv = abar * hprev + dt * bseq->data[t * s + st] * xv;
                h[(t * c + ch) * s + st] = hv;
                acc += cseq->data[t * s + st] * hv;
            }
            y[t * c + ch] = acc + skip->data[ch] * xv;
        }
    }

    auto px = x, pd = delta, pb = bseq, pc = cseq, pa = a, pk = skip;
    auto bwd = [px, pd, pb, pc, pa, pk, h, l, c, s](const Tensor& self) {
        const auto& g = self.grad;
        px->ensure_grad();
        pd->ensure_grad();
        pb->ensure_grad();
        pc->ensure_grad();
        pa->ensure_grad();
        pk->ensure_grad();

        std::vector<double> dh(static_cast<std::size_t>(c) * s, 0.0);
        for (int t = l - 1; t >= 0; --t) {
            for (int ch = 0; ch < c; ++ch) {
                const double gy = g[t * c + ch];
                const double dt = pd->data[t * c + ch];
                const double xv = px->data[t * c + ch];
                pk->grad[ch] += gy * xv;
                px->grad[t * c + ch] += gy * pk->data[ch];
                double ddt = 0.0;
                double dxv = 0.0;
                for (int st = 0; st < s; ++st) {
                    const double hv = h[(t * c + ch) * s + st];
                    pc->grad[t * s + st] += gy * hv;
                    double dhv = dh[ch * s + st] + gy * pc->data[t * s + st];
                    const double av = pa->data[st];
                    const double abar = std::exp(dt * av);
                    const double hprev = t > 0 ? h[((t - 1) * c + ch) * s + st] : 0.0;
                    const double bv = pb->data[t * s + st];
                    ddt += dhv * (hprev * abar * av + bv * xv);
                    pa->grad[st] += dhv * hprev * abar * dt;
                    pb->grad[t * s + st] += dhv * dt * xv;
                    dxv += dhv * dt * bv;
                    dh[ch * s + st] = dhv * abar;  // flows to h_{t-1}
                }
                pd->grad[t * c + ch] += ddt;
                px->grad[t * c + ch] += dxv;
            }
        }
    };
    return make_node({l, c}, std::move(y), {x, delta, bseq, cseq, a, skip}, std::move(bwd),
                     "selective_scan");
}

TensorPtr selective_scan(const TensorPtr& x, const SsmBlockParams& params) {
    if (x->shape.size() != 2) throw std::invalid_argument("selective_scan: x must be [L,C]");
    auto delta = softplus(add(matmul(x, params.w_delta), params.b_delta));
    auto bseq = matmul(x, params.w_b);
    auto cseq = matmul(x, params.w_c);
    auto a = neg(exp_op(params.a_log));
    return selective_scan_core(x, delta, bseq, cseq, a, params.skip);
}

std::array<std::vector<int>, 4> cross_scan_perms(int h, int w) {
    if (h < 1 || w < 1) throw std::invalid_argument("cross_scan_perms: dims must be >= 1");
    const int l = h * w;
    std::array<std::vector<int>, 4> perms;
    for (auto& p : perms) p.resize(l);
    for (int i = 0; i < l; ++i) {
        perms[0][i] = i;          // row-major
        perms[1][i] = l - 1 - i;  // row-major reversed
    }
    int idx = 0;
    for (int x = 0; x < w; ++x)
        for (int y = 0; y < h; ++y) {
            perms[2][idx] = y * w + x;  // column-major
            perms[3][l - 1 - idx] = y * w + x;
            ++idx;
        }
    return perms;
}

std::array<TensorPtr, 4> cross_scan_2d(const TensorPtr& f) {
    if (f->shape.size() != 3) throw std::invalid_argument("cross_scan_2d: expects f [C,H,W]");
    const auto perms = cross_scan_perms(f->shape[1], f->shape[2]);
    return {gather_spatial(f, perms[0]), gather_spatial(f, perms[1]),
            gather_spatial(f, perms[2]), gather_spatial(f, perms[3])};
}

TensorPtr cross_merge(const std::array<TensorPtr, 4>& ys, int h, int w) {
    const auto perms = cross_scan_perms(h, w);
    TensorPtr out;
    for (int i = 0; i < 4; ++i) {
        auto m = scatter_spatial(ys[i], perms[i], h, w);
        out = out ? add(out, m) : m;
    }
    return out;
}

TensorPtr LocalFeatureBlock::forward(const TensorPtr& f) const {
    auto t = add(depthwise_conv2d(f, dw, 1), dw_bias);
    t = add(conv2d(t, pw, 1, 0), pw_bias);
    return add(f, silu(t));
}

LocalFeatureBlock make_local_feature_block(ParamStore& store, const std::string& prefix,
                                           int channels, Rng& rng) {
    LocalFeatureBlock b;
    const double dw_std = std::sqrt(2.0 / 9.0);
    b.dw = store.create(prefix + ".dw", {channels, 3, 3},
                        normal_values(rng, static_cast<std::int64_t>(channels) * 9, dw_std));
    b.dw_bias = conv_bias(store, prefix + ".dw_bias", channels);
    const double pw_std = std::sqrt(2.0 / channels);
    b.pw = store.create(prefix + ".pw", {channels, channels, 1, 1},
                        normal_values(rng, static_cast<std::int64_t>(channels) * channels,
                                      pw_std));
    b.pw_bias = conv_bias(store, prefix + ".pw_bias", channels);
    return b;
}

TensorPtr FeatureExtractor::Block::forward(const TensorPtr& f, BackboneKind kind) const {
    if (kind == BackboneKind::kConvOnly) {
        auto t = silu(add(conv2d(f, conv1, 1, 1), bias1));
        t = add(conv2d(t, conv2, 1, 1), bias2);
        return add(f, t);
    }
    const int h = f->shape[1], w = f->shape[2];
    if (kind == BackboneKind::kMambaPlain) {
        const auto perms = cross_scan_perms(h, w);
        auto seq = gather_spatial(f, perms[0]);
        auto y = selective_scan(seq, dirs[0]);
        return scatter_spatial(y, perms[0], h, w);
    }
    auto seqs = cross_scan_2d(f);
    std::array<TensorPtr, 4> ys;
    for (int i = 0; i < 4; ++i) ys[i] = selective_scan(seqs[i], dirs[i]);
    auto merged = cross_merge(ys, h, w);
    return local->forward(merged);
}

FeatureExtractor::Block FeatureExtractor::make_block(ParamStore& store, const std::string& prefix,
                                                     Rng& rng) const {
    Block b;
    const int c = cfg_.feature_channels;
    switch (cfg_.kind) {
        case BackboneKind::kConvOnly:
            b.conv1 = conv_weight(store, prefix + ".conv1", c, c, 3, rng);
            b.bias1 = conv_bias(store, prefix + ".bias1", c);
            b.conv2 = conv_weight(store, prefix + ".conv2", c, c, 3, rng);
            b.bias2 = conv_bias(store, prefix + ".bias2", c);
            break;
        case BackboneKind::kMambaPlain:
            b.dirs.push_back(make_ssm_params(store, prefix + ".dir0", c, cfg_.state_dim, 1.0, rng));
            break;
        case BackboneKind::kDepthMamba:
            for (int d = 0; d < 4; ++d) {
                // merge sums four paths; quarter skip gain keeps unit scale
                b.dirs.push_back(make_ssm_params(store, prefix + ".dir" + std::to_string(d), c,
                                                 cfg_.state_dim, 0.25, rng));
            }
            b.local = make_local_feature_block(store, prefix + ".local", c, rng);
            break;
    }
    return b;
}

FeatureExtractor::FeatureExtractor(ParamStore& store, const std::string& prefix,
                                   const BackboneConfig& cfg, Rng& rng)
    : cfg_(cfg) {
    if (cfg.feature_channels < 1 || cfg.state_dim < 1 || cfg.blocks_per_stage < 1) {
        throw std::invalid_argument("FeatureExtractor: invalid config");
    }
    stem_w_ = conv_weight(store, prefix + ".stem.w", cfg.feature_channels, cfg.image_channels, 3,
                          rng);
    stem_b_ = conv_bias(store, prefix + ".stem.b", cfg.feature_channels);
    for (int i = 0; i < cfg.blocks_per_stage; ++i) {
        stage1_.push_back(make_block(store, prefix + ".stage1.block" + std::to_string(i), rng));
    }
    down_w_ = conv_weight(store, prefix + ".down.w", cfg.feature_channels, cfg.feature_channels,
                          3, rng);
    down_b_ = conv_bias(store, prefix + ".down.b", cfg.feature_channels);
    for (int i = 0; i < cfg.blocks_per_stage; ++i) {
        stage2_.push_back(make_block(store, prefix + ".stage2.block" + std::to_string(i), rng));
    }
}

FeaturePyramid FeatureExtractor::forward(const TensorPtr& image) const {
    if (image->shape.size() != 3 || image->shape[0] != cfg_.image_channels) {
        throw std::invalid_argument("FeatureExtractor: expects image [C_img,H,W]");
    }
    if (image->shape[1] % 4 != 0 || image->shape[2] % 4 != 0) {
        throw std::invalid_argument("FeatureExtractor: H and W must be divisible by 4");
    }
    auto f = silu(add(conv2d(image, stem_w_, 2, 1), stem_b_));
    for (const auto& b : stage1_) f = b.forward(f, cfg_.kind);
    FeaturePyramid pyr;
    pyr.half = f;
    auto g = silu(add(conv2d(f, down_w_, 2, 1), down_b_));
    for (const auto& b : stage2_) g = b.forward(g, cfg_.kind);
    pyr.quarter = g;
    return pyr;
}

}  // namespace mvdepth
