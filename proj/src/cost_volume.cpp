#include "mvdepth/cost_volume.hpp"

#include <cmath>
#include <stdexcept>

namespace mvdepth {

FusionMode fusion_mode_from_string(const std::string& s) {
    if (s == "concat") return FusionMode::kConcat;
    if (s == "cross_attention") return FusionMode::kCrossAttention;
    if (s == "proposed") return FusionMode::kProposed;
    if (s == "variance_only") return FusionMode::kVarianceOnly;
    throw std::invalid_argument("unknown fusion mode '" + s + "'");
}

std::string to_string(FusionMode m) {
    switch (m) {
        case FusionMode::kConcat: return "concat";
        case FusionMode::kCrossAttention: return "cross_attention";
        case FusionMode::kProposed: return "proposed";
        case FusionMode::kVarianceOnly: return "variance_only";
    }
    return "?";
}

std::vector<uint8_t> CostVolume::pixel_coverage() const {
    const int d = planes(), h = height(), w = width();
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    std::vector<uint8_t> mask(hw, 0);
    for (int dd = 0; dd < d; ++dd)
        for (std::size_t p = 0; p < hw; ++p) {
            if (coverage[dd * hw + p]) mask[p] = 1;
        }
    return mask;
}

namespace {

void check_views(const TensorPtr& ref_feat, const std::vector<std::vector<WarpResult>>& warped,
                 const DepthHypothesisSet& hyp, const char* op) {
    if (ref_feat->shape.size() != 3) {
        throw std::invalid_argument(std::string(op) + ": ref_feat must be [C,H,W]");
    }
    if (warped.empty() || warped.size() != hyp.values.size()) {
        throw std::invalid_argument(std::string(op) +
                                    ": warped views must be indexed per hypothesis");
    }
    const std::size_t hw =
        static_cast<std::size_t>(ref_feat->shape[1]) * ref_feat->shape[2];
    for (const auto& views : warped) {
        if (views.empty()) {
            throw std::invalid_argument(std::string(op) + ": need at least one source view");
        }
        for (const auto& v : views) {
            if (v.features->shape != ref_feat->shape || v.valid.size() != hw) {
                throw std::invalid_argument(std::string(op) + ": warped feature shape mismatch");
            }
        }
    }
}

// Valid-count per pixel as constant tensors: counts include the reference.
struct Counts {
    TensorPtr inv_with_ref;  // [1,H,W]: 1 / (1 + #valid sources)
    TensorPtr inv_sources;   // [1,H,W]: 1 / max(#valid sources, 1)
    std::vector<uint8_t> any_source;
};

Counts view_counts(const std::vector<WarpResult>& views, int h, int w) {
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    std::vector<double> inv_ref(hw), inv_src(hw);
    Counts c;
    c.any_source.assign(hw, 0);
    for (std::size_t p = 0; p < hw; ++p) {
        int n = 0;
        for (const auto& v : views) n += v.valid[p] ? 1 : 0;
        c.any_source[p] = n > 0 ? 1 : 0;
        inv_ref[p] = 1.0 / (1.0 + n);
        inv_src[p] = 1.0 / std::max(n, 1);
    }
    c.inv_with_ref = constant({1, h, w}, std::move(inv_ref));
    c.inv_sources = constant({1, h, w}, std::move(inv_src));
    return c;
}

TensorPtr valid_mask_tensor(const WarpResult& v, int h, int w) {
    std::vector<double> m(v.valid.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = v.valid[i] ? 1.0 : 0.0;
    return constant({1, h, w}, std::move(m));
}

}  // namespace

CostVolume variance_volume(const TensorPtr& ref_feat,
                           const std::vector<std::vector<WarpResult>>& warped,
                           const DepthHypothesisSet& hyp) {
    check_views(ref_feat, warped, hyp, "variance_volume");
    const int h = ref_feat->shape[1], w = ref_feat->shape[2];
    const std::size_t hw = static_cast<std::size_t>(h) * w;

    std::vector<TensorPtr> slices;
    std::vector<uint8_t> coverage;
    coverage.reserve(warped.size() * hw);
    for (const auto& views : warped) {
        const Counts counts = view_counts(views, h, w);
        coverage.insert(coverage.end(), counts.any_source.begin(), counts.any_source.end());

        // invalid samples carry zero features, so the raw sum is already masked
        TensorPtr sum = ref_feat;
        for (const auto& v : views) sum = add(sum, v.features);
        auto mean = mul(sum, counts.inv_with_ref);

        auto dref = sub(ref_feat, mean);
        TensorPtr sq_sum = mul(dref, dref);
        for (const auto& v : views) {
            auto dv = sub(v.features, mean);
            sq_sum = add(sq_sum, mul(mul(dv, dv), valid_mask_tensor(v, h, w)));
        }
        slices.push_back(mul(sq_sum, counts.inv_with_ref));
    }

    CostVolume vol;
    vol.data = stack0(slices);
    vol.hypotheses = hyp;
    vol.kind = CostVolume::Kind::kVariance;
    vol.coverage = std::move(coverage);
    return vol;
}

CostVolume gwc_volume(const TensorPtr& ref_feat,
                      const std::vector<std::vector<WarpResult>>& warped,
                      const DepthHypothesisSet& hyp, int groups) {
    check_views(ref_feat, warped, hyp, "gwc_volume");
    const int c = ref_feat->shape[0], h = ref_feat->shape[1], w = ref_feat->shape[2];
    if (groups < 1 || c % groups != 0) {
        throw std::invalid_argument("gwc_volume: channels must be divisible by groups");
    }
    const int per_group = c / groups;
    const double norm = static_cast<double>(groups) / c;  // <.,.> * G/C

    std::vector<TensorPtr> slices;
    std::vector<uint8_t> coverage;
    for (const auto& views : warped) {
        const Counts counts = view_counts(views, h, w);
        coverage.insert(coverage.end(), counts.any_source.begin(), counts.any_source.end());

        TensorPtr acc;
        for (const auto& v : views) {
            auto prod = mul(ref_feat, v.features);
            auto grouped = reshape(prod, {groups, per_group, h, w});
            auto corr = scale(sum_axis(grouped, 1, false), norm);  // [G,H,W]
            corr = mul(corr, valid_mask_tensor(v, h, w));
            acc = acc ? add(acc, corr) : corr;
        }
        slices.push_back(mul(acc, counts.inv_sources));
    }

    CostVolume vol;
    vol.data = stack0(slices);
    vol.hypotheses = hyp;
    vol.kind = CostVolume::Kind::kGwc;
    vol.coverage = std::move(coverage);
    return vol;
}

CostVolume attention_volume(const CostVolume& var, const AttentionWeights& w) {
    if (var.kind != CostVolume::Kind::kVariance) {
        throw std::invalid_argument("attention_volume: expects a variance volume");
    }
    const int d = var.planes(), h = var.height(), wd = var.width();
    if (w.data->shape != std::vector<int>{d, h, wd}) {
        throw std::invalid_argument("attention_volume: weight dims must match the volume");
    }
    CostVolume out;
    out.data = mul(var.data, reshape(w.data, {d, 1, h, wd}));
    out.hypotheses = var.hypotheses;
    out.kind = CostVolume::Kind::kAttention;
    out.coverage = var.coverage;
    return out;
}

// ---------------------------------------------------------------------------
// attention net

namespace {

std::vector<double> normal_values(Rng& rng, std::int64_t n, double stddev) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal(0.0, stddev);
    return v;
}

TensorPtr conv3_weight(ParamStore& store, const std::string& name, int co, int ci, int k,
                       Rng& rng) {
    const double stddev = std::sqrt(2.0 / (static_cast<double>(ci) * k * k * k));
    return store.create(
        name, {co, ci, k, k, k},
        normal_values(rng, static_cast<std::int64_t>(co) * ci * k * k * k, stddev));
}

TensorPtr conv3_bias(ParamStore& store, const std::string& name, int co) {
    return store.create(name, {co, 1, 1, 1}, std::vector<double>(co, 0.0));
}

TensorPtr conv3_block(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b, int stride) {
    return silu(add(conv3d(x, w, stride, 1), b));
}

TensorPtr upsample_to(const TensorPtr& x, const TensorPtr& like) {
    return upsample_nearest3d(x, 2, like->shape[1], like->shape[2], like->shape[3]);
}

}  // namespace

AttentionNet::AttentionNet(ParamStore& store, const std::string& prefix, int groups, int hidden,
                           Rng& rng) {
    ms_fine_w_ = conv3_weight(store, prefix + ".ms_fine.w", hidden, groups, 3, rng);
    ms_fine_b_ = conv3_bias(store, prefix + ".ms_fine.b", hidden);
    ms_coarse_w_ = conv3_weight(store, prefix + ".ms_coarse.w", hidden, groups, 3, rng);
    ms_coarse_b_ = conv3_bias(store, prefix + ".ms_coarse.b", hidden);
    enc1_w_ = conv3_weight(store, prefix + ".enc1.w", hidden, hidden, 3, rng);
    enc1_b_ = conv3_bias(store, prefix + ".enc1.b", hidden);
    enc2_w_ = conv3_weight(store, prefix + ".enc2.w", hidden, hidden, 3, rng);
    enc2_b_ = conv3_bias(store, prefix + ".enc2.b", hidden);
    dec1_w_ = conv3_weight(store, prefix + ".dec1.w", hidden, hidden, 3, rng);
    dec1_b_ = conv3_bias(store, prefix + ".dec1.b", hidden);
    dec0_w_ = conv3_weight(store, prefix + ".dec0.w", hidden, hidden, 3, rng);
    dec0_b_ = conv3_bias(store, prefix + ".dec0.b", hidden);
    head_w_ = conv3_weight(store, prefix + ".head.w", 1, hidden, 3, rng);
    head_b_ = conv3_bias(store, prefix + ".head.b", 1);
}

AttentionWeights AttentionNet::forward(const CostVolume& gwc) const {
    if (gwc.kind != CostVolume::Kind::kGwc) {
        throw std::invalid_argument("AttentionNet: expects a GwC volume");
    }
    const int d = gwc.planes(), h = gwc.height(), w = gwc.width();
    auto x = transpose01(gwc.data);  // [G,D,H,W], channels first for conv3d

    // multi-scale aggregation: fine squeeze + upsampled coarse squeeze
    auto fine = conv3_block(x, ms_fine_w_, ms_fine_b_, 1);
    auto coarse = conv3_block(x, ms_coarse_w_, ms_coarse_b_, 2);
    auto ms = add(fine, upsample_to(coarse, fine));

    // 2-level hourglass with additive skips
    auto e1 = conv3_block(ms, enc1_w_, enc1_b_, 2);
    auto e2 = conv3_block(e1, enc2_w_, enc2_b_, 2);
    auto d1 = conv3_block(add(upsample_to(e2, e1), e1), dec1_w_, dec1_b_, 1);
    auto d0 = conv3_block(add(upsample_to(d1, ms), ms), dec0_w_, dec0_b_, 1);

    auto logits = add(conv3d(d0, head_w_, 1, 1), head_b_);  // [1,D,H,W]
    AttentionWeights out;
    out.data = reshape(sigmoid(logits), {d, h, w});
    return out;
}

// ---------------------------------------------------------------------------
// fusion

FusionModule::FusionModule(ParamStore& store, const std::string& prefix, FusionMode mode,
                           int channels, int groups, int attn_hidden, Rng& rng)
    : mode_(mode), channels_(channels) {
    switch (mode) {
        case FusionMode::kConcat: {
            concat_w_ = conv3_weight(store, prefix + ".concat.w", channels, channels + groups, 1,
                                     rng);
            concat_b_ = conv3_bias(store, prefix + ".concat.b", channels);
            break;
        }
        case FusionMode::kCrossAttention: {
            q_w_ = conv3_weight(store, prefix + ".q.w", channels, channels, 1, rng);
            q_b_ = conv3_bias(store, prefix + ".q.b", channels);
            k_w_ = conv3_weight(store, prefix + ".k.w", channels, groups, 1, rng);
            k_b_ = conv3_bias(store, prefix + ".k.b", channels);
            v_w_ = conv3_weight(store, prefix + ".v.w", channels, groups, 1, rng);
            v_b_ = conv3_bias(store, prefix + ".v.b", channels);
            break;
        }
        case FusionMode::kProposed:
            attn_ = std::make_unique<AttentionNet>(store, prefix + ".attn", groups, attn_hidden,
                                                   rng);
            break;
        case FusionMode::kVarianceOnly: break;  // no parameters: weights clamped to 1
    }
}

AttentionWeights FusionModule::attention(const CostVolume& gwc) const {
    if (mode_ != FusionMode::kProposed || !attn_) {
        throw std::logic_error("FusionModule: attention weights only exist in proposed mode");
    }
    return attn_->forward(gwc);
}

CostVolume FusionModule::fuse(const CostVolume& var, const CostVolume& gwc) const {
    if (var.kind != CostVolume::Kind::kVariance || gwc.kind != CostVolume::Kind::kGwc) {
        throw std::invalid_argument("FusionModule: expects (variance, gwc) volumes");
    }
    if (var.planes() != gwc.planes() || var.height() != gwc.height() ||
        var.width() != gwc.width()) {
        throw std::invalid_argument("FusionModule: volumes are not aligned");
    }
    if (var.channels() != channels_) {
        throw std::invalid_argument("FusionModule: variance channel count mismatch");
    }

    CostVolume out;
    out.hypotheses = var.hypotheses;
    out.kind = CostVolume::Kind::kFused;
    out.coverage = var.coverage;

    switch (mode_) {
        case FusionMode::kVarianceOnly: {
            out.data = var.data;
            return out;
        }
        case FusionMode::kProposed: {
            CostVolume av = attention_volume(var, attn_->forward(gwc));
            out.data = av.data;
            return out;
        }
        case FusionMode::kConcat: {
            auto cat = transpose01(concat({var.data, gwc.data}, 1));  // [C+G,D,H,W]
            auto fusedc = add(conv3d(cat, concat_w_, 1, 0), concat_b_);
            out.data = transpose01(fusedc);
            return out;
        }
        case FusionMode::kCrossAttention: {
            const int c = channels_;
            auto varc = transpose01(var.data);  // [C,D,H,W]
            auto gwcc = transpose01(gwc.data);  // [G,D,H,W]
            auto q = add(conv3d(varc, q_w_, 1, 0), q_b_);
            auto k = add(conv3d(gwcc, k_w_, 1, 0), k_b_);
            auto v = add(conv3d(gwcc, v_w_, 1, 0), v_b_);
            const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(c));
            // per-voxel single-head attention over the channel dimension:
            // row c attends with logits q_c * k, then mixes v
            std::vector<TensorPtr> rows;
            rows.reserve(c);
            for (int row = 0; row < c; ++row) {
                auto qc = slice_axis(q, 0, row, 1);          // [1,D,H,W]
                auto logits = scale(mul(k, qc), inv_sqrt);   // [C,D,H,W]
                auto attn = softmax(logits, 0);
                rows.push_back(sum_axis(mul(attn, v), 0, true));  // [1,D,H,W]
            }
            auto mixed = concat(rows, 0);  // [C,D,H,W]
            out.data = transpose01(add(varc, mixed));
            return out;
        }
    }
    throw std::invalid_argument("FusionModule: unknown mode");
}

}  // namespace mvdepth
