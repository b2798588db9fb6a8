#include "mvdepth/depth_head.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mvdepth {

namespace {

std::vector<double> normal_values(Rng& rng, std::int64_t n, double stddev) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal(0.0, stddev);
    return v;
}

TensorPtr conv3_weight(ParamStore& store, const std::string& name, int co, int ci, Rng& rng) {
    const double stddev = std::sqrt(2.0 / (static_cast<double>(ci) * 27));
    return store.create(name, {co, ci, 3, 3, 3},
                        normal_values(rng, static_cast<std::int64_t>(co) * ci * 27, stddev));
}

}  // namespace

CostRegularizer::CostRegularizer(ParamStore& store, const std::string& prefix, int channels,
                                 Rng& rng) {
    r1_w_ = conv3_weight(store, prefix + ".r1.w", channels, channels, rng);
    r1_b_ = store.create(prefix + ".r1.b", {channels, 1, 1, 1},
                         std::vector<double>(channels, 0.0));
    r2_w_ = conv3_weight(store, prefix + ".r2.w", channels, channels, rng);
    r2_b_ = store.create(prefix + ".r2.b", {channels, 1, 1, 1},
                         std::vector<double>(channels, 0.0));
    head_w_ = conv3_weight(store, prefix + ".head.w", 1, channels, rng);
    head_b_ = store.create(prefix + ".head.b", {1, 1, 1, 1}, {0.0});
}

TensorPtr CostRegularizer::forward(const CostVolume& fused) const {
    if (fused.kind != CostVolume::Kind::kFused) {
        throw std::invalid_argument("CostRegularizer: expects a fused volume");
    }
    const int d = fused.planes(), h = fused.height(), w = fused.width();
    auto x = transpose01(fused.data);  // [C,D,H,W]
    x = add(x, silu(add(conv3d(x, r1_w_, 1, 1), r1_b_)));
    x = add(x, silu(add(conv3d(x, r2_w_, 1, 1), r2_b_)));
    auto scores = add(conv3d(x, head_w_, 1, 1), head_b_);  // [1,D,H,W]
    return reshape(scores, {d, h, w});
}

Regression regress(const TensorPtr& scores, const DepthHypothesisSet& hyp,
                   const std::vector<uint8_t>& pixel_valid) {
    if (scores->shape.size() != 3) throw std::invalid_argument("regress: scores must be [D,H,W]");
    const int d = scores->shape[0], h = scores->shape[1], w = scores->shape[2];
    if (d != static_cast<int>(hyp.values.size()) || d < 2) {
        throw std::invalid_argument("regress: hypothesis count mismatch");
    }
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    if (pixel_valid.size() != hw) throw std::invalid_argument("regress: valid mask size mismatch");

    Regression out;
    out.prob = softmax(scores, 0);
    auto hyp_col = constant({d, 1, 1}, hyp.values);
    out.depth = sum_axis(mul(out.prob, hyp_col), 0, false);  // [H,W] expectation

    out.depth_map = DepthMap(h, w);
    out.confidence = ConfidenceMap(h, w);
    for (std::size_t p = 0; p < hw; ++p) {
        out.depth_map.values[p] = out.depth->data[p];
        out.depth_map.valid[p] = pixel_valid[p];
        int argmax = 0;
        double best = -1.0;
        for (int dd = 0; dd < d; ++dd) {
            const double pv = out.prob->data[dd * hw + p];
            if (pv > best) {
                best = pv;
                argmax = dd;
            }
        }
        const int start = std::clamp(argmax - 1, 0, std::max(d - 4, 0));
        const int end = std::min(start + 4, d);
        double mass = 0.0;
        for (int dd = start; dd < end; ++dd) mass += out.prob->data[dd * hw + p];
        out.confidence.values[p] = std::clamp(mass, 0.0, 1.0);
    }
    return out;
}

DepthPipeline::DepthPipeline(const PipelineConfig& cfg)
    : cfg_(cfg), hyp_(build_hypotheses(cfg.d_min, cfg.d_max, cfg.planes)) {
    Rng rng(cfg.init_seed);
    extractor_ = std::make_unique<FeatureExtractor>(store_, "backbone", cfg.backbone, rng);
    fusion_ = std::make_unique<FusionModule>(store_, "fusion", cfg.fusion,
                                             cfg.backbone.feature_channels, cfg.groups,
                                             cfg.attn_hidden, rng);
    regularizer_ = std::make_unique<CostRegularizer>(store_, "regularizer",
                                                     cfg.backbone.feature_channels, rng);
}

DepthPipeline::Output DepthPipeline::forward(const SceneSample& sample) const {
    const int n = static_cast<int>(sample.frames.size());
    if (n < 2) throw std::invalid_argument("forward: need a reference and >= 1 source frame");
    if (sample.reference < 0 || sample.reference >= n) {
        throw std::invalid_argument("forward: bad reference index");
    }
    if (static_cast<int>(sample.poses.size()) != n ||
        static_cast<int>(sample.intrinsics.size()) != n) {
        throw std::invalid_argument("forward: camera count does not match frame count");
    }

    std::vector<TensorPtr> quarter_feats(n);
    for (int i = 0; i < n; ++i) {
        const auto& img = sample.frames[i];
        auto t = constant({img.channels, img.height, img.width}, img.data);
        quarter_feats[i] = extractor_->forward(t).quarter;
    }

    const int ref = sample.reference;
    const Intrinsics k_ref_q = scale_intrinsics(sample.intrinsics[ref], 4);
    const auto& ref_feat = quarter_feats[ref];

    std::vector<std::vector<WarpResult>> warped(hyp_.values.size());
    for (std::size_t d = 0; d < hyp_.values.size(); ++d) {
        for (int i = 0; i < n; ++i) {
            if (i == ref) continue;
            const Intrinsics k_src_q = scale_intrinsics(sample.intrinsics[i], 4);
            const Eigen::Matrix3d h = plane_homography(k_ref_q, k_src_q, sample.poses[ref],
                                                       sample.poses[i], hyp_.values[d]);
            warped[d].push_back(warp_features(quarter_feats[i], h));
        }
    }

    auto var = variance_volume(ref_feat, warped, hyp_);
    auto gwc = gwc_volume(ref_feat, warped, hyp_, cfg_.groups);
    auto fused = fusion_->fuse(var, gwc);
    auto scores = regularizer_->forward(fused);
    auto reg = regress(scores, hyp_, var.pixel_coverage());

    const int qh = reg.depth_map.height, qw = reg.depth_map.width;
    Output out;
    out.prob = reg.prob;
    out.depth_full = upsample_nearest2d(reg.depth, 4);
    out.depth_map = DepthMap(qh * 4, qw * 4);
    out.depth_map.values = out.depth_full->data;
    out.depth_map.valid = upsample_nearest_mask(reg.depth_map.valid, qh, qw, 4);
    out.confidence = ConfidenceMap(qh * 4, qw * 4);
    out.confidence.values = upsample_nearest_map(reg.confidence.values, qh, qw, 4);
    return out;
}

}  // namespace mvdepth
