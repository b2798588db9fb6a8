#pragma once

#include <memory>

#include "mvdepth/backbone.hpp"
#include "mvdepth/cost_volume.hpp"
#include "mvdepth/maps.hpp"
#include "mvdepth/scene.hpp"

namespace mvdepth {

// Residual stack of 3-D conv blocks reducing the fused volume to one
// matching score per (hypothesis, pixel); higher means more likely.
class CostRegularizer {
public:
    CostRegularizer(ParamStore& store, const std::string& prefix, int channels, Rng& rng);

    TensorPtr forward(const CostVolume& fused) const;  // -> scores [D,H,W]

private:
    TensorPtr r1_w_, r1_b_, r2_w_, r2_b_;
    TensorPtr head_w_, head_b_;
};

struct Regression {
    TensorPtr depth;  // [H,W], graph-attached soft expectation
    TensorPtr prob;   // [D,H,W], softmax over hypotheses
    DepthMap depth_map;
    ConfidenceMap confidence;
};

// Soft-argmin regression: p = softmax over D, depth = sum p[d] * hyp[d].
// Confidence is the probability mass inside a 4-hypothesis window around
// the argmax, clipped at the volume ends.
Regression regress(const TensorPtr& scores, const DepthHypothesisSet& hyp,
                   const std::vector<uint8_t>& pixel_valid);

struct PipelineConfig {
    BackboneConfig backbone;
    int planes = 16;
    double d_min = 2.5;
    double d_max = 10.0;
    int groups = 4;
    int attn_hidden = 8;
    FusionMode fusion = FusionMode::kProposed;
    std::uint64_t init_seed = 42;
};

// The full two-branch forward pass: shared feature pyramids for every frame,
// per-hypothesis homography warps of source features at 1/4 scale, variance
// and GwC volumes, fusion, regularization, soft regression, and nearest
// upsampling back to input resolution.
class DepthPipeline {
public:
    explicit DepthPipeline(const PipelineConfig& cfg);

    struct Output {
        TensorPtr depth_full;  // [H,W] at input resolution, graph-attached
        TensorPtr prob;        // [D,H/4,W/4]
        DepthMap depth_map;    // input resolution
        ConfidenceMap confidence;
    };

    Output forward(const SceneSample& sample) const;

    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    const PipelineConfig& config() const { return cfg_; }
    const DepthHypothesisSet& hypotheses() const { return hyp_; }

private:
    PipelineConfig cfg_;
    DepthHypothesisSet hyp_;
    ParamStore store_;
    std::unique_ptr<FeatureExtractor> extractor_;
    std::unique_ptr<FusionModule> fusion_;
    std::unique_ptr<CostRegularizer> regularizer_;
};

}  // namespace mvdepth
