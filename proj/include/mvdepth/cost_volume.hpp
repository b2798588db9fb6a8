#pragma once

#include <string>
#include <vector>

#include "mvdepth/geometry.hpp"
#include "mvdepth/rng.hpp"
#include "mvdepth/tensor.hpp"

namespace mvdepth {

enum class FusionMode { kConcat, kCrossAttention, kProposed, kVarianceOnly };

FusionMode fusion_mode_from_string(const std::string& s);
std::string to_string(FusionMode m);

struct CostVolume {
    enum class Kind { kVariance, kGwc, kAttention, kFused };

    TensorPtr data;  // [D,C,H,W]
    DepthHypothesisSet hypotheses;
    Kind kind = Kind::kVariance;
    // coverage[d*H*W + p]: at least one source view was valid for this voxel.
    std::vector<uint8_t> coverage;

    int planes() const { return data->shape[0]; }
    int channels() const { return data->shape[1]; }
    int height() const { return data->shape[2]; }
    int width() const { return data->shape[3]; }

    // true where any hypothesis saw a valid source
    std::vector<uint8_t> pixel_coverage() const;
};

struct AttentionWeights {
    TensorPtr data;  // [D,H,W], values in (0,1)
};

// Per-voxel variance over the view set {ref} + {valid warped sources}.
// Pixels with no valid source fall back to the reference alone (variance 0)
// and are flagged in the coverage mask. warped[d][i] is source i warped
// under hypothesis d.
CostVolume variance_volume(const TensorPtr& ref_feat,
                           const std::vector<std::vector<WarpResult>>& warped,
                           const DepthHypothesisSet& hyp);

// Group-wise correlation: channels split into `groups` groups; per group the
// normalized dot product <ref, src> * G/C, averaged over valid sources.
CostVolume gwc_volume(const TensorPtr& ref_feat,
                      const std::vector<std::vector<WarpResult>>& warped,
                      const DepthHypothesisSet& hyp, int groups);

// out[d,c,h,w] = var[d,c,h,w] * w[d,h,w]
CostVolume attention_volume(const CostVolume& var, const AttentionWeights& w);

// Multi-scale attention module + 3-D hourglass over the GwC volume, ending
// in a single-channel conv + sigmoid.
class AttentionNet {
public:
    AttentionNet(ParamStore& store, const std::string& prefix, int groups, int hidden, Rng& rng);

    AttentionWeights forward(const CostVolume& gwc) const;

private:
    TensorPtr ms_fine_w_, ms_fine_b_;
    TensorPtr ms_coarse_w_, ms_coarse_b_;
    TensorPtr enc1_w_, enc1_b_, enc2_w_, enc2_b_;
    TensorPtr dec1_w_, dec1_b_, dec0_w_, dec0_b_;
    TensorPtr head_w_, head_b_;
};

// The three ablation fusion routes plus the variance-only baseline used by
// the robustness benchmark (weights clamped to 1). All modes return a fused
// [D,C,H,W] volume with identical shape.
class FusionModule {
public:
    FusionModule(ParamStore& store, const std::string& prefix, FusionMode mode, int channels,
                 int groups, int attn_hidden, Rng& rng);

    CostVolume fuse(const CostVolume& var, const CostVolume& gwc) const;
    AttentionWeights attention(const CostVolume& gwc) const;  // proposed path only
    FusionMode mode() const { return mode_; }

private:
    FusionMode mode_;
    int channels_ = 0;
    // concat route
    TensorPtr concat_w_, concat_b_;
    // cross-attention route: queries from the variance volume, keys/values
    // from the GwC volume, softmax over the channel dimension per voxel.
    TensorPtr q_w_, q_b_, k_w_, k_b_, v_w_, v_b_;
    // proposed route
    std::unique_ptr<AttentionNet> attn_;
};

}  // namespace mvdepth
