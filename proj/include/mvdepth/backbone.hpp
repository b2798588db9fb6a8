#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "mvdepth/rng.hpp"
#include "mvdepth/tensor.hpp"

namespace mvdepth {

enum class BackboneKind { kConvOnly, kMambaPlain, kDepthMamba };

BackboneKind backbone_kind_from_string(const std::string& s);
std::string to_string(BackboneKind k);

struct BackboneConfig {
    int image_channels = 1;
    int feature_channels = 8;  // C_f
    int state_dim = 8;         // S
    int blocks_per_stage = 2;  // N
    BackboneKind kind = BackboneKind::kDepthMamba;
};

// Selective-state-space block parameters. The diagonal state matrix is kept
// strictly negative via A = -exp(a_log); the per-step Delta is positive via
// softplus of a learned projection.
struct SsmBlockParams {
    TensorPtr w_delta;  // [C,C]
    TensorPtr b_delta;  // [C]
    TensorPtr w_b;      // [C,S]
    TensorPtr w_c;      // [C,S]
    TensorPtr a_log;    // [S]
    TensorPtr skip;     // [C] per-channel skip gain
    int state_dim = 0;
};

SsmBlockParams make_ssm_params(ParamStore& store, const std::string& prefix, int channels,
                               int state_dim, double skip_init, Rng& rng);

// Per channel c with state h in R^S, h_0 = 0:
//   h_t = exp(Delta_t[c] * A) .* h_{t-1} + Delta_t[c] * B_t * x_t[c]
//   y_t[c] = <C_t, h_t[c,:]> + skip[c] * x_t[c]
// where Delta_t = softplus(x_t W_delta + b_delta), B_t = x_t W_b,
// C_t = x_t W_c are per-step projections shared across channels and
// A = -exp(a_log). Discretization: exact exp for the state term, Euler for
// the input term. Differentiable w.r.t. x and all parameters.
TensorPtr selective_scan(const TensorPtr& x, const SsmBlockParams& params);

// The recurrence core on precomputed sequences; exposed for gradient audits.
TensorPtr selective_scan_core(const TensorPtr& x, const TensorPtr& delta, const TensorPtr& bseq,
                              const TensorPtr& cseq, const TensorPtr& a, const TensorPtr& skip);

// Four deterministic traversals of an HxW grid, each a bijection of flat
// positions: row-major, row-major reversed, column-major, column-major
// reversed. perm[l] is the flat position visited at sequence step l.
std::array<std::vector<int>, 4> cross_scan_perms(int h, int w);

// f [C,H,W] -> four [L,C] sequences, L = H*W.
std::array<TensorPtr, 4> cross_scan_2d(const TensorPtr& f);

// Un-permute each sequence to its spatial layout and sum elementwise.
TensorPtr cross_merge(const std::array<TensorPtr, 4>& ys, int h, int w);

// Residual local block: f + silu(pointwise(depthwise3x3(f))).
struct LocalFeatureBlock {
    TensorPtr dw;       // [C,3,3]
    TensorPtr dw_bias;  // [C,1,1]
    TensorPtr pw;       // [C,C,1,1]
    TensorPtr pw_bias;  // [C,1,1]

    TensorPtr forward(const TensorPtr& f) const;
};

LocalFeatureBlock make_local_feature_block(ParamStore& store, const std::string& prefix,
                                           int channels, Rng& rng);

struct FeaturePyramid {
    TensorPtr half;     // [C_f, H/2, W/2]
    TensorPtr quarter;  // [C_f, H/4, W/4]
};

// Multi-scale feature extractor shared by all views: stem conv (stride 2),
// a stack of blocks, stride-2 conv, second block stack. The block flavor
// depends on the configured kind; all kinds emit identical pyramid shapes.
class FeatureExtractor {
public:
    FeatureExtractor(ParamStore& store, const std::string& prefix, const BackboneConfig& cfg,
                     Rng& rng);

    FeaturePyramid forward(const TensorPtr& image) const;
    const BackboneConfig& config() const { return cfg_; }

private:
    struct Block {
        // depth-mamba / plain-scan path
        std::vector<SsmBlockParams> dirs;  // 4 for depth-mamba, 1 for plain
        std::optional<LocalFeatureBlock> local;
        // conv-only path
        TensorPtr conv1, bias1, conv2, bias2;

        TensorPtr forward(const TensorPtr& f, BackboneKind kind) const;
    };

    BackboneConfig cfg_;
    TensorPtr stem_w_, stem_b_;
    TensorPtr down_w_, down_b_;
    std::vector<Block> stage1_, stage2_;

    Block make_block(ParamStore& store, const std::string& prefix, Rng& rng) const;
};

}  // namespace mvdepth
