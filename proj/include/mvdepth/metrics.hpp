#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "mvdepth/maps.hpp"
#include "mvdepth/tensor.hpp"

namespace mvdepth {

struct MetricsReport {
    double abs_rel = 0.0;
    double sq_rel = 0.0;
    double rmse = 0.0;
    double delta1 = 0.0;
    double delta2 = 0.0;
    double delta3 = 0.0;
    std::int64_t n_pixels = 0;
    std::map<std::string, std::string> metadata;
};

// The mean of ((y - y_pred) / y)^2 is the default; the KITTI-style variant
// divides the squared error by y once. Both are available behind this flag.
enum class SqRelConvention { kWholeRatioSquared, kSquaredErrorOverGt };

// Mean absolute error over jointly valid pixels, differentiable w.r.t. the
// prediction tensor. `pred` is [H,W] and must match gt's dims.
TensorPtr mae_loss(const TensorPtr& pred, const DepthMap& gt,
                   const std::vector<uint8_t>& pred_valid);

double abs_rel(const DepthMap& pred, const DepthMap& gt);
double sq_rel(const DepthMap& pred, const DepthMap& gt,
              SqRelConvention conv = SqRelConvention::kWholeRatioSquared);
double rmse(const DepthMap& pred, const DepthMap& gt);

// r(p) = max(pred/gt, gt/pred); delta_k = fraction of pixels with
// r(p) < 1.25^k. The max form keeps the ratio >= 1.
void delta_metrics(const DepthMap& pred, const DepthMap& gt, double& d1, double& d2, double& d3);

// All metric families on the identical jointly-valid pixel set.
MetricsReport evaluate_all(const DepthMap& pred, const DepthMap& gt,
                           SqRelConvention conv = SqRelConvention::kWholeRatioSquared);

// Pixel-weighted aggregation across samples: accumulating then reporting is
// equivalent to evaluating one concatenated pixel set.
class MetricsAccumulator {
public:
    explicit MetricsAccumulator(SqRelConvention conv = SqRelConvention::kWholeRatioSquared)
        : conv_(conv) {}

    void add(const DepthMap& pred, const DepthMap& gt);
    MetricsReport report() const;  // throws if no pixels were accumulated
    std::int64_t pixels() const { return n_; }

private:
    SqRelConvention conv_;
    double sum_abs_rel_ = 0.0;
    double sum_sq_rel_ = 0.0;
    double sum_sq_err_ = 0.0;
    std::int64_t n_d1_ = 0, n_d2_ = 0, n_d3_ = 0;
    std::int64_t n_ = 0;
};

}  // namespace mvdepth
