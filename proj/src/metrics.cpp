#include "mvdepth/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace mvdepth {

namespace {

// Walks the jointly valid pixel set, enforcing gt > 0 there.
template <typename Fn>
std::int64_t for_each_joint(const DepthMap& pred, const DepthMap& gt, Fn&& fn) {
    if (pred.width != gt.width || pred.height != gt.height) {
        throw std::invalid_argument("metrics: prediction and gt dims differ");
    }
    std::int64_t n = 0;
    for (std::size_t p = 0; p < gt.values.size(); ++p) {
        if (!gt.valid[p] || !pred.valid[p]) continue;
        if (!(gt.values[p] > 0.0)) {
            throw std::domain_error("metrics: non-positive ground-truth depth on a valid pixel");
        }
        fn(pred.values[p], gt.values[p]);
        ++n;
    }
    if (n == 0) throw std::invalid_argument("metrics: empty joint valid mask");
    return n;
}

}  // namespace

TensorPtr mae_loss(const TensorPtr& pred, const DepthMap& gt,
                   const std::vector<uint8_t>& pred_valid) {
    if (pred->shape != std::vector<int>{gt.height, gt.width}) {
        throw std::invalid_argument("mae_loss: pred must be [H,W] matching gt");
    }
    if (pred_valid.size() != gt.values.size()) {
        throw std::invalid_argument("mae_loss: valid mask size mismatch");
    }
    std::vector<double> mask(gt.values.size(), 0.0);
    std::int64_t n = 0;
    for (std::size_t p = 0; p < mask.size(); ++p) {
        if (gt.valid[p] && pred_valid[p]) {
            mask[p] = 1.0;
            ++n;
        }
    }
    if (n == 0) throw std::invalid_argument("mae_loss: empty joint valid mask");
    auto gt_t = constant({gt.height, gt.width}, gt.values);
    auto mask_t = constant({gt.height, gt.width}, std::move(mask));
    auto masked = mul(abs_op(sub(pred, gt_t)), mask_t);
    return scale(sum_all(masked), 1.0 / static_cast<double>(n));
}

double abs_rel(const DepthMap& pred, const DepthMap& gt) {
    double sum = 0.0;
    const auto n = for_each_joint(pred, gt,
                                  [&](double p, double g) { sum += std::fabs(g - p) / g; });
    return sum / static_cast<double>(n);
}

double sq_rel(const DepthMap& pred, const DepthMap& gt, SqRelConvention conv) {
    double sum = 0.0;
    const auto n = for_each_joint(pred, gt, [&](double p, double g) {
        const double e = g - p;
        sum += conv == SqRelConvention::kWholeRatioSquared ? (e / g) * (e / g) : e * e / g;
    });
    return sum / static_cast<double>(n);
}

double rmse(const DepthMap& pred, const DepthMap& gt) {
    double sum = 0.0;
    const auto n = for_each_joint(pred, gt, [&](double p, double g) { sum += (g - p) * (g - p); });
    return std::sqrt(sum / static_cast<double>(n));
}

void delta_metrics(const DepthMap& pred, const DepthMap& gt, double& d1, double& d2, double& d3) {
    std::int64_t c1 = 0, c2 = 0, c3 = 0;
    const auto n = for_each_joint(pred, gt, [&](double p, double g) {
        if (!(p > 0.0)) {
            throw std::domain_error("delta_metrics: non-positive prediction on a valid pixel");
        }
        const double r = std::max(p / g, g / p);
        if (r < 1.25) ++c1;
        if (r < 1.25 * 1.25) ++c2;
        if (r < 1.25 * 1.25 * 1.25) ++c3;
    });
    d1 = static_cast<double>(c1) / n;
    d2 = static_cast<double>(c2) / n;
    d3 = static_cast<double>(c3) / n;
}

MetricsReport evaluate_all(const DepthMap& pred, const DepthMap& gt, SqRelConvention conv) {
    MetricsReport r;
    r.abs_rel = abs_rel(pred, gt);
    r.sq_rel = sq_rel(pred, gt, conv);
    r.rmse = rmse(pred, gt);
    delta_metrics(pred, gt, r.delta1, r.delta2, r.delta3);
    r.n_pixels = for_each_joint(pred, gt, [](double, double) {});
    return r;
}

void MetricsAccumulator::add(const DepthMap& pred, const DepthMap& gt) {
    n_ += for_each_joint(pred, gt, [&](double p, double g) {
        const double e = g - p;
        sum_abs_rel_ += std::fabs(e) / g;
        sum_sq_rel_ += conv_ == SqRelConvention::kWholeRatioSquared ? (e / g) * (e / g) : e * e / g;
        sum_sq_err_ += e * e;
        if (!(p > 0.0)) {
            throw std::domain_error("metrics: non-positive prediction on a valid pixel");
        }
        const double r = std::max(p / g, g / p);
        if (r < 1.25) ++n_d1_;
        if (r < 1.25 * 1.25) ++n_d2_;
        if (r < 1.25 * 1.25 * 1.25) ++n_d3_;
    });
}

MetricsReport MetricsAccumulator::report() const {
    if (n_ == 0) throw std::invalid_argument("MetricsAccumulator: nothing accumulated");
    MetricsReport r;
    const double n = static_cast<double>(n_);
    r.abs_rel = sum_abs_rel_ / n;
    r.sq_rel = sum_sq_rel_ / n;
    r.rmse = std::sqrt(sum_sq_err_ / n);
    r.delta1 = static_cast<double>(n_d1_) / n;
    r.delta2 = static_cast<double>(n_d2_) / n;
    r.delta3 = static_cast<double>(n_d3_) / n;
    r.n_pixels = n_;
    return r;
}

}  // namespace mvdepth
