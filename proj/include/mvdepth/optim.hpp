#pragma once

#include <cstdint>
#include <vector>

#include "mvdepth/tensor.hpp"

namespace mvdepth {

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// AdamW with decoupled weight decay: the decay term lr*wd*p is applied
// independently of the moment update.
class AdamW {
public:
    AdamW(ParamStore& params, AdamWConfig cfg);

    // `lr` overrides cfg.lr for this step (schedule hook). Throws on
    // non-finite gradients. Parameters without grads are treated as zero-grad.
    void step(double lr);
    void step() { step(cfg_.lr); }

    std::int64_t step_count() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    ParamStore& params_;
    AdamWConfig cfg_;
    std::int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;  // one slot per param, same order
};

struct OneCycleSchedule {
    double lr_max = 1e-4;
    int total_steps = 1;
    double warmup_fraction = 0.3;
    double div_factor = 25.0;
    double final_div_factor = 1e4;
};

// Cosine ramp lr_max/div_factor -> lr_max over the warmup fraction, then
// cosine decay to lr_max/final_div_factor at the last step.
double one_cycle_lr(const OneCycleSchedule& s, int step);

}  // namespace mvdepth
