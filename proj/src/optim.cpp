#include "mvdepth/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace mvdepth {

AdamW::AdamW(ParamStore& params, AdamWConfig cfg) : params_(params), cfg_(cfg) {
    for (const auto& [name, t] : params_.entries()) {
        m_.emplace_back(t->data.size(), 0.0);
        v_.emplace_back(t->data.size(), 0.0);
    }
}

void AdamW::step(double lr) {
    if (params_.entries().size() != m_.size()) {
        throw std::invalid_argument("AdamW: parameter set changed after construction");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

    for (std::size_t p = 0; p < m_.size(); ++p) {
        auto& t = *params_.entries()[p].second;
        auto& m = m_[p];
        auto& v = v_[p];
        const bool has_grad = t.grad.size() == t.data.size();
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            const double g = has_grad ? t.grad[i] : 0.0;
            if (!std::isfinite(g)) {
                throw std::domain_error("AdamW: non-finite gradient for parameter '" +
                                        params_.entries()[p].first + "'");
            }
            // decoupled decay, independent of the moment update
            t.data[i] -= lr * cfg_.weight_decay * t.data[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            t.data[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

double one_cycle_lr(const OneCycleSchedule& s, int step) {
    if (step < 0 || step >= s.total_steps) {
        throw std::invalid_argument("one_cycle_lr: step out of range");
    }
    if (s.lr_max <= 0.0 || s.warmup_fraction <= 0.0 || s.warmup_fraction >= 1.0 ||
        s.div_factor <= 1.0 || s.final_div_factor <= 1.0) {
        throw std::invalid_argument("one_cycle_lr: invalid schedule");
    }
    const double lr_start = s.lr_max / s.div_factor;
    const double lr_final = s.lr_max / s.final_div_factor;
    const double peak = s.warmup_fraction * s.total_steps;
    auto cosine = [](double from, double to, double u) {
        return to + (from - to) * 0.5 * (1.0 + std::cos(M_PI * u));
    };
    if (static_cast<double>(step) <= peak) {
        return cosine(lr_start, s.lr_max, peak > 0.0 ? step / peak : 1.0);
    }
    const double span = (s.total_steps - 1) - peak;
    if (span <= 0.0) return lr_final;
    return cosine(s.lr_max, lr_final, (step - peak) / span);
}

}  // namespace mvdepth
