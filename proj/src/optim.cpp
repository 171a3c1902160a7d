#include "cola/optim.hpp"

#include <cmath>
#include <numbers>

namespace cola {

AdamW::AdamW(const std::vector<Parameter>& params, AdamWConfig cfg) : cfg_(cfg) {
    for (const auto& p : params) {
        m_.emplace_back(p.value.shape());
        v_.emplace_back(p.value.shape());
    }
}

void AdamW::step(std::vector<Parameter>& params, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        double* w = p.value.ptr();
        const double* g = p.grad.ptr();
        double* m = m_[i].ptr();
        double* v = v_[i].ptr();
        const double decay = p.decay ? lr * cfg_.weight_decay : 0.0;
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double mh = m[j] / bc1, vh = v[j] / bc2;
            w[j] -= decay * w[j];
            w[j] -= lr * mh / (std::sqrt(vh) + cfg_.eps);
        }
    }
}

double LrSchedule::at(std::size_t step) const {
    const auto warm = static_cast<std::size_t>(std::floor(warmup_fraction * static_cast<double>(total_steps)));
    if (step < warm) return peak * static_cast<double>(step + 1) / static_cast<double>(warm);
    const std::size_t span = total_steps > warm ? total_steps - warm : 1;
    double progress = static_cast<double>(step - warm) / static_cast<double>(span);
    if (progress > 1.0) progress = 1.0;
    const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    return peak * (floor_ratio + (1.0 - floor_ratio) * cosine);
}

double clip_grad_norm(std::vector<Parameter>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params)
        for (double g : p.grad.data()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& p : params)
            for (double& g : p.grad.data()) g *= s;
    }
    return norm;
}

}  // namespace cola
