#pragma once

#include "dualdepth/core/tensor.hpp"

namespace dualdepth {

/// Per-parameter Adam moments. Moments start at zero and the step counter
/// increments by exactly one per accepted step.
struct AdamState {
    Tensor m;
    Tensor v;
    std::int64_t t = 0;

    static AdamState for_param(const Tensor& param) {
        AdamState s;
        s.m = Tensor(param.shape());
        s.v = Tensor(param.shape());
        s.t = 0;
        return s;
    }
};

struct AdamConfig {
    float lr = 2e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

/// Standard bias-corrected Adam update, applied in place.
inline void adam_step(Tensor& param, const Tensor& grad, AdamState& state,
                      const AdamConfig& cfg) {
    check(param.shape() == grad.shape() && param.shape() == state.m.shape() &&
              param.shape() == state.v.shape(),
          "adam_step: shape mismatch between param " + param.shape().str() + " and grad " +
              grad.shape().str());
    check(cfg.lr > 0.0f, "adam_step: learning rate must be positive");
    if (!grad.all_finite()) {
        throw std::runtime_error("adam_step: non-finite gradient, step rejected");
    }
    state.t += 1;
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double corr1 = 1.0 - std::pow(b1, double(state.t));
    const double corr2 = 1.0 - std::pow(b2, double(state.t));
    const std::int64_t n = param.numel();
    float* p = param.data();
    float* m = state.m.data();
    float* v = state.v.data();
    const float* g = grad.data();
    for (std::int64_t i = 0; i < n; ++i) {
        const double gi = g[i];
        const double mi = b1 * m[i] + (1.0 - b1) * gi;
        const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
        m[i] = static_cast<float>(mi);
        v[i] = static_cast<float>(vi);
        const double mhat = mi / corr1;
        const double vhat = vi / corr2;
        p[i] = static_cast<float>(double(p[i]) - double(cfg.lr) * mhat / (std::sqrt(vhat) + double(cfg.eps)));
    }
}

}  // namespace dualdepth
