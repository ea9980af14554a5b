#pragma once

// Adam with bias correction over a flat parameter vector. The caller owns
// the layout; the optional namer turns a coordinate index into a block name
// for diagnostics.

#include <handfit/core.hpp>

#include <functional>
#include <string>

namespace handfit {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const {
        if (!(lr > 0.0)) throw std::invalid_argument("adam: lr must be positive");
        if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
            throw std::invalid_argument("adam: betas must lie in [0, 1)");
        if (!(eps > 0.0)) throw std::invalid_argument("adam: eps must be positive");
    }
};

struct AdamState {
    VecX m, v;
    long t = 0;

    void reset(Eigen::Index n) {
        m = VecX::Zero(n);
        v = VecX::Zero(n);
        t = 0;
    }
};

using ParamNamer = std::function<std::string(Eigen::Index)>;

inline void adam_step(VecX& params, const VecX& grads, AdamState& state, const AdamConfig& cfg,
                      const ParamNamer& namer = {}) {
    cfg.validate();
    if (params.size() != grads.size())
        throw std::invalid_argument("adam: parameter and gradient sizes differ");
    if (state.t == 0 && state.m.size() == 0) state.reset(params.size());
    if (state.m.size() != params.size())
        throw std::invalid_argument("adam: state size does not match parameters");

    for (Eigen::Index i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i])) {
            std::string where = namer ? namer(i) : ("coordinate " + std::to_string(i));
            throw std::runtime_error("adam: non-finite gradient in " + where);
        }

    state.t += 1;
    double c1 = 1.0 - std::pow(cfg.beta1, double(state.t));
    double c2 = 1.0 - std::pow(cfg.beta2, double(state.t));
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        double mh = state.m[i] / c1;
        double vh = state.v[i] / c2;
        params[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
}

}  // namespace handfit
