#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "gina/autodiff.hpp"

namespace gina {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment accumulators, one pair per parameter tensor.
struct AdamState {
    AdamConfig config;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    long step = 0;

    AdamState() = default;
    explicit AdamState(AdamConfig cfg) : config(cfg) {}
};

/// One bias-corrected Adam update minimising the objective whose gradient
/// is `grads`. Moment buffers are created lazily on the first call.
inline void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state) {
    if (params.size() != grads.size())
        throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.push_back(Tensor::Zero(p.rows(), p.cols()));
            state.v.push_back(Tensor::Zero(p.rows(), p.cols()));
        }
    }
    if (state.m.size() != params.size()) throw ShapeError("adam_step: state tracks a different parameter count");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].rows() != grads[i].rows() || params[i].cols() != grads[i].cols() ||
            state.m[i].rows() != params[i].rows() || state.m[i].cols() != params[i].cols())
            throw ShapeError("adam_step: shape mismatch on parameter " + std::to_string(i) + " " +
                             shape_str(params[i]) + " vs grad " + shape_str(grads[i]));
    }

    ++state.step;
    const auto& c = state.config;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grads[i];
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grads[i].cwiseAbs2();
        params[i].array() -=
            c.lr * (state.m[i].array() / bc1) / ((state.v[i].array() / bc2).sqrt() + c.eps);
    }
}

}  // namespace gina
