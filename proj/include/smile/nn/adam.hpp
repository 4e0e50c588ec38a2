#pragma once

#include "smile/nn/parameters.hpp"

#include <cmath>

namespace smile::nn {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment accumulators of one network.
template <typename Scalar>
struct AdamState {
  ParameterSet<Scalar> m, v;
  long long step = 0;

  static AdamState like(const ParameterSet<Scalar>& params) {
    AdamState s;
    s.m = params.zeros_like();
    s.v = params.zeros_like();
    return s;
  }
};

/// One bias-corrected Adam update of `params` along `grads`.
template <typename Scalar>
void adam_step(ParameterSet<Scalar>& params, const ParameterSet<Scalar>& grads, AdamState<Scalar>& state,
               const AdamConfig& cfg) {
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  const auto b1 = Scalar(cfg.beta1);
  const auto b2 = Scalar(cfg.beta2);
  const auto step_size = Scalar(cfg.learning_rate / c1);
  const auto inv_c2 = Scalar(1.0 / c2);
  const auto eps = Scalar(cfg.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto m = state.m.tensors[i].array();
    auto v = state.v.tensors[i].array();
    const auto g = grads.tensors[i].array();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    params.tensors[i].array() -= step_size * m / ((v * inv_c2).sqrt() + eps);
  }
}

}  // namespace smile::nn
