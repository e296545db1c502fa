#pragma once

#include <vector>

#include "tensor.hpp"

namespace hei::diff {

// Adam with bias correction. Moment buffers are created once from the
// parameter list and their shapes are frozen afterwards.
template <class S>
struct AdamState {
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-8);
  long step_count = 0;
  std::vector<VecX<S>> m, v;

  static AdamState init(const std::vector<Tensor<S>>& params) {
    AdamState st;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const auto& p : params) {
      st.m.push_back(VecX<S>::Zero(p.size()));
      st.v.push_back(VecX<S>::Zero(p.size()));
    }
    return st;
  }
};

template <class S>
void adam_step(std::vector<Tensor<S>>& params, AdamState<S>& state, S lr) {
  if (params.size() != state.m.size())
    throw StateError("adam_step: parameter count drifted from optimizer state");
  ++state.step_count;
  const S bc1 = S(1) - std::pow(state.beta1, S(state.step_count));
  const S bc2 = S(1) - std::pow(state.beta2, S(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (p.size() != state.m[i].size())
      throw StateError("adam_step: parameter shape drifted from optimizer state");
    const VecX<S>& g = p.grad();
    state.m[i] = state.beta1 * state.m[i] + (S(1) - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (S(1) - state.beta2) * g.square();
    p.values() -= lr * (state.m[i] / bc1) / ((state.v[i] / bc2).sqrt() + state.eps);
  }
}

}  // namespace hei::diff
