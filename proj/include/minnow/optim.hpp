#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "minnow/error.hpp"
#include "minnow/model.hpp"

namespace minnow {

/// AdamW with decoupled weight decay plus the reduce-on-plateau scheduler
/// state. Decay touches weights only, never gains or biases.
template <typename T>
struct OptimizerState {
  Parameters<T> m;  // first moments, parameter shapes
  Parameters<T> v;  // second moments
  int64_t step = 0;
  double lr = 3e-4;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  // plateau scheduler: lr *= lr_factor once the validation loss has failed
  // to improve best by plateau_eps for plateau_patience consecutive calls
  int plateau_counter = 0;
  int plateau_patience = 2;
  double plateau_eps = 1e-4;
  double lr_factor = 0.1;
  double best_val = std::numeric_limits<double>::infinity();
};

template <typename T>
OptimizerState<T> make_optimizer(const ModelConfig& cfg, double lr,
                                 double weight_decay) {
  OptimizerState<T> state;
  state.m = zeros_like_params<T>(cfg);
  state.v = zeros_like_params<T>(cfg);
  state.lr = lr;
  state.weight_decay = weight_decay;
  return state;
}

/// One AdamW update. Rejects non-finite gradients before touching any
/// parameter, naming the offending tensor.
template <typename T>
void adamw_step(OptimizerState<T>& state, Parameters<T>& params,
                Parameters<T>& grads) {
  const auto infos = tensor_infos(params.cfg);
  auto p_mats = tensor_list(params);
  auto g_mats = tensor_list(grads);
  auto m_mats = tensor_list(state.m);
  auto v_mats = tensor_list(state.v);

  for (size_t t = 0; t < g_mats.size(); ++t) {
    for (const T g : g_mats[t]->a) {
      if (!std::isfinite(static_cast<double>(g))) {
        raise(errc::non_finite_gradient,
              "non-finite gradient in " + infos[t].name);
      }
    }
  }

  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t t = 0; t < p_mats.size(); ++t) {
    const bool decay = infos[t].kind == ParamKind::weight;
    T* p = p_mats[t]->a.data();
    const T* g = g_mats[t]->a.data();
    T* m = m_mats[t]->a.data();
    T* v = v_mats[t]->a.data();
    const size_t n = p_mats[t]->a.size();
    for (size_t i = 0; i < n; ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = state.beta1 * static_cast<double>(m[i]) + (1.0 - state.beta1) * gi;
      const double vi = state.beta2 * static_cast<double>(v[i]) + (1.0 - state.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      double pi = static_cast<double>(p[i]);
      if (decay) pi -= state.lr * state.weight_decay * pi;
      pi -= state.lr * (mi / bc1) / (std::sqrt(vi / bc2) + state.eps);
      p[i] = static_cast<T>(pi);
    }
  }
}

/// Reduce-on-plateau step, called once per epoch with the validation loss.
/// Returns the (possibly reduced) learning rate.
template <typename T>
double plateau_step(OptimizerState<T>& state, double validation_loss) {
  if (validation_loss < state.best_val - state.plateau_eps) {
    state.best_val = validation_loss;
    state.plateau_counter = 0;
    return state.lr;
  }
  state.plateau_counter += 1;
  if (state.plateau_counter >= state.plateau_patience) {
    state.lr *= state.lr_factor;
    state.plateau_counter = 0;
  }
  return state.lr;
}

}  // namespace minnow
