#pragma once

#include <cmath>
#include <string>

#include "ictseg/errors.hpp"
#include "ictseg/net/params.hpp"

namespace ictseg {

enum class OptimizerKind { adam, sgd };

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + s + "'");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void validate_optimizer(const OptimizerConfig& cfg) {
  if (cfg.learning_rate < 0.0 || !std::isfinite(cfg.learning_rate))
    throw ConfigError("train.learning_rate must be >= 0");
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0)
    throw ConfigError("adam betas must lie in [0,1)");
}

// First/second moment accumulators, shape-congruent with the parameters.
template <typename T>
struct OptimizerState {
  long step = 0;
  ParamSet<T> m;
  ParamSet<T> v;
};

template <typename T>
OptimizerState<T> make_optimizer_state(const ParamSet<T>& params) {
  OptimizerState<T> state;
  state.m = params;
  state.m.fill(T(0));
  state.v = state.m;
  return state;
}

// adam: bias-corrected moment update; sgd: theta <- theta - lr * g.
template <typename T>
void optimizer_step(ParamSet<T>& params, const ParamSet<T>& grads, OptimizerState<T>& state,
                    const OptimizerConfig& cfg) {
  params.require_congruent(grads, "optimizer_step");
  const T lr = static_cast<T>(cfg.learning_rate);
  if (cfg.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < params.entry_count(); ++i) {
      auto& p = params.entry(i).values;
      const auto& g = grads.entry(i).values;
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
    }
    return;
  }
  params.require_congruent(state.m, "optimizer_step");
  state.step += 1;
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T eps = static_cast<T>(cfg.eps);
  const T corr1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(state.step)));
  const T corr2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(state.step)));
  for (std::size_t i = 0; i < params.entry_count(); ++i) {
    auto& p = params.entry(i).values;
    const auto& g = grads.entry(i).values;
    auto& m = state.m.entry(i).values;
    auto& v = state.v.entry(i).values;
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      const T m_hat = m[j] / corr1;
      const T v_hat = v[j] / corr2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

}  // namespace ictseg
