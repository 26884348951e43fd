#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ictseg/errors.hpp"
#include "ictseg/mixing.hpp"
#include "ictseg/net/network.hpp"

namespace ictseg {

enum class RampShape { sigmoid_exp, linear };

inline const char* to_string(RampShape s) {
  return s == RampShape::sigmoid_exp ? "sigmoid_exp" : "linear";
}

inline RampShape ramp_shape_from_string(const std::string& s) {
  if (s == "sigmoid_exp") return RampShape::sigmoid_exp;
  if (s == "linear") return RampShape::linear;
  throw ConfigError("unknown ramp shape '" + s + "'");
}

// Schedule of the unsupervised weight r(t): grows from ~0 to w_max over
// ramp_iters iterations and stays on the plateau afterwards.
struct RampSpec {
  double w_max = 1.0;
  long ramp_iters = 1;
  RampShape shape = RampShape::sigmoid_exp;
};

inline void validate_ramp(const RampSpec& spec) {
  if (spec.w_max < 0.0) throw ConfigError("ramp.w_max must be >= 0");
  if (spec.ramp_iters < 1) throw ConfigError("ramp.iters must be >= 1");
}

inline double ramp(const RampSpec& spec, long t) {
  validate_ramp(spec);
  if (t < 0) throw ValueError("ramp: t must be >= 0");
  const double tau =
      static_cast<double>(std::min(t, spec.ramp_iters)) / static_cast<double>(spec.ramp_iters);
  switch (spec.shape) {
    case RampShape::sigmoid_exp: {
      const double d = 1.0 - tau;
      return spec.w_max * std::exp(-5.0 * d * d);
    }
    case RampShape::linear:
      return spec.w_max * tau;
  }
  return 0.0;
}

// One loss record per iteration; total carries the same arithmetic as the
// composite objective, total = l_ce + r_t * l_u.
struct LossReport {
  long iteration = 0;
  double l_ce = 0.0;
  double l_u = 0.0;
  double r_t = 0.0;
  double total = 0.0;
};

inline LossReport total_loss(double l_ce, double l_u, const RampSpec& spec, long t) {
  if (!std::isfinite(l_ce)) throw TrainingError("total_loss: non-finite supervised term");
  if (!std::isfinite(l_u)) throw TrainingError("total_loss: non-finite consistency term");
  LossReport report;
  report.iteration = t;
  report.l_ce = l_ce;
  report.l_u = l_u;
  report.r_t = ramp(spec, t);
  report.total = l_ce + report.r_t * l_u;
  return report;
}

constexpr double kLogClamp = 1e-12;

// Mean over batch and pixels of -log p[target]; probabilities are clamped
// below at 1e-12 before the log.
template <typename T>
T cross_entropy(const Tensor<T>& probs, const Tensor<std::int32_t>& target) {
  if (probs.batch() != target.batch() || probs.height() != target.height() ||
      probs.width() != target.width() || target.channels() != 1)
    throw ShapeError("cross_entropy: prediction/target shape mismatch");
  const int k = probs.channels();
  const std::size_t pixels = target.size();
  double sum = 0.0;
  for (std::size_t p = 0; p < pixels; ++p) {
    const std::int32_t cls = target.data()[p];
    if (cls < 0 || cls >= k)
      throw ValueError("cross_entropy: class id " + std::to_string(cls) +
                       " out of range for K=" + std::to_string(k));
    const double pv = static_cast<double>(probs.data()[p * k + cls]);
    sum += -std::log(std::max(pv, kLogClamp));
  }
  return static_cast<T>(sum / static_cast<double>(pixels));
}

template <typename T>
std::pair<T, Tensor<T>> cross_entropy_with_grad(const Tensor<T>& probs,
                                                const Tensor<std::int32_t>& target) {
  const T value = cross_entropy(probs, target);
  Tensor<T> d(probs.batch(), probs.height(), probs.width(), probs.channels());
  const int k = probs.channels();
  const std::size_t pixels = target.size();
  const double inv_n = 1.0 / static_cast<double>(pixels);
  for (std::size_t p = 0; p < pixels; ++p) {
    const std::int32_t cls = target.data()[p];
    const double pv = static_cast<double>(probs.data()[p * k + cls]);
    // derivative of the clamped log: zero in the clamped region
    d.data()[p * k + cls] = pv > kLogClamp ? static_cast<T>(-inv_n / pv) : T(0);
  }
  return {value, std::move(d)};
}

// Mean squared difference over batch, pixels and channels.
template <typename T>
T mse(const Tensor<T>& pred, const Tensor<T>& target) {
  if (!pred.same_shape(target)) throw ShapeError("mse: shape mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double diff = static_cast<double>(pred.data()[i]) - static_cast<double>(target.data()[i]);
    sum += diff * diff;
  }
  return static_cast<T>(sum / static_cast<double>(pred.size()));
}

template <typename T>
std::pair<T, Tensor<T>> mse_with_grad(const Tensor<T>& pred, const Tensor<T>& target) {
  const T value = mse(pred, target);
  Tensor<T> d(pred.batch(), pred.height(), pred.width(), pred.channels());
  const T scale = static_cast<T>(2.0 / static_cast<double>(pred.size()));
  for (std::size_t i = 0; i < pred.size(); ++i)
    d.data()[i] = scale * (pred.data()[i] - target.data()[i]);
  return {value, std::move(d)};
}

// Interpolation-consistency target: teacher pseudo-labels on u_i and u_j,
// mixed with the same alphas as the inputs. The teacher passes are
// constants; gradients exist only along the student path.
template <typename T>
struct ConsistencyBatch {
  Tensor<T> mixed_input;
  Tensor<T> mixed_target;
};

template <typename T>
ConsistencyBatch<T> make_consistency_batch(const Network<T>& net, const ParamSet<T>& teacher,
                                           const Tensor<T>& u_i, const Tensor<T>& u_j,
                                           const std::vector<double>& alphas,
                                           Workspace<T>& ws) {
  if (!u_i.same_shape(u_j)) throw ShapeError("consistency: unlabelled batch shape mismatch");
  const Tensor<T> probs_i = net.forward(teacher, u_i, ws);
  const Tensor<T> probs_j = net.forward(teacher, u_j, ws);
  return {mix(u_i, u_j, alphas), mix(probs_i, probs_j, alphas)};
}

// Scalar-alpha value-only form. Student and teacher parameter sets must both
// fit `net`; returns MSE(F_student(M_alpha(u_i,u_j)), M_alpha(F_teacher(u_i), F_teacher(u_j))).
template <typename T>
T consistency_loss(const Network<T>& net, const ParamSet<T>& student, const ParamSet<T>& teacher,
                   const Tensor<T>& u_i, const Tensor<T>& u_j, double alpha) {
  check_alpha(alpha);
  Workspace<T> ws = net.make_workspace();
  const std::vector<double> alphas(u_i.batch(), alpha);
  ConsistencyBatch<T> batch = make_consistency_batch(net, teacher, u_i, u_j, alphas, ws);
  const Tensor<T>& student_out = net.forward(student, batch.mixed_input, ws);
  return mse(student_out, batch.mixed_target);
}

// Loss plus weighted student gradient (grads += weight * dL_U/d theta).
template <typename T>
T consistency_loss_grad(const Network<T>& net, const ParamSet<T>& student,
                        const ParamSet<T>& teacher, const Tensor<T>& u_i, const Tensor<T>& u_j,
                        const std::vector<double>& alphas, double weight, ParamSet<T>& grads,
                        Workspace<T>& ws) {
  ConsistencyBatch<T> batch = make_consistency_batch(net, teacher, u_i, u_j, alphas, ws);
  const Tensor<T>& student_out = net.forward(student, batch.mixed_input, ws);
  auto [value, d_out] = mse_with_grad(student_out, batch.mixed_target);
  if (weight != 0.0) {
    const T w = static_cast<T>(weight);
    for (std::size_t i = 0; i < d_out.size(); ++i) d_out.data()[i] *= w;
    net.backward(student, ws, d_out, grads);
  }
  return value;
}

}  // namespace ictseg
