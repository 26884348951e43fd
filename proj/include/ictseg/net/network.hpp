#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "ictseg/net/layers.hpp"
#include "ictseg/raster.hpp"

namespace ictseg {

// Static DAG of layers over numbered buffers. Buffer 0 is the input; each
// layer writes exactly one buffer; a buffer may feed several consumers
// (skip connections), so backward accumulates into buffer gradients.
template <typename T>
class Network {
 public:
  const ParamSet<T>& param_template() const { return params_; }
  int buffer_count() const { return n_buffers_; }
  int output_buffer() const { return output_; }

  Workspace<T> make_workspace() const {
    Workspace<T> ws;
    ws.act.resize(n_buffers_);
    ws.grad.resize(n_buffers_);
    ws.col.resize(layers_.size());
    ws.argmax.resize(layers_.size());
    return ws;
  }

  // Runs all layers; the result lives in the workspace until the next call.
  const Tensor<T>& forward(const ParamSet<T>& params, const Tensor<T>& input,
                           Workspace<T>& ws) const {
    params_.require_congruent(params, "forward");
    if (static_cast<int>(ws.act.size()) != n_buffers_) ws = make_workspace();
    ws.act[0] = input;
    for (const auto& layer : layers_) layer->forward(params, ws);
    return ws.act[output_];
  }

  // Reverse pass from an output-space gradient; parameter gradients are
  // accumulated (+=) into `grads`, which the caller owns and zeroes.
  void backward(const ParamSet<T>& params, Workspace<T>& ws, const Tensor<T>& d_output,
                ParamSet<T>& grads) const {
    params_.require_congruent(grads, "backward");
    if (!d_output.same_shape(ws.act[output_]))
      throw ShapeError("backward: output gradient shape mismatch");
    for (int b = 0; b < n_buffers_; ++b) {
      const Tensor<T>& a = ws.act[b];
      detail::resize_like(ws.grad[b], a.batch(), a.height(), a.width(), a.channels());
      ws.grad[b].fill(T(0));
    }
    ws.grad[output_] = d_output;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
      (*it)->backward(params, ws, grads);
  }

  class Builder;

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  ParamSet<T> params_;
  int n_buffers_ = 1;
  int output_ = 0;
};

// Assembles architectures from the layer primitives. Mostly used through
// build_network(), but tests compose ad-hoc graphs with it directly.
template <typename T>
class Network<T>::Builder {
 public:
  Builder() = default;

  int conv(const std::string& name, int from, int kernel, int stride, int pad, int cin,
           int cout) {
    auto [w, b] = Conv2d<T>::declare(net_.params_, name, kernel, cin, cout);
    return push(std::make_unique<Conv2d<T>>(kernel, stride, pad, cin, cout, w, b), {from});
  }

  int activation(int from, Activation fn) {
    return push(std::make_unique<ActivationLayer<T>>(fn), {from});
  }

  int avgpool2(int from) { return push(std::make_unique<AvgPool2<T>>(), {from}); }

  int maxpool(int from, int kernel, int stride, int pad) {
    return push(std::make_unique<MaxPool<T>>(kernel, stride, pad), {from});
  }

  int upsample2(int from) { return push(std::make_unique<Upsample2<T>>(), {from}); }

  int concat(int a, int b) { return push(std::make_unique<Concat2<T>>(), {a, b}); }

  int add(int a, int b) { return push(std::make_unique<Add2<T>>(), {a, b}); }

  int softmax(int from) { return push(std::make_unique<Softmax<T>>(), {from}); }

  int input() const { return 0; }

  Network<T> finish(int output_buffer) {
    net_.output_ = output_buffer;
    return std::move(net_);
  }

 private:
  int push(std::unique_ptr<Layer<T>> layer, std::vector<int> inputs) {
    layer->in = std::move(inputs);
    layer->out = net_.n_buffers_++;
    layer->id = static_cast<int>(net_.layers_.size());
    net_.layers_.push_back(std::move(layer));
    return net_.layers_.back()->out;
  }

  Network<T> net_;
};

// Generic scalar-loss gradient: runs forward, asks `loss` for the value and
// the output-space gradient, and backpropagates to every parameter.
// LossFn: (const Tensor<T>& output) -> std::pair<T, Tensor<T>>.
template <typename T, typename LossFn>
std::pair<T, ParamSet<T>> loss_gradient(const Network<T>& net, const ParamSet<T>& params,
                                        const Tensor<T>& input, LossFn&& loss) {
  Workspace<T> ws = net.make_workspace();
  const Tensor<T>& out = net.forward(params, input, ws);
  auto [value, d_out] = loss(out);
  ParamSet<T> grads = net.param_template();
  net.backward(params, ws, d_out, grads);
  return {value, std::move(grads)};
}

// Batch-of-rasters bridge used by training and evaluation.
template <typename T>
Tensor<T> to_tensor(const std::vector<Raster>& images) {
  if (images.empty()) throw ShapeError("to_tensor: empty batch");
  const Raster& first = images.front();
  Tensor<T> out(static_cast<int>(images.size()), first.height(), first.width(),
                first.channels());
  for (std::size_t n = 0; n < images.size(); ++n) {
    if (!images[n].values.same_shape(first.values))
      throw ShapeError("to_tensor: inhomogeneous batch");
    T* dst = out.image(static_cast<int>(n));
    const float* src = images[n].values.data();
    for (std::size_t i = 0; i < images[n].values.size(); ++i) dst[i] = static_cast<T>(src[i]);
  }
  return out;
}

inline Tensor<std::int32_t> to_label_tensor(const std::vector<Raster>& labels) {
  if (labels.empty()) throw ShapeError("to_label_tensor: empty batch");
  const Raster& first = labels.front();
  Tensor<std::int32_t> out(static_cast<int>(labels.size()), first.height(), first.width(), 1);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n].kind != RasterKind::label)
      throw ValueError("to_label_tensor: raster is not a label map");
    if (!labels[n].values.same_shape(first.values))
      throw ShapeError("to_label_tensor: inhomogeneous batch");
    std::int32_t* dst = out.image(static_cast<int>(n));
    const float* src = labels[n].values.data();
    for (std::size_t i = 0; i < labels[n].values.size(); ++i)
      dst[i] = static_cast<std::int32_t>(src[i]);
  }
  return out;
}

// Inference wrapper: per-pixel class probabilities as rasters.
template <typename T>
std::vector<Raster> predict_probabilities(const Network<T>& net, const ParamSet<T>& params,
                                          const std::vector<Raster>& images) {
  Workspace<T> ws = net.make_workspace();
  const Tensor<T>& probs = net.forward(params, to_tensor<T>(images), ws);
  std::vector<Raster> out;
  out.reserve(images.size());
  for (int n = 0; n < probs.batch(); ++n) {
    Raster r = make_raster(probs.height(), probs.width(), probs.channels(),
                           RasterKind::probability, images[n].spacing);
    const T* src = probs.image(n);
    for (std::size_t i = 0; i < r.values.size(); ++i) r.values[i] = static_cast<float>(src[i]);
    out.push_back(std::move(r));
  }
  return out;
}

inline Raster argmax_labels(const Raster& probs) {
  if (probs.kind != RasterKind::probability)
    throw ValueError("argmax_labels: raster is not a probability map");
  Raster out = make_raster(probs.height(), probs.width(), 1, RasterKind::label, probs.spacing);
  const int k = probs.channels();
  for (int y = 0; y < probs.height(); ++y)
    for (int x = 0; x < probs.width(); ++x) {
      int best = 0;
      float best_v = probs.values.at(y, x, 0);
      for (int c = 1; c < k; ++c) {
        const float v = probs.values.at(y, x, c);
        if (v > best_v) {
          best_v = v;
          best = c;
        }
      }
      out.values.at(y, x, 0) = static_cast<float>(best);
    }
  return out;
}

}  // namespace ictseg
