#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "ictseg/errors.hpp"
#include "ictseg/grid.hpp"
#include "ictseg/net/params.hpp"

namespace ictseg {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Per-pass scratch: activation and gradient tensors per graph buffer, plus
// layer-private extras (im2col scratch, pooling argmax). One workspace per
// thread; the network itself stays read-only during forward/backward.
template <typename T>
struct Workspace {
  std::vector<Tensor<T>> act;
  std::vector<Tensor<T>> grad;
  std::vector<std::vector<T>> col;        // per-layer im2col scratch
  std::vector<std::vector<int>> argmax;   // per-layer pooling indices
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual void forward(const ParamSet<T>& params, Workspace<T>& ws) const = 0;
  virtual void backward(const ParamSet<T>& params, Workspace<T>& ws,
                        ParamSet<T>& grads) const = 0;

  std::vector<int> in;
  int out = -1;
  int id = -1;
};

namespace detail {

template <typename T>
void resize_like(Tensor<T>& t, int n, int h, int w, int c) {
  if (t.batch() != n || t.height() != h || t.width() != w || t.channels() != c)
    t = Tensor<T>(n, h, w, c);
}

// Scatters/gathers k x k patches around each output pixel; zero padding.
template <typename T>
void im2col(const T* img, int h, int w, int cin, int k, int stride, int pad,
            int oh, int ow, T* col) {
  const int kk_cin = k * k * cin;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      T* row = col + (static_cast<std::size_t>(oy) * ow + ox) * kk_cin;
      const int iy0 = oy * stride - pad;
      const int ix0 = ox * stride - pad;
      for (int dh = 0; dh < k; ++dh) {
        const int iy = iy0 + dh;
        for (int dw = 0; dw < k; ++dw) {
          const int ix = ix0 + dw;
          T* dst = row + (dh * k + dw) * cin;
          if (iy >= 0 && iy < h && ix >= 0 && ix < w) {
            std::memcpy(dst, img + (static_cast<std::size_t>(iy) * w + ix) * cin,
                        sizeof(T) * cin);
          } else {
            std::memset(dst, 0, sizeof(T) * cin);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int h, int w, int cin, int k, int stride, int pad,
                int oh, int ow, T* img) {
  const int kk_cin = k * k * cin;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const T* row = col + (static_cast<std::size_t>(oy) * ow + ox) * kk_cin;
      const int iy0 = oy * stride - pad;
      const int ix0 = ox * stride - pad;
      for (int dh = 0; dh < k; ++dh) {
        const int iy = iy0 + dh;
        if (iy < 0 || iy >= h) continue;
        for (int dw = 0; dw < k; ++dw) {
          const int ix = ix0 + dw;
          if (ix < 0 || ix >= w) continue;
          const T* src = row + (dh * k + dw) * cin;
          T* dst = img + (static_cast<std::size_t>(iy) * w + ix) * cin;
          for (int c = 0; c < cin; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

}  // namespace detail

// 2-D convolution, square kernel, zero padding, im2col + GEMM.
template <typename T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(int kernel, int stride, int pad, int cin, int cout,
         std::size_t w_idx, std::size_t b_idx)
      : k_(kernel), stride_(stride), pad_(pad), cin_(cin), cout_(cout),
        w_idx_(w_idx), b_idx_(b_idx) {}

  static std::pair<std::size_t, std::size_t> declare(ParamSet<T>& p, const std::string& name,
                                                     int kernel, int cin, int cout) {
    const std::size_t w = p.add(name + ".weight", {kernel, kernel, cin, cout});
    const std::size_t b = p.add(name + ".bias", {cout});
    return {w, b};
  }

  void forward(const ParamSet<T>& params, Workspace<T>& ws) const override {
    const Tensor<T>& x = ws.act[this->in[0]];
    if (x.channels() != cin_)
      throw ShapeError("conv: expected " + std::to_string(cin_) + " input channels, got " +
                       std::to_string(x.channels()));
    const int oh = (x.height() + 2 * pad_ - k_) / stride_ + 1;
    const int ow = (x.width() + 2 * pad_ - k_) / stride_ + 1;
    if (oh < 1 || ow < 1) throw ShapeError("conv: input too small for kernel");
    detail::resize_like(ws.act[this->out], x.batch(), oh, ow, cout_);
    Tensor<T>& y = ws.act[this->out];

    const auto& wv = params.entry(w_idx_).values;
    const auto& bv = params.entry(b_idx_).values;
    const int K = k_ * k_ * cin_;
    const int M = oh * ow;
    Eigen::Map<const RowMat<T>> W(wv.data(), K, cout_);
    Eigen::Map<const Eigen::RowVector<T, Eigen::Dynamic>> bias(bv.data(), cout_);

    const bool plain = (k_ == 1 && stride_ == 1 && pad_ == 0);
    auto& col = ws.col[this->id];
    if (!plain) col.resize(static_cast<std::size_t>(M) * K);

    for (int n = 0; n < x.batch(); ++n) {
      const T* src = x.image(n);
      if (!plain)
        detail::im2col(src, x.height(), x.width(), cin_, k_, stride_, pad_, oh, ow, col.data());
      Eigen::Map<const RowMat<T>> A(plain ? src : col.data(), M, K);
      Eigen::Map<RowMat<T>> Y(y.image(n), M, cout_);
      Y.noalias() = A * W;
      Y.rowwise() += bias;
    }
  }

  void backward(const ParamSet<T>& params, Workspace<T>& ws, ParamSet<T>& grads) const override {
    const Tensor<T>& x = ws.act[this->in[0]];
    const Tensor<T>& dy = ws.grad[this->out];
    Tensor<T>& dx = ws.grad[this->in[0]];
    const int oh = dy.height(), ow = dy.width();
    const int K = k_ * k_ * cin_;
    const int M = oh * ow;

    const auto& wv = params.entry(w_idx_).values;
    auto& dwv = grads.entry(w_idx_).values;
    auto& dbv = grads.entry(b_idx_).values;
    Eigen::Map<const RowMat<T>> W(wv.data(), K, cout_);
    Eigen::Map<RowMat<T>> dW(dwv.data(), K, cout_);

    const bool plain = (k_ == 1 && stride_ == 1 && pad_ == 0);
    auto& col = ws.col[this->id];
    if (!plain) col.resize(static_cast<std::size_t>(M) * K);
    std::vector<T> dcol(plain ? 0 : static_cast<std::size_t>(M) * K);

    for (int n = 0; n < x.batch(); ++n) {
      const T* src = x.image(n);
      if (!plain)
        detail::im2col(src, x.height(), x.width(), cin_, k_, stride_, pad_, oh, ow, col.data());
      Eigen::Map<const RowMat<T>> A(plain ? src : col.data(), M, K);
      Eigen::Map<const RowMat<T>> dY(dy.image(n), M, cout_);
      dW.noalias() += A.transpose() * dY;
      // fixed-order accumulation; a vectorized reduction here would make the
      // result depend on buffer alignment
      const T* pdy = dy.image(n);
      for (int m = 0; m < M; ++m)
        for (int c = 0; c < cout_; ++c) dbv[c] += pdy[static_cast<std::size_t>(m) * cout_ + c];
      if (plain) {
        Eigen::Map<RowMat<T>> dX(dx.image(n), M, K);
        dX.noalias() += dY * W.transpose();
      } else {
        Eigen::Map<RowMat<T>> dC(dcol.data(), M, K);
        dC.noalias() = dY * W.transpose();
        detail::col2im_add(dcol.data(), x.height(), x.width(), cin_, k_, stride_, pad_, oh, ow,
                           dx.image(n));
      }
    }
  }

 private:
  int k_, stride_, pad_, cin_, cout_;
  std::size_t w_idx_, b_idx_;
};

enum class Activation { identity, tanh, relu };

template <typename T>
class ActivationLayer : public Layer<T> {
 public:
  explicit ActivationLayer(Activation fn) : fn_(fn) {}

  void forward(const ParamSet<T>&, Workspace<T>& ws) const override {
    const Tensor<T>& x = ws.act[this->in[0]];
    detail::resize_like(ws.act[this->out], x.batch(), x.height(), x.width(), x.channels());
    Tensor<T>& y = ws.act[this->out];
    const T* px = x.data();
    T* py = y.data();
    switch (fn_) {
      case Activation::identity:
        std::copy(px, px + x.size(), py);
        break;
      case Activation::tanh:
        for (std::size_t i = 0; i < x.size(); ++i) py[i] = std::tanh(px[i]);
        break;
      case Activation::relu:
        for (std::size_t i = 0; i < x.size(); ++i) py[i] = px[i] > T(0) ? px[i] : T(0);
        break;
    }
  }

  void backward(const ParamSet<T>&, Workspace<T>& ws, ParamSet<T>&) const override {
    const Tensor<T>& y = ws.act[this->out];
    const Tensor<T>& dy = ws.grad[this->out];
    Tensor<T>& dx = ws.grad[this->in[0]];
    const T* pyv = y.data();
    const T* pdy = dy.data();
    T* pdx = dx.data();
    switch (fn_) {
      case Activation::identity:
        for (std::size_t i = 0; i < y.size(); ++i) pdx[i] += pdy[i];
        break;
      case Activation::tanh:
        for (std::size_t i = 0; i < y.size(); ++i)
          pdx[i] += pdy[i] * (T(1) - pyv[i] * pyv[i]);
        break;
      case Activation::relu:
        for (std::size_t i = 0; i < y.size(); ++i)
          pdx[i] += pyv[i] > T(0) ? pdy[i] : T(0);
        break;
    }
  }

 private:
  Activation fn_;
};

// 2x2 average pooling, stride 2. Requires even spatial dims.
template <typename T>
class AvgPool2 : public Layer<T> {
 public:
  void forward(const ParamSet<T>&, Workspace<T>& ws) const override {
    const Tensor<T>& x = ws.act[this->in[0]];
    if (x.height() % 2 != 0 || x.width() % 2 != 0)
      throw ShapeError("avgpool2: spatial dims must be even, got " +
                       std::to_string(x.height()) + "x" + std::to_string(x.width()));
    const int oh = x.height() / 2, ow = x.width() / 2, c = x.channels();
    detail::resize_like(ws.act[this->out], x.batch(), oh, ow, c);
    Tensor<T>& y = ws.act[this->out];
    const T quarter = T(0.25);
    for (int n = 0; n < x.batch(); ++n)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const T* r0 = x.image(n) + x.index(0, 2 * oy, 2 * ox, 0);
          const T* r1 = x.image(n) + x.index(0, 2 * oy + 1, 2 * ox, 0);
          T* py = y.image(n) + y.index(0, oy, ox, 0);
          for (int ch = 0; ch < c; ++ch)
            py[ch] = quarter * (r0[ch] + r0[c + ch] + r1[ch] + r1[c + ch]);
        }
  }

  void backward(const ParamSet<T>&, Workspace<T>& ws, ParamSet<T>&) const override {
    const Tensor<T>& dy = ws.grad[this->out];
    Tensor<T>& dx = ws.grad[this->in[0]];
    const int oh = dy.height(), ow = dy.width(), c = dy.channels();
    const T quarter = T(0.25);
    for (int n = 0; n < dy.batch(); ++n)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const T* pdy = dy.image(n) + dy.index(0, oy, ox, 0);
          T* r0 = dx.image(n) + dx.index(0, 2 * oy, 2 * ox, 0);
          T* r1 = dx.image(n) + dx.index(0, 2 * oy + 1, 2 * ox, 0);
          for (int ch = 0; ch < c; ++ch) {
            const T g = quarter * pdy[ch];
            r0[ch] += g;
            r0[c + ch] += g;
            r1[ch] += g;
            r1[c + ch] += g;
          }
        }
  }
};

// k x k max pooling with stride/pad; remembers argmax for backward.
template <typename T>
class MaxPool : public Layer<T> {
 public:
  MaxPool(int kernel, int stride, int pad) : k_(kernel), stride_(stride), pad_(pad) {}

  void forward(const ParamSet<T>&, Workspace<T>& ws) const override {
    const Tensor<T>& x = ws.act[this->in[0]];
    const int oh = (x.height() + 2 * pad_ - k_) / stride_ + 1;
    const int ow = (x.width() + 2 * pad_ - k_) / stride_ + 1;
    if (oh < 1 || ow < 1) throw ShapeError("maxpool: input too small");
    const int c = x.channels();
    detail::resize_like(ws.act[this->out], x.batch(), oh, ow, c);
    Tensor<T>& y = ws.act[this->out];
    auto& arg = ws.argmax[this->id];
    arg.assign(y.size(), -1);
    for (int n = 0; n < x.batch(); ++n)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
          for (int ch = 0; ch < c; ++ch) {
            T best = -std::numeric_limits<T>::infinity();
            int best_idx = -1;
            for (int dh = 0; dh < k_; ++dh) {
              const int iy = oy * stride_ - pad_ + dh;
              if (iy < 0 || iy >= x.height()) continue;
              for (int dw = 0; dw < k_; ++dw) {
                const int ix = ox * stride_ - pad_ + dw;
                if (ix < 0 || ix >= x.width()) continue;
                const T v = x.at(n, iy, ix, ch);
                if (v > best) {
                  best = v;
                  best_idx = static_cast<int>(x.index(0, iy, ix, ch));
                }
              }
            }
            y.at(n, oy, ox, ch) = best_idx >= 0 ? best : T(0);
            arg[y.index(n, oy, ox, ch)] = best_idx;
          }
  }

  void backward(const ParamSet<T>&, Workspace<T>& ws, ParamSet<T>&) const override {
    const Tensor<T>& dy = ws.grad[this->out];
    Tensor<T>& dx = ws.grad[this->in[0]];
    const auto& arg = ws.argmax[this->id];
    const std::size_t per_image = dy.image_size();
    for (int n = 0; n < dy.batch(); ++n) {
      const T* pdy = dy.image(n);
      T* pdx = dx.image(n);
      for (std::size_t i = 0; i < per_image; ++i) {
        const int idx = arg[n * per_image + i];
        if (idx >= 0) pdx[idx] += pdy[i];
      }
    }
  }

 private:
  int k_, stride_, pad_;
};

// Nearest-neighbour 2x upsampling.
template <typename T>
class Upsample2 : public Layer<T> {
 public:
  void forward(const ParamSet<T>&, Workspace<T>& ws) const override {
    const Tensor<T>& x = ws.act[this->in[0]];
    const int oh = 2 * x.height(), ow = 2 * x.width(), c = x.channels();
    detail::resize_like(ws.act[this->out], x.batch(), oh, ow, c);
    Tensor<T>& y = ws.act[this->out];
    for (int n = 0; n < x.batch(); ++n)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
          std::memcpy(y.image(n) + y.index(0, oy, ox, 0),
                      x.image(n) + x.index(0, oy / 2, ox / 2, 0), sizeof(T) * c);
  }

  void backward(const ParamSet<T>&, Workspace<T>& ws, ParamSet<T>&) const override {
    const Tensor<T>& dy = ws.grad[this->out];
    Tensor<T>& dx = ws.grad[this->in[0]];
    const int oh = dy.height(), ow = dy.width(), c = dy.channels();
    for (int n = 0; n < dy.batch(); ++n)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const T* pdy = dy.image(n) + dy.index(0, oy, ox, 0);
          T* pdx = dx.image(n) + dx.index(0, oy / 2, ox / 2, 0);
          for (int ch = 0; ch < c; ++ch) pdx[ch] += pdy[ch];
        }
  }
};

// Channel concatenation of two buffers with equal spatial shape.
template <typename T>
class Concat2 : public Layer<T> {
 public:
  void forward(const ParamSet<T>&, Workspace<T>& ws) const override {
    const Tensor<T>& a = ws.act[this->in[0]];
    const Tensor<T>& b = ws.act[this->in[1]];
    if (a.batch() != b.batch() || a.height() != b.height() || a.width() != b.width())
      throw ShapeError("concat: spatial shape mismatch");
    const int ca = a.channels(), cb = b.channels();
    detail::resize_like(ws.act[this->out], a.batch(), a.height(), a.width(), ca + cb);
    Tensor<T>& y = ws.act[this->out];
    const int hw = a.height() * a.width();
    for (int n = 0; n < a.batch(); ++n) {
      const T* pa = a.image(n);
      const T* pb = b.image(n);
      T* py = y.image(n);
      for (int p = 0; p < hw; ++p) {
        std::memcpy(py + static_cast<std::size_t>(p) * (ca + cb), pa + static_cast<std::size_t>(p) * ca,
                    sizeof(T) * ca);
        std::memcpy(py + static_cast<std::size_t>(p) * (ca + cb) + ca,
                    pb + static_cast<std::size_t>(p) * cb, sizeof(T) * cb);
      }
    }
  }

  void backward(const ParamSet<T>&, Workspace<T>& ws, ParamSet<T>&) const override {
    const Tensor<T>& dy = ws.grad[this->out];
    Tensor<T>& da = ws.grad[this->in[0]];
    Tensor<T>& db = ws.grad[this->in[1]];
    const int ca = da.channels(), cb = db.channels();
    const int hw = dy.height() * dy.width();
    for (int n = 0; n < dy.batch(); ++n) {
      const T* pdy = dy.image(n);
      T* pda = da.image(n);
      T* pdb = db.image(n);
      for (int p = 0; p < hw; ++p) {
        const T* row = pdy + static_cast<std::size_t>(p) * (ca + cb);
        for (int c = 0; c < ca; ++c) pda[static_cast<std::size_t>(p) * ca + c] += row[c];
        for (int c = 0; c < cb; ++c) pdb[static_cast<std::size_t>(p) * cb + c] += row[ca + c];
      }
    }
  }
};

// Elementwise residual sum of two buffers.
template <typename T>
class Add2 : public Layer<T> {
 public:
  void forward(const ParamSet<T>&, Workspace<T>& ws) const override {
    const Tensor<T>& a = ws.act[this->in[0]];
    const Tensor<T>& b = ws.act[this->in[1]];
    if (!a.same_shape(b)) throw ShapeError("add: shape mismatch");
    detail::resize_like(ws.act[this->out], a.batch(), a.height(), a.width(), a.channels());
    Tensor<T>& y = ws.act[this->out];
    const T* pa = a.data();
    const T* pb = b.data();
    T* py = y.data();
    for (std::size_t i = 0; i < y.size(); ++i) py[i] = pa[i] + pb[i];
  }

  void backward(const ParamSet<T>&, Workspace<T>& ws, ParamSet<T>&) const override {
    const Tensor<T>& dy = ws.grad[this->out];
    Tensor<T>& da = ws.grad[this->in[0]];
    Tensor<T>& db = ws.grad[this->in[1]];
    const T* pdy = dy.data();
    T* pda = da.data();
    T* pdb = db.data();
    for (std::size_t i = 0; i < dy.size(); ++i) {
      pda[i] += pdy[i];
      pdb[i] += pdy[i];
    }
  }
};

// Per-pixel softmax over channels (max-shifted for stability).
template <typename T>
class Softmax : public Layer<T> {
 public:
  void forward(const ParamSet<T>&, Workspace<T>& ws) const override {
    const Tensor<T>& x = ws.act[this->in[0]];
    detail::resize_like(ws.act[this->out], x.batch(), x.height(), x.width(), x.channels());
    Tensor<T>& y = ws.act[this->out];
    const int c = x.channels();
    const std::size_t pixels = x.size() / c;
    const T* px = x.data();
    T* py = y.data();
    for (std::size_t p = 0; p < pixels; ++p) {
      const T* row = px + p * c;
      T* orow = py + p * c;
      T mx = row[0];
      for (int k = 1; k < c; ++k) mx = std::max(mx, row[k]);
      T sum = T(0);
      for (int k = 0; k < c; ++k) {
        orow[k] = std::exp(row[k] - mx);
        sum += orow[k];
      }
      const T inv = T(1) / sum;
      for (int k = 0; k < c; ++k) orow[k] *= inv;
    }
  }

  void backward(const ParamSet<T>&, Workspace<T>& ws, ParamSet<T>&) const override {
    const Tensor<T>& y = ws.act[this->out];
    const Tensor<T>& dy = ws.grad[this->out];
    Tensor<T>& dx = ws.grad[this->in[0]];
    const int c = y.channels();
    const std::size_t pixels = y.size() / c;
    const T* pyv = y.data();
    const T* pdy = dy.data();
    T* pdx = dx.data();
    for (std::size_t p = 0; p < pixels; ++p) {
      const T* yr = pyv + p * c;
      const T* gr = pdy + p * c;
      T* xr = pdx + p * c;
      T dot = T(0);
      for (int k = 0; k < c; ++k) dot += gr[k] * yr[k];
      for (int k = 0; k < c; ++k) xr[k] += yr[k] * (gr[k] - dot);
    }
  }
};

}  // namespace ictseg
