#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ictseg/errors.hpp"

namespace ictseg {

// Dense H x W x C grid, row-major with channels contiguous per pixel.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, int channels, T fill = T(0))
      : h_(height), w_(width), c_(channels) {
    if (height < 1 || width < 1 || channels < 1)
      throw ShapeError("Grid: dimensions must be >= 1, got " + shape_str(height, width, channels));
    v_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }

  int height() const { return h_; }
  int width() const { return w_; }
  int channels() const { return c_; }
  std::size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

  T* data() { return v_.data(); }
  const T* data() const { return v_.data(); }

  T& at(int y, int x, int c) { return v_[index(y, x, c)]; }
  const T& at(int y, int x, int c) const { return v_[index(y, x, c)]; }

  T& operator[](std::size_t i) { return v_[i]; }
  const T& operator[](std::size_t i) const { return v_[i]; }

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * w_ + x) * c_ + c;
  }

  bool same_shape(const Grid& other) const {
    return h_ == other.h_ && w_ == other.w_ && c_ == other.c_;
  }

  std::string shape() const { return shape_str(h_, w_, c_); }

  void fill(T value) { std::fill(v_.begin(), v_.end(), value); }

  bool operator==(const Grid& other) const {
    return same_shape(other) && v_ == other.v_;
  }

  static std::string shape_str(int h, int w, int c) {
    return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
  }

 private:
  int h_ = 0, w_ = 0, c_ = 0;
  std::vector<T> v_;
};

// Batch tensor, N x H x W x C, same layout per image as Grid.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int height, int width, int channels, T fill = T(0))
      : n_(n), h_(height), w_(width), c_(channels) {
    if (n < 1 || height < 1 || width < 1 || channels < 1)
      throw ShapeError("Tensor: dimensions must be >= 1");
    v_.assign(static_cast<std::size_t>(n) * height * width * channels, fill);
  }

  int batch() const { return n_; }
  int height() const { return h_; }
  int width() const { return w_; }
  int channels() const { return c_; }
  std::size_t size() const { return v_.size(); }
  std::size_t image_size() const { return static_cast<std::size_t>(h_) * w_ * c_; }
  bool empty() const { return v_.empty(); }

  T* data() { return v_.data(); }
  const T* data() const { return v_.data(); }
  T* image(int n) { return v_.data() + image_size() * n; }
  const T* image(int n) const { return v_.data() + image_size() * n; }

  T& at(int n, int y, int x, int c) { return v_[index(n, y, x, c)]; }
  const T& at(int n, int y, int x, int c) const { return v_[index(n, y, x, c)]; }

  std::size_t index(int n, int y, int x, int c) const {
    return ((static_cast<std::size_t>(n) * h_ + y) * w_ + x) * c_ + c;
  }

  bool same_shape(const Tensor& other) const {
    return n_ == other.n_ && h_ == other.h_ && w_ == other.w_ && c_ == other.c_;
  }

  void fill(T value) { std::fill(v_.begin(), v_.end(), value); }

 private:
  int n_ = 0, h_ = 0, w_ = 0, c_ = 0;
  std::vector<T> v_;
};

}  // namespace ictseg
