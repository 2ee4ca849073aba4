// Copyright 2026 The Attnpan Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ATTNPAN_TENSOR_H_
#define ATTNPAN_TENSOR_H_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace attnpan {

// Dense 4-D tensor in NHWC layout. Channels are innermost, so a pixel's
// channel vector is contiguous.
struct Shape4 {
  int n = 0;
  int h = 0;
  int w = 0;
  int c = 0;

  size_t size() const {
    return static_cast<size_t>(n) * h * w * c;
  }
  bool operator==(const Shape4&) const = default;

  std::string ToString() const {
    std::ostringstream os;
    os << "[" << n << ", " << h << ", " << w << ", " << c << "]";
    return os.str();
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape4 shape, T fill = T(0))
      : shape_(shape), data_(shape.size(), fill) {}
  Tensor(int n, int h, int w, int c, T fill = T(0))
      : Tensor(Shape4{n, h, w, c}, fill) {}

  const Shape4& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  int c() const { return shape_.c; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  size_t Index(int b, int y, int x, int ch) const {
    return ((static_cast<size_t>(b) * shape_.h + y) * shape_.w + x) *
               shape_.c +
           ch;
  }
  T& at(int b, int y, int x, int ch) { return data_[Index(b, y, x, ch)]; }
  const T& at(int b, int y, int x, int ch) const {
    return data_[Index(b, y, x, ch)];
  }
  T* pixel(int b, int y, int x) { return data_.data() + Index(b, y, x, 0); }
  const T* pixel(int b, int y, int x) const {
    return data_.data() + Index(b, y, x, 0);
  }

  void Fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor& operator+=(const Tensor& o) {
    RequireSameShape(o, "operator+=");
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  void RequireSameShape(const Tensor& o, const char* what) const {
    if (!(shape_ == o.shape_)) {
      throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                  shape_.ToString() + " vs " +
                                  o.shape_.ToString());
    }
  }

  bool AllFinite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  Tensor<U> Cast() const {
    Tensor<U> out(shape_);
    for (size_t i = 0; i < data_.size(); ++i) {
      out.data()[i] = static_cast<U>(data_[i]);
    }
    return out;
  }

 private:
  Shape4 shape_;
  std::vector<T> data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

// Elementwise a + b.
template <typename T>
Tensor<T> Add(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out = a;
  out += b;
  return out;
}

// Top-left spatial crop to (h, w).
template <typename T>
Tensor<T> CropSpatial(const Tensor<T>& x, int h, int w) {
  if (h > x.h() || w > x.w()) {
    throw std::invalid_argument("CropSpatial: crop larger than tensor");
  }
  Tensor<T> out(x.n(), h, w, x.c());
  for (int b = 0; b < x.n(); ++b) {
    for (int y = 0; y < h; ++y) {
      std::copy_n(x.pixel(b, y, 0), static_cast<size_t>(w) * x.c(),
                  out.pixel(b, y, 0));
    }
  }
  return out;
}

// Zero-pads at the bottom/right up to (h, w). Inverse of CropSpatial.
template <typename T>
Tensor<T> PadSpatial(const Tensor<T>& x, int h, int w) {
  if (h < x.h() || w < x.w()) {
    throw std::invalid_argument("PadSpatial: target smaller than tensor");
  }
  Tensor<T> out(x.n(), h, w, x.c());
  for (int b = 0; b < x.n(); ++b) {
    for (int y = 0; y < x.h(); ++y) {
      std::copy_n(x.pixel(b, y, 0), static_cast<size_t>(x.w()) * x.c(),
                  out.pixel(b, y, 0));
    }
  }
  return out;
}

// Channel concatenation [a | b].
template <typename T>
Tensor<T> ConcatChannels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw std::invalid_argument("ConcatChannels: spatial mismatch " +
                                a.shape().ToString() + " vs " +
                                b.shape().ToString());
  }
  Tensor<T> out(a.n(), a.h(), a.w(), a.c() + b.c());
  const size_t pixels = static_cast<size_t>(a.n()) * a.h() * a.w();
  for (size_t p = 0; p < pixels; ++p) {
    std::copy_n(a.data() + p * a.c(), a.c(), out.data() + p * out.c());
    std::copy_n(b.data() + p * b.c(), b.c(), out.data() + p * out.c() + a.c());
  }
  return out;
}

// Channels [begin, begin + count) of x.
template <typename T>
Tensor<T> SliceChannels(const Tensor<T>& x, int begin, int count) {
  Tensor<T> out(x.n(), x.h(), x.w(), count);
  const size_t pixels = static_cast<size_t>(x.n()) * x.h() * x.w();
  for (size_t p = 0; p < pixels; ++p) {
    std::copy_n(x.data() + p * x.c() + begin, count, out.data() + p * count);
  }
  return out;
}

}  // namespace attnpan

#endif  // ATTNPAN_TENSOR_H_
