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

// Minimal layer library with hand-written backward passes. Each layer keeps
// the activations of its most recent caching forward call, so one instance
// supports exactly one forward/backward pair in flight.

#ifndef ATTNPAN_NN_H_
#define ATTNPAN_NN_H_

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "attnpan/random.h"
#include "attnpan/tensor.h"

namespace attnpan {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;  // false for running statistics
  bool decay = false;     // weight decay applies
};

template <typename T>
using ParameterList = std::vector<Parameter<T>*>;

template <typename T>
void ZeroGrads(const ParameterList<T>& params) {
  for (auto* p : params) p->grad.Fill(T(0));
}

namespace internal {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic,
                                Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

}  // namespace internal

// 2-D convolution, square kernel, "same" padding (kernel / 2), NHWC input and
// HWIO weights.
template <typename T>
class Conv2D {
 public:
  Conv2D() = default;
  Conv2D(int in_channels, int out_channels, int kernel, int stride = 1)
      : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride) {
    weight_.value = Tensor<T>(k_, k_, in_, out_);
    weight_.grad = Tensor<T>(k_, k_, in_, out_);
    weight_.decay = true;
    bias_.value = Tensor<T>(1, 1, 1, out_);
    bias_.grad = Tensor<T>(1, 1, 1, out_);
  }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int OutputSize(int in) const { return (in + stride_ - 1) / stride_; }

  void Init(Rng& rng, double stddev) {
    for (auto& v : weight_.value.storage()) {
      v = static_cast<T>(rng.TruncatedNormal(stddev));
    }
    bias_.value.Fill(T(0));
  }

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

  void CollectParameters(const std::string& prefix, ParameterList<T>& out) {
    weight_.name = prefix + ".weight";
    bias_.name = prefix + ".bias";
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  Tensor<T> Forward(const Tensor<T>& x, bool cache) {
    if (x.c() != in_) {
      throw std::invalid_argument("Conv2D: expected " + std::to_string(in_) +
                                  " input channels, got " +
                                  std::to_string(x.c()));
    }
    in_shape_ = x.shape();
    const int oh = OutputSize(x.h());
    const int ow = OutputSize(x.w());
    const int rows = x.n() * oh * ow;
    const int cols = k_ * k_ * in_;
    Tensor<T> y(x.n(), oh, ow, out_);
    internal::MatMap<T> ym(y.data(), rows, out_);
    internal::ConstMatMap<T> wm(weight_.value.data(), cols, out_);
    if (IsPointwise()) {
      internal::ConstMatMap<T> xm(x.data(), rows, cols);
      ym.noalias() = xm * wm;
      if (cache) col_ = x;
    } else {
      Tensor<T> col = Im2Col(x, oh, ow);
      internal::ConstMatMap<T> cm(col.data(), rows, cols);
      ym.noalias() = cm * wm;
      if (cache) col_ = std::move(col);
    }
    for (int r = 0; r < rows; ++r) {
      T* row = y.data() + static_cast<size_t>(r) * out_;
      for (int c = 0; c < out_; ++c) row[c] += bias_.value.data()[c];
    }
    return y;
  }

  // Accumulates weight/bias gradients and returns d(loss)/d(input).
  Tensor<T> Backward(const Tensor<T>& dy) {
    const int rows = dy.n() * dy.h() * dy.w();
    const int cols = k_ * k_ * in_;
    if (col_.size() != static_cast<size_t>(rows) * cols) {
      throw std::logic_error("Conv2D::Backward without cached forward");
    }
    internal::ConstMatMap<T> dym(dy.data(), rows, out_);
    internal::ConstMatMap<T> cm(col_.data(), rows, cols);
    internal::MatMap<T> dwm(weight_.grad.data(), cols, out_);
    dwm.noalias() += cm.transpose() * dym;
    for (int r = 0; r < rows; ++r) {
      const T* row = dy.data() + static_cast<size_t>(r) * out_;
      for (int c = 0; c < out_; ++c) bias_.grad.data()[c] += row[c];
    }
    internal::ConstMatMap<T> wm(weight_.value.data(), cols, out_);
    if (IsPointwise()) {
      Tensor<T> dx(in_shape_);
      internal::MatMap<T> dxm(dx.data(), rows, cols);
      dxm.noalias() = dym * wm.transpose();
      return dx;
    }
    Tensor<T> dcol(Shape4{1, 1, rows, cols});
    internal::MatMap<T> dcm(dcol.data(), rows, cols);
    dcm.noalias() = dym * wm.transpose();
    return Col2Im(dcol, dy.h(), dy.w());
  }

 private:
  bool IsPointwise() const { return k_ == 1 && stride_ == 1; }

  Tensor<T> Im2Col(const Tensor<T>& x, int oh, int ow) const {
    const int pad = k_ / 2;
    const int cols = k_ * k_ * in_;
    Tensor<T> col(Shape4{1, 1, x.n() * oh * ow, cols});
    T* dst = col.data();
    for (int b = 0; b < x.n(); ++b) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          for (int ky = 0; ky < k_; ++ky) {
            const int iy = oy * stride_ + ky - pad;
            for (int kx = 0; kx < k_; ++kx) {
              const int ix = ox * stride_ + kx - pad;
              if (iy >= 0 && iy < x.h() && ix >= 0 && ix < x.w()) {
                std::copy_n(x.pixel(b, iy, ix), in_, dst);
              } else {
                std::fill_n(dst, in_, T(0));
              }
              dst += in_;
            }
          }
        }
      }
    }
    return col;
  }

  Tensor<T> Col2Im(const Tensor<T>& dcol, int oh, int ow) const {
    const int pad = k_ / 2;
    Tensor<T> dx(in_shape_);
    const T* src = dcol.data();
    for (int b = 0; b < dx.n(); ++b) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          for (int ky = 0; ky < k_; ++ky) {
            const int iy = oy * stride_ + ky - pad;
            for (int kx = 0; kx < k_; ++kx) {
              const int ix = ox * stride_ + kx - pad;
              if (iy >= 0 && iy < dx.h() && ix >= 0 && ix < dx.w()) {
                T* d = dx.pixel(b, iy, ix);
                for (int c = 0; c < in_; ++c) d[c] += src[c];
              }
              src += in_;
            }
          }
        }
      }
    }
    return dx;
  }

  int in_ = 0;
  int out_ = 0;
  int k_ = 1;
  int stride_ = 1;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> col_;
  Shape4 in_shape_;
};

// Per-channel batch normalization. Training mode normalizes with batch
// statistics and updates running statistics as
//   running = momentum * running + (1 - momentum) * batch.
template <typename T>
class BatchNorm {
 public:
  static constexpr double kEpsilon = 1e-5;

  BatchNorm() = default;
  BatchNorm(int channels, double momentum)
      : channels_(channels), momentum_(momentum) {
    gamma_.value = Tensor<T>(1, 1, 1, channels, T(1));
    gamma_.grad = Tensor<T>(1, 1, 1, channels);
    beta_.value = Tensor<T>(1, 1, 1, channels);
    beta_.grad = Tensor<T>(1, 1, 1, channels);
    running_mean_.value = Tensor<T>(1, 1, 1, channels);
    running_mean_.grad = Tensor<T>(1, 1, 1, channels);
    running_mean_.trainable = false;
    running_var_.value = Tensor<T>(1, 1, 1, channels, T(1));
    running_var_.grad = Tensor<T>(1, 1, 1, channels);
    running_var_.trainable = false;
  }

  void CollectParameters(const std::string& prefix, ParameterList<T>& out) {
    gamma_.name = prefix + ".gamma";
    beta_.name = prefix + ".beta";
    running_mean_.name = prefix + ".running_mean";
    running_var_.name = prefix + ".running_var";
    out.push_back(&gamma_);
    out.push_back(&beta_);
    out.push_back(&running_mean_);
    out.push_back(&running_var_);
  }

  Tensor<T> Forward(const Tensor<T>& x, bool training) {
    if (x.c() != channels_) {
      throw std::invalid_argument("BatchNorm: channel mismatch");
    }
    const size_t rows = x.size() / channels_;
    Tensor<T> y(x.shape());
    if (!training) {
      for (int c = 0; c < channels_; ++c) {
        const T scale =
            gamma_.value.data()[c] /
            std::sqrt(running_var_.value.data()[c] + T(kEpsilon));
        const T shift =
            beta_.value.data()[c] - running_mean_.value.data()[c] * scale;
        for (size_t r = 0; r < rows; ++r) {
          y.data()[r * channels_ + c] = x.data()[r * channels_ + c] * scale +
                                        shift;
        }
      }
      return y;
    }
    std::vector<double> mean(channels_, 0.0), var(channels_, 0.0);
    for (size_t r = 0; r < rows; ++r) {
      for (int c = 0; c < channels_; ++c) mean[c] += x.data()[r * channels_ + c];
    }
    for (int c = 0; c < channels_; ++c) mean[c] /= rows;
    for (size_t r = 0; r < rows; ++r) {
      for (int c = 0; c < channels_; ++c) {
        const double d = x.data()[r * channels_ + c] - mean[c];
        var[c] += d * d;
      }
    }
    for (int c = 0; c < channels_; ++c) var[c] /= rows;

    xhat_ = Tensor<T>(x.shape());
    inv_std_.assign(channels_, T(0));
    for (int c = 0; c < channels_; ++c) {
      inv_std_[c] = static_cast<T>(1.0 / std::sqrt(var[c] + kEpsilon));
    }
    for (size_t r = 0; r < rows; ++r) {
      for (int c = 0; c < channels_; ++c) {
        const size_t i = r * channels_ + c;
        const T xh = (x.data()[i] - static_cast<T>(mean[c])) * inv_std_[c];
        xhat_.data()[i] = xh;
        y.data()[i] = xh * gamma_.value.data()[c] + beta_.value.data()[c];
      }
    }
    const double unbias = rows > 1 ? static_cast<double>(rows) / (rows - 1) : 1;
    for (int c = 0; c < channels_; ++c) {
      T& rm = running_mean_.value.data()[c];
      T& rv = running_var_.value.data()[c];
      rm = static_cast<T>(momentum_ * rm + (1.0 - momentum_) * mean[c]);
      rv = static_cast<T>(momentum_ * rv + (1.0 - momentum_) * var[c] * unbias);
    }
    return y;
  }

  Tensor<T> Backward(const Tensor<T>& dy) {
    const size_t rows = dy.size() / channels_;
    if (xhat_.size() != dy.size()) {
      throw std::logic_error("BatchNorm::Backward without cached forward");
    }
    std::vector<double> sum_dxhat(channels_, 0.0), sum_dxhat_xhat(channels_, 0.0);
    for (size_t r = 0; r < rows; ++r) {
      for (int c = 0; c < channels_; ++c) {
        const size_t i = r * channels_ + c;
        const T g = dy.data()[i];
        gamma_.grad.data()[c] += g * xhat_.data()[i];
        beta_.grad.data()[c] += g;
        const double dxh = static_cast<double>(g) * gamma_.value.data()[c];
        sum_dxhat[c] += dxh;
        sum_dxhat_xhat[c] += dxh * xhat_.data()[i];
      }
    }
    Tensor<T> dx(dy.shape());
    const double m = static_cast<double>(rows);
    for (size_t r = 0; r < rows; ++r) {
      for (int c = 0; c < channels_; ++c) {
        const size_t i = r * channels_ + c;
        const double dxh = static_cast<double>(dy.data()[i]) * gamma_.value.data()[c];
        dx.data()[i] = static_cast<T>(
            inv_std_[c] / m *
            (m * dxh - sum_dxhat[c] - xhat_.data()[i] * sum_dxhat_xhat[c]));
      }
    }
    return dx;
  }

 private:
  int channels_ = 0;
  double momentum_ = 0.9;
  Parameter<T> gamma_;
  Parameter<T> beta_;
  Parameter<T> running_mean_;
  Parameter<T> running_var_;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

template <typename T>
Tensor<T> Relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (size_t i = 0; i < x.size(); ++i) {
    y.data()[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
  }
  return y;
}

// Gradient through ReLU given its output.
template <typename T>
Tensor<T> ReluBackward(const Tensor<T>& y, const Tensor<T>& dy) {
  Tensor<T> dx(dy.shape());
  for (size_t i = 0; i < dy.size(); ++i) {
    dx.data()[i] = y.data()[i] > T(0) ? dy.data()[i] : T(0);
  }
  return dx;
}

namespace internal {

// Source taps for half-pixel-centered bilinear resampling along one axis.
struct ResizeTaps {
  std::vector<int> lo, hi;
  std::vector<double> frac;
};

inline ResizeTaps ComputeResizeTaps(int in, int out) {
  ResizeTaps taps;
  taps.lo.resize(out);
  taps.hi.resize(out);
  taps.frac.resize(out);
  const double scale = static_cast<double>(in) / out;
  for (int d = 0; d < out; ++d) {
    double src = (d + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int lo = static_cast<int>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    taps.lo[d] = lo;
    taps.hi[d] = std::min(lo + 1, in - 1);
    taps.frac[d] = src - lo;
  }
  return taps;
}

}  // namespace internal

// Bilinear resize with half-pixel centers (align_corners = false).
template <typename T>
Tensor<T> ResizeBilinear(const Tensor<T>& x, int out_h, int out_w) {
  const auto ty = internal::ComputeResizeTaps(x.h(), out_h);
  const auto tx = internal::ComputeResizeTaps(x.w(), out_w);
  Tensor<T> y(x.n(), out_h, out_w, x.c());
  const int ch = x.c();
  for (int b = 0; b < x.n(); ++b) {
    for (int oy = 0; oy < out_h; ++oy) {
      const T fy = static_cast<T>(ty.frac[oy]);
      for (int ox = 0; ox < out_w; ++ox) {
        const T fx = static_cast<T>(tx.frac[ox]);
        const T* p00 = x.pixel(b, ty.lo[oy], tx.lo[ox]);
        const T* p01 = x.pixel(b, ty.lo[oy], tx.hi[ox]);
        const T* p10 = x.pixel(b, ty.hi[oy], tx.lo[ox]);
        const T* p11 = x.pixel(b, ty.hi[oy], tx.hi[ox]);
        const T w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx;
        const T w10 = fy * (1 - fx), w11 = fy * fx;
        T* dst = y.pixel(b, oy, ox);
        for (int c = 0; c < ch; ++c) {
          dst[c] = w00 * p00[c] + w01 * p01[c] + w10 * p10[c] + w11 * p11[c];
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> ResizeBilinearBackward(const Tensor<T>& dy, int in_h, int in_w) {
  const auto ty = internal::ComputeResizeTaps(in_h, dy.h());
  const auto tx = internal::ComputeResizeTaps(in_w, dy.w());
  Tensor<T> dx(dy.n(), in_h, in_w, dy.c());
  const int ch = dy.c();
  for (int b = 0; b < dy.n(); ++b) {
    for (int oy = 0; oy < dy.h(); ++oy) {
      const T fy = static_cast<T>(ty.frac[oy]);
      for (int ox = 0; ox < dy.w(); ++ox) {
        const T fx = static_cast<T>(tx.frac[ox]);
        const T w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx;
        const T w10 = fy * (1 - fx), w11 = fy * fx;
        const T* g = dy.pixel(b, oy, ox);
        T* p00 = dx.pixel(b, ty.lo[oy], tx.lo[ox]);
        T* p01 = dx.pixel(b, ty.lo[oy], tx.hi[ox]);
        T* p10 = dx.pixel(b, ty.hi[oy], tx.lo[ox]);
        T* p11 = dx.pixel(b, ty.hi[oy], tx.hi[ox]);
        for (int c = 0; c < ch; ++c) {
          p00[c] += w00 * g[c];
          p01[c] += w01 * g[c];
          p10[c] += w10 * g[c];
          p11[c] += w11 * g[c];
        }
      }
    }
  }
  return dx;
}

}  // namespace attnpan

#endif  // ATTNPAN_NN_H_
