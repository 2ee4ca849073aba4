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

// Network components: a plain strided-conv backbone producing P3..P7, the
// stride-8 feature merge S = S3 + S4 + S5, the attention-conditioned
// panoptic head and a single-level anchor detection head.

#ifndef ATTNPAN_MODEL_H_
#define ATTNPAN_MODEL_H_

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "attnpan/nn.h"
#include "attnpan/tensor.h"

namespace attnpan {

inline constexpr int kFeatureStride = 8;     // stride of P3 and of S
inline constexpr int kPyramidLevels = 5;     // P3..P7
inline constexpr int kPaddingMultiple = 128; // stride of P7
inline constexpr int kAnchorsPerCell = 9;    // 3 scales x 3 aspect ratios

struct ModelConfig {
  int num_att = 50;         // attention slots
  double c_att = 50.0;      // attention mask peak value
  int num_stuff = 11;
  int num_things = 8;
  int feature_dim = 64;     // channel depth of P3..P7 and S
  int backbone_width = 16;  // channels of the first stem conv
  int backbone_depth = 1;   // extra stride-1 convs per level for P3..P5
  int head_width = 128;     // channel width of the panoptic head convs
  double bn_momentum = 0.9;
  double init_stddev = 0.01;
  double anchor_size = 32.0;  // base anchor side in input pixels
  double pixel_mean = 0.5;
  double pixel_std = 0.25;

  // Output layout: [0, num_att) slots, [num_att, num_att + num_stuff) stuff,
  // then unmatched-things, then unlabeled.
  int num_out() const { return num_att + num_stuff + 2; }
  int unmatched_channel() const { return num_att + num_stuff; }
  int void_channel() const { return num_att + num_stuff + 1; }

  // Throws std::invalid_argument on violated invariants.
  void Validate() const;
};

template <typename T>
struct FeaturePyramid {
  std::array<Tensor<T>, kPyramidLevels> levels;  // P3, P4, P5, P6, P7

  const Tensor<T>& P(int k) const { return levels.at(k - 3); }
};

// conv -> batch-norm -> ReLU, or conv -> ReLU -> batch-norm.
template <typename T>
class ConvBlock {
 public:
  enum class Order { kConvBnRelu, kConvReluBn };

  ConvBlock() = default;
  ConvBlock(int in, int out, int stride, double bn_momentum, Order order)
      : conv_(in, out, 3, stride), bn_(out, bn_momentum), order_(order) {}

  void Init(Rng& rng, double stddev) { conv_.Init(rng, stddev); }

  void CollectParameters(const std::string& prefix, ParameterList<T>& out) {
    conv_.CollectParameters(prefix + ".conv", out);
    bn_.CollectParameters(prefix + ".bn", out);
  }

  Tensor<T> Forward(const Tensor<T>& x, bool training) {
    if (order_ == Order::kConvBnRelu) {
      Tensor<T> y = Relu(bn_.Forward(conv_.Forward(x, training), training));
      if (training) relu_out_ = y;
      return y;
    }
    Tensor<T> r = Relu(conv_.Forward(x, training));
    Tensor<T> y = bn_.Forward(r, training);
    if (training) relu_out_ = std::move(r);
    return y;
  }

  Tensor<T> Backward(const Tensor<T>& dy) {
    if (order_ == Order::kConvBnRelu) {
      return conv_.Backward(bn_.Backward(ReluBackward(relu_out_, dy)));
    }
    return conv_.Backward(ReluBackward(relu_out_, bn_.Backward(dy)));
  }

 private:
  Conv2D<T> conv_;
  BatchNorm<T> bn_;
  Order order_ = Order::kConvBnRelu;
  Tensor<T> relu_out_;
};

// Plain stride-2 conv backbone. Input height and width must be multiples of
// 128; level k has spatial size input / 2^k.
template <typename T>
class Backbone {
 public:
  Backbone() = default;
  explicit Backbone(const ModelConfig& config);

  void Init(Rng& rng, double stddev);
  void CollectParameters(const std::string& prefix, ParameterList<T>& out);

  FeaturePyramid<T> Forward(const Tensor<T>& image, bool training);
  // Gradients for P6 and P7 are taken as zero; they feed no loss.
  void Backward(const Tensor<T>& d_p3, const Tensor<T>& d_p4,
                const Tensor<T>& d_p5);

 private:
  using Stage = std::vector<ConvBlock<T>>;
  // stages_[0] produces P3 (three stride-2 convs plus extras), stages_[1..4]
  // produce P4..P7 (one stride-2 conv plus extras for P4, P5).
  std::array<Stage, kPyramidLevels> stages_;
};

// S = conv+ReLU(P3) + up(conv+ReLU(P4)) + up(conv+ReLU(up(conv+ReLU(P5)))),
// where up is 2x bilinear upsampling.
template <typename T>
class FpnMerge {
 public:
  FpnMerge() = default;
  explicit FpnMerge(int feature_dim);

  void Init(Rng& rng, double stddev);
  void CollectParameters(const std::string& prefix, ParameterList<T>& out);

  Tensor<T> Forward(const Tensor<T>& p3, const Tensor<T>& p4,
                    const Tensor<T>& p5, bool training);

  struct Grads {
    Tensor<T> d_p3, d_p4, d_p5;
  };
  Grads Backward(const Tensor<T>& d_s);

  // Elementwise S3 + S4 + S5; throws std::logic_error on shape mismatch.
  static Tensor<T> Combine(const Tensor<T>& s3, const Tensor<T>& s4,
                           const Tensor<T>& s5);

 private:
  Conv2D<T> conv3_, conv4_, conv5a_, conv5b_;
  Tensor<T> r3_, r4_, r5a_, r5b_;
  Shape4 p4_up_shape_, p5_up_shape_;
};

// Concatenates attention masks with S, applies a merging conv+ReLU+BN, four
// more conv+ReLU+BN layers and a 1x1 conv to num_out logits.
template <typename T>
class PanopticHead {
 public:
  static constexpr int kExtraLayers = 4;

  PanopticHead() = default;
  explicit PanopticHead(const ModelConfig& config);

  void Init(Rng& rng, double stddev);
  void CollectParameters(const std::string& prefix, ParameterList<T>& out);

  // features: [N, H, W, feature_dim]; masks: [N, H, W, num_att].
  Tensor<T> Forward(const Tensor<T>& features, const Tensor<T>& masks,
                    bool training);

  struct Grads {
    Tensor<T> d_features;
    Tensor<T> d_masks;
  };
  Grads Backward(const Tensor<T>& d_logits);

  int num_att() const { return num_att_; }
  int num_out() const { return num_out_; }

 private:
  int num_att_ = 0;
  int feature_dim_ = 0;
  int num_out_ = 0;
  std::vector<ConvBlock<T>> blocks_;  // merge + kExtraLayers
  Conv2D<T> classifier_;
};

// Single-level anchor head on P3: one conv+ReLU tower layer, then 3x3 convs
// for per-anchor class logits (kAnchorsPerCell * num_things channels, anchor
// major) and box deltas (kAnchorsPerCell * 4 channels).
template <typename T>
class DetectorHead {
 public:
  DetectorHead() = default;
  explicit DetectorHead(const ModelConfig& config);

  void Init(Rng& rng, double stddev);
  void CollectParameters(const std::string& prefix, ParameterList<T>& out);

  struct Output {
    Tensor<T> class_logits;
    Tensor<T> box_deltas;
  };
  Output Forward(const Tensor<T>& p3, bool training);
  Tensor<T> Backward(const Tensor<T>& d_class_logits,
                     const Tensor<T>& d_box_deltas);

 private:
  Conv2D<T> tower_, cls_, box_;
  Tensor<T> tower_out_;
};

// The whole network in single precision.
class PanopticModel {
 public:
  explicit PanopticModel(const ModelConfig& config);
  // Parameters() points into the layers, so the model cannot be copied.
  PanopticModel(const PanopticModel&) = delete;
  PanopticModel& operator=(const PanopticModel&) = delete;

  // Deterministic initialization from seed.
  void Init(uint64_t seed);

  const ModelConfig& config() const { return config_; }
  Backbone<float>& backbone() { return backbone_; }
  FpnMerge<float>& fpn() { return fpn_; }
  PanopticHead<float>& head() { return head_; }
  DetectorHead<float>& detector() { return detector_; }

  // All parameters and buffers with dot-separated hierarchical names.
  const ParameterList<float>& Parameters() const { return params_; }
  ParameterList<float> DetectorParameters();

 private:
  ModelConfig config_;
  Backbone<float> backbone_;
  FpnMerge<float> fpn_;
  PanopticHead<float> head_;
  DetectorHead<float> detector_;
  ParameterList<float> params_;
};

extern template class Backbone<float>;
extern template class Backbone<double>;
extern template class FpnMerge<float>;
extern template class FpnMerge<double>;
extern template class PanopticHead<float>;
extern template class PanopticHead<double>;
extern template class DetectorHead<float>;
extern template class DetectorHead<double>;

}  // namespace attnpan

#endif  // ATTNPAN_MODEL_H_
