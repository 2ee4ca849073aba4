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

#include "attnpan/model.h"

#include <cmath>

namespace attnpan {

void ModelConfig::Validate() const {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("invalid model config: " + what);
  };
  if (num_att < 1) fail("num_att must be >= 1");
  if (!(c_att > 0)) fail("c_att must be > 0");
  if (num_stuff < 0) fail("num_stuff must be >= 0");
  if (num_things < 1) fail("num_things must be >= 1");
  if (feature_dim < 1) fail("feature_dim must be >= 1");
  if (backbone_width < 1) fail("backbone_width must be >= 1");
  if (backbone_depth < 0) fail("backbone_depth must be >= 0");
  if (head_width < 1) fail("head_width must be >= 1");
  if (!(bn_momentum >= 0 && bn_momentum < 1)) fail("bn_momentum in [0, 1)");
  if (!(init_stddev > 0)) fail("init_stddev must be > 0");
  if (!(anchor_size > 0)) fail("anchor_size must be > 0");
  if (!(pixel_std > 0)) fail("pixel_std must be > 0");
}

// ---------------------------------------------------------------- Backbone

template <typename T>
Backbone<T>::Backbone(const ModelConfig& c) {
  using Order = typename ConvBlock<T>::Order;
  const double m = c.bn_momentum;
  const int f = c.feature_dim;
  auto block = [&](int in, int out, int stride) {
    return ConvBlock<T>(in, out, stride, m, Order::kConvBnRelu);
  };
  auto& s3 = stages_[0];
  s3.push_back(block(3, c.backbone_width, 2));
  s3.push_back(block(c.backbone_width, 2 * c.backbone_width, 2));
  s3.push_back(block(2 * c.backbone_width, f, 2));
  for (int i = 0; i < c.backbone_depth; ++i) s3.push_back(block(f, f, 1));
  for (int level = 1; level < kPyramidLevels; ++level) {
    stages_[level].push_back(block(f, f, 2));
    if (level <= 2) {
      for (int i = 0; i < c.backbone_depth; ++i) {
        stages_[level].push_back(block(f, f, 1));
      }
    }
  }
}

template <typename T>
void Backbone<T>::Init(Rng& rng, double stddev) {
  for (auto& stage : stages_) {
    for (auto& b : stage) b.Init(rng, stddev);
  }
}

template <typename T>
void Backbone<T>::CollectParameters(const std::string& prefix,
                                    ParameterList<T>& out) {
  for (int level = 0; level < kPyramidLevels; ++level) {
    for (size_t i = 0; i < stages_[level].size(); ++i) {
      stages_[level][i].CollectParameters(prefix + ".p" +
                                              std::to_string(level + 3) +
                                              ".block" + std::to_string(i),
                                          out);
    }
  }
}

template <typename T>
FeaturePyramid<T> Backbone<T>::Forward(const Tensor<T>& image, bool training) {
  if (image.h() <= 0 || image.w() <= 0 || image.c() != 3) {
    throw std::invalid_argument("backbone: expected non-empty RGB input, got " +
                                image.shape().ToString());
  }
  if (image.h() % kPaddingMultiple != 0 || image.w() % kPaddingMultiple != 0) {
    throw std::invalid_argument(
        "backbone: input size must be padded to a multiple of 128, got " +
        image.shape().ToString());
  }
  FeaturePyramid<T> out;
  Tensor<T> x = image;
  for (int level = 0; level < kPyramidLevels; ++level) {
    for (auto& b : stages_[level]) x = b.Forward(x, training);
    out.levels[level] = x;
  }
  return out;
}

template <typename T>
void Backbone<T>::Backward(const Tensor<T>& d_p3, const Tensor<T>& d_p4,
                           const Tensor<T>& d_p5) {
  // P6/P7 receive no gradient, so backpropagation starts at P5.
  Tensor<T> d = d_p5;
  for (int level = 2; level >= 0; --level) {
    auto& stage = stages_[level];
    for (auto it = stage.rbegin(); it != stage.rend(); ++it) {
      d = it->Backward(d);
    }
    if (level == 2) {
      d += d_p4;
    } else if (level == 1) {
      d += d_p3;
    }
  }
}

// ---------------------------------------------------------------- FpnMerge

template <typename T>
FpnMerge<T>::FpnMerge(int f)
    : conv3_(f, f, 3), conv4_(f, f, 3), conv5a_(f, f, 3), conv5b_(f, f, 3) {}

template <typename T>
void FpnMerge<T>::Init(Rng& rng, double stddev) {
  conv3_.Init(rng, stddev);
  conv4_.Init(rng, stddev);
  conv5a_.Init(rng, stddev);
  conv5b_.Init(rng, stddev);
}

template <typename T>
void FpnMerge<T>::CollectParameters(const std::string& prefix,
                                    ParameterList<T>& out) {
  conv3_.CollectParameters(prefix + ".s3", out);
  conv4_.CollectParameters(prefix + ".s4", out);
  conv5a_.CollectParameters(prefix + ".s5a", out);
  conv5b_.CollectParameters(prefix + ".s5b", out);
}

template <typename T>
Tensor<T> FpnMerge<T>::Combine(const Tensor<T>& s3, const Tensor<T>& s4,
                               const Tensor<T>& s5) {
  if (!(s3.shape() == s4.shape()) || !(s3.shape() == s5.shape())) {
    throw std::logic_error("fpn merge: S3/S4/S5 shape mismatch " +
                           s3.shape().ToString() + " " +
                           s4.shape().ToString() + " " +
                           s5.shape().ToString());
  }
  Tensor<T> s(s3.shape());
  for (size_t i = 0; i < s.size(); ++i) {
    s.data()[i] = s3.data()[i] + s4.data()[i] + s5.data()[i];
  }
  return s;
}

template <typename T>
Tensor<T> FpnMerge<T>::Forward(const Tensor<T>& p3, const Tensor<T>& p4,
                               const Tensor<T>& p5, bool training) {
  Tensor<T> r3 = Relu(conv3_.Forward(p3, training));
  Tensor<T> r4 = Relu(conv4_.Forward(p4, training));
  Tensor<T> s4 = ResizeBilinear(r4, 2 * r4.h(), 2 * r4.w());
  Tensor<T> r5a = Relu(conv5a_.Forward(p5, training));
  Tensor<T> u5 = ResizeBilinear(r5a, 2 * r5a.h(), 2 * r5a.w());
  Tensor<T> r5b = Relu(conv5b_.Forward(u5, training));
  Tensor<T> s5 = ResizeBilinear(r5b, 2 * r5b.h(), 2 * r5b.w());
  Tensor<T> s = Combine(r3, s4, s5);
  if (training) {
    r3_ = std::move(r3);
    r4_ = std::move(r4);
    r5a_ = std::move(r5a);
    r5b_ = std::move(r5b);
  }
  return s;
}

template <typename T>
typename FpnMerge<T>::Grads FpnMerge<T>::Backward(const Tensor<T>& d_s) {
  Grads g;
  g.d_p3 = conv3_.Backward(ReluBackward(r3_, d_s));
  Tensor<T> d_r4 = ResizeBilinearBackward(d_s, r4_.h(), r4_.w());
  g.d_p4 = conv4_.Backward(ReluBackward(r4_, d_r4));
  Tensor<T> d_r5b = ResizeBilinearBackward(d_s, r5b_.h(), r5b_.w());
  Tensor<T> d_u5 = conv5b_.Backward(ReluBackward(r5b_, d_r5b));
  Tensor<T> d_r5a = ResizeBilinearBackward(d_u5, r5a_.h(), r5a_.w());
  g.d_p5 = conv5a_.Backward(ReluBackward(r5a_, d_r5a));
  return g;
}

// ------------------------------------------------------------ PanopticHead

template <typename T>
PanopticHead<T>::PanopticHead(const ModelConfig& c)
    : num_att_(c.num_att),
      feature_dim_(c.feature_dim),
      num_out_(c.num_out()),
      classifier_(c.head_width, c.num_out(), 1) {
  using Order = typename ConvBlock<T>::Order;
  blocks_.emplace_back(c.num_att + c.feature_dim, c.head_width, 1,
                       c.bn_momentum, Order::kConvReluBn);
  for (int i = 0; i < kExtraLayers; ++i) {
    blocks_.emplace_back(c.head_width, c.head_width, 1, c.bn_momentum,
                         Order::kConvReluBn);
  }
}

template <typename T>
void PanopticHead<T>::Init(Rng& rng, double stddev) {
  for (auto& b : blocks_) b.Init(rng, stddev);
  classifier_.Init(rng, stddev);
}

template <typename T>
void PanopticHead<T>::CollectParameters(const std::string& prefix,
                                        ParameterList<T>& out) {
  blocks_[0].CollectParameters(prefix + ".merge", out);
  for (size_t i = 1; i < blocks_.size(); ++i) {
    blocks_[i].CollectParameters(prefix + ".layer" + std::to_string(i - 1),
                                 out);
  }
  classifier_.CollectParameters(prefix + ".classifier", out);
}

template <typename T>
Tensor<T> PanopticHead<T>::Forward(const Tensor<T>& features,
                                   const Tensor<T>& masks, bool training) {
  if (masks.c() != num_att_) {
    throw std::invalid_argument("panoptic head: expected " +
                                std::to_string(num_att_) +
                                " attention masks, got " +
                                std::to_string(masks.c()));
  }
  if (features.c() != feature_dim_) {
    throw std::invalid_argument("panoptic head: feature depth mismatch");
  }
  Tensor<T> x = ConcatChannels(masks, features);
  for (auto& b : blocks_) x = b.Forward(x, training);
  return classifier_.Forward(x, training);
}

template <typename T>
typename PanopticHead<T>::Grads PanopticHead<T>::Backward(
    const Tensor<T>& d_logits) {
  Tensor<T> d = classifier_.Backward(d_logits);
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
    d = it->Backward(d);
  }
  Grads g;
  g.d_masks = SliceChannels(d, 0, num_att_);
  g.d_features = SliceChannels(d, num_att_, feature_dim_);
  return g;
}

// ------------------------------------------------------------ DetectorHead

template <typename T>
DetectorHead<T>::DetectorHead(const ModelConfig& c)
    : tower_(c.feature_dim, c.feature_dim, 3),
      cls_(c.feature_dim, kAnchorsPerCell * c.num_things, 3),
      box_(c.feature_dim, kAnchorsPerCell * 4, 3) {}

template <typename T>
void DetectorHead<T>::Init(Rng& rng, double stddev) {
  tower_.Init(rng, stddev);
  cls_.Init(rng, stddev);
  box_.Init(rng, stddev);
  // Foreground prior of 0.01 so the focal loss starts from background.
  cls_.bias().value.Fill(static_cast<T>(-std::log((1.0 - 0.01) / 0.01)));
}

template <typename T>
void DetectorHead<T>::CollectParameters(const std::string& prefix,
                                        ParameterList<T>& out) {
  tower_.CollectParameters(prefix + ".tower", out);
  cls_.CollectParameters(prefix + ".cls", out);
  box_.CollectParameters(prefix + ".box", out);
}

template <typename T>
typename DetectorHead<T>::Output DetectorHead<T>::Forward(const Tensor<T>& p3,
                                                          bool training) {
  Tensor<T> t = Relu(tower_.Forward(p3, training));
  Output out;
  out.class_logits = cls_.Forward(t, training);
  out.box_deltas = box_.Forward(t, training);
  if (training) tower_out_ = std::move(t);
  return out;
}

template <typename T>
Tensor<T> DetectorHead<T>::Backward(const Tensor<T>& d_class_logits,
                                    const Tensor<T>& d_box_deltas) {
  Tensor<T> d = cls_.Backward(d_class_logits);
  d += box_.Backward(d_box_deltas);
  return tower_.Backward(ReluBackward(tower_out_, d));
}

template class Backbone<float>;
template class Backbone<double>;
template class FpnMerge<float>;
template class FpnMerge<double>;
template class PanopticHead<float>;
template class PanopticHead<double>;
template class DetectorHead<float>;
template class DetectorHead<double>;

// ----------------------------------------------------------- PanopticModel

PanopticModel::PanopticModel(const ModelConfig& config)
    : config_((config.Validate(), config)),
      backbone_(config),
      fpn_(config.feature_dim),
      head_(config),
      detector_(config) {
  backbone_.CollectParameters("backbone", params_);
  fpn_.CollectParameters("fpn", params_);
  head_.CollectParameters("panoptic_head", params_);
  detector_.CollectParameters("detector", params_);
}

void PanopticModel::Init(uint64_t seed) {
  Rng rng(seed);
  backbone_.Init(rng, config_.init_stddev);
  fpn_.Init(rng, config_.init_stddev);
  head_.Init(rng, config_.init_stddev);
  detector_.Init(rng, config_.init_stddev);
}

ParameterList<float> PanopticModel::DetectorParameters() {
  ParameterList<float> out;
  detector_.CollectParameters("detector", out);
  return out;
}

}  // namespace attnpan
