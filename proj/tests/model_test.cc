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

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "attnpan/model.h"
#include "attnpan/training.h"
#include "support/grad_check.h"

namespace attnpan {
namespace {

using testing::CheckGradient;
using testing::Dot;
using testing::RandomTensor;
using testing::SampleIndices;

ModelConfig TinyConfig() {
  ModelConfig c;
  c.num_att = 4;
  c.num_stuff = 4;
  c.num_things = 3;
  c.feature_dim = 5;
  c.backbone_width = 2;
  c.backbone_depth = 1;
  c.head_width = 6;
  c.init_stddev = 0.3;
  return c;
}

struct LayoutCase {
  int num_att;
  int num_stuff;
};

class ChannelLayoutTest : public ::testing::TestWithParam<LayoutCase> {};

TEST_P(ChannelLayoutTest, HeadEmitsSlotsStuffAndTwoExtraChannels) {
  ModelConfig c = TinyConfig();
  c.num_att = GetParam().num_att;
  c.num_stuff = GetParam().num_stuff;
  const int expected = GetParam().num_att + GetParam().num_stuff + 2;
  EXPECT_EQ(c.num_out(), expected);
  EXPECT_EQ(c.unmatched_channel(), expected - 2);
  EXPECT_EQ(c.void_channel(), expected - 1);

  PanopticHead<float> head(c);
  Rng rng(1);
  head.Init(rng, 0.1);
  Tensorf logits = head.Forward(Tensorf(1, 3, 5, c.feature_dim),
                                Tensorf(1, 3, 5, c.num_att), false);
  EXPECT_EQ(logits.c(), expected);
  EXPECT_EQ(logits.h(), 3);
  EXPECT_EQ(logits.w(), 5);
}

INSTANTIATE_TEST_SUITE_P(Configs, ChannelLayoutTest,
                         ::testing::Values(LayoutCase{50, 11},
                                           LayoutCase{50, 0},
                                           LayoutCase{25, 11},
                                           LayoutCase{4, 2}));

TEST(PanopticHeadTest, RejectsWrongMaskCount) {
  ModelConfig c = TinyConfig();
  PanopticHead<float> head(c);
  EXPECT_THROW(head.Forward(Tensorf(1, 2, 2, c.feature_dim),
                            Tensorf(1, 2, 2, c.num_att + 1), false),
               std::invalid_argument);
  EXPECT_THROW(head.Forward(Tensorf(1, 2, 2, c.feature_dim + 1),
                            Tensorf(1, 2, 2, c.num_att), false),
               std::invalid_argument);
}

// Panoptic head followed by the mean cross-entropy, differentiated with
// respect to features, masks and every head parameter.
TEST(PanopticHeadTest, CrossEntropyGradientsMatchFiniteDifferences) {
  const ModelConfig c = TinyConfig();
  ASSERT_LE(c.num_out(), 10);
  PanopticHead<double> head(c);
  Rng rng(2);
  head.Init(rng, c.init_stddev);
  ParameterList<double> params;
  head.CollectParameters("head", params);
  Tensord features = RandomTensor(rng, {2, 4, 4, c.feature_dim});
  Tensord masks = RandomTensor(rng, {2, 4, 4, c.num_att}, 2.0);
  std::vector<TargetMap> targets(2);
  for (auto& t : targets) {
    t.height = 4;
    t.width = 4;
    for (int i = 0; i < 16; ++i) {
      t.channel.push_back(rng.Int(0, c.num_out() - 1));
    }
  }
  auto loss = [&] {
    return PanopticLoss<double>(head.Forward(features, masks, true), targets)
        .loss;
  };

  ZeroGrads(params);
  auto lg = PanopticLoss<double>(head.Forward(features, masks, true), targets);
  auto grads = head.Backward(lg.grad);

  EXPECT_LT(CheckGradient(features.storage(), grads.d_features.storage(), loss)
                .max_relative_error,
            1e-4);
  EXPECT_LT(CheckGradient(masks.storage(), grads.d_masks.storage(), loss)
                .max_relative_error,
            1e-4);
  for (auto* p : params) {
    if (!p->trainable) continue;
    auto r = CheckGradient(p->value.storage(), p->grad.storage(), loss,
                           SampleIndices(rng, p->value.size(), 40));
    EXPECT_LT(r.max_relative_error, 1e-4) << p->name;
  }
}

TEST(BackboneFpnTest, GradientsMatchFiniteDifferences) {
  ModelConfig c = TinyConfig();
  c.feature_dim = 3;
  Backbone<double> backbone(c);
  FpnMerge<double> fpn(c.feature_dim);
  Rng rng(3);
  backbone.Init(rng, 0.5);
  fpn.Init(rng, 0.5);
  ParameterList<double> params;
  backbone.CollectParameters("backbone", params);
  fpn.CollectParameters("fpn", params);

  Tensord image = RandomTensor(rng, {1, 128, 128, 3});
  Tensord probe_s = RandomTensor(rng, {1, 16, 16, c.feature_dim});
  auto loss = [&] {
    auto pyr = backbone.Forward(image, true);
    return Dot(fpn.Forward(pyr.P(3), pyr.P(4), pyr.P(5), true), probe_s);
  };

  ZeroGrads(params);
  auto pyr = backbone.Forward(image, true);
  ASSERT_EQ(pyr.P(3).h(), 16);
  ASSERT_EQ(pyr.P(7).h(), 1);
  Tensord s = fpn.Forward(pyr.P(3), pyr.P(4), pyr.P(5), true);
  ASSERT_EQ(s.shape(), probe_s.shape());
  auto g = fpn.Backward(probe_s);
  backbone.Backward(g.d_p3, g.d_p4, g.d_p5);

  for (auto* p : params) {
    if (!p->trainable) continue;
    // Stride-2 stages downstream of P5 receive no loss.
    auto r = CheckGradient(p->value.storage(), p->grad.storage(), loss,
                           SampleIndices(rng, p->value.size(), 6));
    if (p->name.starts_with("backbone.") && p->name.ends_with(".conv.bias")) {
      // Training-mode batch norm subtracts the bias right back out, so the
      // exact gradient is zero and only rounding noise remains.
      for (double g : p->grad.storage()) EXPECT_LT(std::abs(g), 1e-9) << p->name;
      EXPECT_LT(r.max_absolute_error, 1e-7) << p->name;
      continue;
    }
    EXPECT_LT(r.max_relative_error, 1e-4) << p->name;
  }
}

TEST(BackboneTest, RequiresPaddedInput) {
  Backbone<float> backbone(TinyConfig());
  EXPECT_THROW(backbone.Forward(Tensorf(1, 64, 128, 3), false),
               std::invalid_argument);
  EXPECT_THROW(backbone.Forward(Tensorf(1, 128, 128, 1), false),
               std::invalid_argument);
}

TEST(BackboneTest, PyramidStrides) {
  ModelConfig c = TinyConfig();
  Backbone<float> backbone(c);
  auto pyr = backbone.Forward(Tensorf(1, 256, 128, 3), false);
  for (int k = 3; k <= 7; ++k) {
    EXPECT_EQ(pyr.P(k).h(), 256 >> k) << k;
    EXPECT_EQ(pyr.P(k).w(), 128 >> k) << k;
    EXPECT_EQ(pyr.P(k).c(), c.feature_dim);
  }
}

TEST(FpnMergeTest, CombineIsElementwiseSumAndChecksShapes) {
  Tensorf a(1, 2, 2, 1, 1.f), b(1, 2, 2, 1, 2.f), d(1, 2, 2, 1, 4.f);
  Tensorf s = FpnMerge<float>::Combine(a, b, d);
  for (float v : s.storage()) EXPECT_EQ(v, 7.f);
  EXPECT_THROW(FpnMerge<float>::Combine(a, Tensorf(1, 2, 3, 1), d),
               std::logic_error);
}

TEST(DetectorHeadTest, GradientsMatchFiniteDifferences) {
  ModelConfig c = TinyConfig();
  DetectorHead<double> det(c);
  Rng rng(4);
  det.Init(rng, 0.4);
  ParameterList<double> params;
  det.CollectParameters("det", params);
  Tensord p3 = RandomTensor(rng, {1, 3, 4, c.feature_dim});
  Tensord pc = RandomTensor(rng, {1, 3, 4, kAnchorsPerCell * c.num_things});
  Tensord pb = RandomTensor(rng, {1, 3, 4, kAnchorsPerCell * 4});
  auto loss = [&] {
    auto o = det.Forward(p3, false);
    return Dot(o.class_logits, pc) + Dot(o.box_deltas, pb);
  };
  ZeroGrads(params);
  det.Forward(p3, true);
  Tensord dp3 = det.Backward(pc, pb);
  EXPECT_LT(CheckGradient(p3.storage(), dp3.storage(), loss).max_relative_error,
            1e-6);
  for (auto* p : params) {
    auto r = CheckGradient(p->value.storage(), p->grad.storage(), loss,
                           SampleIndices(rng, p->value.size(), 20));
    EXPECT_LT(r.max_relative_error, 1e-6) << p->name;
  }
}

TEST(PanopticModelTest, InitIsDeterministicPerSeed) {
  const ModelConfig c = TinyConfig();
  PanopticModel a(c), b(c), d(c);
  a.Init(5);
  b.Init(5);
  d.Init(6);
  bool any_diff = false;
  for (size_t i = 0; i < a.Parameters().size(); ++i) {
    EXPECT_EQ(a.Parameters()[i]->value.storage(),
              b.Parameters()[i]->value.storage());
    any_diff |= a.Parameters()[i]->value.storage() !=
                d.Parameters()[i]->value.storage();
  }
  EXPECT_TRUE(any_diff);
}

TEST(PanopticModelTest, ParameterNamesAreUniqueAndPrefixed) {
  PanopticModel m(TinyConfig());
  std::set<std::string> names;
  for (auto* p : m.Parameters()) {
    EXPECT_TRUE(names.insert(p->name).second) << p->name;
    const bool known = p->name.starts_with("backbone.") ||
                       p->name.starts_with("fpn.") ||
                       p->name.starts_with("panoptic_head.") ||
                       p->name.starts_with("detector.");
    EXPECT_TRUE(known) << p->name;
  }
  for (auto* p : m.DetectorParameters()) {
    EXPECT_TRUE(names.count(p->name)) << p->name;
  }
}

TEST(PanopticModelTest, DetectorStartsFromForegroundPrior) {
  PanopticModel m(TinyConfig());
  m.Init(1);
  for (auto* p : m.DetectorParameters()) {
    if (p->name != "detector.cls.bias") continue;
    for (float v : p->value.storage()) {
      // sigmoid(bias) = 0.01
      EXPECT_NEAR(1.0 / (1.0 + std::exp(-v)), 0.01, 1e-6);
    }
    return;
  }
  FAIL() << "detector.cls.bias not found";
}

TEST(PanopticModelTest, ConfigValidationRejectsBadValues) {
  ModelConfig c = TinyConfig();
  c.num_att = 0;
  EXPECT_THROW(PanopticModel{c}, std::invalid_argument);
  c = TinyConfig();
  c.c_att = 0;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
  c = TinyConfig();
  c.num_stuff = 0;
  EXPECT_NO_THROW(c.Validate());
}

}  // namespace
}  // namespace attnpan
