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

#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "attnpan/fusion.h"
#include "support/oracles.h"

namespace attnpan {
namespace {

ModelConfig Config(int num_att = 6, int num_stuff = 2, int num_things = 3) {
  ModelConfig c;
  c.num_att = num_att;
  c.num_stuff = num_stuff;
  c.num_things = num_things;
  return c;
}

AttentionStack StackWithSlots(int num_slots, std::vector<int> filled,
                              int cls = 1) {
  AttentionStack s(num_slots, 2, 2);
  for (int slot : filled) {
    s.slot_detections[slot] = Detection{cls, 1.0, Box{8, 8, 8, 8}};
    s.permutation[slot] = slot;
  }
  return s;
}

TEST(FuseTest, OneHotSlotLabelsEveryPixel) {
  const ModelConfig c = Config();
  Tensorf logits(1, 2, 2, c.num_out());
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 2; ++x) logits.at(0, y, x, 3) = 1.f;
  }
  const auto out = Fuse(logits, StackWithSlots(6, {3}, 2), c, 16, 16);
  for (size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(out.class_ids[i], 2);
    EXPECT_EQ(out.instance_ids[i], 4);
  }
}

TEST(FuseTest, EmptySlotYieldsRunnerUp) {
  const ModelConfig c = Config();
  Tensorf logits(1, 1, 1, c.num_out());
  logits.at(0, 0, 0, 2) = 5.f;               // empty slot
  logits.at(0, 0, 0, c.num_att + 1) = 3.f;   // stuff class 4
  logits.at(0, 0, 0, 0) = 1.f;               // filled slot
  const auto out = Fuse(logits, StackWithSlots(6, {0}), c, 8, 8);
  for (size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(out.class_ids[i], 4);
    EXPECT_EQ(out.instance_ids[i], 0);
  }
}

TEST(FuseTest, ExtraChannelsMapToVoid) {
  const ModelConfig c = Config();
  Tensorf logits(1, 1, 2, c.num_out());
  logits.at(0, 0, 0, c.unmatched_channel()) = 9.f;
  logits.at(0, 0, 1, c.void_channel()) = 9.f;
  const auto out = Fuse(logits, StackWithSlots(6, {}), c, 8, 16);
  for (size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out.class_ids[i], kVoidClass);
}

TEST(FuseTest, TwoByTwoMatchesBruteForce) {
  const ModelConfig c = Config();
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensorf logits = testing::RandomDyadicLogits(rng, 2, 2, c.num_out());
    const auto stack = testing::RandomSlotStack(rng, c.num_att, 2, 2, c.num_things);
    EXPECT_EQ(Fuse(logits, stack, c, 16, 16),
              testing::BruteForceFuse(logits, stack, c, 16, 16));
  }
}

TEST(FuseTest, CroppedOutputMatchesBruteForce) {
  const ModelConfig c = Config(5, 3, 2);
  Rng rng(2);
  const Tensorf logits = testing::RandomDyadicLogits(rng, 3, 4, c.num_out());
  const auto stack = testing::RandomSlotStack(rng, c.num_att, 3, 4, c.num_things);
  EXPECT_EQ(Fuse(logits, stack, c, 21, 30),
            testing::BruteForceFuse(logits, stack, c, 21, 30));
}

TEST(FuseTest, RejectsMismatchedShapes) {
  const ModelConfig c = Config();
  EXPECT_THROW(Fuse(Tensorf(1, 2, 2, c.num_out()), StackWithSlots(5, {}), c, 16, 16),
               std::invalid_argument);
  EXPECT_THROW(Fuse(Tensorf(1, 2, 2, c.num_out() + 1), StackWithSlots(6, {}), c, 16, 16),
               std::invalid_argument);
  EXPECT_THROW(Fuse(Tensorf(1, 2, 2, c.num_out()), StackWithSlots(6, {}), c, 17, 16),
               std::invalid_argument);
}

TEST(FuseTest, HorizontalFlipCommutes) {
  const ModelConfig c = Config();
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensorf logits = testing::RandomDyadicLogits(rng, 3, 5, c.num_out());
    const auto stack = testing::RandomSlotStack(rng, c.num_att, 3, 5, c.num_things);
    Tensorf flipped(logits.shape());
    for (int y = 0; y < 3; ++y) {
      for (int x = 0; x < 5; ++x) {
        for (int ch = 0; ch < c.num_out(); ++ch) {
          flipped.at(0, y, 4 - x, ch) = logits.at(0, y, x, ch);
        }
      }
    }
    const auto a = Fuse(logits, stack, c, 24, 40);
    const auto b = Fuse(flipped, stack, c, 24, 40);
    for (int y = 0; y < 24; ++y) {
      for (int x = 0; x < 40; ++x) ASSERT_EQ(a.at(y, x), b.at(y, 39 - x));
    }
  }
}

TEST(FuseTest, PerPixelShiftLeavesLabelsUnchanged) {
  const ModelConfig c = Config();
  Rng rng(4);
  const Tensorf logits = testing::RandomDyadicLogits(rng, 3, 3, c.num_out());
  const auto stack = testing::RandomSlotStack(rng, c.num_att, 3, 3, c.num_things);
  Tensorf shifted = logits;
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) {
      const float k = static_cast<float>(rng.Int(-8, 8)) / 4;
      for (int ch = 0; ch < c.num_out(); ++ch) shifted.at(0, y, x, ch) += k;
    }
  }
  EXPECT_EQ(Fuse(logits, stack, c, 24, 24), Fuse(shifted, stack, c, 24, 24));
}

TEST(FuseTest, InstancesOnlyFromFilledSlots) {
  const ModelConfig c = Config();
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensorf logits = testing::RandomDyadicLogits(rng, 2, 3, c.num_out());
    const auto stack = testing::RandomSlotStack(rng, c.num_att, 2, 3, c.num_things);
    const auto out = Fuse(logits, stack, c, 16, 24);
    for (size_t i = 0; i < out.size(); ++i) {
      const int inst = out.instance_ids[i];
      if (inst == 0) {
        EXPECT_TRUE(out.class_ids[i] == kVoidClass || out.class_ids[i] >= c.num_things);
        continue;
      }
      ASSERT_FALSE(stack.IsEmpty(inst - 1));
      EXPECT_EQ(out.class_ids[i], stack.slot_detections[inst - 1]->class_id);
    }
  }
}

Image Gradient(int h, int w) {
  Image img(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.pixel(y, x)[0] = static_cast<float>(x) / w;
      img.pixel(y, x)[1] = static_cast<float>(y) / h;
      img.pixel(y, x)[2] = 0.5f;
    }
  }
  return img;
}

TEST(OverlayTest, VoidKeepsImageAndRenderingIsDeterministic) {
  const Image img = Gradient(8, 8);
  const PanopticLabelMap all_void(8, 8);
  EXPECT_EQ(RenderOverlay(img, all_void, 0.5), ToRawImage(img));
  PanopticLabelMap m(8, 8);
  m.Set(1, 1, {0, 1});
  EXPECT_EQ(RenderOverlay(img, m, 0.7), RenderOverlay(img, m, 0.7));
  EXPECT_THROW(RenderOverlay(Gradient(4, 8), m), std::invalid_argument);
}

TEST(OverlayTest, DistinctInstancesGetDistinctColors) {
  const Image black(4, 3);
  PanopticLabelMap m(4, 3);
  m.Set(0, 0, {0, 1});
  m.Set(1, 0, {0, 2});
  m.Set(2, 0, {1, 1});
  const RawImage out = RenderOverlay(black, m, 1.0);
  std::set<std::vector<uint8_t>> colors;
  for (int y = 0; y < 3; ++y) {
    colors.insert({out.bytes.begin() + y * 9, out.bytes.begin() + y * 9 + 3});
  }
  EXPECT_EQ(colors.size(), 3u);
}

}  // namespace
}  // namespace attnpan
