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

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "attnpan/maskgen.h"
#include "attnpan/random.h"

namespace attnpan {
namespace {

ModelConfig Config(int num_att, double c_att = 50.0) {
  ModelConfig c;
  c.num_att = num_att;
  c.c_att = c_att;
  return c;
}

Detection Det(double xc, double yc, double w, double h, double score = 0.9,
              int cls = 0) {
  return Detection{cls, score, Box{xc, yc, w, h}};
}

// Independent per-pixel evaluation of the normalized box Gaussian at the
// feature pixel center (x + 0.5, y + 0.5) in stride units; zero outside the
// outward-rounded box. Returns the unnormalized value and the in-box flag.
double GaussianAt(const Box& b, int x, int y, double stride) {
  const double px = (x + 0.5) * stride;
  const double py = (y + 0.5) * stride;
  const double sx = b.width / 4, sy = b.height / 4;
  return std::exp(-((px - b.x_center) * (px - b.x_center) / (2 * sx * sx) +
                    (py - b.y_center) * (py - b.y_center) / (2 * sy * sy)));
}

TEST(MaskGenTest, EdgeMidpointIsExpMinusTwoOfPeak) {
  // Center x = 44 (feature 5.5), width 32 (sigma 1 feature pixel): the
  // pixel centered at 7.5 lies exactly w / 2 from the center.
  const double c_att = 50.0;
  std::vector<Detection> dets = {Det(44, 44, 32, 32)};
  auto stack = GenerateMasks(dets, 16, 16, Config(4, c_att));
  const auto m = stack.mask(0);
  EXPECT_FLOAT_EQ(m[5 * 16 + 5], c_att);
  EXPECT_NEAR(m[5 * 16 + 7], c_att * std::exp(-2.0), 1e-5);
  EXPECT_NEAR(m[5 * 16 + 7] / c_att, 0.1353, 1e-4);
}

TEST(MaskGenTest, MatchesPerPixelOracleOnRandomBoxes) {
  Rng rng(1);
  const int h = 12, w = 16;
  for (int trial = 0; trial < 200; ++trial) {
    const double bw = rng.Uniform(9, 100), bh = rng.Uniform(9, 90);
    const Box box{rng.Uniform(0, w * 8), rng.Uniform(0, h * 8), bw, bh};
    std::vector<Detection> dets = {Detection{1, 0.5, box}};
    const auto stack = GenerateMasks(dets, h, w, Config(2, 7.0));
    if (stack.IsEmpty(0)) continue;
    const FeatureRect r = RasterizeBox(box, h, w, 8);
    double peak = 0;
    for (int y = r.y0; y < r.y1; ++y) {
      for (int x = r.x0; x < r.x1; ++x) peak = std::max(peak, GaussianAt(box, x, y, 8));
    }
    const auto m = stack.mask(0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const bool inside = x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1;
        const double expected =
            inside ? 7.0 * GaussianAt(box, x, y, 8) / peak : 0.0;
        ASSERT_NEAR(m[y * w + x], expected, 1e-5)
            << "trial " << trial << " pixel " << x << "," << y;
        ASSERT_GE(m[y * w + x], 0.0f);
        ASSERT_LE(m[y * w + x], 7.0f);
      }
    }
  }
}

TEST(MaskGenTest, CenterRowDecaysMonotonically) {
  std::vector<Detection> dets = {Det(60, 36, 80, 40)};
  const auto stack = GenerateMasks(dets, 10, 16, Config(1));
  const auto m = stack.mask(0);
  const int cy = 4, cx = 7;  // pixel nearest (7.5, 4.5)
  EXPECT_FLOAT_EQ(m[cy * 16 + cx], 50.0f);
  for (int x = cx + 1; x < 16; ++x) {
    EXPECT_LE(m[cy * 16 + x], m[cy * 16 + x - 1]);
  }
  for (int x = cx - 1; x >= 0; --x) {
    EXPECT_LE(m[cy * 16 + x], m[cy * 16 + x + 1]);
  }
}

TEST(MaskGenTest, VarianceModeUsesSquareRootSpread) {
  // Width 64 reads as variance 16 -> sigma 4 input pixels = 0.5 feature
  // pixels; one feature pixel from the center gives exp(-2).
  MaskOptions opts;
  opts.sigma_mode = SigmaMode::kVariance;
  std::vector<Detection> dets = {Det(44, 44, 64, 64)};
  const auto stack = GenerateMasks(dets, 12, 12, Config(1, 1.0), opts);
  EXPECT_NEAR(stack.mask(0)[5 * 12 + 6], std::exp(-2.0), 1e-6);
}

TEST(MaskGenTest, KeepsHighestScoringDetections) {
  std::vector<Detection> dets;
  for (int i = 0; i < 60; ++i) {
    dets.push_back(Det(32, 32, 16, 16, 0.01 + 0.01 * ((i * 37) % 60), i % 3));
  }
  const auto stack = GenerateMasks(dets, 8, 8, Config(50));
  ASSERT_EQ(stack.NumFilled(), 50);
  std::vector<double> kept;
  for (const auto& d : stack.slot_detections) kept.push_back(d->score);
  std::vector<double> all;
  for (const auto& d : dets) all.push_back(d.score);
  std::sort(all.rbegin(), all.rend());
  std::sort(kept.rbegin(), kept.rend());
  EXPECT_EQ(kept, std::vector<double>(all.begin(), all.begin() + 50));
  // Slots are in descending score order before shuffling.
  for (int s = 1; s < 50; ++s) {
    EXPECT_GE(stack.slot_detections[s - 1]->score,
              stack.slot_detections[s]->score);
  }
}

TEST(MaskGenTest, FewDetectionsLeaveZeroSlots) {
  std::vector<Detection> dets = {Det(20, 20, 16, 16), Det(40, 40, 16, 16),
                                 Det(10, 50, 12, 12)};
  const auto stack = GenerateMasks(dets, 8, 8, Config(50));
  EXPECT_EQ(stack.NumFilled(), 3);
  int zero_masks = 0;
  for (int s = 0; s < 50; ++s) {
    const auto m = stack.mask(s);
    if (std::all_of(m.begin(), m.end(), [](float v) { return v == 0.f; })) {
      ++zero_masks;
      EXPECT_TRUE(stack.IsEmpty(s));
      EXPECT_EQ(stack.permutation[s], kEmptySlot);
    }
  }
  EXPECT_EQ(zero_masks, 47);
}

TEST(MaskGenTest, DegenerateBoxLeavesSlotEmpty) {
  std::vector<Detection> dets = {Det(-40, -40, 10, 10), Det(20, 20, 16, 16)};
  const auto stack = GenerateMasks(dets, 8, 8, Config(4));
  EXPECT_EQ(stack.NumFilled(), 1);
}

TEST(MaskGenTest, RasterizeRoundsOutwardAndClips) {
  // [3, 13) x [0, 8): feature columns 0..1, row 0.
  auto r = RasterizeBox(Box::FromCorners(3, 0, 13, 8), 4, 4, 8);
  EXPECT_EQ(r.x0, 0);
  EXPECT_EQ(r.x1, 2);
  EXPECT_EQ(r.y0, 0);
  EXPECT_EQ(r.y1, 1);
  r = RasterizeBox(Box::FromCorners(20, 20, 100, 100), 4, 4, 8);
  EXPECT_EQ(r.x1, 4);
  EXPECT_EQ(r.y1, 4);
  EXPECT_TRUE(RasterizeBox(Box::FromCorners(40, 0, 50, 8), 4, 4, 8).empty());
}

TEST(HardMaskTest, ConstantInsideZeroOutsideAndDominatesSoft) {
  std::vector<Detection> dets = {Det(30, 22, 28, 20)};
  const auto hard = MakeHardMasks(dets, 8, 8, Config(2, 5.0));
  const auto soft = GenerateMasks(dets, 8, 8, Config(2, 5.0));
  const FeatureRect r = RasterizeBox(dets[0].box, 8, 8, 8);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      const bool inside = x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1;
      EXPECT_EQ(hard.mask(0)[y * 8 + x], inside ? 5.0f : 0.0f);
      EXPECT_GE(hard.mask(0)[y * 8 + x], soft.mask(0)[y * 8 + x]);
    }
  }
}

AttentionStack FilledStack(int n) {
  std::vector<Detection> dets;
  for (int i = 0; i < n; ++i) {
    dets.push_back(Det(8 + 12 * i, 12 + 4 * i, 12 + 2 * i, 10 + i,
                       1.0 - 0.1 * i, i % 3));
  }
  return GenerateMasks(dets, 8, 8, Config(n));
}

TEST(ShuffleTest, SeededAndInvertible) {
  auto stack = FilledStack(6);
  stack.slot_detections[5].reset();  // one empty slot
  stack.permutation[5] = kEmptySlot;
  std::fill(stack.mask(5).begin(), stack.mask(5).end(), 0.f);
  const auto a = ShuffleMasks(stack, 42);
  const auto b = ShuffleMasks(stack, 42);
  EXPECT_EQ(a, b);
  EXPECT_EQ(UnshuffleMasks(a), stack);
  // Each slot's mask moved together with its detection.
  for (int s = 0; s < 6; ++s) {
    const int src = a.permutation[s];
    if (src == kEmptySlot) {
      EXPECT_TRUE(a.IsEmpty(s));
      continue;
    }
    EXPECT_TRUE(std::equal(a.mask(s).begin(), a.mask(s).end(),
                           stack.mask(src).begin()));
    EXPECT_EQ(a.slot_detections[s], stack.slot_detections[src]);
  }
}

TEST(ShuffleTest, PermutationsAreUniform) {
  const auto stack = FilledStack(4);
  std::map<std::vector<int>, int> counts;
  const int trials = 10000;
  for (int seed = 0; seed < trials; ++seed) {
    counts[ShuffleMasks(stack, seed).permutation]++;
  }
  ASSERT_EQ(counts.size(), 24u);
  double chi2 = 0;
  const double expected = trials / 24.0;
  for (const auto& [perm, n] : counts) {
    EXPECT_NEAR(static_cast<double>(n) / trials, 1.0 / 24, 0.01);
    chi2 += (n - expected) * (n - expected) / expected;
  }
  // 99.9th percentile of chi-square with 23 degrees of freedom.
  EXPECT_LT(chi2, 49.73);
}

TEST(StackToTensorTest, PacksSlotsAsChannels) {
  const auto stack = FilledStack(3);
  std::vector<AttentionStack> stacks = {stack, ShuffleMasks(stack, 1)};
  const Tensorf t = StackToTensor(stacks);
  ASSERT_EQ(t.shape(), (Shape4{2, 8, 8, 3}));
  for (int b = 0; b < 2; ++b) {
    for (int s = 0; s < 3; ++s) {
      for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
          EXPECT_EQ(t.at(b, y, x, s), stacks[b].mask(s)[y * 8 + x]);
        }
      }
    }
  }
  stacks.push_back(FilledStack(2));
  EXPECT_THROW(StackToTensor(stacks), std::invalid_argument);
}

}  // namespace
}  // namespace attnpan
