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

// Attention mask generation: detections become a stack of num_att masks at
// feature resolution, each a box-clipped Gaussian (or a constant "hard"
// fill) peaking at c_att, followed by a seeded shuffle of the slots.

#ifndef ATTNPAN_MASKGEN_H_
#define ATTNPAN_MASKGEN_H_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "attnpan/model.h"
#include "attnpan/panoptic.h"
#include "attnpan/tensor.h"

namespace attnpan {

// How the box-derived spread w_b / 4 is read: as a standard deviation
// (default) or as a variance in input pixels^2.
enum class SigmaMode { kStdDev, kVariance };

struct MaskOptions {
  bool hard = false;
  SigmaMode sigma_mode = SigmaMode::kStdDev;
  int stride = kFeatureStride;
};

inline constexpr int kEmptySlot = -1;

struct AttentionStack {
  int num_slots = 0;
  int height = 0;  // feature resolution
  int width = 0;
  std::vector<float> masks;  // [slot][y][x]
  // Slot -> index in the unshuffled stack, kEmptySlot for empty slots.
  std::vector<int> permutation;
  std::vector<std::optional<Detection>> slot_detections;

  AttentionStack() = default;
  AttentionStack(int slots, int h, int w)
      : num_slots(slots),
        height(h),
        width(w),
        masks(static_cast<size_t>(slots) * h * w, 0.0f),
        permutation(slots, kEmptySlot),
        slot_detections(slots) {}

  size_t plane() const { return static_cast<size_t>(height) * width; }
  std::span<float> mask(int slot) {
    return {masks.data() + slot * plane(), plane()};
  }
  std::span<const float> mask(int slot) const {
    return {masks.data() + slot * plane(), plane()};
  }
  bool IsEmpty(int slot) const { return !slot_detections[slot].has_value(); }
  int NumFilled() const;

  bool operator==(const AttentionStack&) const = default;
};

// Feature-pixel rectangle [x0, x1) x [y0, y1) covered by a box after clipping
// to the (height * stride, width * stride) image and outward rounding.
struct FeatureRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool empty() const { return x1 <= x0 || y1 <= y0; }
};
FeatureRect RasterizeBox(const Box& box, int height, int width, int stride);

// Keeps the num_att highest-scoring detections (stable on ties) in slots
// 0..k-1 and leaves the rest empty. Masks are not shuffled.
AttentionStack GenerateMasks(std::span<const Detection> detections, int height,
                             int width, const ModelConfig& config,
                             const MaskOptions& options = {});

// GenerateMasks with a constant c_att fill inside each box.
AttentionStack MakeHardMasks(std::span<const Detection> detections, int height,
                             int width, const ModelConfig& config);

// Applies one seeded Fisher-Yates permutation jointly to masks, permutation
// record and slot detections.
AttentionStack ShuffleMasks(const AttentionStack& stack, uint64_t seed);

// Restores the unshuffled slot order from the recorded permutation.
AttentionStack UnshuffleMasks(const AttentionStack& stack);

// Packs per-image stacks into an [N, H, W, num_slots] tensor.
Tensorf StackToTensor(std::span<const AttentionStack> stacks);

}  // namespace attnpan

#endif  // ATTNPAN_MASKGEN_H_
