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

#ifndef ATTNPAN_FUSION_H_
#define ATTNPAN_FUSION_H_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "attnpan/image_io.h"
#include "attnpan/maskgen.h"
#include "attnpan/model.h"
#include "attnpan/panoptic.h"
#include "attnpan/tensor.h"

namespace attnpan {

// Per-pixel argmax over bilinearly upsampled logits.
//
// logits holds one image's [1, h, w, num_out] head output at feature
// resolution. It is upsampled by the feature stride, cropped to
// (out_height, out_width), and empty-slot channels are excluded. Slot s maps
// to (slot detection's class, instance s + 1); stuff channel k to class
// num_things + k; the unmatched-things and unlabeled channels map to void.
PanopticLabelMap Fuse(const Tensorf& logits, const AttentionStack& stack,
                      const ModelConfig& config, int out_height,
                      int out_width);

// Deterministic display color for a segment.
std::array<uint8_t, 3> SegmentColor(SegmentKey key);

// Alpha-blends segment colors over the image; void pixels keep the image.
RawImage RenderOverlay(const Image& image, const PanopticLabelMap& panoptic,
                       double alpha = 0.5);
void WriteOverlay(const std::string& path, const Image& image,
                  const PanopticLabelMap& panoptic, double alpha = 0.5);

}  // namespace attnpan

#endif  // ATTNPAN_FUSION_H_
