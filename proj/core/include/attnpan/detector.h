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

#ifndef ATTNPAN_DETECTOR_H_
#define ATTNPAN_DETECTOR_H_

#include <array>
#include <cstdint>
#include <vector>

#include "attnpan/model.h"
#include "attnpan/panoptic.h"

namespace attnpan {

// Anchors for an (h, w) grid at the given stride, ordered (y, x, anchor).
// Each cell gets sizes base * {1, 2^(1/3), 2^(2/3)} x aspect ratios
// {0.5, 1, 2}, centered on the cell center.
std::vector<Box> GenerateAnchors(int grid_h, int grid_w, int stride,
                                 double base_size);

// Standard (dx, dy, log dw, log dh) box parameterization relative to anchor.
std::array<double, 4> EncodeBox(const Box& anchor, const Box& box);
Box DecodeBox(const Box& anchor, const std::array<double, 4>& deltas);

struct DecodeOptions {
  double score_threshold = 0.05;
  double nms_iou = 0.5;
  int max_detections = 100;
  int pre_nms_top_k = 1000;
};

// Turns one image's raw head outputs into detections sorted by descending
// score, with boxes clipped to the image. batch_index selects the image.
std::vector<Detection> DecodeDetections(const Tensorf& class_logits,
                                        const Tensorf& box_deltas,
                                        int batch_index,
                                        const ModelConfig& config,
                                        int image_h, int image_w,
                                        const DecodeOptions& options);

struct OracleOptions {
  double jitter = 0.0;     // stddev of center/size noise, relative to size
  double drop_rate = 0.0;  // probability of dropping each box
};

// Ground-truth boxes posing as detections (score 1.0). With zero jitter and
// zero drop rate the boxes are returned unchanged.
std::vector<Detection> OracleDetections(
    const std::vector<GroundTruthInstance>& instances,
    const OracleOptions& options, uint64_t seed);

}  // namespace attnpan

#endif  // ATTNPAN_DETECTOR_H_
