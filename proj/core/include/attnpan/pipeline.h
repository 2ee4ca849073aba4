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

// End-to-end inference: normalize and pad, backbone, feature merge,
// detection (learned or oracle), attention masks, panoptic head, fusion.

#ifndef ATTNPAN_PIPELINE_H_
#define ATTNPAN_PIPELINE_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "attnpan/data.h"
#include "attnpan/detector.h"
#include "attnpan/maskgen.h"
#include "attnpan/metrics.h"
#include "attnpan/model.h"

namespace attnpan {

enum class DetectorMode { kLearned, kOracle };

struct PipelineOptions {
  DetectorMode detector = DetectorMode::kLearned;
  OracleOptions oracle;
  MaskOptions masks;
  bool shuffle = true;
  uint64_t inference_seed = 0;  // fixed shuffle seed at inference
  DecodeOptions decode;
};

// Stage classification for the timed inference path. Fusion is a per-pixel
// argmax over network outputs and counts as part of the network.
enum class StageKind { kNetwork, kPostNetworkMerge };

struct StageRecord {
  std::string name;
  StageKind kind = StageKind::kNetwork;
  double milliseconds = 0;
};

struct Prediction {
  PanopticLabelMap panoptic;
  std::vector<Detection> detections;
  AttentionStack stack;
  Tensorf logits;  // [1, H/8, W/8, num_out]
  std::vector<StageRecord> trace;
};

// Normalizes with the configured pixel mean/std and zero-pads bottom/right
// to a multiple of 128. All images must share one size, a multiple of 8.
Tensorf Preprocess(std::span<const Image> images, const ModelConfig& config);
Tensorf Preprocess(std::span<const Image* const> images,
                   const ModelConfig& config);

int PaddedSize(int size);

class Predictor {
 public:
  Predictor(PanopticModel& model, PipelineOptions options)
      : model_(model), options_(options) {}

  // Oracle mode takes boxes from `instances`; learned mode ignores them.
  Prediction Predict(const Image& image,
                     std::span<const GroundTruthInstance> instances = {});

  const PipelineOptions& options() const { return options_; }

 private:
  PanopticModel& model_;
  PipelineOptions options_;
};

// Evaluates the first max_images samples (all when 0) and pools the
// per-image PQ statistics.
PQReport Evaluate(PanopticModel& model, const Dataset& dataset,
                  const PipelineOptions& options, size_t max_images = 0);

}  // namespace attnpan

#endif  // ATTNPAN_PIPELINE_H_
