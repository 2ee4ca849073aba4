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

#include "attnpan/pipeline.h"

#include <algorithm>
#include <chrono>
#include <stdexcept>

#include "attnpan/fusion.h"

namespace attnpan {

int PaddedSize(int size) {
  return (size + kPaddingMultiple - 1) / kPaddingMultiple * kPaddingMultiple;
}

Tensorf Preprocess(std::span<const Image* const> images,
                   const ModelConfig& config) {
  if (images.empty()) throw std::invalid_argument("Preprocess: no images");
  const int h = images[0]->height, w = images[0]->width;
  if (h <= 0 || w <= 0 || h % kFeatureStride || w % kFeatureStride) {
    throw std::invalid_argument("Preprocess: image size " + std::to_string(h) +
                                "x" + std::to_string(w) +
                                " is not a positive multiple of 8");
  }
  Tensorf out(static_cast<int>(images.size()), PaddedSize(h), PaddedSize(w), 3);
  const float mean = static_cast<float>(config.pixel_mean);
  const float inv_std = static_cast<float>(1.0 / config.pixel_std);
  for (size_t b = 0; b < images.size(); ++b) {
    const Image& im = *images[b];
    if (im.height != h || im.width != w) {
      throw std::invalid_argument("Preprocess: batch images differ in size");
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const float* src = im.pixel(y, x);
        float* dst = out.pixel(static_cast<int>(b), y, x);
        for (int c = 0; c < 3; ++c) dst[c] = (src[c] - mean) * inv_std;
      }
    }
  }
  return out;
}

Tensorf Preprocess(std::span<const Image> images, const ModelConfig& config) {
  std::vector<const Image*> ptrs;
  for (const auto& im : images) ptrs.push_back(&im);
  return Preprocess(std::span<const Image* const>(ptrs), config);
}

namespace {

class StageTimer {
 public:
  explicit StageTimer(std::vector<StageRecord>* trace) : trace_(trace) {}
  void Mark(const char* name, StageKind kind = StageKind::kNetwork) {
    const auto now = std::chrono::steady_clock::now();
    trace_->push_back(
        {name, kind,
         std::chrono::duration<double, std::milli>(now - last_).count()});
    last_ = now;
  }

 private:
  std::vector<StageRecord>* trace_;
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

}  // namespace

Prediction Predictor::Predict(const Image& image,
                              std::span<const GroundTruthInstance> instances) {
  const ModelConfig& config = model_.config();
  Prediction out;
  StageTimer timer(&out.trace);

  // Sizes that are not multiples of 8 are padded with the pixel mean and the
  // label map is cropped back after fusion.
  const Image* input = &image;
  Image padded;
  const int round_h = (image.height + kFeatureStride - 1) / kFeatureStride * kFeatureStride;
  const int round_w = (image.width + kFeatureStride - 1) / kFeatureStride * kFeatureStride;
  if (round_h != image.height || round_w != image.width) {
    padded = Image(round_h, round_w);
    std::fill(padded.rgb.begin(), padded.rgb.end(),
              static_cast<float>(config.pixel_mean));
    for (int y = 0; y < image.height; ++y) {
      std::copy_n(image.pixel(y, 0), image.width * 3, padded.pixel(y, 0));
    }
    input = &padded;
  }
  const Image* batch[] = {input};
  Tensorf x = Preprocess(std::span<const Image* const>(batch), config);
  timer.Mark("preprocess");

  FeaturePyramid<float> pyramid = model_.backbone().Forward(x, false);
  timer.Mark("backbone");

  const int fh = round_h / kFeatureStride;
  const int fw = round_w / kFeatureStride;
  Tensorf s = CropSpatial(
      model_.fpn().Forward(pyramid.P(3), pyramid.P(4), pyramid.P(5), false), fh,
      fw);
  timer.Mark("fpn_merge");

  if (options_.detector == DetectorMode::kLearned) {
    auto det = model_.detector().Forward(CropSpatial(pyramid.P(3), fh, fw), false);
    out.detections = DecodeDetections(det.class_logits, det.box_deltas, 0,
                                      config, image.height, image.width,
                                      options_.decode);
  } else {
    out.detections = OracleDetections(
        std::vector<GroundTruthInstance>(instances.begin(), instances.end()),
        options_.oracle, options_.inference_seed);
  }
  timer.Mark("detector");

  out.stack = GenerateMasks(out.detections, fh, fw, config, options_.masks);
  if (options_.shuffle) {
    out.stack = ShuffleMasks(out.stack, options_.inference_seed);
  }
  timer.Mark("attention_masks");

  Tensorf masks = StackToTensor(std::span<const AttentionStack>(&out.stack, 1));
  out.logits = model_.head().Forward(s, masks, false);
  timer.Mark("panoptic_head");

  out.panoptic = Fuse(out.logits, out.stack, config, image.height, image.width);
  timer.Mark("argmax_fusion");
  return out;
}

PQReport Evaluate(PanopticModel& model, const Dataset& dataset,
                  const PipelineOptions& options, size_t max_images) {
  Predictor predictor(model, options);
  const size_t n = max_images == 0 ? dataset.size()
                                   : std::min(max_images, dataset.size());
  std::vector<PQReport> reports;
  reports.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    const Sample sample = dataset.Get(i);
    Prediction p = predictor.Predict(sample.image, sample.instances);
    reports.push_back(ComputePQ(p.panoptic, sample.panoptic, dataset.labels()));
  }
  PQReport total = AggregateReports(reports);
  if (total.per_class.empty()) {
    total.labels = dataset.labels();
    total.per_class.assign(total.labels.num_classes(), ClassStats{});
    total.Finalize();
  }
  return total;
}

}  // namespace attnpan
