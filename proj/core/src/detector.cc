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

#include "attnpan/detector.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "attnpan/random.h"

namespace attnpan {
namespace {

// Deltas are clamped before exp() so a wild regression cannot overflow.
constexpr double kMaxLogScale = 4.135;  // log(1000 / 16)

double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::vector<Box> GenerateAnchors(int grid_h, int grid_w, int stride,
                                 double base_size) {
  static constexpr std::array<double, 3> kScales = {1.0, 1.2599210498948732,
                                                    1.5874010519681994};
  static constexpr std::array<double, 3> kRatios = {0.5, 1.0, 2.0};
  std::vector<Box> anchors;
  anchors.reserve(static_cast<size_t>(grid_h) * grid_w * kAnchorsPerCell);
  for (int y = 0; y < grid_h; ++y) {
    for (int x = 0; x < grid_w; ++x) {
      const double cx = (x + 0.5) * stride;
      const double cy = (y + 0.5) * stride;
      for (double scale : kScales) {
        for (double ratio : kRatios) {
          // ratio = height / width at constant area.
          const double side = base_size * scale;
          const double w = side / std::sqrt(ratio);
          const double h = side * std::sqrt(ratio);
          anchors.push_back(Box{cx, cy, w, h});
        }
      }
    }
  }
  return anchors;
}

std::array<double, 4> EncodeBox(const Box& a, const Box& b) {
  return {(b.x_center - a.x_center) / a.width,
          (b.y_center - a.y_center) / a.height, std::log(b.width / a.width),
          std::log(b.height / a.height)};
}

Box DecodeBox(const Box& a, const std::array<double, 4>& d) {
  return Box{a.x_center + d[0] * a.width, a.y_center + d[1] * a.height,
             a.width * std::exp(std::min(d[2], kMaxLogScale)),
             a.height * std::exp(std::min(d[3], kMaxLogScale))};
}

std::vector<Detection> DecodeDetections(const Tensorf& class_logits,
                                        const Tensorf& box_deltas,
                                        int batch_index,
                                        const ModelConfig& config,
                                        int image_h, int image_w,
                                        const DecodeOptions& options) {
  const int gh = class_logits.h();
  const int gw = class_logits.w();
  const int k = config.num_things;
  const auto anchors =
      GenerateAnchors(gh, gw, kFeatureStride, config.anchor_size);

  struct Candidate {
    double score;
    int anchor;
    int cls;
  };
  std::vector<Candidate> candidates;
  for (int y = 0; y < gh; ++y) {
    for (int x = 0; x < gw; ++x) {
      const float* logits = class_logits.pixel(batch_index, y, x);
      for (int a = 0; a < kAnchorsPerCell; ++a) {
        for (int c = 0; c < k; ++c) {
          const double s = Sigmoid(logits[a * k + c]);
          if (s > options.score_threshold) {
            candidates.push_back(
                {s, (y * gw + x) * kAnchorsPerCell + a, c});
          }
        }
      }
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& l, const Candidate& r) {
                     return l.score > r.score;
                   });
  if (static_cast<int>(candidates.size()) > options.pre_nms_top_k) {
    candidates.resize(options.pre_nms_top_k);
  }

  std::vector<Detection> kept;
  for (const auto& cand : candidates) {
    const int cell = cand.anchor / kAnchorsPerCell;
    const int a = cand.anchor % kAnchorsPerCell;
    const float* d = box_deltas.pixel(batch_index, cell / gw, cell % gw) + 4 * a;
    Box box = DecodeBox(anchors[cand.anchor], {d[0], d[1], d[2], d[3]});
    const double x0 = std::clamp(box.x0(), 0.0, static_cast<double>(image_w));
    const double x1 = std::clamp(box.x1(), 0.0, static_cast<double>(image_w));
    const double y0 = std::clamp(box.y0(), 0.0, static_cast<double>(image_h));
    const double y1 = std::clamp(box.y1(), 0.0, static_cast<double>(image_h));
    if (x1 - x0 <= 0 || y1 - y0 <= 0) continue;
    box = Box::FromCorners(x0, y0, x1, y1);
    const bool suppressed =
        std::any_of(kept.begin(), kept.end(), [&](const Detection& other) {
          return other.class_id == cand.cls &&
                 BoxIoU(other.box, box) > options.nms_iou;
        });
    if (suppressed) continue;
    kept.push_back(Detection{cand.cls, cand.score, box});
    if (static_cast<int>(kept.size()) >= options.max_detections) break;
  }
  return kept;
}

std::vector<Detection> OracleDetections(
    const std::vector<GroundTruthInstance>& instances,
    const OracleOptions& options, uint64_t seed) {
  Rng rng(seed);
  std::vector<Detection> out;
  for (const auto& inst : instances) {
    if (options.drop_rate > 0 && rng.Bernoulli(options.drop_rate)) continue;
    Box box = inst.box;
    if (options.jitter > 0) {
      box.x_center += rng.Normal() * options.jitter * box.width;
      box.y_center += rng.Normal() * options.jitter * box.height;
      box.width *= std::exp(rng.Normal() * options.jitter);
      box.height *= std::exp(rng.Normal() * options.jitter);
    }
    out.push_back(Detection{inst.class_id, 1.0, box});
  }
  return out;
}

}  // namespace attnpan
