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

#include "attnpan/fusion.h"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "attnpan/nn.h"
#include "attnpan/random.h"

namespace attnpan {

PanopticLabelMap Fuse(const Tensorf& logits, const AttentionStack& stack,
                      const ModelConfig& config, int out_height,
                      int out_width) {
  if (logits.n() != 1) throw std::invalid_argument("Fuse: expects one image");
  if (logits.c() != config.num_out() || stack.num_slots != config.num_att) {
    throw std::invalid_argument(
        "Fuse: slot count mismatch between logits (" +
        std::to_string(logits.c()) + " channels) and attention stack (" +
        std::to_string(stack.num_slots) + " slots)");
  }
  const int up_h = logits.h() * kFeatureStride;
  const int up_w = logits.w() * kFeatureStride;
  if (out_height > up_h || out_width > up_w) {
    throw std::invalid_argument("Fuse: output larger than upsampled logits");
  }
  Tensorf up = ResizeBilinear(logits, up_h, up_w);

  std::vector<bool> allowed(config.num_out(), true);
  for (int s = 0; s < config.num_att; ++s) allowed[s] = !stack.IsEmpty(s);

  PanopticLabelMap out(out_height, out_width);
  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      const float* v = up.pixel(0, y, x);
      int best = -1;
      float best_v = -std::numeric_limits<float>::infinity();
      for (int ch = 0; ch < config.num_out(); ++ch) {
        if (!allowed[ch]) continue;
        if (best < 0 || v[ch] > best_v) {
          best = ch;
          best_v = v[ch];
        }
      }
      SegmentKey key{kVoidClass, 0};
      if (best < config.num_att) {
        key = {stack.slot_detections[best]->class_id, best + 1};
      } else if (best < config.num_att + config.num_stuff) {
        key = {config.num_things + (best - config.num_att), 0};
      }
      out.Set(y, x, key);
    }
  }
  return out;
}

std::array<uint8_t, 3> SegmentColor(SegmentKey key) {
  const uint64_t h = MixSeed(static_cast<uint64_t>(key.class_id + 1),
                             static_cast<uint64_t>(key.instance_id));
  // Keep colors away from black so they stay visible.
  return {static_cast<uint8_t>(64 + (h & 0xBF)),
          static_cast<uint8_t>(64 + ((h >> 8) & 0xBF)),
          static_cast<uint8_t>(64 + ((h >> 16) & 0xBF))};
}

RawImage RenderOverlay(const Image& image, const PanopticLabelMap& panoptic,
                       double alpha) {
  if (image.height != panoptic.height || image.width != panoptic.width) {
    throw std::invalid_argument("RenderOverlay: image/label size mismatch");
  }
  RawImage out = ToRawImage(image);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const SegmentKey k = panoptic.at(y, x);
      if (k.class_id == kVoidClass) continue;
      const auto color = SegmentColor(k);
      uint8_t* px = out.bytes.data() + (static_cast<size_t>(y) * image.width + x) * 3;
      for (int c = 0; c < 3; ++c) {
        px[c] = static_cast<uint8_t>(
            std::lround((1 - alpha) * px[c] + alpha * color[c]));
      }
    }
  }
  return out;
}

void WriteOverlay(const std::string& path, const Image& image,
                  const PanopticLabelMap& panoptic, double alpha) {
  WritePng(path, RenderOverlay(image, panoptic, alpha));
}

}  // namespace attnpan
