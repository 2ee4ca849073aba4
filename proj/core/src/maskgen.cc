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

#include "attnpan/maskgen.h"

#include <glog/logging.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "attnpan/random.h"

namespace attnpan {

int AttentionStack::NumFilled() const {
  return static_cast<int>(std::count_if(
      slot_detections.begin(), slot_detections.end(),
      [](const auto& d) { return d.has_value(); }));
}

FeatureRect RasterizeBox(const Box& box, int height, int width, int stride) {
  const double img_w = static_cast<double>(width) * stride;
  const double img_h = static_cast<double>(height) * stride;
  const double x0 = std::clamp(box.x0(), 0.0, img_w);
  const double x1 = std::clamp(box.x1(), 0.0, img_w);
  const double y0 = std::clamp(box.y0(), 0.0, img_h);
  const double y1 = std::clamp(box.y1(), 0.0, img_h);
  FeatureRect r;
  if (!(x1 > x0) || !(y1 > y0)) return r;
  r.x0 = static_cast<int>(std::floor(x0 / stride));
  r.x1 = static_cast<int>(std::ceil(x1 / stride));
  r.y0 = static_cast<int>(std::floor(y0 / stride));
  r.y1 = static_cast<int>(std::ceil(y1 / stride));
  r.x1 = std::min(r.x1, width);
  r.y1 = std::min(r.y1, height);
  return r;
}

namespace {

// Fills one slot; returns false if the box is degenerate at this stride.
bool FillMask(const Detection& det, int height, int width,
              const ModelConfig& config, const MaskOptions& options,
              std::span<float> out) {
  const FeatureRect r = RasterizeBox(det.box, height, width, options.stride);
  if (r.empty() || !(det.box.width > 0) || !(det.box.height > 0)) return false;
  const float c_att = static_cast<float>(config.c_att);
  if (options.hard) {
    for (int y = r.y0; y < r.y1; ++y) {
      for (int x = r.x0; x < r.x1; ++x) out[y * width + x] = c_att;
    }
    return true;
  }
  const double s = options.stride;
  const double cx = det.box.x_center / s;
  const double cy = det.box.y_center / s;
  double sx, sy;
  if (options.sigma_mode == SigmaMode::kStdDev) {
    sx = det.box.width / 4.0 / s;
    sy = det.box.height / 4.0 / s;
  } else {
    sx = std::sqrt(det.box.width / 4.0) / s;
    sy = std::sqrt(det.box.height / 4.0) / s;
  }
  std::vector<double> values(static_cast<size_t>(r.y1 - r.y0) * (r.x1 - r.x0));
  double peak = 0.0;
  size_t i = 0;
  for (int y = r.y0; y < r.y1; ++y) {
    const double dy = (y + 0.5) - cy;
    for (int x = r.x0; x < r.x1; ++x, ++i) {
      const double dx = (x + 0.5) - cx;
      values[i] = std::exp(-(dx * dx / (2 * sx * sx) + dy * dy / (2 * sy * sy)));
      peak = std::max(peak, values[i]);
    }
  }
  if (!(peak > 0)) return false;
  i = 0;
  for (int y = r.y0; y < r.y1; ++y) {
    for (int x = r.x0; x < r.x1; ++x, ++i) {
      out[y * width + x] = static_cast<float>(values[i] / peak * config.c_att);
    }
  }
  return true;
}

}  // namespace

AttentionStack GenerateMasks(std::span<const Detection> detections, int height,
                             int width, const ModelConfig& config,
                             const MaskOptions& options) {
  if (height <= 0 || width <= 0) {
    throw std::invalid_argument("GenerateMasks: empty feature map");
  }
  std::vector<size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return detections[a].score > detections[b].score;
  });
  const size_t kept = std::min(order.size(), static_cast<size_t>(config.num_att));

  AttentionStack stack(config.num_att, height, width);
  for (size_t slot = 0; slot < kept; ++slot) {
    const Detection& det = detections[order[slot]];
    if (!FillMask(det, height, width, config, options, stack.mask(slot))) {
      LOG(WARNING) << "degenerate detection (class " << det.class_id
                   << ", box " << det.box.x_center << "," << det.box.y_center
                   << " " << det.box.width << "x" << det.box.height
                   << ") left slot " << slot << " empty";
      continue;
    }
    stack.slot_detections[slot] = det;
    stack.permutation[slot] = static_cast<int>(slot);
  }
  return stack;
}

AttentionStack MakeHardMasks(std::span<const Detection> detections, int height,
                             int width, const ModelConfig& config) {
  MaskOptions options;
  options.hard = true;
  return GenerateMasks(detections, height, width, config, options);
}

namespace {

void SwapSlots(AttentionStack& s, int a, int b) {
  if (a == b) return;
  std::swap_ranges(s.mask(a).begin(), s.mask(a).end(), s.mask(b).begin());
  std::swap(s.permutation[a], s.permutation[b]);
  std::swap(s.slot_detections[a], s.slot_detections[b]);
}

}  // namespace

AttentionStack ShuffleMasks(const AttentionStack& stack, uint64_t seed) {
  AttentionStack out = stack;
  Rng rng(seed);
  for (int i = out.num_slots - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.Below(static_cast<uint64_t>(i) + 1));
    SwapSlots(out, i, j);
  }
  return out;
}

AttentionStack UnshuffleMasks(const AttentionStack& stack) {
  AttentionStack out(stack.num_slots, stack.height, stack.width);
  for (int s = 0; s < stack.num_slots; ++s) {
    const int dst = stack.permutation[s];
    if (dst == kEmptySlot) continue;
    std::copy(stack.mask(s).begin(), stack.mask(s).end(),
              out.mask(dst).begin());
    out.permutation[dst] = dst;
    out.slot_detections[dst] = stack.slot_detections[s];
  }
  // Empty slots are all-zero, so their placement is immaterial.
  return out;
}

Tensorf StackToTensor(std::span<const AttentionStack> stacks) {
  if (stacks.empty()) return Tensorf();
  const auto& first = stacks.front();
  Tensorf t(static_cast<int>(stacks.size()), first.height, first.width,
            first.num_slots);
  for (size_t b = 0; b < stacks.size(); ++b) {
    const auto& s = stacks[b];
    if (s.height != first.height || s.width != first.width ||
        s.num_slots != first.num_slots) {
      throw std::invalid_argument("StackToTensor: inconsistent stacks");
    }
    for (int slot = 0; slot < s.num_slots; ++slot) {
      const auto m = s.mask(slot);
      for (int y = 0; y < s.height; ++y) {
        for (int x = 0; x < s.width; ++x) {
          t.at(static_cast<int>(b), y, x, slot) = m[y * s.width + x];
        }
      }
    }
  }
  return t;
}

}  // namespace attnpan
