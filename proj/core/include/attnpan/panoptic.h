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

// Shared geometric and label types: boxes, detections, ground-truth
// instances and the per-pixel panoptic label map.

#ifndef ATTNPAN_PANOPTIC_H_
#define ATTNPAN_PANOPTIC_H_

#include <algorithm>
#include <compare>
#include <cstdint>
#include <string>
#include <vector>

namespace attnpan {

// Axis-aligned box in center form, input-image pixel units. A box covering
// pixel columns [a, b] inclusive has x_center = (a + b + 1) / 2 and
// width = b - a + 1.
struct Box {
  double x_center = 0;
  double y_center = 0;
  double width = 0;
  double height = 0;

  double x0() const { return x_center - width / 2; }
  double x1() const { return x_center + width / 2; }
  double y0() const { return y_center - height / 2; }
  double y1() const { return y_center + height / 2; }
  double Area() const { return std::max(0.0, width) * std::max(0.0, height); }

  static Box FromCorners(double x0, double y0, double x1, double y1) {
    return Box{(x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0};
  }
  bool operator==(const Box&) const = default;
};

inline double BoxIoU(const Box& a, const Box& b) {
  const double iw = std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0());
  const double ih = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.Area() + b.Area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

// One scored, classed box from a detector or the ground-truth oracle.
struct Detection {
  int class_id = 0;  // things-class index in [0, num_things)
  double score = 1.0;
  Box box;
  bool operator==(const Detection&) const = default;
};

// Class index layout: things occupy [0, num_things), stuff occupies
// [num_things, num_things + num_stuff). Void is kVoidClass.
inline constexpr int32_t kVoidClass = -1;

struct LabelSpace {
  int num_things = 3;
  int num_stuff = 2;

  int num_classes() const { return num_things + num_stuff; }
  bool IsThing(int c) const { return c >= 0 && c < num_things; }
  bool IsStuff(int c) const { return c >= num_things && c < num_classes(); }
  int StuffIndex(int c) const { return c - num_things; }
};

struct SegmentKey {
  int32_t class_id = kVoidClass;
  int32_t instance_id = 0;
  auto operator<=>(const SegmentKey&) const = default;
};

// Per-pixel (class_id, instance_id). Stuff and void pixels carry instance 0;
// thing instances carry ids >= 1, distinct within a class.
struct PanopticLabelMap {
  int height = 0;
  int width = 0;
  std::vector<int32_t> class_ids;
  std::vector<int32_t> instance_ids;
  // Ground-truth segments flagged as crowd regions; only consulted by the
  // evaluator.
  std::vector<SegmentKey> crowd;

  PanopticLabelMap() = default;
  PanopticLabelMap(int h, int w)
      : height(h),
        width(w),
        class_ids(static_cast<size_t>(h) * w, kVoidClass),
        instance_ids(static_cast<size_t>(h) * w, 0) {}

  size_t size() const { return class_ids.size(); }
  size_t Index(int y, int x) const {
    return static_cast<size_t>(y) * width + x;
  }
  SegmentKey at(int y, int x) const {
    const size_t i = Index(y, x);
    return {class_ids[i], instance_ids[i]};
  }
  void Set(int y, int x, SegmentKey k) {
    const size_t i = Index(y, x);
    class_ids[i] = k.class_id;
    instance_ids[i] = k.instance_id;
  }
  bool IsCrowd(SegmentKey k) const {
    return std::find(crowd.begin(), crowd.end(), k) != crowd.end();
  }
  bool operator==(const PanopticLabelMap&) const = default;
};

// A ground-truth thing instance at input resolution.
struct GroundTruthInstance {
  int class_id = 0;
  int instance_id = 1;
  int height = 0;
  int width = 0;
  std::vector<uint8_t> mask;  // row-major, 1 inside
  Box box;                    // tight hull of mask

  int64_t PixelCount() const {
    return std::count(mask.begin(), mask.end(), uint8_t{1});
  }
};

// Tight pixel hull of a binary mask. Returns false when the mask is empty.
bool TightBox(const std::vector<uint8_t>& mask, int height, int width,
              Box* box);

// Extracts thing instances (and their tight boxes) from a label map.
// Crowd segments are skipped.
std::vector<GroundTruthInstance> ExtractInstances(const PanopticLabelMap& map,
                                                  const LabelSpace& labels);

}  // namespace attnpan

#endif  // ATTNPAN_PANOPTIC_H_
