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

#include "attnpan/panoptic.h"

#include <map>

namespace attnpan {

bool TightBox(const std::vector<uint8_t>& mask, int height, int width,
              Box* box) {
  int x_min = width, x_max = -1, y_min = height, y_max = -1;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!mask[static_cast<size_t>(y) * width + x]) continue;
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
      y_min = std::min(y_min, y);
      y_max = std::max(y_max, y);
    }
  }
  if (x_max < 0) return false;
  *box = Box::FromCorners(x_min, y_min, x_max + 1, y_max + 1);
  return true;
}

std::vector<GroundTruthInstance> ExtractInstances(const PanopticLabelMap& map,
                                                  const LabelSpace& labels) {
  // Ordered by first appearance in raster order.
  std::map<SegmentKey, size_t> index;
  std::vector<GroundTruthInstance> out;
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const SegmentKey k = map.at(y, x);
      if (!labels.IsThing(k.class_id) || map.IsCrowd(k)) continue;
      auto it = index.find(k);
      if (it == index.end()) {
        GroundTruthInstance inst;
        inst.class_id = k.class_id;
        inst.instance_id = k.instance_id;
        inst.height = map.height;
        inst.width = map.width;
        inst.mask.assign(map.size(), 0);
        it = index.emplace(k, out.size()).first;
        out.push_back(std::move(inst));
      }
      out[it->second].mask[map.Index(y, x)] = 1;
    }
  }
  for (auto& inst : out) TightBox(inst.mask, inst.height, inst.width, &inst.box);
  return out;
}

}  // namespace attnpan
