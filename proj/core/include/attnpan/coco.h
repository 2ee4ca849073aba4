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

// COCO-panoptic format: a JSON annotation file plus one RGB PNG per image
// whose pixels encode segment ids as id = R + 256 * G + 256^2 * B (id 0 is
// void). Each image's "segments_info" maps ids to category ids and crowd
// flags. Written files add an optional per-segment "instance_id" so label
// maps round-trip exactly; readers fall back to the segment id.

#ifndef ATTNPAN_COCO_H_
#define ATTNPAN_COCO_H_

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "attnpan/data.h"
#include "attnpan/image_io.h"
#include "attnpan/panoptic.h"

namespace attnpan {

inline constexpr uint32_t kMaxSegmentId = (1u << 24) - 1;

inline uint32_t RgbToSegmentId(uint8_t r, uint8_t g, uint8_t b) {
  return static_cast<uint32_t>(r) + 256u * g + 65536u * b;
}
inline std::array<uint8_t, 3> SegmentIdToRgb(uint32_t id) {
  return {static_cast<uint8_t>(id & 0xFF), static_cast<uint8_t>((id >> 8) & 0xFF),
          static_cast<uint8_t>((id >> 16) & 0xFF)};
}

struct CocoCategory {
  int id = 0;
  std::string name;
  bool isthing = false;
};

// Maps dataset category ids onto the contiguous class layout: thing
// categories (ascending id) first, then stuff categories.
class CategoryMap {
 public:
  CategoryMap() = default;
  explicit CategoryMap(std::vector<CocoCategory> categories);

  LabelSpace labels() const { return labels_; }
  const std::vector<CocoCategory>& categories() const { return categories_; }
  // Throws std::out_of_range for unknown ids.
  int ClassOf(int category_id) const;
  int CategoryOf(int class_id) const;

 private:
  std::vector<CocoCategory> categories_;
  std::map<int, int> to_class_;
  std::vector<int> to_category_;
  LabelSpace labels_;
};

CategoryMap SyntheticCategories();

struct CocoSegmentInfo {
  uint32_t id = 0;
  int category_id = 0;
  bool iscrowd = false;
  int instance_id = -1;  // -1 when absent
};

struct EncodedPanoptic {
  RawImage png;  // RGB
  std::vector<CocoSegmentInfo> segments;
};

// Assigns segment ids 1, 2, ... in raster order of first appearance.
EncodedPanoptic EncodePanoptic(const PanopticLabelMap& map,
                               const CategoryMap& categories);

// Throws std::runtime_error naming `image_name` when a pixel id is missing
// from `segments` or a category is unknown. With crowd_as_void, crowd
// segments become void; otherwise they keep their labels and are listed in
// PanopticLabelMap::crowd.
PanopticLabelMap DecodePanoptic(const RawImage& png,
                                const std::vector<CocoSegmentInfo>& segments,
                                const CategoryMap& categories,
                                bool crowd_as_void,
                                const std::string& image_name);

struct CocoImageEntry {
  int image_id = 0;
  std::string file_name;      // input image, relative to the image dir
  std::string panoptic_file;  // segment PNG, relative to the PNG dir
  std::vector<CocoSegmentInfo> segments;
};

class CocoPanopticDataset : public Dataset {
 public:
  // Parses the annotation file. `training` maps crowd segments to void.
  CocoPanopticDataset(const std::string& json_path, std::string png_dir,
                      std::string image_dir, bool training);

  size_t size() const override { return entries_.size(); }
  Sample Get(size_t index) const override;
  LabelSpace labels() const override { return categories_.labels(); }
  const CategoryMap& categories() const { return categories_; }
  const std::vector<CocoImageEntry>& entries() const { return entries_; }

 private:
  std::vector<CocoImageEntry> entries_;
  CategoryMap categories_;
  std::string png_dir_;
  std::string image_dir_;
  bool training_;
};

// Writes <dir>/images/*.png, <dir>/panoptic/*.png and <dir>/panoptic.json.
void ExportCocoPanoptic(const Dataset& dataset, const CategoryMap& categories,
                        const std::string& dir);

}  // namespace attnpan

#endif  // ATTNPAN_COCO_H_
