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

#include "attnpan/coco.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"

namespace attnpan {

namespace fs = std::filesystem;
using nlohmann::json;

CategoryMap::CategoryMap(std::vector<CocoCategory> categories)
    : categories_(std::move(categories)) {
  std::vector<CocoCategory> things, stuff;
  for (const auto& c : categories_) (c.isthing ? things : stuff).push_back(c);
  auto by_id = [](const CocoCategory& a, const CocoCategory& b) {
    return a.id < b.id;
  };
  std::sort(things.begin(), things.end(), by_id);
  std::sort(stuff.begin(), stuff.end(), by_id);
  labels_ = LabelSpace{static_cast<int>(things.size()),
                       static_cast<int>(stuff.size())};
  for (const auto* group : {&things, &stuff}) {
    for (const auto& c : *group) {
      if (!to_class_.emplace(c.id, static_cast<int>(to_category_.size())).second) {
        throw std::invalid_argument("duplicate category id " +
                                    std::to_string(c.id));
      }
      to_category_.push_back(c.id);
    }
  }
}

int CategoryMap::ClassOf(int category_id) const {
  auto it = to_class_.find(category_id);
  if (it == to_class_.end()) {
    throw std::out_of_range("unknown category id " + std::to_string(category_id));
  }
  return it->second;
}

int CategoryMap::CategoryOf(int class_id) const {
  return to_category_.at(class_id);
}

CategoryMap SyntheticCategories() {
  return CategoryMap({{1, "circle", true},
                      {2, "triangle", true},
                      {3, "square", true},
                      {4, "sky", false},
                      {5, "ground", false}});
}

EncodedPanoptic EncodePanoptic(const PanopticLabelMap& map,
                               const CategoryMap& categories) {
  EncodedPanoptic out;
  out.png.height = map.height;
  out.png.width = map.width;
  out.png.channels = 3;
  out.png.bytes.assign(map.size() * 3, 0);
  std::map<SegmentKey, uint32_t> ids;
  for (size_t i = 0; i < map.size(); ++i) {
    const SegmentKey k{map.class_ids[i], map.instance_ids[i]};
    if (k.class_id == kVoidClass) continue;
    auto it = ids.find(k);
    if (it == ids.end()) {
      const uint32_t id = static_cast<uint32_t>(ids.size()) + 1;
      if (id > kMaxSegmentId) {
        throw std::overflow_error("panoptic encode: more than 2^24-1 segments");
      }
      it = ids.emplace(k, id).first;
      CocoSegmentInfo info;
      info.id = id;
      info.category_id = categories.CategoryOf(k.class_id);
      info.iscrowd = map.IsCrowd(k);
      info.instance_id = k.instance_id;
      out.segments.push_back(info);
    }
    const auto rgb = SegmentIdToRgb(it->second);
    std::copy(rgb.begin(), rgb.end(), out.png.bytes.begin() + i * 3);
  }
  return out;
}

PanopticLabelMap DecodePanoptic(const RawImage& png,
                                const std::vector<CocoSegmentInfo>& segments,
                                const CategoryMap& categories,
                                bool crowd_as_void,
                                const std::string& image_name) {
  if (png.channels != 3) {
    throw std::runtime_error(image_name + ": panoptic PNG must be RGB");
  }
  std::unordered_map<uint32_t, std::pair<SegmentKey, bool>> lookup;
  for (const auto& s : segments) {
    if (s.id > kMaxSegmentId) {
      throw std::runtime_error(image_name + ": segment id " +
                               std::to_string(s.id) + " overflows 24 bits");
    }
    int cls;
    try {
      cls = categories.ClassOf(s.category_id);
    } catch (const std::out_of_range&) {
      throw std::runtime_error(image_name + ": unknown category " +
                               std::to_string(s.category_id));
    }
    SegmentKey key{cls, 0};
    if (categories.labels().IsThing(cls)) {
      key.instance_id =
          s.instance_id >= 0 ? s.instance_id : static_cast<int32_t>(s.id);
    }
    lookup[s.id] = {key, s.iscrowd};
  }
  PanopticLabelMap map(png.height, png.width);
  for (size_t i = 0; i < map.size(); ++i) {
    const uint32_t id = RgbToSegmentId(png.bytes[i * 3], png.bytes[i * 3 + 1],
                                       png.bytes[i * 3 + 2]);
    if (id == 0) continue;
    auto it = lookup.find(id);
    if (it == lookup.end()) {
      throw std::runtime_error(image_name + ": segment id " + std::to_string(id) +
                               " missing from segments_info");
    }
    const auto& [key, crowd] = it->second;
    if (crowd && crowd_as_void) continue;
    map.class_ids[i] = key.class_id;
    map.instance_ids[i] = key.instance_id;
  }
  if (!crowd_as_void) {
    for (const auto& [id, entry] : lookup) {
      if (entry.second) map.crowd.push_back(entry.first);
    }
    std::sort(map.crowd.begin(), map.crowd.end());
  }
  return map;
}

namespace {

std::vector<CocoSegmentInfo> ParseSegments(const json& j) {
  std::vector<CocoSegmentInfo> out;
  for (const auto& s : j) {
    CocoSegmentInfo info;
    info.id = s.at("id").get<uint32_t>();
    info.category_id = s.at("category_id").get<int>();
    info.iscrowd = s.value("iscrowd", 0) != 0;
    info.instance_id = s.value("instance_id", -1);
    out.push_back(info);
  }
  return out;
}

}  // namespace

CocoPanopticDataset::CocoPanopticDataset(const std::string& json_path,
                                         std::string png_dir,
                                         std::string image_dir, bool training)
    : png_dir_(std::move(png_dir)),
      image_dir_(std::move(image_dir)),
      training_(training) {
  std::ifstream in(json_path);
  if (!in) throw std::runtime_error("cannot open annotation file " + json_path);
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    throw std::runtime_error(json_path + ": " + e.what());
  }
  std::vector<CocoCategory> cats;
  for (const auto& c : root.at("categories")) {
    cats.push_back({c.at("id").get<int>(), c.value("name", std::string()),
                    c.value("isthing", 0) != 0});
  }
  categories_ = CategoryMap(std::move(cats));

  std::map<int, std::string> image_files;
  if (root.contains("images")) {
    for (const auto& im : root.at("images")) {
      image_files[im.at("id").get<int>()] = im.at("file_name").get<std::string>();
    }
  }
  for (const auto& a : root.at("annotations")) {
    CocoImageEntry e;
    e.image_id = a.at("image_id").get<int>();
    e.panoptic_file = a.at("file_name").get<std::string>();
    auto it = image_files.find(e.image_id);
    e.file_name = it != image_files.end() ? it->second : e.panoptic_file;
    e.segments = ParseSegments(a.at("segments_info"));
    entries_.push_back(std::move(e));
  }
}

Sample CocoPanopticDataset::Get(size_t index) const {
  const auto& e = entries_.at(index);
  const fs::path png_path = fs::path(png_dir_) / e.panoptic_file;
  if (!fs::exists(png_path)) {
    throw std::runtime_error(e.file_name + ": missing panoptic PNG " +
                             png_path.string());
  }
  Sample s;
  s.name = fs::path(e.file_name).stem().string();
  const RawImage png = ReadRawImage(png_path.string());
  s.panoptic = DecodePanoptic(png, e.segments, categories_, training_, e.file_name);
  const fs::path image_path = fs::path(image_dir_) / e.file_name;
  if (!fs::exists(image_path)) {
    throw std::runtime_error(e.file_name + ": missing image " +
                             image_path.string());
  }
  s.image = ReadImage(image_path.string());
  if (s.image.height != s.panoptic.height || s.image.width != s.panoptic.width) {
    throw std::runtime_error(e.file_name + ": image and panoptic PNG sizes differ");
  }
  s.instances = ExtractInstances(s.panoptic, categories_.labels());
  return s;
}

void ExportCocoPanoptic(const Dataset& dataset, const CategoryMap& categories,
                        const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root / "images");
  fs::create_directories(root / "panoptic");
  json images = json::array(), annotations = json::array(),
       cats = json::array();
  for (const auto& c : categories.categories()) {
    cats.push_back({{"id", c.id}, {"name", c.name}, {"isthing", c.isthing ? 1 : 0}});
  }
  for (size_t i = 0; i < dataset.size(); ++i) {
    const Sample s = dataset.Get(i);
    const std::string file = s.name + ".png";
    WritePng((root / "images" / file).string(), ToRawImage(s.image));
    const EncodedPanoptic enc = EncodePanoptic(s.panoptic, categories);
    WritePng((root / "panoptic" / file).string(), enc.png);
    json segs = json::array();
    for (const auto& seg : enc.segments) {
      segs.push_back({{"id", seg.id},
                      {"category_id", seg.category_id},
                      {"iscrowd", seg.iscrowd ? 1 : 0},
                      {"instance_id", seg.instance_id}});
    }
    images.push_back({{"id", static_cast<int>(i)},
                      {"file_name", file},
                      {"height", s.image.height},
                      {"width", s.image.width}});
    annotations.push_back({{"image_id", static_cast<int>(i)},
                           {"file_name", file},
                           {"segments_info", segs}});
  }
  json out = {{"images", images}, {"annotations", annotations},
              {"categories", cats}};
  std::ofstream f(root / "panoptic.json");
  f << out.dump(1) << "\n";
  if (!f) throw std::runtime_error("cannot write " + (root / "panoptic.json").string());
}

}  // namespace attnpan
