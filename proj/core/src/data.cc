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

#include "attnpan/data.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "attnpan/nn.h"

namespace attnpan {

void SyntheticConfig::Validate() const {
  if (height <= 0 || width <= 0) {
    throw std::invalid_argument("synthetic: image size must be positive");
  }
  if (min_instances < 0 || max_instances < min_instances) {
    throw std::invalid_argument("synthetic: bad instance count range");
  }
  if (min_size < 2 || max_size < min_size || max_size > std::min(height, width)) {
    throw std::invalid_argument("synthetic: bad shape size range");
  }
}

namespace {

using Rgb = std::array<float, 3>;

constexpr std::array<Rgb, 6> kThingPalette = {{
    {0.90f, 0.15f, 0.15f},
    {0.95f, 0.85f, 0.10f},
    {0.85f, 0.20f, 0.80f},
    {1.00f, 0.55f, 0.10f},
    {0.97f, 0.97f, 0.97f},
    {0.10f, 0.10f, 0.10f},
}};

constexpr int kPlacementAttempts = 20;

// Integer-only shape membership. The shape occupies the size x size square
// with top-left (x0, y0); doubled coordinates keep pixel centers integral.
bool InsideShape(int cls, int x0, int y0, int size, int x, int y) {
  if (x < x0 || x >= x0 + size || y < y0 || y >= y0 + size) return false;
  const int px2 = 2 * x + 1 - (2 * x0 + size);
  const int py2 = 2 * y + 1 - (2 * y0 + size);
  switch (cls) {
    case kCircle:
      return px2 * px2 + py2 * py2 <= size * size;
    case kTriangle: {
      const int row = y - y0;  // apex at the top row
      return std::abs(px2) <= row + 1;
    }
    default:
      return true;
  }
}

float Clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

// Recomputes masks and tight boxes for the given segment keys.
std::vector<GroundTruthInstance> RederiveInstances(
    const PanopticLabelMap& map, const std::vector<SegmentKey>& keys) {
  std::map<SegmentKey, size_t> index;
  std::vector<GroundTruthInstance> out;
  for (const auto& k : keys) {
    GroundTruthInstance inst;
    inst.class_id = k.class_id;
    inst.instance_id = k.instance_id;
    inst.height = map.height;
    inst.width = map.width;
    inst.mask.assign(map.size(), 0);
    index.emplace(k, out.size());
    out.push_back(std::move(inst));
  }
  for (size_t i = 0; i < map.size(); ++i) {
    auto it = index.find({map.class_ids[i], map.instance_ids[i]});
    if (it != index.end()) out[it->second].mask[i] = 1;
  }
  std::vector<GroundTruthInstance> kept;
  for (auto& inst : out) {
    if (TightBox(inst.mask, inst.height, inst.width, &inst.box)) {
      kept.push_back(std::move(inst));
    }
  }
  return kept;
}

std::vector<SegmentKey> InstanceKeys(const Sample& s) {
  std::vector<SegmentKey> keys;
  for (const auto& inst : s.instances) {
    keys.push_back({inst.class_id, inst.instance_id});
  }
  return keys;
}

}  // namespace

Sample GenerateSample(const SyntheticConfig& c, uint64_t index) {
  Rng rng(MixSeed(c.seed, index, 0x5a3d));
  const int h = c.height, w = c.width;
  Sample s;
  s.name = "synthetic_" + std::to_string(index);
  s.image = Image(h, w);
  s.panoptic = PanopticLabelMap(h, w);

  // Stuff: sky gradient above the horizon, textured ground below.
  const int horizon = rng.Int(h / 4, (3 * h) / 4);
  const Rgb ground_base = rng.Bernoulli(0.5) ? Rgb{0.45f, 0.33f, 0.20f}
                                             : Rgb{0.30f, 0.50f, 0.22f};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float* px = s.image.pixel(y, x);
      if (y < horizon) {
        const float t = static_cast<float>(y) / h;
        px[0] = 0.35f + 0.40f * t;
        px[1] = 0.55f + 0.30f * t;
        px[2] = 0.95f;
        s.panoptic.Set(y, x, {kSky, 0});
      } else {
        const float stripe = ((y / 3 + x / 5) % 2) ? 0.06f : -0.06f;
        const float noise = static_cast<float>(rng.Uniform(-0.06, 0.06));
        for (int ch = 0; ch < 3; ++ch) {
          px[ch] = Clamp01(ground_base[ch] + stripe + noise);
        }
        s.panoptic.Set(y, x, {kGround, 0});
      }
    }
  }

  // Things, painted back to front.
  const int count = rng.Int(c.min_instances, c.max_instances);
  std::array<int, 3> next_id = {1, 1, 1};
  std::vector<uint8_t> occupied(static_cast<size_t>(h) * w, 0);
  for (int k = 0; k < count; ++k) {
    const int cls = rng.Int(0, 2);
    const int size = rng.Int(c.min_size, c.max_size);
    const Rgb color = kThingPalette[rng.Below(kThingPalette.size())];
    const float tint = static_cast<float>(rng.Uniform(-0.05, 0.05));
    int x0 = 0, y0 = 0;
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      x0 = rng.Int(0, w - size);
      y0 = rng.Int(0, h - size);
      placed = true;
      if (c.occlusion) break;
      for (int y = y0; y < y0 + size && placed; ++y) {
        for (int x = x0; x < x0 + size; ++x) {
          if (InsideShape(cls, x0, y0, size, x, y) &&
              occupied[static_cast<size_t>(y) * w + x]) {
            placed = false;
            break;
          }
        }
      }
    }
    if (!placed) continue;
    const SegmentKey key{cls, next_id[cls]++};
    for (int y = y0; y < y0 + size; ++y) {
      for (int x = x0; x < x0 + size; ++x) {
        if (!InsideShape(cls, x0, y0, size, x, y)) continue;
        float* px = s.image.pixel(y, x);
        for (int ch = 0; ch < 3; ++ch) px[ch] = Clamp01(color[ch] + tint);
        s.panoptic.Set(y, x, key);
        occupied[static_cast<size_t>(y) * w + x] = 1;
      }
    }
  }

  if (c.void_bands) {
    for (int y = h - std::max(1, h / 8); y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        s.panoptic.Set(y, x, {kVoidClass, 0});
        float* px = s.image.pixel(y, x);
        px[0] = px[1] = px[2] = 0.5f;
      }
    }
  }

  s.instances = ExtractInstances(s.panoptic, SyntheticLabels());
  return s;
}

Sample ScaleSample(const Sample& sample, double factor) {
  if (!(factor > 0)) throw std::invalid_argument("ScaleSample: factor <= 0");
  const int h = sample.image.height, w = sample.image.width;
  const int nh = std::max(1, static_cast<int>(std::lround(h * factor)));
  const int nw = std::max(1, static_cast<int>(std::lround(w * factor)));

  Tensorf src(1, h, w, 3);
  std::copy(sample.image.rgb.begin(), sample.image.rgb.end(), src.data());
  Tensorf dst = ResizeBilinear(src, nh, nw);

  Sample out;
  out.name = sample.name;
  out.image = Image(nh, nw);
  std::copy(dst.storage().begin(), dst.storage().end(), out.image.rgb.begin());
  out.panoptic = PanopticLabelMap(nh, nw);
  out.panoptic.crowd = sample.panoptic.crowd;
  for (int y = 0; y < nh; ++y) {
    const int sy = std::min(h - 1, static_cast<int>((y + 0.5) * h / nh));
    for (int x = 0; x < nw; ++x) {
      const int sx = std::min(w - 1, static_cast<int>((x + 0.5) * w / nw));
      out.panoptic.Set(y, x, sample.panoptic.at(sy, sx));
    }
  }
  out.instances = RederiveInstances(out.panoptic, InstanceKeys(sample));
  return out;
}

Sample CropSample(const Sample& sample, int top, int left, int height,
                  int width) {
  Sample out;
  out.name = sample.name;
  out.image = Image(height, width);
  out.panoptic = PanopticLabelMap(height, width);
  out.panoptic.crowd = sample.panoptic.crowd;
  for (int y = 0; y < height; ++y) {
    const int sy = y + top;
    if (sy < 0 || sy >= sample.image.height) continue;
    for (int x = 0; x < width; ++x) {
      const int sx = x + left;
      if (sx < 0 || sx >= sample.image.width) continue;
      std::copy_n(sample.image.pixel(sy, sx), 3, out.image.pixel(y, x));
      out.panoptic.Set(y, x, sample.panoptic.at(sy, sx));
    }
  }
  out.instances = RederiveInstances(out.panoptic, InstanceKeys(sample));
  return out;
}

Sample FlipSample(const Sample& sample) {
  const int h = sample.image.height, w = sample.image.width;
  Sample out;
  out.name = sample.name;
  out.image = Image(h, w);
  out.panoptic = PanopticLabelMap(h, w);
  out.panoptic.crowd = sample.panoptic.crowd;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::copy_n(sample.image.pixel(y, w - 1 - x), 3, out.image.pixel(y, x));
      out.panoptic.Set(y, x, sample.panoptic.at(y, w - 1 - x));
    }
  }
  out.instances = RederiveInstances(out.panoptic, InstanceKeys(sample));
  return out;
}

Sample Augment(const Sample& sample, const AugmentConfig& config, Rng& rng) {
  const double factor = rng.Uniform(config.scale_min, config.scale_max);
  Sample scaled = ScaleSample(sample, factor);
  auto offset = [&](int have, int want) {
    return have >= want ? rng.Int(0, have - want) : -rng.Int(0, want - have);
  };
  const int top = offset(scaled.image.height, config.crop_height);
  const int left = offset(scaled.image.width, config.crop_width);
  Sample out =
      CropSample(scaled, top, left, config.crop_height, config.crop_width);
  if (config.flip && rng.Bernoulli(0.5)) out = FlipSample(out);
  return out;
}

std::string CheckSampleConsistency(const Sample& sample,
                                   const LabelSpace& labels) {
  std::ostringstream err;
  const auto& map = sample.panoptic;
  if (map.height != sample.image.height || map.width != sample.image.width) {
    return "image/label size mismatch";
  }
  std::vector<uint8_t> covered(map.size(), 0);
  std::set<SegmentKey> seen;
  for (const auto& inst : sample.instances) {
    const SegmentKey key{inst.class_id, inst.instance_id};
    if (!seen.insert(key).second) {
      err << "duplicate instance id " << inst.instance_id << " in class "
          << inst.class_id << "; ";
    }
    for (size_t i = 0; i < map.size(); ++i) {
      const bool in_map =
          map.class_ids[i] == key.class_id && map.instance_ids[i] == key.instance_id;
      if (in_map != (inst.mask[i] != 0)) {
        err << "instance mask disagrees with label map; ";
        break;
      }
      if (inst.mask[i]) covered[i] = 1;
    }
    Box hull;
    if (!TightBox(inst.mask, map.height, map.width, &hull) || !(hull == inst.box)) {
      err << "box is not the tight hull; ";
    }
  }
  for (size_t i = 0; i < map.size(); ++i) {
    const SegmentKey k{map.class_ids[i], map.instance_ids[i]};
    if (labels.IsThing(k.class_id) && !map.IsCrowd(k) && !covered[i]) {
      err << "thing pixel not covered by any instance; ";
      break;
    }
  }
  return err.str();
}

}  // namespace attnpan
