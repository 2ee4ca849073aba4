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

// Samples, the synthetic shapes-world generator and the joint
// scale/crop/flip augmentation.

#ifndef ATTNPAN_DATA_H_
#define ATTNPAN_DATA_H_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "attnpan/image_io.h"
#include "attnpan/panoptic.h"
#include "attnpan/random.h"

namespace attnpan {

struct Sample {
  std::string name;
  Image image;
  PanopticLabelMap panoptic;
  std::vector<GroundTruthInstance> instances;
};

// Random-access dataset. Get() must be a pure function of the index.
class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual size_t size() const = 0;
  virtual Sample Get(size_t index) const = 0;
  virtual LabelSpace labels() const = 0;
};

// Shapes-world: things are circle (0), triangle (1) and square (2); stuff is
// sky (3, a vertical gradient above a horizon row) and ground (4, textured).
struct SyntheticConfig {
  int height = 64;
  int width = 64;
  int min_instances = 1;
  int max_instances = 4;
  int min_size = 16;  // shape extent in pixels
  int max_size = 32;
  bool occlusion = true;
  // Marks a band of rows at the bottom of the image as void.
  bool void_bands = false;
  uint64_t seed = 0;

  void Validate() const;
};

enum SyntheticClass : int {
  kCircle = 0,
  kTriangle = 1,
  kSquare = 2,
  kSky = 3,
  kGround = 4,
};

inline LabelSpace SyntheticLabels() { return LabelSpace{3, 2}; }

// Deterministic in (config.seed, index); integer-only rasterization.
Sample GenerateSample(const SyntheticConfig& config, uint64_t index);

class SyntheticDataset : public Dataset {
 public:
  SyntheticDataset(SyntheticConfig config, uint64_t first_index, size_t count)
      : config_(config), first_(first_index), count_(count) {
    config_.Validate();
  }
  size_t size() const override { return count_; }
  Sample Get(size_t index) const override {
    return GenerateSample(config_, first_ + index);
  }
  LabelSpace labels() const override { return SyntheticLabels(); }
  const SyntheticConfig& config() const { return config_; }

 private:
  SyntheticConfig config_;
  uint64_t first_;
  size_t count_;
};

struct AugmentConfig {
  double scale_min = 0.5;
  double scale_max = 1.5;
  int crop_height = 64;
  int crop_width = 64;
  bool flip = false;
};

// Bilinear image / nearest-neighbor labels rescale to round(size * factor).
Sample ScaleSample(const Sample& sample, double factor);

// Crops a (height, width) window at (top, left); areas outside the source
// become void label and zero pixels. Instances are re-derived from the
// cropped map, so fully cropped-out instances disappear.
Sample CropSample(const Sample& sample, int top, int left, int height,
                  int width);

Sample FlipSample(const Sample& sample);

// Random scale, random crop (padding when the scaled image is smaller) and,
// when enabled, a horizontal flip with probability 0.5.
Sample Augment(const Sample& sample, const AugmentConfig& config, Rng& rng);

// Checks the sample invariants: instance masks agree with the label map and
// boxes are tight hulls. Returns an empty string when consistent.
std::string CheckSampleConsistency(const Sample& sample,
                                   const LabelSpace& labels);

}  // namespace attnpan

#endif  // ATTNPAN_DATA_H_
