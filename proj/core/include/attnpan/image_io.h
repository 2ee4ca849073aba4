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

#ifndef ATTNPAN_IMAGE_IO_H_
#define ATTNPAN_IMAGE_IO_H_

#include <cstdint>
#include <string>
#include <vector>

namespace attnpan {

// Float RGB image, row-major HWC, values nominally in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> rgb;

  Image() = default;
  Image(int h, int w) : height(h), width(w), rgb(static_cast<size_t>(h) * w * 3, 0.f) {}
  float* pixel(int y, int x) { return rgb.data() + (static_cast<size_t>(y) * width + x) * 3; }
  const float* pixel(int y, int x) const {
    return rgb.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
  bool operator==(const Image&) const = default;
};

// 8-bit interleaved pixels.
struct RawImage {
  int height = 0;
  int width = 0;
  int channels = 3;  // 1 (gray) or 3 (RGB)
  std::vector<uint8_t> bytes;
  bool operator==(const RawImage&) const = default;
};

// PNG via libpng; JPEG via libjpeg (chosen by file signature). Output is
// always 3-channel. Throws std::runtime_error naming the path on failure.
RawImage ReadRawImage(const std::string& path);
void WritePng(const std::string& path, const RawImage& image);

// Encodes to an in-memory PNG byte stream.
std::vector<uint8_t> EncodePng(const RawImage& image);

Image ToFloatImage(const RawImage& raw);
RawImage ToRawImage(const Image& image);

Image ReadImage(const std::string& path);

}  // namespace attnpan

#endif  // ATTNPAN_IMAGE_IO_H_
