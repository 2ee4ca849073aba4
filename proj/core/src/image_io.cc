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

#include "attnpan/image_io.h"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace attnpan {
namespace {

RawImage ReadPng(const std::string& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw std::runtime_error("cannot read PNG " + path + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  RawImage out;
  out.height = static_cast<int>(img.height);
  out.width = static_cast<int>(img.width);
  out.channels = 3;
  out.bytes.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.bytes.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw std::runtime_error("cannot decode PNG " + path + ": " + msg);
  }
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
};

void JpegErrorExit(j_common_ptr info) {
  auto* err = reinterpret_cast<JpegErrorManager*>(info->err);
  std::longjmp(err->jump, 1);
}

RawImage ReadJpeg(const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"),
                                             &std::fclose);
  if (!file) throw std::runtime_error("cannot open " + path);
  jpeg_decompress_struct cinfo{};
  JpegErrorManager jerr{};
  cinfo.err = jpeg_std_error(&jerr.base);
  jerr.base.error_exit = JpegErrorExit;
  RawImage out;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw std::runtime_error("cannot decode JPEG " + path);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = static_cast<int>(cinfo.output_width);
  out.height = static_cast<int>(cinfo.output_height);
  out.channels = 3;
  out.bytes.resize(static_cast<size_t>(out.width) * out.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.bytes.data() +
                   static_cast<size_t>(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

png_image MakePngHeader(const RawImage& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw std::invalid_argument("PNG writer supports 1 or 3 channels");
  }
  if (image.bytes.size() !=
      static_cast<size_t>(image.width) * image.height * image.channels) {
    throw std::invalid_argument("PNG writer: buffer size mismatch");
  }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  return img;
}

}  // namespace

RawImage ReadRawImage(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image " + path);
  unsigned char sig[3] = {0, 0, 0};
  in.read(reinterpret_cast<char*>(sig), 3);
  if (sig[0] == 0xFF && sig[1] == 0xD8) return ReadJpeg(path);
  return ReadPng(path);
}

void WritePng(const std::string& path, const RawImage& image) {
  png_image img = MakePngHeader(image);
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.bytes.data(), 0,
                               nullptr)) {
    throw std::runtime_error("cannot write PNG " + path + ": " + img.message);
  }
}

std::vector<uint8_t> EncodePng(const RawImage& image) {
  png_image img = MakePngHeader(image);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.bytes.data(), 0,
                                 nullptr)) {
    throw std::runtime_error(std::string("PNG encode failed: ") + img.message);
  }
  std::vector<uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0,
                                 image.bytes.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("PNG encode failed: ") + img.message);
  }
  out.resize(size);
  return out;
}

Image ToFloatImage(const RawImage& raw) {
  Image out(raw.height, raw.width);
  for (int y = 0; y < raw.height; ++y) {
    for (int x = 0; x < raw.width; ++x) {
      const size_t i = static_cast<size_t>(y) * raw.width + x;
      for (int c = 0; c < 3; ++c) {
        const uint8_t v = raw.channels == 3 ? raw.bytes[i * 3 + c] : raw.bytes[i];
        out.pixel(y, x)[c] = v / 255.0f;
      }
    }
  }
  return out;
}

RawImage ToRawImage(const Image& image) {
  RawImage out;
  out.height = image.height;
  out.width = image.width;
  out.channels = 3;
  out.bytes.resize(image.rgb.size());
  for (size_t i = 0; i < image.rgb.size(); ++i) {
    const float v = std::clamp(image.rgb[i], 0.0f, 1.0f);
    out.bytes[i] = static_cast<uint8_t>(std::lround(v * 255.0f));
  }
  return out;
}

Image ReadImage(const std::string& path) {
  return ToFloatImage(ReadRawImage(path));
}

}  // namespace attnpan
