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

#include "attnpan/checkpoint.h"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <vector>

namespace attnpan {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void WriteU32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), is_(path, std::ios::binary) {
    if (!is_) throw std::runtime_error("cannot open checkpoint " + path);
  }

  uint32_t U32() {
    uint32_t v = 0;
    Bytes(&v, sizeof(v));
    return v;
  }
  std::string String(uint32_t limit) {
    const uint32_t n = U32();
    if (n > limit) Fail("string length " + std::to_string(n) + " too large");
    std::string s(n, '\0');
    Bytes(s.data(), n);
    return s;
  }
  void Bytes(void* dst, size_t n) {
    is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is_.gcount()) != n) Fail("truncated file");
  }
  bool AtEnd() { return is_.peek() == std::char_traits<char>::eof(); }
  [[noreturn]] void Fail(const std::string& what) {
    throw std::runtime_error("checkpoint " + path_ + ": " + what);
  }

 private:
  std::string path_;
  std::ifstream is_;
};

std::string ReadHeader(Reader& r) {
  char magic[4];
  r.Bytes(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) r.Fail("bad magic");
  const uint32_t version = r.U32();
  if (version != kCheckpointVersion) {
    r.Fail("unsupported version " + std::to_string(version));
  }
  return r.String(1u << 24);
}

}  // namespace

void SaveCheckpoint(const std::string& path, const ParameterList<float>& params,
                    const std::string& metadata) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint " + tmp);
    os.write(kCheckpointMagic, 4);
    WriteU32(os, kCheckpointVersion);
    WriteU32(os, static_cast<uint32_t>(metadata.size()));
    os.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
    WriteU32(os, static_cast<uint32_t>(params.size()));
    for (const auto* param : params) {
      WriteU32(os, static_cast<uint32_t>(param->name.size()));
      os.write(param->name.data(),
               static_cast<std::streamsize>(param->name.size()));
      const Shape4& s = param->value.shape();
      WriteU32(os, 4);
      for (int d : {s.n, s.h, s.w, s.c}) WriteU32(os, static_cast<uint32_t>(d));
      os.write(reinterpret_cast<const char*>(param->value.data()),
               static_cast<std::streamsize>(param->value.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("error writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::string LoadCheckpoint(const std::string& path,
                           const ParameterList<float>& params) {
  Reader r(path);
  std::string metadata = ReadHeader(r);
  const uint32_t count = r.U32();

  std::map<std::string, Parameter<float>*> by_name;
  for (auto* p : params) by_name[p->name] = p;

  // Read everything before touching params so a bad file leaves them intact.
  std::map<std::string, std::vector<float>> values;
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = r.String(4096);
    const uint32_t rank = r.U32();
    if (rank != 4) r.Fail("entry " + name + " has rank " + std::to_string(rank));
    Shape4 shape;
    shape.n = static_cast<int>(r.U32());
    shape.h = static_cast<int>(r.U32());
    shape.w = static_cast<int>(r.U32());
    shape.c = static_cast<int>(r.U32());
    auto it = by_name.find(name);
    if (it == by_name.end()) r.Fail("unexpected entry " + name);
    if (!(it->second->value.shape() == shape)) {
      r.Fail("entry " + name + " has shape " + shape.ToString() +
             ", model expects " + it->second->value.shape().ToString());
    }
    if (values.count(name)) r.Fail("duplicate entry " + name);
    std::vector<float> v(shape.size());
    r.Bytes(v.data(), v.size() * sizeof(float));
    values[name] = std::move(v);
  }
  if (!r.AtEnd()) r.Fail("trailing bytes");
  for (const auto& [name, p] : by_name) {
    if (!values.count(name)) r.Fail("missing entry " + name);
  }
  for (auto& [name, v] : values) {
    std::copy(v.begin(), v.end(), by_name[name]->value.data());
  }
  return metadata;
}

std::string ReadCheckpointMetadata(const std::string& path) {
  Reader r(path);
  return ReadHeader(r);
}

}  // namespace attnpan
