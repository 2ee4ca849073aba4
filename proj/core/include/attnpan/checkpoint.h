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

// Binary parameter checkpoints. Layout (little endian), see
// docs/checkpoint_format.md:
//
//   char[4] magic "APCK", u32 version (1), u32 metadata length, metadata
//   bytes, u32 entry count, then per entry: u32 name length, name bytes,
//   u32 rank (4), u32 dims[rank], float32 values[prod(dims)].

#ifndef ATTNPAN_CHECKPOINT_H_
#define ATTNPAN_CHECKPOINT_H_

#include <string>

#include "attnpan/nn.h"

namespace attnpan {

inline constexpr char kCheckpointMagic[4] = {'A', 'P', 'C', 'K'};
inline constexpr uint32_t kCheckpointVersion = 1;

// Writes every entry of params (running statistics included). metadata is an
// opaque string stored alongside, typically the resolved run configuration.
void SaveCheckpoint(const std::string& path, const ParameterList<float>& params,
                    const std::string& metadata = "");

// Loads values into params. Every parameter must be present with the same
// shape and the checkpoint must hold no extra entries; otherwise throws
// std::runtime_error naming the offending entry. Returns the metadata.
std::string LoadCheckpoint(const std::string& path,
                           const ParameterList<float>& params);

// Reads only the metadata string.
std::string ReadCheckpointMetadata(const std::string& path);

}  // namespace attnpan

#endif  // ATTNPAN_CHECKPOINT_H_
