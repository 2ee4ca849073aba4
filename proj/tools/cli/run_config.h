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

// Run configuration: a plain-text file of `section.key = value` lines
// (`#` starts a comment). Unknown keys are rejected. Later assignments win,
// so command-line overrides are applied after the file.

#ifndef ATTNPAN_TOOLS_CLI_RUN_CONFIG_H_
#define ATTNPAN_TOOLS_CLI_RUN_CONFIG_H_

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "attnpan/data.h"
#include "attnpan/model.h"
#include "attnpan/pipeline.h"
#include "attnpan/training.h"

namespace attnpan::cli {

// Usage and configuration problems (exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DataSource { kSynthetic, kCoco };
enum class EvalPredictor { kModel, kGroundTruth };

struct CocoPaths {
  std::string json;
  std::string panoptic_dir;
  std::string image_dir;
};

struct AblationRow {
  std::string name;
  std::vector<std::pair<std::string, std::string>> overrides;
};

struct RunConfig {
  // Model; num_things / num_stuff come from the dataset.
  ModelConfig model;
  PipelineOptions pipeline;
  TrainConfig train;

  DataSource source = DataSource::kSynthetic;
  SyntheticConfig synthetic;
  int train_count = 2000;
  int val_count = 100;
  uint64_t val_first_index = 1000000;  // synthetic val indices start here
  CocoPaths coco_train;
  CocoPaths coco_val;

  uint64_t seed = 0;
  std::string out_dir = "runs/default";

  std::string eval_split = "val";
  int eval_max_images = 0;
  EvalPredictor eval_predictor = EvalPredictor::kModel;

  int benchmark_height = 256;
  int benchmark_width = 512;
  int benchmark_iterations = 20;
  int benchmark_warmup = 10;

  bool predict_dump_masks = false;
  double predict_alpha = 0.5;

  std::vector<AblationRow> ablate_rows;
};

// Sets one key from its textual value. Throws ConfigError on unknown keys or
// malformed values.
void SetKey(RunConfig& config, const std::string& key, const std::string& value);

// Parses `key = value` lines on top of `config`. `origin` names the source in
// error messages.
void ApplyConfigText(RunConfig& config, const std::string& text,
                     const std::string& origin);
void ApplyConfigFile(RunConfig& config, const std::string& path);

// Every key with its current value, one `key = value` line each, in a stable
// order. Parsing the output reproduces the config.
std::string SerializeConfig(const RunConfig& config);

// All recognized keys.
std::vector<std::string> ConfigKeys();

// Checks value ranges and that referenced dataset paths exist. Throws
// ConfigError.
void ValidateConfig(const RunConfig& config);

// Ablation row syntax: `name: key=value, key=value; name2: ...`. A row
// without overrides (e.g. `defaults`) runs the base config.
std::vector<AblationRow> ParseAblationRows(const std::string& text);

// Loads the configured train / val datasets and fills model.num_things and
// model.num_stuff from their label space.
struct Datasets {
  std::unique_ptr<Dataset> train;
  std::unique_ptr<Dataset> val;
};
Datasets LoadDatasets(RunConfig& config);

}  // namespace attnpan::cli

#endif  // ATTNPAN_TOOLS_CLI_RUN_CONFIG_H_
