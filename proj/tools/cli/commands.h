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

// The train / eval / predict / benchmark / ablate commands. Each Run*
// function works on a resolved config and throws ConfigError for usage
// problems and other exceptions for runtime failures; RunCli maps those to
// exit codes 1 and 2.

#ifndef ATTNPAN_TOOLS_CLI_COMMANDS_H_
#define ATTNPAN_TOOLS_CLI_COMMANDS_H_

#include <iosfwd>
#include <string>
#include <vector>

#include "attnpan/metrics.h"
#include "cli/run_config.h"

namespace attnpan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Trains, writes checkpoints/final.ckpt, metrics.jsonl and
// final_metrics.json under config.out_dir; returns the final val report.
PQReport RunTrain(RunConfig config, std::ostream& out);

// Evaluates a checkpoint (or the ground truth itself with
// eval.predictor = groundtruth) on the configured split and writes
// eval_<split>.json.
PQReport RunEval(RunConfig config, const std::string& checkpoint,
                 std::ostream& out);

// Writes <stem>_panoptic.png (segment ids as R + 256 G + 65536 B),
// <stem>_segments.json and <stem>_overlay.png per image, plus grayscale
// attention masks with predict.dump_masks.
void RunPredict(RunConfig config, const std::string& checkpoint,
                const std::vector<std::string>& images, std::ostream& out);

struct StageTiming {
  std::string name;
  double mean_ms = 0;
};

struct BenchmarkReport {
  int height = 0;
  int width = 0;
  int warmup = 0;
  std::vector<double> samples_ms;  // one per timed iteration
  double mean_ms = 0;
  double std_ms = 0;
  std::vector<StageTiming> stages;
  std::string merging = "n/a";

  std::string ToJson() const;
};

// Times Predictor::Predict on a seeded random image after warm-up runs.
// Throws std::logic_error if the timed path contains a post-network merge
// stage.
BenchmarkReport RunBenchmark(RunConfig config, const std::string& checkpoint,
                             std::ostream& out);

struct AblationResultRow {
  std::string name;
  std::string settings;  // shuffle / masks / boxes / N_att / C_att summary
  PQReport report;
};

// Trains and evaluates one model per ablation row (just the base config when
// no rows are given) and writes ablation.json and ablation.txt.
std::vector<AblationResultRow> RunAblate(RunConfig config, std::ostream& out);

std::string FormatAblationTable(const std::vector<AblationResultRow>& rows);

// Full command-line entry point: `attnpan <command> [flags]`.
int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err);

}  // namespace attnpan::cli

#endif  // ATTNPAN_TOOLS_CLI_COMMANDS_H_
