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

#include "cli/commands.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <glog/logging.h>

#include "CLI11.hpp"
#include "attnpan/checkpoint.h"
#include "attnpan/coco.h"
#include "attnpan/fusion.h"
#include "attnpan/image_io.h"
#include "attnpan/pipeline.h"
#include "attnpan/random.h"
#include "attnpan/training.h"
#include "json.hpp"

namespace attnpan::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json ConfigJson(const RunConfig& config) {
  json j = json::object();
  std::istringstream is(SerializeConfig(config));
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find(" = ");
    j[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return j;
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

// Creates the output directory and records the resolved config.
void PrepareOutput(const RunConfig& config, const std::string& command,
                   const json& extra = json::object()) {
  fs::create_directories(config.out_dir);
  const fs::path dir(config.out_dir);
  WriteText(dir / (command + "_config.txt"), SerializeConfig(config));
  json manifest = {{"command", command}, {"config", ConfigJson(config)}};
  for (const auto& [k, v] : extra.items()) manifest[k] = v;
  WriteText(dir / (command + "_manifest.json"), manifest.dump(2) + "\n");
}

std::unique_ptr<PanopticModel> BuildModel(const RunConfig& config,
                                          const std::string& checkpoint) {
  auto model = std::make_unique<PanopticModel>(config.model);
  model->Init(config.seed);
  if (!checkpoint.empty()) LoadCheckpoint(checkpoint, model->Parameters());
  return model;
}

CategoryMap CategoriesFor(const RunConfig& config, const Datasets& data) {
  if (config.source == DataSource::kSynthetic) return SyntheticCategories();
  return static_cast<const CocoPanopticDataset&>(*data.train).categories();
}

std::vector<std::string> ClassNames(const CategoryMap& categories) {
  std::vector<std::string> names;
  for (int c = 0; c < categories.labels().num_classes(); ++c) {
    const int id = categories.CategoryOf(c);
    for (const auto& cat : categories.categories()) {
      if (cat.id == id) names.push_back(cat.name);
    }
  }
  return names;
}

void RequireCheckpoint(const std::string& checkpoint) {
  if (checkpoint.empty()) throw ConfigError("--checkpoint is required");
  if (!fs::exists(checkpoint)) {
    throw ConfigError("checkpoint '" + checkpoint + "' does not exist");
  }
}

std::string Settings(const RunConfig& c) {
  std::ostringstream os;
  os << (c.pipeline.shuffle ? "shuffle" : "no-shuffle") << ", "
     << (c.pipeline.masks.hard ? "hard" : "soft") << ", "
     << (c.pipeline.detector == DetectorMode::kOracle ? "gt-boxes" : "detector")
     << ", N_att=" << c.model.num_att << ", C_att=" << c.model.c_att;
  return os.str();
}

}  // namespace

// --------------------------------------------------------------------- train

PQReport RunTrain(RunConfig config, std::ostream& out) {
  ValidateConfig(config);
  Datasets data = LoadDatasets(config);
  PrepareOutput(config, "train");
  auto model = BuildModel(config, "");
  Trainer trainer(*model, *data.train, config.train, config.pipeline, config.seed);
  const auto start = std::chrono::steady_clock::now();
  PQReport report = trainer.Run(data.val.get(), config.out_dir, SerializeConfig(config));
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out << "trained " << config.train.steps << " steps in " << secs << " s\n"
      << report.FormatTable(ClassNames(CategoriesFor(config, data)));
  return report;
}

// ---------------------------------------------------------------------- eval

PQReport RunEval(RunConfig config, const std::string& checkpoint,
                 std::ostream& out) {
  ValidateConfig(config);
  if (config.eval_predictor == EvalPredictor::kModel) RequireCheckpoint(checkpoint);
  Datasets data = LoadDatasets(config);
  const Dataset& split = config.eval_split == "train" ? *data.train : *data.val;
  PrepareOutput(config, "eval", {{"checkpoint", checkpoint}});

  PQReport report;
  if (config.eval_predictor == EvalPredictor::kModel) {
    auto model = BuildModel(config, checkpoint);
    report = Evaluate(*model, split, config.pipeline,
                      static_cast<size_t>(config.eval_max_images));
  } else {
    const size_t n = config.eval_max_images == 0
                         ? split.size()
                         : std::min<size_t>(config.eval_max_images, split.size());
    std::vector<PQReport> reports;
    for (size_t i = 0; i < n; ++i) {
      const Sample s = split.Get(i);
      reports.push_back(ComputePQ(s.panoptic, s.panoptic, split.labels()));
    }
    report = AggregateReports(reports);
  }
  const fs::path dir(config.out_dir);
  WriteText(dir / ("eval_" + config.eval_split + ".json"), report.ToJson() + "\n");
  const std::string table = report.FormatTable(ClassNames(CategoriesFor(config, data)));
  WriteText(dir / ("eval_" + config.eval_split + ".txt"), table);
  out << table;
  return report;
}

// ------------------------------------------------------------------- predict

void RunPredict(RunConfig config, const std::string& checkpoint,
                const std::vector<std::string>& images, std::ostream& out) {
  ValidateConfig(config);
  RequireCheckpoint(checkpoint);
  if (images.empty()) throw ConfigError("predict needs at least one image path");
  if (config.pipeline.detector == DetectorMode::kOracle) {
    throw ConfigError("predict needs detector.mode = learned (no ground truth)");
  }
  std::set<std::string> stems;
  for (const auto& path : images) {
    if (!fs::exists(path)) throw ConfigError("image '" + path + "' does not exist");
    if (!stems.insert(fs::path(path).stem().string()).second) {
      throw ConfigError("duplicate image name " + fs::path(path).stem().string());
    }
  }
  Datasets data = LoadDatasets(config);
  const CategoryMap categories = CategoriesFor(config, data);
  PrepareOutput(config, "predict", {{"checkpoint", checkpoint}, {"images", images}});
  auto model = BuildModel(config, checkpoint);
  Predictor predictor(*model, config.pipeline);
  const fs::path dir(config.out_dir);

  for (const auto& path : images) {
    const std::string stem = fs::path(path).stem().string();
    const Image image = ReadImage(path);
    const auto start = std::chrono::steady_clock::now();
    const Prediction p = predictor.Predict(image);
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - start)
                          .count();
    const EncodedPanoptic enc = EncodePanoptic(p.panoptic, categories);
    WritePng((dir / (stem + "_panoptic.png")).string(), enc.png);
    json segs = json::array();
    for (const auto& s : enc.segments) {
      segs.push_back({{"id", s.id},
                      {"category_id", s.category_id},
                      {"iscrowd", s.iscrowd ? 1 : 0},
                      {"instance_id", s.instance_id}});
    }
    json dets = json::array();
    for (const auto& d : p.detections) {
      dets.push_back({{"class_id", d.class_id},
                      {"score", d.score},
                      {"box", {d.box.x0(), d.box.y0(), d.box.x1(), d.box.y1()}}});
    }
    WriteText(dir / (stem + "_segments.json"),
              json({{"file_name", fs::path(path).filename().string()},
                    {"segments_info", segs},
                    {"detections", dets},
                    {"milliseconds", ms}})
                      .dump(2) +
                  "\n");
    WriteOverlay((dir / (stem + "_overlay.png")).string(), image, p.panoptic,
                 config.predict_alpha);
    if (config.predict_dump_masks) {
      const AttentionStack& st = p.stack;
      for (int s = 0; s < st.num_slots; ++s) {
        if (st.IsEmpty(s)) continue;
        RawImage gray{st.height, st.width, 1,
                      std::vector<uint8_t>(st.plane())};
        const auto m = st.mask(s);
        for (size_t i = 0; i < m.size(); ++i) {
          gray.bytes[i] = static_cast<uint8_t>(
              std::lround(255.0 * std::clamp(m[i] / config.model.c_att, 0.0, 1.0)));
        }
        WritePng((dir / (stem + "_mask" + std::to_string(s) + ".png")).string(), gray);
      }
    }
    LOG(INFO) << path << ": " << ms << " ms, " << p.detections.size()
              << " detections";
    out << stem << ": " << ms << " ms\n";
  }
}

// ----------------------------------------------------------------- benchmark

std::string BenchmarkReport::ToJson() const {
  json stages_j = json::array();
  for (const auto& s : stages) {
    stages_j.push_back({{"name", s.name}, {"mean_ms", s.mean_ms}});
  }
  return json({{"height", height},
               {"width", width},
               {"warmup", warmup},
               {"iterations", samples_ms.size()},
               {"inference_ms_mean", mean_ms},
               {"inference_ms_std", std_ms},
               {"merging_ms", merging},
               {"total_ms_mean", mean_ms},
               {"samples_ms", samples_ms},
               {"stages", stages_j}})
      .dump(2);
}

BenchmarkReport RunBenchmark(RunConfig config, const std::string& checkpoint,
                             std::ostream& out) {
  ValidateConfig(config);
  if (!checkpoint.empty()) RequireCheckpoint(checkpoint);
  Datasets data = LoadDatasets(config);  // fixes the class layout
  PrepareOutput(config, "benchmark", {{"checkpoint", checkpoint}});
  auto model = BuildModel(config, checkpoint);
  Predictor predictor(*model, config.pipeline);

  BenchmarkReport report;
  report.height = config.benchmark_height;
  report.width = config.benchmark_width;
  report.warmup = config.benchmark_warmup;
  Image image(report.height, report.width);
  Rng rng(MixSeed(config.seed, 0xbe9c));
  for (auto& v : image.rgb) v = static_cast<float>(rng.Uniform());

  for (int i = 0; i < config.benchmark_warmup; ++i) predictor.Predict(image);
  std::vector<std::vector<double>> stage_ms;
  std::vector<std::string> stage_names;
  for (int i = 0; i < config.benchmark_iterations; ++i) {
    const auto start = std::chrono::steady_clock::now();
    const Prediction p = predictor.Predict(image);
    report.samples_ms.push_back(std::chrono::duration<double, std::milli>(
                                    std::chrono::steady_clock::now() - start)
                                    .count());
    for (const auto& st : p.trace) {
      if (st.kind == StageKind::kPostNetworkMerge) {
        throw std::logic_error("timed path contains merge stage " + st.name);
      }
    }
    if (stage_names.empty()) {
      for (const auto& st : p.trace) stage_names.push_back(st.name);
      stage_ms.resize(stage_names.size());
    }
    for (size_t k = 0; k < p.trace.size() && k < stage_ms.size(); ++k) {
      stage_ms[k].push_back(p.trace[k].milliseconds);
    }
  }
  const double n = static_cast<double>(report.samples_ms.size());
  for (double v : report.samples_ms) report.mean_ms += v / n;
  double var = 0;
  for (double v : report.samples_ms) var += (v - report.mean_ms) * (v - report.mean_ms);
  report.std_ms = n > 1 ? std::sqrt(var / (n - 1)) : 0.0;
  for (size_t k = 0; k < stage_names.size(); ++k) {
    double m = 0;
    for (double v : stage_ms[k]) m += v / stage_ms[k].size();
    report.stages.push_back({stage_names[k], m});
  }
  WriteText(fs::path(config.out_dir) / "benchmark.json", report.ToJson() + "\n");
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%dx%d, %zu iterations after %d warm-up: inference %.2f +- "
                "%.2f ms | merging %s | total %.2f ms\n",
                report.height, report.width, report.samples_ms.size(),
                report.warmup, report.mean_ms, report.std_ms,
                report.merging.c_str(), report.mean_ms);
  out << buf;
  for (const auto& s : report.stages) {
    std::snprintf(buf, sizeof(buf), "  %-16s %8.2f ms\n", s.name.c_str(), s.mean_ms);
    out << buf;
  }
  return report;
}

// -------------------------------------------------------------------- ablate

std::string FormatAblationTable(const std::vector<AblationResultRow>& rows) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-16s | %-48s | %6s | %6s | %6s\n", "row",
                "settings", "PQ", "PQ_Th", "PQ_St");
  os << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-16s | %-48s | %6.1f | %6.1f | %6.1f\n",
                  r.name.c_str(), r.settings.c_str(), 100 * r.report.pq,
                  100 * r.report.pq_things, 100 * r.report.pq_stuff);
    os << buf;
  }
  return os.str();
}

std::vector<AblationResultRow> RunAblate(RunConfig config, std::ostream& out) {
  ValidateConfig(config);
  std::vector<AblationRow> rows = config.ablate_rows;
  if (rows.empty()) rows.push_back({"defaults", {}});
  // Resolve and validate every row before any training starts.
  std::vector<RunConfig> resolved;
  for (const auto& row : rows) {
    RunConfig c = config;
    for (const auto& [k, v] : row.overrides) SetKey(c, k, v);
    c.ablate_rows.clear();
    c.out_dir = (fs::path(config.out_dir) / "rows" / row.name).string();
    ValidateConfig(c);
    resolved.push_back(std::move(c));
  }
  PrepareOutput(config, "ablate");
  std::vector<AblationResultRow> results;
  json rows_j = json::array();
  for (size_t i = 0; i < rows.size(); ++i) {
    LOG(INFO) << "ablation row " << rows[i].name << ": " << Settings(resolved[i]);
    std::ostringstream sink;
    const PQReport report = RunTrain(resolved[i], sink);
    results.push_back({rows[i].name, Settings(resolved[i]), report});
    rows_j.push_back({{"name", rows[i].name},
                      {"settings", Settings(resolved[i])},
                      {"pq", report.pq},
                      {"pq_things", report.pq_things},
                      {"pq_stuff", report.pq_stuff}});
  }
  const std::string table = FormatAblationTable(results);
  const fs::path dir(config.out_dir);
  WriteText(dir / "ablation.json", rows_j.dump(2) + "\n");
  WriteText(dir / "ablation.txt", table);
  out << table;
  return results;
}

// ----------------------------------------------------------------------- cli

int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"Attention-mask panoptic segmentation: train, evaluate, "
               "predict, benchmark and ablate."};
  app.require_subcommand(1);

  std::string config_path, checkpoint, out_dir, resolution, match_iou,
      sigma_mode;
  uint64_t seed = 0;
  int num_att = 0;
  double c_att = 0;
  bool no_shuffle = false, shuffle = false, hard_masks = false, oracle = false,
       learned = false, dump_masks = false;
  std::vector<std::string> sets, images;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Key-value config file")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "Random seed (run.seed)");
    cmd->add_option("--checkpoint", checkpoint, "Model checkpoint");
    cmd->add_option("--out", out_dir, "Output directory (run.out)");
    cmd->add_option("--resolution", resolution, "HxW for benchmark");
    cmd->add_option("--set", sets, "Override: key=value (repeatable)");
    cmd->add_flag("--no-shuffle", no_shuffle, "Disable attention-slot shuffling");
    cmd->add_flag("--shuffle", shuffle, "Enable attention-slot shuffling");
    cmd->add_flag("--hard-masks", hard_masks, "Constant-fill box masks");
    cmd->add_flag("--oracle", oracle, "Ground-truth boxes as detections");
    cmd->add_flag("--learned", learned, "Learned detector");
    cmd->add_option("--num-att", num_att, "Attention slots (model.num_att)");
    cmd->add_option("--c-att", c_att, "Mask peak value (model.c_att)");
    cmd->add_option("--match-iou", match_iou, "box|mask");
    cmd->add_option("--sigma-mode", sigma_mode, "stddev|variance");
  };
  CLI::App* train = app.add_subcommand("train", "Train a model");
  CLI::App* eval = app.add_subcommand("eval", "Evaluate PQ on a split");
  CLI::App* predict = app.add_subcommand("predict", "Predict label maps for images");
  CLI::App* bench = app.add_subcommand("benchmark", "Time single-image inference");
  CLI::App* ablate = app.add_subcommand("ablate", "Train/evaluate an ablation matrix");
  for (auto* cmd : {train, eval, predict, bench, ablate}) add_common(cmd);
  predict->add_option("images", images, "Input images (PNG or JPEG)");
  predict->add_flag("--dump-masks", dump_masks, "Write attention masks as PNGs");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return kExitUsage;
  }
  CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();

  try {
    RunConfig config;
    if (config_path.empty() && !checkpoint.empty() && fs::exists(checkpoint)) {
      const std::string meta = ReadCheckpointMetadata(checkpoint);
      if (!meta.empty()) ApplyConfigText(config, meta, checkpoint + " metadata");
    }
    if (!config_path.empty()) ApplyConfigFile(config, config_path);
    if (cmd->count("--seed")) SetKey(config, "run.seed", std::to_string(seed));
    if (!out_dir.empty()) SetKey(config, "run.out", out_dir);
    if (!resolution.empty()) {
      const auto x = resolution.find('x');
      if (x == std::string::npos) throw ConfigError("--resolution expects HxW");
      SetKey(config, "benchmark.height", resolution.substr(0, x));
      SetKey(config, "benchmark.width", resolution.substr(x + 1));
    }
    if (shuffle && no_shuffle) throw ConfigError("--shuffle conflicts with --no-shuffle");
    if (oracle && learned) throw ConfigError("--oracle conflicts with --learned");
    if (shuffle) SetKey(config, "maskgen.shuffle", "true");
    if (no_shuffle) SetKey(config, "maskgen.shuffle", "false");
    if (hard_masks) SetKey(config, "maskgen.hard", "true");
    if (oracle) SetKey(config, "detector.mode", "oracle");
    if (learned) SetKey(config, "detector.mode", "learned");
    if (cmd->count("--num-att")) SetKey(config, "model.num_att", std::to_string(num_att));
    if (cmd->count("--c-att")) {
      std::ostringstream os;
      os.precision(17);
      os << c_att;
      SetKey(config, "model.c_att", os.str());
    }
    if (!match_iou.empty()) SetKey(config, "train.match_iou", match_iou);
    if (!sigma_mode.empty()) SetKey(config, "maskgen.sigma_mode", sigma_mode);
    if (dump_masks) SetKey(config, "predict.dump_masks", "true");
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value");
      SetKey(config, kv.substr(0, eq), kv.substr(eq + 1));
    }

    if (name == "train") {
      RunTrain(config, out);
    } else if (name == "eval") {
      RunEval(config, checkpoint, out);
    } else if (name == "predict") {
      RunPredict(config, checkpoint, images, out);
    } else if (name == "benchmark") {
      RunBenchmark(config, checkpoint, out);
    } else {
      RunAblate(config, out);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << name << " failed: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace attnpan::cli
