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

#include "cli/run_config.h"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "attnpan/coco.h"

namespace attnpan::cli {
namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T ParseNumber(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key " + key + ": cannot parse '" + text + "'");
  }
  return v;
}

bool ParseBool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("config key " + key + ": expected true/false, got '" +
                    text + "'");
}

std::string FormatDouble(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

template <typename T>
Field Number(T RunConfig::*outer) {
  return {[outer](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return FormatDouble(c.*outer);
            } else {
              return std::to_string(c.*outer);
            }
          },
          [outer](RunConfig& c, const std::string& k, const std::string& v) {
            c.*outer = ParseNumber<T>(k, v);
          }};
}

// Member of a nested struct: config.*outer.*inner.
template <typename S, typename T>
Field Nested(S RunConfig::*outer, T S::*inner) {
  return {[=](const RunConfig& c) {
            const T& v = (c.*outer).*inner;
            if constexpr (std::is_same_v<T, bool>) {
              return std::string(v ? "true" : "false");
            } else if constexpr (std::is_floating_point_v<T>) {
              return FormatDouble(v);
            } else {
              return std::to_string(v);
            }
          },
          [=](RunConfig& c, const std::string& k, const std::string& v) {
            if constexpr (std::is_same_v<T, bool>) {
              (c.*outer).*inner = ParseBool(k, v);
            } else {
              (c.*outer).*inner = ParseNumber<T>(k, v);
            }
          }};
}

template <typename S1, typename S2, typename T>
Field Nested2(S1 RunConfig::*a, S2 S1::*b, T S2::*inner) {
  return {[=](const RunConfig& c) {
            const T& v = ((c.*a).*b).*inner;
            if constexpr (std::is_same_v<T, bool>) {
              return std::string(v ? "true" : "false");
            } else if constexpr (std::is_floating_point_v<T>) {
              return FormatDouble(v);
            } else {
              return std::to_string(v);
            }
          },
          [=](RunConfig& c, const std::string& k, const std::string& v) {
            if constexpr (std::is_same_v<T, bool>) {
              ((c.*a).*b).*inner = ParseBool(k, v);
            } else {
              ((c.*a).*b).*inner = ParseNumber<T>(k, v);
            }
          }};
}

Field Bool(bool RunConfig::*m) {
  return {[m](const RunConfig& c) { return std::string(c.*m ? "true" : "false"); },
          [m](RunConfig& c, const std::string& k, const std::string& v) {
            c.*m = ParseBool(k, v);
          }};
}

Field String(std::string RunConfig::*m) {
  return {[m](const RunConfig& c) { return c.*m; },
          [m](RunConfig& c, const std::string&, const std::string& v) {
            c.*m = v;
          }};
}

Field Path(CocoPaths RunConfig::*outer, std::string CocoPaths::*inner) {
  return {[=](const RunConfig& c) { return (c.*outer).*inner; },
          [=](RunConfig& c, const std::string&, const std::string& v) {
            (c.*outer).*inner = v;
          }};
}

// Enum field backed by a fixed name table.
template <typename E>
Field Choice(std::function<E&(RunConfig&)> ref,
             std::vector<std::pair<std::string, E>> names) {
  return {[=](const RunConfig& c) {
            const E v = ref(const_cast<RunConfig&>(c));
            for (const auto& [n, e] : names) {
              if (e == v) return n;
            }
            return std::string("?");
          },
          [=](RunConfig& c, const std::string& k, const std::string& v) {
            for (const auto& [n, e] : names) {
              if (n == v) {
                ref(c) = e;
                return;
              }
            }
            std::string allowed;
            for (const auto& [n, e] : names) allowed += (allowed.empty() ? "" : "|") + n;
            throw ConfigError("config key " + k + ": expected " + allowed +
                              ", got '" + v + "'");
          }};
}

std::string FormatRows(const std::vector<AblationRow>& rows) {
  std::string out;
  for (const auto& row : rows) {
    if (!out.empty()) out += "; ";
    out += row.name;
    if (!row.overrides.empty()) {
      out += ":";
      for (size_t i = 0; i < row.overrides.size(); ++i) {
        out += (i ? ", " : " ") + row.overrides[i].first + "=" +
               row.overrides[i].second;
      }
    }
  }
  return out;
}

const std::vector<std::pair<std::string, Field>>& Registry() {
  static const auto* registry = new std::vector<std::pair<std::string, Field>>{
      {"model.num_att", Nested(&RunConfig::model, &ModelConfig::num_att)},
      {"model.c_att", Nested(&RunConfig::model, &ModelConfig::c_att)},
      {"model.feature_dim", Nested(&RunConfig::model, &ModelConfig::feature_dim)},
      {"model.backbone_width", Nested(&RunConfig::model, &ModelConfig::backbone_width)},
      {"model.backbone_depth", Nested(&RunConfig::model, &ModelConfig::backbone_depth)},
      {"model.head_width", Nested(&RunConfig::model, &ModelConfig::head_width)},
      {"model.bn_momentum", Nested(&RunConfig::model, &ModelConfig::bn_momentum)},
      {"model.init_stddev", Nested(&RunConfig::model, &ModelConfig::init_stddev)},
      {"model.anchor_size", Nested(&RunConfig::model, &ModelConfig::anchor_size)},
      {"model.pixel_mean", Nested(&RunConfig::model, &ModelConfig::pixel_mean)},
      {"model.pixel_std", Nested(&RunConfig::model, &ModelConfig::pixel_std)},

      {"maskgen.hard", Nested2(&RunConfig::pipeline, &PipelineOptions::masks, &MaskOptions::hard)},
      {"maskgen.sigma_mode",
       Choice<SigmaMode>([](RunConfig& c) -> SigmaMode& { return c.pipeline.masks.sigma_mode; },
                         {{"stddev", SigmaMode::kStdDev}, {"variance", SigmaMode::kVariance}})},
      {"maskgen.shuffle", Nested(&RunConfig::pipeline, &PipelineOptions::shuffle)},
      {"maskgen.inference_seed", Nested(&RunConfig::pipeline, &PipelineOptions::inference_seed)},

      {"detector.mode",
       Choice<DetectorMode>([](RunConfig& c) -> DetectorMode& { return c.pipeline.detector; },
                            {{"learned", DetectorMode::kLearned}, {"oracle", DetectorMode::kOracle}})},
      {"detector.oracle_jitter", Nested2(&RunConfig::pipeline, &PipelineOptions::oracle, &OracleOptions::jitter)},
      {"detector.oracle_drop_rate", Nested2(&RunConfig::pipeline, &PipelineOptions::oracle, &OracleOptions::drop_rate)},
      {"detector.score_threshold", Nested2(&RunConfig::pipeline, &PipelineOptions::decode, &DecodeOptions::score_threshold)},
      {"detector.nms_iou", Nested2(&RunConfig::pipeline, &PipelineOptions::decode, &DecodeOptions::nms_iou)},
      {"detector.max_detections", Nested2(&RunConfig::pipeline, &PipelineOptions::decode, &DecodeOptions::max_detections)},
      {"detector.pre_nms_top_k", Nested2(&RunConfig::pipeline, &PipelineOptions::decode, &DecodeOptions::pre_nms_top_k)},

      {"train.steps", Nested(&RunConfig::train, &TrainConfig::steps)},
      {"train.batch_size", Nested(&RunConfig::train, &TrainConfig::batch_size)},
      {"train.base_lr", Nested(&RunConfig::train, &TrainConfig::base_lr)},
      {"train.lr_power", Nested(&RunConfig::train, &TrainConfig::lr_power)},
      {"train.momentum", Nested(&RunConfig::train, &TrainConfig::momentum)},
      {"train.weight_decay", Nested(&RunConfig::train, &TrainConfig::weight_decay)},
      {"train.lambda_det", Nested(&RunConfig::train, &TrainConfig::lambda_det)},
      {"train.lambda_pan", Nested(&RunConfig::train, &TrainConfig::lambda_pan)},
      {"train.match_iou",
       Choice<MatchIoU>([](RunConfig& c) -> MatchIoU& { return c.train.match_iou; },
                        {{"box", MatchIoU::kBox}, {"mask", MatchIoU::kMask}})},
      {"train.augment", Nested(&RunConfig::train, &TrainConfig::augment)},
      {"train.scale_min", Nested2(&RunConfig::train, &TrainConfig::augment_config, &AugmentConfig::scale_min)},
      {"train.scale_max", Nested2(&RunConfig::train, &TrainConfig::augment_config, &AugmentConfig::scale_max)},
      {"train.crop_height", Nested2(&RunConfig::train, &TrainConfig::augment_config, &AugmentConfig::crop_height)},
      {"train.crop_width", Nested2(&RunConfig::train, &TrainConfig::augment_config, &AugmentConfig::crop_width)},
      {"train.flip", Nested2(&RunConfig::train, &TrainConfig::augment_config, &AugmentConfig::flip)},
      {"train.log_every", Nested(&RunConfig::train, &TrainConfig::log_every)},
      {"train.eval_every", Nested(&RunConfig::train, &TrainConfig::eval_every)},
      {"train.eval_images", Nested(&RunConfig::train, &TrainConfig::eval_images)},
      {"train.checkpoint_every", Nested(&RunConfig::train, &TrainConfig::checkpoint_every)},

      {"data.source",
       Choice<DataSource>([](RunConfig& c) -> DataSource& { return c.source; },
                          {{"synthetic", DataSource::kSynthetic}, {"coco", DataSource::kCoco}})},
      {"data.train_count", Number(&RunConfig::train_count)},
      {"data.val_count", Number(&RunConfig::val_count)},
      {"data.val_first_index", Number(&RunConfig::val_first_index)},
      {"data.synthetic.height", Nested(&RunConfig::synthetic, &SyntheticConfig::height)},
      {"data.synthetic.width", Nested(&RunConfig::synthetic, &SyntheticConfig::width)},
      {"data.synthetic.min_instances", Nested(&RunConfig::synthetic, &SyntheticConfig::min_instances)},
      {"data.synthetic.max_instances", Nested(&RunConfig::synthetic, &SyntheticConfig::max_instances)},
      {"data.synthetic.min_size", Nested(&RunConfig::synthetic, &SyntheticConfig::min_size)},
      {"data.synthetic.max_size", Nested(&RunConfig::synthetic, &SyntheticConfig::max_size)},
      {"data.synthetic.occlusion", Nested(&RunConfig::synthetic, &SyntheticConfig::occlusion)},
      {"data.synthetic.void_bands", Nested(&RunConfig::synthetic, &SyntheticConfig::void_bands)},
      {"data.synthetic.seed", Nested(&RunConfig::synthetic, &SyntheticConfig::seed)},
      {"data.coco.train_json", Path(&RunConfig::coco_train, &CocoPaths::json)},
      {"data.coco.train_panoptic_dir", Path(&RunConfig::coco_train, &CocoPaths::panoptic_dir)},
      {"data.coco.train_image_dir", Path(&RunConfig::coco_train, &CocoPaths::image_dir)},
      {"data.coco.val_json", Path(&RunConfig::coco_val, &CocoPaths::json)},
      {"data.coco.val_panoptic_dir", Path(&RunConfig::coco_val, &CocoPaths::panoptic_dir)},
      {"data.coco.val_image_dir", Path(&RunConfig::coco_val, &CocoPaths::image_dir)},

      {"run.seed", Number(&RunConfig::seed)},
      {"run.out", String(&RunConfig::out_dir)},

      {"eval.split", String(&RunConfig::eval_split)},
      {"eval.max_images", Number(&RunConfig::eval_max_images)},
      {"eval.predictor",
       Choice<EvalPredictor>([](RunConfig& c) -> EvalPredictor& { return c.eval_predictor; },
                             {{"model", EvalPredictor::kModel},
                              {"groundtruth", EvalPredictor::kGroundTruth}})},

      {"benchmark.height", Number(&RunConfig::benchmark_height)},
      {"benchmark.width", Number(&RunConfig::benchmark_width)},
      {"benchmark.iterations", Number(&RunConfig::benchmark_iterations)},
      {"benchmark.warmup", Number(&RunConfig::benchmark_warmup)},

      {"predict.dump_masks", Bool(&RunConfig::predict_dump_masks)},
      {"predict.alpha", Number(&RunConfig::predict_alpha)},

      {"ablate.rows",
       {[](const RunConfig& c) { return FormatRows(c.ablate_rows); },
        [](RunConfig& c, const std::string&, const std::string& v) {
          c.ablate_rows = ParseAblationRows(v);
        }}},
  };
  return *registry;
}

}  // namespace

void SetKey(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : Registry()) {
    if (name == key) {
      field.set(config, key, Trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void ApplyConfigText(RunConfig& config, const std::string& text,
                     const std::string& origin) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    }
    try {
      SetKey(config, Trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void ApplyConfigFile(RunConfig& config, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  ApplyConfigText(config, ss.str(), path);
}

std::string SerializeConfig(const RunConfig& config) {
  std::string out;
  for (const auto& [name, field] : Registry()) {
    out += name + " = " + field.get(config) + "\n";
  }
  return out;
}

std::vector<std::string> ConfigKeys() {
  std::vector<std::string> keys;
  for (const auto& [name, field] : Registry()) keys.push_back(name);
  return keys;
}

std::vector<AblationRow> ParseAblationRows(const std::string& text) {
  std::vector<AblationRow> rows;
  std::istringstream is(text);
  std::string chunk;
  while (std::getline(is, chunk, ';')) {
    chunk = Trim(chunk);
    if (chunk.empty()) continue;
    AblationRow row;
    const auto colon = chunk.find(':');
    row.name = Trim(chunk.substr(0, colon));
    if (row.name.empty()) throw ConfigError("ablation row without a name");
    if (colon != std::string::npos) {
      std::istringstream items(chunk.substr(colon + 1));
      std::string item;
      while (std::getline(items, item, ',')) {
        item = Trim(item);
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) {
          throw ConfigError("ablation row " + row.name + ": expected key=value");
        }
        row.overrides.emplace_back(Trim(item.substr(0, eq)),
                                   Trim(item.substr(eq + 1)));
      }
    }
    for (const auto& r : rows) {
      if (r.name == row.name) {
        throw ConfigError("duplicate ablation row " + row.name);
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void ValidateConfig(const RunConfig& config) {
  auto check = [](auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  };
  ModelConfig model = config.model;
  if (model.num_things <= 0) model.num_things = 1;  // filled from the dataset
  check([&] { model.Validate(); });
  check([&] { config.train.Validate(); });
  if (config.train.augment) {
    const AugmentConfig& a = config.train.augment_config;
    if (a.scale_min <= 0 || a.scale_max < a.scale_min) {
      throw ConfigError("train.scale_min/scale_max must satisfy 0 < min <= max");
    }
    if (a.crop_height <= 0 || a.crop_width <= 0 ||
        a.crop_height % kFeatureStride || a.crop_width % kFeatureStride) {
      throw ConfigError("train.crop_height/crop_width must be positive multiples of 8");
    }
  }
  const OracleOptions& o = config.pipeline.oracle;
  if (o.jitter < 0 || o.drop_rate < 0 || o.drop_rate > 1) {
    throw ConfigError("detector.oracle_jitter must be >= 0 and drop rate in [0, 1]");
  }
  const DecodeOptions& d = config.pipeline.decode;
  if (d.max_detections <= 0 || d.pre_nms_top_k <= 0 || d.nms_iou <= 0 ||
      d.nms_iou > 1) {
    throw ConfigError("detector decode options out of range");
  }
  if (config.source == DataSource::kSynthetic) {
    check([&] { config.synthetic.Validate(); });
    if (config.synthetic.height % kFeatureStride ||
        config.synthetic.width % kFeatureStride) {
      throw ConfigError("synthetic image size must be a multiple of 8");
    }
    if (config.train_count <= 0 || config.val_count <= 0) {
      throw ConfigError("data.train_count and data.val_count must be positive");
    }
  } else {
    for (const auto* paths : {&config.coco_train, &config.coco_val}) {
      for (const auto& p : {paths->json, paths->panoptic_dir, paths->image_dir}) {
        if (p.empty() || !std::filesystem::exists(p)) {
          throw ConfigError("dataset path '" + p + "' does not exist");
        }
      }
    }
    if (!config.train.augment) {
      throw ConfigError("data.source = coco needs train.augment = true so that "
                        "training crops share one size");
    }
  }
  if (config.eval_split != "val" && config.eval_split != "train") {
    throw ConfigError("eval.split must be 'val' or 'train'");
  }
  if (config.eval_max_images < 0) throw ConfigError("eval.max_images must be >= 0");
  if (config.benchmark_height <= 0 || config.benchmark_width <= 0 ||
      config.benchmark_iterations <= 0 || config.benchmark_warmup < 0) {
    throw ConfigError("benchmark resolution/iterations must be positive");
  }
  if (config.predict_alpha < 0 || config.predict_alpha > 1) {
    throw ConfigError("predict.alpha must be in [0, 1]");
  }
  if (config.out_dir.empty()) throw ConfigError("run.out must not be empty");
  for (const auto& row : config.ablate_rows) {
    RunConfig probe = config;
    for (const auto& [k, v] : row.overrides) {
      if (k == "ablate.rows") throw ConfigError("ablation rows cannot nest");
      SetKey(probe, k, v);
    }
  }
}

Datasets LoadDatasets(RunConfig& config) {
  Datasets out;
  if (config.source == DataSource::kSynthetic) {
    out.train = std::make_unique<SyntheticDataset>(config.synthetic, 0,
                                                   config.train_count);
    out.val = std::make_unique<SyntheticDataset>(
        config.synthetic, config.val_first_index, config.val_count);
  } else {
    auto train = std::make_unique<CocoPanopticDataset>(
        config.coco_train.json, config.coco_train.panoptic_dir,
        config.coco_train.image_dir, /*training=*/true);
    auto val = std::make_unique<CocoPanopticDataset>(
        config.coco_val.json, config.coco_val.panoptic_dir,
        config.coco_val.image_dir, /*training=*/false);
    const LabelSpace a = train->labels(), b = val->labels();
    if (a.num_things != b.num_things || a.num_stuff != b.num_stuff) {
      throw ConfigError("train and val category sets differ");
    }
    out.train = std::move(train);
    out.val = std::move(val);
  }
  const LabelSpace labels = out.train->labels();
  config.model.num_things = labels.num_things;
  config.model.num_stuff = labels.num_stuff;
  return out;
}

}  // namespace attnpan::cli
