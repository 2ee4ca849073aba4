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


// Acceptance gate: prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <glog/logging.h>

#include "CLI11.hpp"
#include "attnpan/checkpoint.h"
#include "attnpan/coco.h"
#include "attnpan/data.h"
#include "attnpan/fusion.h"
#include "attnpan/image_io.h"
#include "attnpan/metrics.h"
#include "attnpan/model.h"
#include "attnpan/pipeline.h"
#include "attnpan/random.h"
#include "attnpan/training.h"
#include "cli/commands.h"
#include "cli/run_config.h"
#include "json.hpp"
#include "support/grad_check.h"
#include "support/oracles.h"

namespace attnpan::acceptance {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::CheckGradient;
using testing::RandomTensor;
using testing::SampleIndices;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char* format, double a, double b = 0, double c = 0,
                double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), format, a, b, c, d);
  return buf;
}

// ------------------------------------------------------------ 1: layout

Outcome ChannelLayout() {
  std::ostringstream detail;
  bool pass = true;
  for (auto [num_att, num_stuff] :
       std::vector<std::pair<int, int>>{{50, 11}, {50, 0}, {25, 11}, {4, 2}}) {
    ModelConfig c;
    c.num_att = num_att;
    c.num_stuff = num_stuff;
    c.feature_dim = 4;
    c.head_width = 4;
    PanopticHead<float> head(c);
    Rng rng(1);
    head.Init(rng, 0.1);
    const Tensorf logits = head.Forward(Tensorf(1, 2, 3, c.feature_dim),
                                        Tensorf(1, 2, 3, c.num_att), false);
    const int want = num_att + num_stuff + 2;
    pass &= logits.c() == want && c.num_out() == want;
    detail << "(" << num_att << "," << num_stuff << ")->" << logits.c() << " ";
  }
  return {pass, detail.str()};
}

// ---------------------------------------------------------- 2: gradients

Outcome HeadGradients() {
  ModelConfig c;
  c.num_att = 4;
  c.num_stuff = 2;
  c.num_things = 3;
  c.feature_dim = 5;
  c.head_width = 6;
  PanopticHead<double> head(c);
  Rng rng(2);
  head.Init(rng, 0.3);
  ParameterList<double> params;
  head.CollectParameters("head", params);
  Tensord features = RandomTensor(rng, {2, 4, 4, c.feature_dim});
  Tensord masks = RandomTensor(rng, {2, 4, 4, c.num_att}, 2.0);
  std::vector<TargetMap> targets(2);
  for (auto& t : targets) {
    t.height = t.width = 4;
    for (int i = 0; i < 16; ++i) t.channel.push_back(rng.Int(0, c.num_out() - 1));
  }
  auto loss = [&] {
    return PanopticLoss<double>(head.Forward(features, masks, true), targets).loss;
  };
  ZeroGrads(params);
  const auto lg = PanopticLoss<double>(head.Forward(features, masks, true), targets);
  const auto grads = head.Backward(lg.grad);

  double worst = 0;
  size_t checked = 0;
  auto take = [&](const testing::GradCheckResult& r) {
    worst = std::max(worst, r.max_relative_error);
    checked += r.checked;
  };
  take(CheckGradient(features.storage(), grads.d_features.storage(), loss));
  take(CheckGradient(masks.storage(), grads.d_masks.storage(), loss));
  for (auto* p : params) {
    if (p->trainable) take(CheckGradient(p->value.storage(), p->grad.storage(), loss));
  }
  return {worst < 1e-4, Fmt("N_out=%.0f, max rel err %.2e over ", c.num_out(), worst) +
                            std::to_string(checked) + " entries"};
}

// ----------------------------------------------------------------- 3: PQ

Outcome PqOracle() {
  const LabelSpace labels{3, 2};
  Rng rng(3);
  int mismatches = 0;
  double worst_iou = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const PanopticLabelMap gt = testing::RandomLabelMap(rng, 16, 16, labels, 6, true);
    const PanopticLabelMap pred = testing::PerturbLabelMap(rng, gt, labels);
    const PQReport r = ComputePQ(pred, gt, labels);
    const auto want = testing::BruteForcePQ(pred, gt, labels);
    for (int c = 0; c < labels.num_classes(); ++c) {
      const ClassStats& a = r.per_class[c];
      const ClassStats& b = want[c];
      if (a.tp != b.tp || a.fp != b.fp || a.fn != b.fn) ++mismatches;
      worst_iou = std::max(worst_iou, std::abs(a.iou_sum - b.iou_sum));
    }
  }
  return {mismatches == 0 && worst_iou <= 1e-12,
          std::to_string(mismatches) + " count mismatches in 500 pairs, max |dIoU| " +
              Fmt("%.1e", worst_iou)};
}

// ----------------------------------------------------------- 4: matching

Outcome MatchingProperties() {
  Rng rng(4);
  int failures = 0;
  std::string first;
  int64_t pairs = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const testing::MatchProblem p =
        testing::RandomMatchProblem(rng, rng.Int(1, 10), rng.Int(0, 8));
    const AttentionStack stack = testing::StackFromBoxes(p.slots, 10);
    const auto instances = testing::InstancesFromBoxes(p.gts);
    const MatchAssignment a = MatchMasks(stack, instances);
    pairs += a.pairs.size();
    const std::string err = testing::CheckMatchProperties(p, a);
    if (!err.empty()) {
      if (first.empty()) first = "trial " + std::to_string(trial) + ": " + err;
      ++failures;
    }
  }
  return {failures == 0, std::to_string(failures) + " violations in 10000 sets (" +
                             std::to_string(pairs) + " pairs)" +
                             (first.empty() ? "" : "; " + first)};
}

// ------------------------------------------------------------- 8: fusion

Outcome FusionOracle() {
  ModelConfig c;
  c.num_att = 6;
  c.num_things = 3;
  c.num_stuff = 2;
  Rng rng(8);
  int mismatches = 0, empty_slots = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int h = rng.Int(1, 6), w = rng.Int(1, 6);
    const Tensorf logits = testing::RandomDyadicLogits(rng, h, w, c.num_out());
    const AttentionStack stack =
        testing::RandomSlotStack(rng, c.num_att, h, w, c.num_things);
    empty_slots += c.num_att - stack.NumFilled();
    const int out_h = h * kFeatureStride - rng.Int(0, 7);
    const int out_w = w * kFeatureStride - rng.Int(0, 7);
    if (!(Fuse(logits, stack, c, out_h, out_w) ==
          testing::BruteForceFuse(logits, stack, c, out_h, out_w))) {
      ++mismatches;
    }
  }
  return {mismatches == 0 && empty_slots > 0,
          std::to_string(mismatches) + " mismatches in 100 tensors, " +
              std::to_string(empty_slots) + " empty slots exercised"};
}

// ----------------------------------------------------------- 10: COCO

Outcome CocoRoundTrip(const fs::path& dir) {
  const CategoryMap cats = SyntheticCategories();
  SyntheticConfig config;
  config.void_bands = true;
  fs::create_directories(dir);
  int mismatches = 0;
  for (uint64_t i = 0; i < 100; ++i) {
    PanopticLabelMap map = GenerateSample(config, i).panoptic;
    // Every fourth map flags its first thing segment as crowd.
    if (i % 4 == 0) {
      for (size_t p = 0; p < map.size(); ++p) {
        if (map.class_ids[p] >= 0 && map.class_ids[p] < cats.labels().num_things) {
          map.crowd.push_back({map.class_ids[p], map.instance_ids[p]});
          break;
        }
      }
    }
    const EncodedPanoptic enc = EncodePanoptic(map, cats);
    const std::string path = (dir / "map.png").string();
    WritePng(path, enc.png);
    const PanopticLabelMap back =
        DecodePanoptic(ReadRawImage(path), enc.segments, cats, false, path);
    if (!(back == map)) ++mismatches;
  }
  return {mismatches == 0,
          std::to_string(mismatches) + " of 100 maps differ after PNG round trip"};
}

// ------------------------------------------------------- 5, 6, 7: training

struct TrainedRun {
  fs::path dir;
  PQReport report;
  double seconds = 0;
};

std::string TrainingConfig(int steps, bool shuffle) {
  std::ostringstream os;
  os << "data.synthetic.height = 64\n"
     << "data.synthetic.width = 64\n"
     << "data.train_count = 4000\n"
     << "data.val_count = 100\n"
     << "model.num_att = 8\n"
     << "model.c_att = 50\n"
     << "detector.mode = oracle\n"
     << "maskgen.shuffle = " << (shuffle ? "true" : "false") << "\n"
     << "train.steps = " << steps << "\n"
     << "train.log_every = 10\n"
     << "run.seed = 1\n";
  return os.str();
}

TrainedRun Train(const fs::path& dir, int steps, bool shuffle) {
  fs::create_directories(dir);
  const fs::path conf = dir / "acceptance.conf";
  std::ofstream(conf) << TrainingConfig(steps, shuffle);
  std::ostringstream out, err;
  const auto start = std::chrono::steady_clock::now();
  const int code = cli::RunCli({"train", "--config", conf.string(), "--out",
                                (dir / "run").string()},
                               out, err);
  TrainedRun run;
  run.seconds = std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - start)
                    .count();
  if (code != cli::kExitOk) throw std::runtime_error("training failed: " + err.str());
  run.dir = dir / "run";
  const json j = json::parse(std::ifstream(run.dir / "final_metrics.json"));
  run.report.pq = j.at("pq").get<double>();
  run.report.pq_things = j.at("pq_things").get<double>();
  run.report.pq_stuff = j.at("pq_stuff").get<double>();
  return run;
}

Outcome EndToEnd(const TrainedRun& run) {
  return {run.report.pq >= 0.50 && run.report.pq_things >= 0.40,
          Fmt("PQ %.3f (>= 0.50), PQ_Th %.3f (>= 0.40), PQ_St %.3f, %.0f s",
              run.report.pq, run.report.pq_things, run.report.pq_stuff,
              run.seconds)};
}

// Output channel a fused pixel came from; both void channels share -1.
int ChannelOf(SegmentKey key, const ModelConfig& c) {
  if (key.class_id == kVoidClass) return -1;
  if (key.class_id < c.num_things) return key.instance_id - 1;
  return c.num_att + key.class_id - c.num_things;
}

Outcome OrderPreservation(const TrainedRun& run) {
  const std::string ckpt = (run.dir / "checkpoints" / "final.ckpt").string();
  cli::RunConfig config;
  cli::ApplyConfigText(config, ReadCheckpointMetadata(ckpt), ckpt);
  cli::Datasets data = cli::LoadDatasets(config);
  PanopticModel model(config.model);
  LoadCheckpoint(ckpt, model.Parameters());
  Predictor predictor(model, config.pipeline);

  int matched = 0, preserved = 0;
  for (size_t i = 0; i < data.val->size(); ++i) {
    const Sample s = data.val->Get(i);
    const Prediction p = predictor.Predict(s.image, s.instances);
    const MatchAssignment a =
        MatchMasks(p.stack, s.instances, config.train.match_iou);
    for (const MatchPair& pair : a.pairs) {
      const GroundTruthInstance& inst = s.instances[pair.gt];
      std::map<int, int> votes;
      for (size_t k = 0; k < inst.mask.size(); ++k) {
        if (!inst.mask[k]) continue;
        ++votes[ChannelOf({p.panoptic.class_ids[k], p.panoptic.instance_ids[k]},
                          config.model)];
      }
      int best = -2, best_count = -1;
      for (const auto& [channel, count] : votes) {
        if (count > best_count) best = channel, best_count = count;
      }
      ++matched;
      preserved += best == pair.slot;
    }
  }
  const double rate = matched > 0 ? static_cast<double>(preserved) / matched : 0;
  return {matched > 0 && rate >= 0.90,
          Fmt("%.0f of %.0f matched instances (%.1f%%, >= 90%%)", preserved,
              matched, 100 * rate)};
}

Outcome ShuffleAblation(const TrainedRun& with, const TrainedRun& without) {
  const double d_pq = with.report.pq - without.report.pq;
  const double d_th = with.report.pq_things - without.report.pq_things;
  const double d_st = with.report.pq_stuff - without.report.pq_stuff;
  std::string detail =
      Fmt("shuffle PQ/PQ_Th/PQ_St %.1f/%.1f/%.1f", 100 * with.report.pq,
          100 * with.report.pq_things, 100 * with.report.pq_stuff) +
      Fmt(", no-shuffle %.1f/%.1f/%.1f", 100 * without.report.pq,
          100 * without.report.pq_things, 100 * without.report.pq_stuff) +
      Fmt(", delta %+.1f/%+.1f/%+.1f", 100 * d_pq, 100 * d_th, 100 * d_st) +
      (d_th >= 0 ? ", shuffle >= no-shuffle on PQ_Th"
                 : ", shuffle < no-shuffle on PQ_Th");
  return {std::isfinite(d_pq) && std::isfinite(d_th), detail};
}

// ---------------------------------------------------------- 9: benchmark

Outcome BenchmarkContract(const TrainedRun& run, const fs::path& dir) {
  const std::string ckpt = (run.dir / "checkpoints" / "final.ckpt").string();
  std::ostringstream out, err;
  const int code = cli::RunCli(
      {"benchmark", "--checkpoint", ckpt, "--learned", "--resolution", "64x64",
       "--set", "benchmark.iterations=3", "--set", "benchmark.warmup=1", "--out",
       dir.string()},
      out, err);
  if (code != cli::kExitOk) return {false, "benchmark exited " + std::to_string(code)};
  const json j = json::parse(std::ifstream(dir / "benchmark.json"));

  // Structural check on the timed call graph for both detector modes.
  cli::RunConfig config;
  cli::ApplyConfigText(config, ReadCheckpointMetadata(ckpt), ckpt);
  cli::LoadDatasets(config);
  PanopticModel model(config.model);
  LoadCheckpoint(ckpt, model.Parameters());
  const Sample s = GenerateSample(config.synthetic, 0);
  int merge_stages = 0, stages = 0;
  for (DetectorMode mode : {DetectorMode::kLearned, DetectorMode::kOracle}) {
    PipelineOptions options = config.pipeline;
    options.detector = mode;
    Predictor predictor(model, options);
    for (const StageRecord& st : predictor.Predict(s.image, s.instances).trace) {
      ++stages;
      merge_stages += st.kind == StageKind::kPostNetworkMerge;
    }
  }
  const bool pass = j.at("merging_ms") == "n/a" && merge_stages == 0 &&
                    j.at("samples_ms").size() == 3 &&
                    out.str().find("merging n/a") != std::string::npos;
  return {pass, "merging " + j.at("merging_ms").get<std::string>() + ", " +
                    std::to_string(merge_stages) + " merge stages in " +
                    std::to_string(stages) + " traced stages" +
                    Fmt(", inference %.2f ms at 64x64",
                        j.at("inference_ms_mean").get<double>())};
}

// ---------------------------------------------------------------- driver

int Main(int argc, char** argv) {
  CLI::App app{"Acceptance gate"};
  std::string out_dir = "acceptance_run";
  int steps = 10000;
  app.add_option("--out", out_dir, "Scratch directory");
  app.add_option("--train-steps", steps, "SGD steps per training run");
  CLI11_PARSE(app, argc, argv);
  const fs::path root(out_dir);
  fs::remove_all(root);
  fs::create_directories(root);

  std::vector<std::pair<std::string, Outcome>> results;
  auto run = [&](const std::string& name, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
    results.emplace_back(name, o);
  };

  run("1 channel layout", ChannelLayout);
  run("2 head gradient check", HeadGradients);
  run("3 PQ oracle equivalence", PqOracle);
  run("4 matching properties", MatchingProperties);

  TrainedRun shuffled, unshuffled;
  std::string train_error;
  try {
    shuffled = Train(root / "shuffle", steps, true);
    unshuffled = Train(root / "no_shuffle", steps, false);
  } catch (const std::exception& e) {
    train_error = e.what();
  }
  auto needs_training = [&](const std::function<Outcome()>& f) {
    return [&, f]() -> Outcome {
      if (!train_error.empty()) return {false, train_error};
      return f();
    };
  };
  run("5 end-to-end synthetic training",
      needs_training([&] { return EndToEnd(shuffled); }));
  run("6 order preservation",
      needs_training([&] { return OrderPreservation(shuffled); }));
  run("7 shuffle ablation (reported)",
      needs_training([&] { return ShuffleAblation(shuffled, unshuffled); }));
  run("8 fusion oracle", FusionOracle);
  run("9 benchmark contract", needs_training([&] {
        return BenchmarkContract(shuffled, root / "benchmark");
      }));
  run("10 COCO panoptic round trip",
      [&] { return CocoRoundTrip(root / "coco"); });

  json report = json::array();
  int failed = 0;
  for (const auto& [name, o] : results) {
    report.push_back({{"criterion", name}, {"pass", o.pass}, {"detail", o.detail}});
    failed += !o.pass;
  }
  std::ofstream(root / "acceptance.json") << report.dump(2) << "\n";
  std::printf("%d/%zu criteria passed\n", static_cast<int>(results.size()) - failed,
              results.size());
  return failed == 0 ? 0 : 1;
}

}  // namespace
}  // namespace attnpan::acceptance

int main(int argc, char** argv) {
  google::InitGoogleLogging(argv[0]);
  return attnpan::acceptance::Main(argc, argv);
}
