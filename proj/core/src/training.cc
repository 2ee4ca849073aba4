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

#include "attnpan/training.h"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <glog/logging.h>

#include "attnpan/checkpoint.h"
#include "attnpan/detector.h"
#include "json.hpp"

namespace attnpan {

// ------------------------------------------------------------------ matching

double SlotIoU(const Detection& detection, const GroundTruthInstance& gt,
               MatchIoU mode) {
  if (mode == MatchIoU::kBox) return BoxIoU(detection.box, gt.box);
  // Pixel (x, y) is inside the box when its center is.
  const Box& b = detection.box;
  const int x0 = std::clamp(static_cast<int>(std::ceil(b.x0() - 0.5)), 0, gt.width);
  const int x1 = std::clamp(static_cast<int>(std::ceil(b.x1() - 0.5)), 0, gt.width);
  const int y0 = std::clamp(static_cast<int>(std::ceil(b.y0() - 0.5)), 0, gt.height);
  const int y1 = std::clamp(static_cast<int>(std::ceil(b.y1() - 0.5)), 0, gt.height);
  const int64_t box_area =
      static_cast<int64_t>(std::max(0, x1 - x0)) * std::max(0, y1 - y0);
  int64_t inter = 0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      inter += gt.mask[static_cast<size_t>(y) * gt.width + x];
    }
  }
  const int64_t uni = box_area + gt.PixelCount() - inter;
  return uni > 0 ? static_cast<double>(inter) / uni : 0.0;
}

MatchAssignment MatchMasks(const AttentionStack& stack,
                           std::span<const GroundTruthInstance> instances,
                           MatchIoU mode) {
  MatchAssignment out;
  out.slot_to_gt.assign(stack.num_slots, -1);
  out.gt_to_slot.assign(instances.size(), -1);
  std::vector<MatchPair> candidates;
  for (int s = 0; s < stack.num_slots; ++s) {
    if (stack.IsEmpty(s)) continue;
    for (size_t g = 0; g < instances.size(); ++g) {
      const double iou = SlotIoU(*stack.slot_detections[s], instances[g], mode);
      if (iou > kMatchIoUThreshold) {
        candidates.push_back({s, static_cast<int>(g), iou});
      }
    }
  }
  // Taking candidates in this order is the same as repeatedly picking the
  // best remaining pair.
  std::sort(candidates.begin(), candidates.end(),
            [](const MatchPair& a, const MatchPair& b) {
              if (a.iou != b.iou) return a.iou > b.iou;
              if (a.slot != b.slot) return a.slot < b.slot;
              return a.gt < b.gt;
            });
  for (const auto& c : candidates) {
    if (out.slot_to_gt[c.slot] >= 0 || out.gt_to_slot[c.gt] >= 0) continue;
    out.slot_to_gt[c.slot] = c.gt;
    out.gt_to_slot[c.gt] = c.slot;
    out.pairs.push_back(c);
  }
  for (size_t g = 0; g < instances.size(); ++g) {
    if (out.gt_to_slot[g] < 0) out.unmatched_gt.push_back(static_cast<int>(g));
  }
  for (int s = 0; s < stack.num_slots; ++s) {
    if (!stack.IsEmpty(s) && out.slot_to_gt[s] < 0) {
      out.discarded_slots.push_back(s);
    }
  }
  return out;
}

// ------------------------------------------------------------------- targets

TargetMap BuildTarget(const PanopticLabelMap& gt,
                      std::span<const GroundTruthInstance> instances,
                      const MatchAssignment& assignment,
                      const ModelConfig& config, int feature_h, int feature_w) {
  if (gt.height != feature_h * kFeatureStride ||
      gt.width != feature_w * kFeatureStride) {
    throw std::invalid_argument(
        "BuildTarget: feature grid " + std::to_string(feature_h) + "x" +
        std::to_string(feature_w) + " does not cover label map " +
        std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  if (assignment.gt_to_slot.size() != instances.size()) {
    throw std::invalid_argument("BuildTarget: assignment/instance mismatch");
  }
  std::map<SegmentKey, int> slot_of;
  for (size_t g = 0; g < instances.size(); ++g) {
    slot_of[{instances[g].class_id, instances[g].instance_id}] =
        assignment.gt_to_slot[g];
  }
  const int num_classes = config.num_things + config.num_stuff;
  TargetMap t{feature_h, feature_w,
              std::vector<int32_t>(static_cast<size_t>(feature_h) * feature_w)};
  constexpr int kHalf = kFeatureStride / 2;
  for (int y = 0; y < feature_h; ++y) {
    for (int x = 0; x < feature_w; ++x) {
      const SegmentKey k =
          gt.at(y * kFeatureStride + kHalf, x * kFeatureStride + kHalf);
      int ch;
      if (k.class_id == kVoidClass || gt.IsCrowd(k)) {
        ch = config.void_channel();
      } else if (k.class_id < 0 || k.class_id >= num_classes) {
        throw std::invalid_argument("BuildTarget: class id " +
                                    std::to_string(k.class_id) +
                                    " outside the label space");
      } else if (k.class_id >= config.num_things) {
        ch = config.num_att + (k.class_id - config.num_things);
      } else {
        auto it = slot_of.find(k);
        ch = (it != slot_of.end() && it->second >= 0) ? it->second
                                                       : config.unmatched_channel();
      }
      t.channel[static_cast<size_t>(y) * feature_w + x] = ch;
    }
  }
  return t;
}

// -------------------------------------------------------------------- losses

AnchorAssignment AssignAnchors(std::span<const Box> anchors,
                               std::span<const Detection> gt,
                               const DetectionLossConfig& config) {
  AnchorAssignment out;
  out.label.assign(anchors.size(), kNegativeAnchor);
  out.gt_index.assign(anchors.size(), -1);
  if (gt.empty()) return out;
  std::vector<double> best_for_gt(gt.size(), 0.0);
  std::vector<int> best_anchor(gt.size(), -1);
  for (size_t a = 0; a < anchors.size(); ++a) {
    double best = 0;
    int arg = -1;
    for (size_t g = 0; g < gt.size(); ++g) {
      const double iou = BoxIoU(anchors[a], gt[g].box);
      if (iou > best) {
        best = iou;
        arg = static_cast<int>(g);
      }
      if (iou > best_for_gt[g]) {
        best_for_gt[g] = iou;
        best_anchor[g] = static_cast<int>(a);
      }
    }
    if (best >= config.positive_iou) {
      out.label[a] = gt[arg].class_id;
      out.gt_index[a] = arg;
    } else if (best >= config.negative_iou) {
      out.label[a] = kIgnoredAnchor;
    }
  }
  for (size_t g = 0; g < gt.size(); ++g) {
    const int a = best_anchor[g];
    if (a >= 0 && out.gt_index[a] < 0) {
      out.label[a] = gt[g].class_id;
      out.gt_index[a] = static_cast<int>(g);
    }
  }
  out.num_positive = static_cast<int>(
      std::count_if(out.gt_index.begin(), out.gt_index.end(),
                    [](int g) { return g >= 0; }));
  return out;
}

namespace {

// log(1 + exp(x)) without overflow.
double Softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

DetectionLossResult DetectionLoss(const Tensorf& class_logits,
                                  const Tensorf& box_deltas,
                                  std::span<const std::vector<Detection>> gt,
                                  const ModelConfig& model,
                                  const DetectionLossConfig& config) {
  const int n = class_logits.n(), h = class_logits.h(), w = class_logits.w();
  const int t = model.num_things;
  if (class_logits.c() != kAnchorsPerCell * t ||
      !(box_deltas.shape() == Shape4{n, h, w, kAnchorsPerCell * 4}) ||
      static_cast<int>(gt.size()) != n) {
    throw std::invalid_argument("DetectionLoss: shape mismatch");
  }
  const std::vector<Box> anchors =
      GenerateAnchors(h, w, kFeatureStride, model.anchor_size);
  DetectionLossResult out;
  out.d_class_logits = Tensorf(class_logits.shape());
  out.d_box_deltas = Tensorf(box_deltas.shape());

  std::vector<AnchorAssignment> assignments;
  for (int b = 0; b < n; ++b) {
    assignments.push_back(AssignAnchors(anchors, gt[b], config));
    out.num_positive += assignments.back().num_positive;
  }
  const double norm = std::max(1, out.num_positive);
  const double alpha = config.focal_alpha, gamma = config.focal_gamma;
  const double beta = config.smooth_l1_beta;

  for (int b = 0; b < n; ++b) {
    const AnchorAssignment& as = assignments[b];
    for (size_t a = 0; a < anchors.size(); ++a) {
      const int label = as.label[a];
      if (label == kIgnoredAnchor) continue;
      const int cell = static_cast<int>(a) / kAnchorsPerCell;
      const int k = static_cast<int>(a) % kAnchorsPerCell;
      const int y = cell / w, x = cell % w;
      const float* z = class_logits.pixel(b, y, x) + k * t;
      float* dz = out.d_class_logits.pixel(b, y, x) + k * t;
      for (int c = 0; c < t; ++c) {
        const double logit = z[c];
        const double p = 1.0 / (1.0 + std::exp(-logit));
        const double log_p = -Softplus(-logit);
        const double log_1mp = -Softplus(logit);
        double loss, grad;
        if (c == label) {
          const double q = std::pow(1 - p, gamma);
          loss = -alpha * q * log_p;
          grad = alpha * q * (gamma * p * log_p - (1 - p));
        } else {
          const double q = std::pow(p, gamma);
          loss = -(1 - alpha) * q * log_1mp;
          grad = (1 - alpha) * q * (p - gamma * (1 - p) * log_1mp);
        }
        out.classification += loss;
        dz[c] = static_cast<float>(grad / norm);
      }
      if (as.gt_index[a] < 0) continue;
      const auto target = EncodeBox(anchors[a], gt[b][as.gt_index[a]].box);
      const float* d = box_deltas.pixel(b, y, x) + k * 4;
      float* dd = out.d_box_deltas.pixel(b, y, x) + k * 4;
      for (int j = 0; j < 4; ++j) {
        const double diff = d[j] - target[j];
        const double ad = std::abs(diff);
        if (ad < beta) {
          out.regression += 0.5 * diff * diff / beta;
          dd[j] = static_cast<float>(diff / beta / norm);
        } else {
          out.regression += ad - 0.5 * beta;
          dd[j] = static_cast<float>((diff > 0 ? 1.0 : -1.0) / norm);
        }
      }
    }
  }
  out.classification /= norm;
  out.regression /= norm;
  return out;
}

// ----------------------------------------------------------------- optimizer

double PolyLearningRate(double base_lr, int step, int total_steps,
                        double power) {
  if (total_steps <= 0) throw std::invalid_argument("total_steps must be > 0");
  const double frac = 1.0 - static_cast<double>(step) / total_steps;
  return frac <= 0 ? 0.0 : base_lr * std::pow(frac, power);
}

SgdMomentum::SgdMomentum(ParameterList<float> params, double momentum,
                         double weight_decay)
    : params_(std::move(params)),
      momentum_(momentum),
      weight_decay_(weight_decay) {
  for (auto* p : params_) velocity_.emplace_back(p->value.size(), 0.0f);
}

void SgdMomentum::Step(double lr) {
  const float m = static_cast<float>(momentum_);
  const float lr_f = static_cast<float>(lr);
  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter<float>& p = *params_[i];
    if (!p.trainable) continue;
    const float wd = p.decay ? static_cast<float>(weight_decay_) : 0.0f;
    float* w = p.value.data();
    const float* g = p.grad.data();
    float* v = velocity_[i].data();
    for (size_t j = 0; j < p.value.size(); ++j) {
      v[j] = m * v[j] + g[j] + wd * w[j];
      w[j] -= lr_f * v[j];
    }
  }
}

// ------------------------------------------------------------------ training

void TrainConfig::Validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("train config: " + what);
  };
  require(steps > 0, "steps must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(base_lr > 0, "base_lr must be positive");
  require(lr_power > 0 && lr_power <= 2, "lr_power must be in (0, 2]");
  require(momentum >= 0 && momentum < 1, "momentum must be in [0, 1)");
  require(weight_decay >= 0, "weight_decay must be non-negative");
  require(lambda_det >= 0 && lambda_pan >= 0, "loss weights must be >= 0");
  require(log_every > 0, "log_every must be positive");
  require(eval_every >= 0 && checkpoint_every >= 0 && eval_images >= 0,
          "eval/checkpoint intervals must be non-negative");
}

Trainer::Trainer(PanopticModel& model, const Dataset& train, TrainConfig config,
                 PipelineOptions pipeline, uint64_t seed)
    : model_(model),
      train_(train),
      config_((config.Validate(), config)),
      pipeline_(pipeline),
      seed_(seed),
      optimizer_(model.Parameters(), config.momentum, config.weight_decay) {
  if (train.size() == 0) throw std::invalid_argument("empty training set");
}

std::vector<Sample> Trainer::LoadBatch(int step) const {
  const uint64_t n = train_.size();
  std::vector<Sample> batch;
  uint64_t cached_epoch = UINT64_MAX;
  std::vector<uint64_t> order;
  for (int b = 0; b < config_.batch_size; ++b) {
    const uint64_t global = static_cast<uint64_t>(step) * config_.batch_size + b;
    const uint64_t epoch = global / n;
    if (epoch != cached_epoch) {
      order.resize(n);
      std::iota(order.begin(), order.end(), uint64_t{0});
      Rng rng(MixSeed(seed_, 0x5eed, epoch));
      for (uint64_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.Below(i)]);
      cached_epoch = epoch;
    }
    Sample s = train_.Get(order[global % n]);
    if (config_.augment) {
      Rng rng(MixSeed(seed_, 0xa06, global));
      s = Augment(s, config_.augment_config, rng);
    }
    batch.push_back(std::move(s));
  }
  return batch;
}

BatchResult Trainer::ComputeGradients(int step) {
  const ModelConfig& mc = model_.config();
  const std::vector<Sample> batch = LoadBatch(step);
  std::vector<const Image*> images;
  for (const auto& s : batch) images.push_back(&s.image);
  const Tensorf x = Preprocess(std::span<const Image* const>(images), mc);
  const int fh = batch[0].image.height / kFeatureStride;
  const int fw = batch[0].image.width / kFeatureStride;
  const int n = static_cast<int>(batch.size());

  ZeroGrads(model_.Parameters());
  FeaturePyramid<float> pyr = model_.backbone().Forward(x, true);
  const Tensorf s_full =
      model_.fpn().Forward(pyr.P(3), pyr.P(4), pyr.P(5), true);
  const Tensorf s = CropSpatial(s_full, fh, fw);
  const bool learned = pipeline_.detector == DetectorMode::kLearned;
  DetectorHead<float>::Output det;
  if (learned) det = model_.detector().Forward(CropSpatial(pyr.P(3), fh, fw), true);

  // No score threshold at training time: slots take the top detections.
  DecodeOptions decode = pipeline_.decode;
  decode.score_threshold = 0.0;

  BatchResult result;
  for (int b = 0; b < n; ++b) {
    // Detections are constants for the panoptic branch.
    std::vector<Detection> dets =
        learned ? DecodeDetections(det.class_logits, det.box_deltas, b, mc,
                                   batch[b].image.height, batch[b].image.width,
                                   decode)
                : OracleDetections(batch[b].instances, pipeline_.oracle,
                                   MixSeed(seed_, 0x0ac1e, static_cast<uint64_t>(step) * n + b));
    AttentionStack stack = GenerateMasks(dets, fh, fw, mc, pipeline_.masks);
    if (pipeline_.shuffle) {
      stack = ShuffleMasks(stack, MixSeed(seed_, 0x5f1f,
                                          static_cast<uint64_t>(step) * n + b));
    }
    MatchAssignment assignment =
        MatchMasks(stack, batch[b].instances, config_.match_iou);
    result.targets.push_back(BuildTarget(batch[b].panoptic, batch[b].instances,
                                         assignment, mc, fh, fw));
    result.stacks.push_back(std::move(stack));
    result.assignments.push_back(std::move(assignment));
  }

  const Tensorf masks = StackToTensor(result.stacks);
  const Tensorf logits = model_.head().Forward(s, masks, true);
  LossWithGrad<float> pan = PanopticLoss(logits, std::span<const TargetMap>(result.targets));

  DetectionLossResult det_loss;
  if (learned) {
    std::vector<std::vector<Detection>> gt_boxes(n);
    for (int b = 0; b < n; ++b) {
      for (const auto& inst : batch[b].instances) {
        gt_boxes[b].push_back({inst.class_id, 1.0, inst.box});
      }
    }
    det_loss = DetectionLoss(det.class_logits, det.box_deltas, gt_boxes, mc,
                             config_.detection_loss);
  }

  StepStats& st = result.stats;
  st.step = step;
  st.l_pan = pan.loss;
  st.l_det = det_loss.total();
  st.loss = TotalLoss(st.l_det, st.l_pan, config_.lambda_det, config_.lambda_pan);
  st.lr = PolyLearningRate(config_.base_lr, step, config_.steps, config_.lr_power);
  if (!std::isfinite(st.loss)) {
    std::ostringstream os;
    os << "non-finite loss at step " << step << ": l_det=" << st.l_det
       << " l_pan=" << st.l_pan << " lr=" << st.lr
       << " logits_finite=" << logits.AllFinite();
    throw std::runtime_error(os.str());
  }

  // Backward. The head's mask gradient is dropped: masks are inputs.
  for (auto& g : pan.grad.storage()) g *= static_cast<float>(config_.lambda_pan);
  const auto head_grads = model_.head().Backward(pan.grad);
  const auto fpn_grads =
      model_.fpn().Backward(PadSpatial(head_grads.d_features, s_full.h(), s_full.w()));
  Tensorf d_p3 = fpn_grads.d_p3;
  if (learned) {
    const float ld = static_cast<float>(config_.lambda_det);
    for (auto& g : det_loss.d_class_logits.storage()) g *= ld;
    for (auto& g : det_loss.d_box_deltas.storage()) g *= ld;
    d_p3 += PadSpatial(
        model_.detector().Backward(det_loss.d_class_logits, det_loss.d_box_deltas),
        d_p3.h(), d_p3.w());
  }
  model_.backbone().Backward(d_p3, fpn_grads.d_p4, fpn_grads.d_p5);
  return result;
}

StepStats Trainer::Step(int step) {
  BatchResult r = ComputeGradients(step);
  optimizer_.Step(r.stats.lr);
  return r.stats;
}

namespace {

constexpr int kConsoleEvery = 50;

}  // namespace

PQReport Trainer::Run(const Dataset* val, const std::string& out_dir,
                      const std::string& checkpoint_metadata) {
  namespace fs = std::filesystem;
  std::ofstream log;
  if (!out_dir.empty()) {
    fs::create_directories(fs::path(out_dir) / "checkpoints");
    log.open(fs::path(out_dir) / "metrics.jsonl", std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write metrics log in " + out_dir);
  }
  const auto start = std::chrono::steady_clock::now();
  auto validate = [&]() -> PQReport {
    return Evaluate(model_, *val, pipeline_,
                    static_cast<size_t>(config_.eval_images));
  };
  PQReport report;
  for (int step = 0; step < config_.steps; ++step) {
    const StepStats st = Step(step);
    const bool last = step + 1 == config_.steps;
    const bool do_eval = val != nullptr && config_.eval_every > 0 &&
                         (step + 1) % config_.eval_every == 0 && !last;
    nlohmann::json line;
    if (step % config_.log_every == 0 || last || do_eval) {
      line = {{"step", step},   {"l_det", st.l_det}, {"l_pan", st.l_pan},
              {"loss", st.loss}, {"lr", st.lr},       {"val_pq", nullptr}};
    }
    if (do_eval) line["val_pq"] = validate().pq;
    if (last && val != nullptr) {
      report = validate();
      line["val_pq"] = report.pq;
    }
    if (!line.is_null()) {
      const double secs = std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - start)
                              .count();
      if (step % kConsoleEvery == 0 || last || do_eval) {
        LOG(INFO) << "step " << step << " loss " << st.loss << " (det "
                  << st.l_det << ", pan " << st.l_pan << ") lr " << st.lr
                  << " elapsed " << secs << "s";
      }
      if (log.is_open()) log << line.dump() << "\n" << std::flush;
    }
    if (!out_dir.empty() && config_.checkpoint_every > 0 &&
        (step + 1) % config_.checkpoint_every == 0 && !last) {
      SaveCheckpoint((fs::path(out_dir) / "checkpoints" /
                      ("step_" + std::to_string(step + 1) + ".ckpt"))
                         .string(),
                     model_.Parameters(), checkpoint_metadata);
    }
  }
  if (!out_dir.empty()) {
    SaveCheckpoint((fs::path(out_dir) / "checkpoints" / "final.ckpt").string(),
                   model_.Parameters(), checkpoint_metadata);
  }
  if (val != nullptr) {
    LOG(INFO) << "final validation PQ " << report.pq << " PQ_Th "
              << report.pq_things << " PQ_St " << report.pq_stuff;
    if (!out_dir.empty()) {
      std::ofstream f(fs::path(out_dir) / "final_metrics.json");
      f << report.ToJson() << "\n";
    }
  }
  return report;
}

}  // namespace attnpan
