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

// Joint training: slot/ground-truth matching, per-pixel panoptic targets,
// the panoptic and detection losses, the polynomial schedule, SGD with
// momentum and the training loop.

#ifndef ATTNPAN_TRAINING_H_
#define ATTNPAN_TRAINING_H_

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "attnpan/data.h"
#include "attnpan/maskgen.h"
#include "attnpan/model.h"
#include "attnpan/panoptic.h"
#include "attnpan/pipeline.h"
#include "attnpan/tensor.h"

namespace attnpan {

// ------------------------------------------------------------------ matching

enum class MatchIoU { kBox, kMask };

struct MatchPair {
  int slot = 0;
  int gt = 0;  // index into the ground-truth instance list
  double iou = 0;
  bool operator==(const MatchPair&) const = default;
};

struct MatchAssignment {
  std::vector<MatchPair> pairs;  // in greedy selection order
  std::vector<int> slot_to_gt;   // -1 when the slot is unmatched
  std::vector<int> gt_to_slot;   // -1 when the instance is unmatched
  std::vector<int> unmatched_gt;     // ascending
  std::vector<int> discarded_slots;  // filled slots left unmatched, ascending
};

inline constexpr double kMatchIoUThreshold = 0.5;

// IoU between a slot's detection and a ground-truth instance. kBox compares
// the detection box with the tight instance box; kMask compares the
// detection box rasterized at input resolution with the instance mask.
double SlotIoU(const Detection& detection, const GroundTruthInstance& gt,
               MatchIoU mode);

// Greedy one-to-one matching over filled slots: repeatedly take the pair of
// highest IoU (ties broken by lower slot index, then lower ground-truth
// index) among unmatched slots and instances, while that IoU exceeds 0.5.
// Classes are not required to agree.
MatchAssignment MatchMasks(const AttentionStack& stack,
                           std::span<const GroundTruthInstance> instances,
                           MatchIoU mode = MatchIoU::kBox);

// ------------------------------------------------------------------- targets

// Per-pixel output-channel indices at feature resolution.
struct TargetMap {
  int height = 0;
  int width = 0;
  std::vector<int32_t> channel;

  int at(int y, int x) const {
    return channel[static_cast<size_t>(y) * width + x];
  }
};

// Samples the ground truth at input pixel (8y + 4, 8x + 4) for each feature
// pixel (y, x): matched thing instance -> its slot; unmatched thing ->
// unmatched channel; stuff class c -> num_att + (c - num_things); void and
// crowd -> unlabeled channel. Throws std::invalid_argument on class ids
// outside the label space and on feature grids that do not cover the map.
TargetMap BuildTarget(const PanopticLabelMap& gt,
                      std::span<const GroundTruthInstance> instances,
                      const MatchAssignment& assignment,
                      const ModelConfig& config, int feature_h, int feature_w);

// -------------------------------------------------------------------- losses

template <typename T>
struct LossWithGrad {
  double loss = 0;
  Tensor<T> grad;  // d loss / d input, same shape as the input
};

// Mean per-pixel softmax cross-entropy of logits [N, H, W, C] against one
// target map per image.
template <typename T>
LossWithGrad<T> PanopticLoss(const Tensor<T>& logits,
                             std::span<const TargetMap> targets) {
  if (static_cast<int>(targets.size()) != logits.n()) {
    throw std::invalid_argument("PanopticLoss: target count mismatch");
  }
  LossWithGrad<T> out;
  out.grad = Tensor<T>(logits.shape());
  const int c = logits.c();
  const double count = static_cast<double>(logits.n()) * logits.h() * logits.w();
  double total = 0;
  std::vector<double> prob(c);
  for (int b = 0; b < logits.n(); ++b) {
    const TargetMap& t = targets[b];
    if (t.height != logits.h() || t.width != logits.w()) {
      throw std::invalid_argument("PanopticLoss: target size mismatch");
    }
    for (int y = 0; y < logits.h(); ++y) {
      for (int x = 0; x < logits.w(); ++x) {
        const T* z = logits.pixel(b, y, x);
        T* g = out.grad.pixel(b, y, x);
        const int label = t.at(y, x);
        if (label < 0 || label >= c) {
          throw std::invalid_argument("PanopticLoss: target channel " +
                                      std::to_string(label) + " out of range");
        }
        double zmax = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < c; ++k) zmax = std::max(zmax, double(z[k]));
        double sum = 0;
        for (int k = 0; k < c; ++k) {
          prob[k] = std::exp(double(z[k]) - zmax);
          sum += prob[k];
        }
        total += std::log(sum) + zmax - double(z[label]);
        for (int k = 0; k < c; ++k) {
          g[k] = static_cast<T>((prob[k] / sum - (k == label ? 1.0 : 0.0)) /
                                count);
        }
      }
    }
  }
  out.loss = total / count;
  return out;
}

struct DetectionLossConfig {
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double smooth_l1_beta = 1.0 / 9.0;
  double positive_iou = 0.5;
  double negative_iou = 0.4;
};

// Anchor labels: class index for positives, -1 for negatives, -2 for
// ignored anchors (IoU in [negative_iou, positive_iou)). Every ground-truth
// box also claims its best anchor if that anchor has positive IoU.
struct AnchorAssignment {
  std::vector<int> label;
  std::vector<int> gt_index;  // for positives
  int num_positive = 0;
};
inline constexpr int kNegativeAnchor = -1;
inline constexpr int kIgnoredAnchor = -2;

AnchorAssignment AssignAnchors(std::span<const Box> anchors,
                               std::span<const Detection> gt,
                               const DetectionLossConfig& config);

struct DetectionLossResult {
  double classification = 0;
  double regression = 0;
  int num_positive = 0;
  Tensorf d_class_logits;
  Tensorf d_box_deltas;

  double total() const { return classification + regression; }
};

// Sigmoid focal loss plus smooth-L1 box regression, both summed over the
// batch and divided by max(1, number of positive anchors).
DetectionLossResult DetectionLoss(const Tensorf& class_logits,
                                  const Tensorf& box_deltas,
                                  std::span<const std::vector<Detection>> gt,
                                  const ModelConfig& model,
                                  const DetectionLossConfig& config = {});

// L = lambda_det * L_det + lambda_pan * L_pan.
inline double TotalLoss(double l_det, double l_pan, double lambda_det,
                        double lambda_pan) {
  return lambda_det * l_det + lambda_pan * l_pan;
}

// ----------------------------------------------------------------- optimizer

// lr0 * (1 - step / total_steps)^power, clamped at zero past the end.
double PolyLearningRate(double base_lr, int step, int total_steps,
                        double power);

// SGD with momentum: v = m * v + g + wd * w (wd only for parameters marked
// for decay), w -= lr * v. Non-trainable entries are skipped.
class SgdMomentum {
 public:
  SgdMomentum(ParameterList<float> params, double momentum,
              double weight_decay);

  void Step(double lr);

 private:
  ParameterList<float> params_;
  std::vector<std::vector<float>> velocity_;
  double momentum_;
  double weight_decay_;
};

// ------------------------------------------------------------------ training

struct TrainConfig {
  int steps = 2000;
  int batch_size = 4;
  double base_lr = 0.01;
  double lr_power = 0.9;
  double momentum = 0.9;
  double weight_decay = 0.001;
  double lambda_det = 0.5;
  double lambda_pan = 1.0;
  MatchIoU match_iou = MatchIoU::kBox;
  bool augment = false;
  AugmentConfig augment_config;
  DetectionLossConfig detection_loss;
  int log_every = 1;        // metrics.jsonl line interval
  int eval_every = 0;       // 0 disables periodic validation
  int eval_images = 0;      // 0 evaluates the whole validation set
  int checkpoint_every = 0; // 0 keeps only the final checkpoint

  void Validate() const;
};

struct StepStats {
  int step = 0;
  double l_det = 0;
  double l_pan = 0;
  double loss = 0;
  double lr = 0;
};

// Everything computed for one batch, kept for inspection by tests.
struct BatchResult {
  StepStats stats;
  std::vector<AttentionStack> stacks;
  std::vector<MatchAssignment> assignments;
  std::vector<TargetMap> targets;
};

class Trainer {
 public:
  Trainer(PanopticModel& model, const Dataset& train, TrainConfig config,
          PipelineOptions pipeline, uint64_t seed);

  // Forward and backward on the batch for `step`; leaves gradients in the
  // model parameters without updating them. Throws std::runtime_error when
  // the loss is not finite.
  BatchResult ComputeGradients(int step);

  // ComputeGradients followed by an SGD update at the scheduled rate.
  StepStats Step(int step);

  // Samples of the batch for `step` after augmentation.
  std::vector<Sample> LoadBatch(int step) const;

  // Full loop. Writes metrics.jsonl (one JSON object per logged step),
  // periodic and final checkpoints, and final_metrics.json into out_dir
  // when it is non-empty. Returns the final validation report (empty when
  // no validation set is given). checkpoint_metadata is stored in every
  // checkpoint.
  PQReport Run(const Dataset* val, const std::string& out_dir,
               const std::string& checkpoint_metadata = "");

  const TrainConfig& config() const { return config_; }

 private:
  PanopticModel& model_;
  const Dataset& train_;
  TrainConfig config_;
  PipelineOptions pipeline_;
  uint64_t seed_;
  SgdMomentum optimizer_;
};

}  // namespace attnpan

#endif  // ATTNPAN_TRAINING_H_
