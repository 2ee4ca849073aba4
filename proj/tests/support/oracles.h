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

// Independent brute-force reference implementations used as test oracles,
// plus random-instance generators shared by unit and acceptance tests.
// None of these call the library routine they check.

#ifndef ATTNPAN_TESTS_SUPPORT_ORACLES_H_
#define ATTNPAN_TESTS_SUPPORT_ORACLES_H_

#include <cstdint>
#include <string>
#include <vector>

#include "attnpan/maskgen.h"
#include "attnpan/metrics.h"
#include "attnpan/model.h"
#include "attnpan/panoptic.h"
#include "attnpan/random.h"
#include "attnpan/tensor.h"
#include "attnpan/training.h"

namespace attnpan::testing {

// ------------------------------------------------------------------------ PQ

// Per-class (tp, fp, fn, iou_sum) by pairwise pixel scans over every
// (ground-truth segment, predicted segment) pair.
std::vector<ClassStats> BruteForcePQ(const PanopticLabelMap& pred,
                                     const PanopticLabelMap& gt,
                                     const LabelSpace& labels);

// Random label map with up to max_segments segments of random classes drawn
// as overlapping rectangles, some void, optionally marking one thing segment
// as crowd.
PanopticLabelMap RandomLabelMap(Rng& rng, int h, int w, const LabelSpace& labels,
                                int max_segments, bool allow_crowd);

// Prediction derived from gt by random edits (shifted rectangles, relabels,
// instance splits) so that partial matches occur often.
PanopticLabelMap PerturbLabelMap(Rng& rng, const PanopticLabelMap& gt,
                                 const LabelSpace& labels);

// ------------------------------------------------------------------ matching

struct MatchProblem {
  std::vector<Box> slots;
  std::vector<Box> gts;
};

// Boxes with continuous coordinates (ties have probability zero). Slots are
// jittered copies of ground-truth boxes mixed with random boxes.
MatchProblem RandomMatchProblem(Rng& rng, int num_slots, int num_gt);

// Enumerates every one-to-one assignment using only pairs with IoU > 0.5 and
// returns the one whose IoU list, sorted descending, is lexicographically
// largest (as (slot, gt) pairs sorted by slot).
std::vector<std::pair<int, int>> EnumerationMatch(const MatchProblem& p);

// Packs the problem into an AttentionStack / instance list for MatchMasks.
AttentionStack StackFromBoxes(const std::vector<Box>& boxes, int num_slots);
std::vector<GroundTruthInstance> InstancesFromBoxes(const std::vector<Box>& boxes);

// Checks one-to-one-ness, the IoU floor, maximality and the
// highest-available-slot rule. Returns an empty string when all hold.
std::string CheckMatchProperties(const MatchProblem& p,
                                 const MatchAssignment& a);

// -------------------------------------------------------------------- fusion

// Per-pixel argmax by direct evaluation of the half-pixel bilinear formula
// at each output pixel, lowest channel winning ties.
PanopticLabelMap BruteForceFuse(const Tensorf& logits,
                                const AttentionStack& stack,
                                const ModelConfig& config, int out_h,
                                int out_w);

// Logits whose entries are multiples of 1/8 in [-2, 2]; 8x bilinear weights
// are multiples of 1/256, so every interpolated value is exact in float and
// ties are genuine.
Tensorf RandomDyadicLogits(Rng& rng, int h, int w, int channels);

// Stack with a random subset of filled slots (random boxes and classes).
AttentionStack RandomSlotStack(Rng& rng, int num_slots, int h, int w,
                               int num_things);

}  // namespace attnpan::testing

#endif  // ATTNPAN_TESTS_SUPPORT_ORACLES_H_
