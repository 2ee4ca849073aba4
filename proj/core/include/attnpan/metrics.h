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

// Panoptic Quality.
//
// Segments are (class, instance) pairs. A predicted and a ground-truth
// segment of the same class match when IoU > 0.5, where the union excludes
// predicted pixels that fall on ground-truth void. Unmatched ground-truth
// segments are false negatives (crowd segments excepted). Unmatched
// predictions are false positives unless more than half of their area lies
// on ground-truth void or on a crowd region of their class.
//
//   PQ = sum(IoU over TP) / (TP + FP/2 + FN/2) = SQ * RQ

#ifndef ATTNPAN_METRICS_H_
#define ATTNPAN_METRICS_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "attnpan/panoptic.h"

namespace attnpan {

struct ClassStats {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
  double iou_sum = 0.0;

  bool Present() const { return tp + fp + fn > 0; }
  double PQ() const;
  double SQ() const;
  double RQ() const;
  bool operator==(const ClassStats&) const = default;
};

struct PQReport {
  LabelSpace labels;
  std::vector<ClassStats> per_class;

  // Means over classes with TP + FP + FN > 0; zero when no class qualifies.
  double pq = 0, sq = 0, rq = 0;
  double pq_things = 0, sq_things = 0, rq_things = 0;
  double pq_stuff = 0, sq_stuff = 0, rq_stuff = 0;
  int num_classes = 0, num_things = 0, num_stuff = 0;

  // Recomputes the aggregate fields from per_class.
  void Finalize();

  std::string ToJson() const;
  // PQ / PQ_Th / PQ_St in percent plus a per-class breakdown.
  std::string FormatTable(const std::vector<std::string>& class_names = {}) const;
};

// Throws std::invalid_argument when resolutions differ.
PQReport ComputePQ(const PanopticLabelMap& pred, const PanopticLabelMap& gt,
                   const LabelSpace& labels);

// Sums per-class statistics, then derives the metrics.
PQReport AggregateReports(std::span<const PQReport> reports);

}  // namespace attnpan

#endif  // ATTNPAN_METRICS_H_
