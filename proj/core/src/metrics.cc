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

#include "attnpan/metrics.h"

#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace attnpan {

double ClassStats::PQ() const {
  const double denom = tp + 0.5 * fp + 0.5 * fn;
  return denom > 0 ? iou_sum / denom : 0.0;
}
double ClassStats::SQ() const { return tp > 0 ? iou_sum / tp : 0.0; }
double ClassStats::RQ() const {
  const double denom = tp + 0.5 * fp + 0.5 * fn;
  return denom > 0 ? tp / denom : 0.0;
}

void PQReport::Finalize() {
  struct Acc {
    double pq = 0, sq = 0, rq = 0;
    int n = 0;
    void Add(const ClassStats& s) {
      pq += s.PQ();
      sq += s.SQ();
      rq += s.RQ();
      ++n;
    }
  } all, things, stuff;
  for (size_t c = 0; c < per_class.size(); ++c) {
    const auto& s = per_class[c];
    if (!s.Present()) continue;
    all.Add(s);
    (labels.IsThing(static_cast<int>(c)) ? things : stuff).Add(s);
  }
  auto mean = [](double v, int n) { return n > 0 ? v / n : 0.0; };
  pq = mean(all.pq, all.n);
  sq = mean(all.sq, all.n);
  rq = mean(all.rq, all.n);
  pq_things = mean(things.pq, things.n);
  sq_things = mean(things.sq, things.n);
  rq_things = mean(things.rq, things.n);
  pq_stuff = mean(stuff.pq, stuff.n);
  sq_stuff = mean(stuff.sq, stuff.n);
  rq_stuff = mean(stuff.rq, stuff.n);
  num_classes = all.n;
  num_things = things.n;
  num_stuff = stuff.n;
}

std::string PQReport::ToJson() const {
  nlohmann::json j;
  j["pq"] = pq;
  j["sq"] = sq;
  j["rq"] = rq;
  j["pq_things"] = pq_things;
  j["sq_things"] = sq_things;
  j["rq_things"] = rq_things;
  j["pq_stuff"] = pq_stuff;
  j["sq_stuff"] = sq_stuff;
  j["rq_stuff"] = rq_stuff;
  j["num_classes"] = num_classes;
  j["num_things"] = num_things;
  j["num_stuff"] = num_stuff;
  auto& classes = j["per_class"] = nlohmann::json::array();
  for (size_t c = 0; c < per_class.size(); ++c) {
    const auto& s = per_class[c];
    classes.push_back({{"class_id", c},
                       {"isthing", labels.IsThing(static_cast<int>(c))},
                       {"tp", s.tp},
                       {"fp", s.fp},
                       {"fn", s.fn},
                       {"iou_sum", s.iou_sum},
                       {"pq", s.PQ()},
                       {"sq", s.SQ()},
                       {"rq", s.RQ()}});
  }
  return j.dump(2);
}

std::string PQReport::FormatTable(
    const std::vector<std::string>& class_names) const {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-12s | %6s | %6s | %6s\n", "", "PQ",
                "SQ", "RQ");
  os << buf;
  auto row = [&](const char* name, double a, double b, double c) {
    std::snprintf(buf, sizeof(buf), "%-12s | %6.1f | %6.1f | %6.1f\n", name,
                  100 * a, 100 * b, 100 * c);
    os << buf;
  };
  row("All", pq, sq, rq);
  row("Things", pq_things, sq_things, rq_things);
  row("Stuff", pq_stuff, sq_stuff, rq_stuff);
  os << "\n";
  std::snprintf(buf, sizeof(buf), "%-12s | %6s | %6s | %6s | %5s | %5s | %5s\n",
                "class", "PQ", "SQ", "RQ", "TP", "FP", "FN");
  os << buf;
  for (size_t c = 0; c < per_class.size(); ++c) {
    const auto& s = per_class[c];
    const std::string name =
        c < class_names.size() ? class_names[c] : "class " + std::to_string(c);
    std::snprintf(buf, sizeof(buf),
                  "%-12s | %6.1f | %6.1f | %6.1f | %5lld | %5lld | %5lld\n",
                  name.c_str(), 100 * s.PQ(), 100 * s.SQ(), 100 * s.RQ(),
                  static_cast<long long>(s.tp), static_cast<long long>(s.fp),
                  static_cast<long long>(s.fn));
    os << buf;
  }
  return os.str();
}

PQReport ComputePQ(const PanopticLabelMap& pred, const PanopticLabelMap& gt,
                   const LabelSpace& labels) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw std::invalid_argument("ComputePQ: resolution mismatch");
  }
  PQReport report;
  report.labels = labels;
  report.per_class.assign(labels.num_classes(), ClassStats{});

  std::map<SegmentKey, int64_t> pred_area, gt_area;
  std::map<std::pair<SegmentKey, SegmentKey>, int64_t> overlap;  // (gt, pred)
  for (size_t i = 0; i < gt.size(); ++i) {
    const SegmentKey g{gt.class_ids[i], gt.instance_ids[i]};
    const SegmentKey p{pred.class_ids[i], pred.instance_ids[i]};
    if (g.class_id != kVoidClass) ++gt_area[g];
    if (p.class_id != kVoidClass) {
      ++pred_area[p];
      ++overlap[{g, p}];
    }
  }
  auto check_class = [&](int c) {
    if (c < 0 || c >= labels.num_classes()) {
      throw std::invalid_argument("ComputePQ: class id " + std::to_string(c) +
                                  " outside label space");
    }
  };

  std::set<SegmentKey> matched_gt, matched_pred;
  for (const auto& [key, count] : overlap) {
    const auto& [g, p] = key;
    if (g.class_id == kVoidClass || g.class_id != p.class_id) continue;
    if (gt.IsCrowd(g)) continue;
    const int64_t void_in_pred = [&] {
      auto it = overlap.find({SegmentKey{kVoidClass, 0}, p});
      return it == overlap.end() ? int64_t{0} : it->second;
    }();
    const double uni = static_cast<double>(pred_area[p] + gt_area[g] - count -
                                           void_in_pred);
    const double iou = count / uni;
    if (iou > 0.5) {
      check_class(g.class_id);
      auto& s = report.per_class[g.class_id];
      ++s.tp;
      s.iou_sum += iou;
      matched_gt.insert(g);
      matched_pred.insert(p);
    }
  }

  // Crowd pixels per class, for the false-positive exemption.
  std::map<int, std::set<SegmentKey>> crowd_by_class;
  for (const auto& k : gt.crowd) crowd_by_class[k.class_id].insert(k);

  for (const auto& [g, area] : gt_area) {
    if (matched_gt.count(g) || gt.IsCrowd(g)) continue;
    check_class(g.class_id);
    ++report.per_class[g.class_id].fn;
  }
  for (const auto& [p, area] : pred_area) {
    if (matched_pred.count(p)) continue;
    check_class(p.class_id);
    int64_t ignored = 0;
    auto void_it = overlap.find({SegmentKey{kVoidClass, 0}, p});
    if (void_it != overlap.end()) ignored += void_it->second;
    for (const auto& crowd : crowd_by_class[p.class_id]) {
      auto it = overlap.find({crowd, p});
      if (it != overlap.end()) ignored += it->second;
    }
    if (ignored * 2 > area) continue;
    ++report.per_class[p.class_id].fp;
  }
  report.Finalize();
  return report;
}

PQReport AggregateReports(std::span<const PQReport> reports) {
  PQReport out;
  for (const auto& r : reports) {
    if (!r.per_class.empty()) {
      out.labels = r.labels;
      break;
    }
  }
  out.per_class.assign(out.labels.num_classes(), ClassStats{});
  for (const auto& r : reports) {
    if (r.per_class.size() != out.per_class.size()) {
      if (r.per_class.empty()) continue;
      throw std::invalid_argument("AggregateReports: label spaces differ");
    }
    for (size_t c = 0; c < r.per_class.size(); ++c) {
      out.per_class[c].tp += r.per_class[c].tp;
      out.per_class[c].fp += r.per_class[c].fp;
      out.per_class[c].fn += r.per_class[c].fn;
      out.per_class[c].iou_sum += r.per_class[c].iou_sum;
    }
  }
  out.Finalize();
  return out;
}

}  // namespace attnpan
