// Copyright (c) 2026 The jointseg Authors
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

#include "jointseg/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>
#include <tuple>

#include "jointseg/error.hpp"

namespace jointseg
{

RegionSet RegionSet::from_labels(std::span<const int> instance_ids, std::span<const int> semantic)
{
  if (instance_ids.size() != semantic.size()) {
    throw DimensionError("instance and semantic label counts differ");
  }
  std::map<int, std::size_t> slot;
  RegionSet set;
  set.universe = instance_ids.size();
  std::vector<std::map<int, std::size_t>> votes;
  for (std::size_t i = 0; i < instance_ids.size(); ++i) {
    auto [it, inserted] = slot.emplace(instance_ids[i], set.regions.size());
    if (inserted) {
      set.regions.emplace_back();
      votes.emplace_back();
    }
    set.regions[it->second].points.push_back(i);
    ++votes[it->second][semantic[i]];
  }
  for (std::size_t r = 0; r < set.regions.size(); ++r) {
    std::size_t best = 0;
    for (const auto & [cls, count] : votes[r]) {
      if (count > best) {
        best = count;
        set.regions[r].category = cls;
      }
    }
  }
  return set;
}

void RegionSet::validate() const
{
  std::vector<bool> used(universe, false);
  for (const auto & r : regions) {
    for (std::size_t i = 0; i < r.points.size(); ++i) {
      const std::size_t p = r.points[i];
      if (p >= universe || (i && r.points[i - 1] >= p)) {
        throw ContractError("region points must be sorted, unique and inside the universe");
      }
      if (used[p]) {
        throw ContractError("regions overlap at point " + std::to_string(p));
      }
      used[p] = true;
    }
  }
}

double iou(std::span<const std::size_t> a, std::span<const std::size_t> b)
{
  std::size_t common = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++common;
      ++ia;
      ++ib;
    }
  }
  const std::size_t uni = a.size() + b.size() - common;
  return uni == 0 ? 0.0 : static_cast<double>(common) / static_cast<double>(uni);
}

double coverage(const RegionSet & gt, const RegionSet & pred, bool weighted)
{
  if (gt.regions.empty()) {
    throw ContractError("coverage needs at least one ground-truth region");
  }
  std::size_t total_points = 0;
  for (const auto & g : gt.regions) {
    total_points += g.points.size();
  }
  double score = 0.0;
  for (const auto & g : gt.regions) {
    double best = 0.0;
    for (const auto & p : pred.regions) {
      best = std::max(best, iou(g.points, p.points));
    }
    const double w = weighted ?
      static_cast<double>(g.points.size()) / static_cast<double>(total_points) :
      1.0 / static_cast<double>(gt.regions.size());
    score += w * best;
  }
  return score;
}

double ClassCounts::precision() const
{
  return predictions == 0 ? 0.0 :
         static_cast<double>(true_positives) / static_cast<double>(predictions);
}

double ClassCounts::recall() const
{
  return ground_truth == 0 ? 0.0 :
         static_cast<double>(true_positives) / static_cast<double>(ground_truth);
}

PrecisionRecall summarize(const std::map<int, ClassCounts> & per_class)
{
  PrecisionRecall out;
  out.per_class = per_class;
  std::size_t classes = 0;
  for (const auto & [cls, c] : per_class) {
    if (c.ground_truth == 0) {
      continue;
    }
    ++classes;
    out.mean_precision += c.precision();
    out.mean_recall += c.recall();
  }
  if (classes) {
    out.mean_precision /= static_cast<double>(classes);
    out.mean_recall /= static_cast<double>(classes);
  }
  return out;
}

PrecisionRecall precision_recall(
  const RegionSet & gt, const RegionSet & pred, double iou_threshold)
{
  std::map<int, ClassCounts> counts;
  std::set<int> categories;
  for (const auto & g : gt.regions) {
    ++counts[g.category].ground_truth;
    categories.insert(g.category);
  }
  for (const auto & p : pred.regions) {
    ++counts[p.category].predictions;
    categories.insert(p.category);
  }
  for (int cls : categories) {
    // (iou, gt, pred), sorted by descending IoU then ascending indices.
    std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
    for (std::size_t gi = 0; gi < gt.regions.size(); ++gi) {
      if (gt.regions[gi].category != cls) {
        continue;
      }
      for (std::size_t pi = 0; pi < pred.regions.size(); ++pi) {
        if (pred.regions[pi].category != cls) {
          continue;
        }
        const double v = iou(gt.regions[gi].points, pred.regions[pi].points);
        if (v > 0.0) {
          pairs.emplace_back(v, gi, pi);
        }
      }
    }
    std::sort(
      pairs.begin(), pairs.end(), [](const auto & a, const auto & b) {
        if (std::get<0>(a) != std::get<0>(b)) {
          return std::get<0>(a) > std::get<0>(b);
        }
        return std::make_pair(std::get<1>(a), std::get<2>(a)) <
        std::make_pair(std::get<1>(b), std::get<2>(b));
      });
    std::set<std::size_t> used_gt, used_pred;
    for (const auto & [v, gi, pi] : pairs) {
      if (used_gt.count(gi) || used_pred.count(pi)) {
        continue;
      }
      used_gt.insert(gi);
      used_pred.insert(pi);
      if (v >= iou_threshold) {
        ++counts[cls].true_positives;
      }
    }
  }
  return summarize(counts);
}

SemanticScores semantic_scores(std::span<const int> predicted, std::span<const int> truth)
{
  if (predicted.size() != truth.size()) {
    throw DimensionError(
            "semantic label counts differ: " + std::to_string(predicted.size()) + " predicted, " +
            std::to_string(truth.size()) + " ground truth");
  }
  Confusion confusion;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++confusion[{truth[i], predicted[i]}];
  }
  return semantic_scores(confusion);
}

SemanticScores semantic_scores(const Confusion & confusion)
{
  std::map<int, std::size_t> gt_total, pred_total, correct;
  std::size_t total = 0, hits = 0;
  for (const auto & [key, count] : confusion) {
    const auto [g, p] = key;
    gt_total[g] += count;
    pred_total[p] += count;
    total += count;
    if (g == p) {
      correct[g] += count;
      hits += count;
    }
  }
  SemanticScores s;
  if (total == 0) {
    return s;
  }
  s.overall_accuracy = static_cast<double>(hits) / static_cast<double>(total);
  for (const auto & [cls, n] : gt_total) {
    s.class_accuracy[cls] = static_cast<double>(correct[cls]) / static_cast<double>(n);
    s.mean_accuracy += s.class_accuracy[cls];
  }
  s.mean_accuracy /= static_cast<double>(gt_total.size());
  std::set<int> classes;
  for (const auto & [cls, n] : gt_total) {
    classes.insert(cls);
  }
  for (const auto & [cls, n] : pred_total) {
    classes.insert(cls);
  }
  for (int cls : classes) {
    const std::size_t tp = correct[cls];
    const std::size_t denom = gt_total[cls] + pred_total[cls] - tp;
    s.class_iou[cls] = static_cast<double>(tp) / static_cast<double>(denom);
    s.mean_iou += s.class_iou[cls];
  }
  s.mean_iou /= static_cast<double>(classes.size());
  return s;
}

void Evaluator::add(
  std::span<const int> pred_semantic, std::span<const int> pred_instance,
  std::span<const int> gt_semantic, std::span<const int> gt_instance)
{
  const std::size_t n = gt_semantic.size();
  if (pred_semantic.size() != n || pred_instance.size() != n || gt_instance.size() != n) {
    throw DimensionError("evaluation arrays differ in length");
  }
  const RegionSet gt = RegionSet::from_labels(gt_instance, gt_semantic);
  const RegionSet pred = RegionSet::from_labels(pred_instance, pred_semantic);
  cov_sum_ += coverage(gt, pred, false);
  wcov_sum_ += coverage(gt, pred, true);
  for (const auto & [cls, c] : precision_recall(gt, pred, iou_threshold_).per_class) {
    auto & acc = counts_[cls];
    acc.true_positives += c.true_positives;
    acc.predictions += c.predictions;
    acc.ground_truth += c.ground_truth;
  }
  for (std::size_t i = 0; i < n; ++i) {
    ++confusion_[{gt_semantic[i], pred_semantic[i]}];
  }
  ++scenes_;
}

MetricsReport Evaluator::report() const
{
  MetricsReport r;
  r.scenes = scenes_;
  if (scenes_ == 0) {
    return r;
  }
  r.mcov = cov_sum_ / static_cast<double>(scenes_);
  r.mwcov = wcov_sum_ / static_cast<double>(scenes_);
  const PrecisionRecall pr = summarize(counts_);
  r.mprec = pr.mean_precision;
  r.mrec = pr.mean_recall;
  r.instance_counts = counts_;
  const SemanticScores s = semantic_scores(confusion_);
  r.oacc = s.overall_accuracy;
  r.macc = s.mean_accuracy;
  r.miou = s.mean_iou;
  r.class_accuracy = s.class_accuracy;
  r.class_iou = s.class_iou;
  return r;
}

std::string MetricsReport::table() const
{
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "# scenes: " << scenes << "\n";
  os << "# mPrec/mRec: class-averaged over ground-truth classes, IoU >= 0.5\n";
  os << "metric   value\n";
  os << "mCov     " << mcov << "\n";
  os << "mWCov    " << mwcov << "\n";
  os << "mPrec    " << mprec << "\n";
  os << "mRec     " << mrec << "\n";
  os << "oAcc     " << oacc << "\n";
  os << "mAcc     " << macc << "\n";
  os << "mIoU     " << miou << "\n";
  os << "class  acc     iou     prec    rec\n";
  std::set<int> classes;
  for (const auto & [c, v] : class_iou) {
    classes.insert(c);
  }
  for (const auto & [c, v] : instance_counts) {
    classes.insert(c);
  }
  for (int c : classes) {
    auto get = [c](const std::map<int, double> & m) {
        auto it = m.find(c);
        return it == m.end() ? 0.0 : it->second;
      };
    const auto it = instance_counts.find(c);
    const ClassCounts counts = it == instance_counts.end() ? ClassCounts{} : it->second;
    os << std::setw(5) << c << "  " << get(class_accuracy) << "  " << get(class_iou) << "  " <<
      counts.precision() << "  " << counts.recall() << "\n";
  }
  return os.str();
}

std::string MetricsReport::key_values() const
{
  std::ostringstream os;
  os << std::setprecision(17);
  os << "scenes=" << scenes << "\n";
  os << "mcov=" << mcov << "\nmwcov=" << mwcov << "\nmprec=" << mprec << "\nmrec=" << mrec <<
    "\noacc=" << oacc << "\nmacc=" << macc << "\nmiou=" << miou << "\n";
  for (const auto & [c, v] : class_iou) {
    os << "class_iou." << c << "=" << v << "\n";
  }
  for (const auto & [c, v] : class_accuracy) {
    os << "class_acc." << c << "=" << v << "\n";
  }
  for (const auto & [c, counts] : instance_counts) {
    os << "class_prec." << c << "=" << counts.precision() << "\n";
    os << "class_rec." << c << "=" << counts.recall() << "\n";
  }
  return os.str();
}

}  // namespace jointseg
