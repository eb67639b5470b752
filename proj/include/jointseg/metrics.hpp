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

#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace jointseg
{

struct Region
{
  std::vector<std::size_t> points;  // sorted, unique
  int category = 0;
};

/// Pairwise-disjoint point sets over a universe of `universe` points.
struct RegionSet
{
  std::size_t universe = 0;
  std::vector<Region> regions;

  /// One region per distinct instance id; its category is the majority of
  /// `semantic` over its points, lowest class on ties.
  static RegionSet from_labels(std::span<const int> instance_ids, std::span<const int> semantic);
  void validate() const;
};

/// |a ∩ b| / |a ∪ b| of two sorted index sets; 0 when both are empty.
double iou(std::span<const std::size_t> a, std::span<const std::size_t> b);

/// Mean over ground-truth regions of their best IoU against any prediction,
/// optionally weighted by ground-truth region size.
double coverage(const RegionSet & gt, const RegionSet & pred, bool weighted);

struct ClassCounts
{
  std::size_t true_positives = 0;
  std::size_t predictions = 0;
  std::size_t ground_truth = 0;

  double precision() const;
  double recall() const;
};

struct PrecisionRecall
{
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  std::map<int, ClassCounts> per_class;
};

/// Greedy same-class one-to-one matching in descending IoU order; a matched
/// prediction at or above the threshold is a true positive. Means run over
/// the classes present in the ground truth.
PrecisionRecall precision_recall(
  const RegionSet & gt, const RegionSet & pred, double iou_threshold = 0.5);

PrecisionRecall summarize(const std::map<int, ClassCounts> & per_class);

struct SemanticScores
{
  double overall_accuracy = 0.0;
  double mean_accuracy = 0.0;
  double mean_iou = 0.0;
  std::map<int, double> class_accuracy;
  std::map<int, double> class_iou;
};

/// Confusion counts keyed (gt, pred).
using Confusion = std::map<std::pair<int, int>, std::size_t>;

SemanticScores semantic_scores(std::span<const int> predicted, std::span<const int> truth);
SemanticScores semantic_scores(const Confusion & confusion);

struct MetricsReport
{
  double mcov = 0.0;
  double mwcov = 0.0;
  double mprec = 0.0;
  double mrec = 0.0;
  double oacc = 0.0;
  double macc = 0.0;
  double miou = 0.0;
  std::size_t scenes = 0;
  std::map<int, ClassCounts> instance_counts;
  std::map<int, double> class_accuracy;
  std::map<int, double> class_iou;

  std::string table() const;
  std::string key_values() const;
};

/// Accumulates scenes: coverage is averaged per scene, instance counts and
/// the semantic confusion are pooled.
class Evaluator
{
public:
  explicit Evaluator(double iou_threshold = 0.5)
  : iou_threshold_(iou_threshold) {}

  void add(
    std::span<const int> pred_semantic, std::span<const int> pred_instance,
    std::span<const int> gt_semantic, std::span<const int> gt_instance);

  MetricsReport report() const;

private:
  double iou_threshold_;
  double cov_sum_ = 0.0;
  double wcov_sum_ = 0.0;
  std::size_t scenes_ = 0;
  std::map<int, ClassCounts> counts_;
  Confusion confusion_;
};

}  // namespace jointseg
