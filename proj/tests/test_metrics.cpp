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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "jointseg/error.hpp"
#include "jointseg/metrics.hpp"
#include "metric_oracle.hpp"

using namespace jointseg;
using namespace jointseg::testing;

namespace
{

RegionSet make(std::size_t universe, std::vector<Region> regions)
{
  RegionSet s;
  s.universe = universe;
  s.regions = std::move(regions);
  return s;
}

}  // namespace

TEST_CASE("iou hand cases")
{
  std::vector<std::size_t> a{1, 2, 3}, b{2, 3, 4}, c{7, 8};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, c) == 0.0);
  CHECK(iou(a, b) == 0.5);
  CHECK(iou({}, {}) == 0.0);
}

TEST_CASE("coverage hand case")
{
  // A has 4 points, B has 2; the only prediction hits A at IoU 0.5.
  auto gt = make(6, {{{0, 1, 2, 3}, 0}, {{4, 5}, 1}});
  auto pred = make(6, {{{2, 3}, 0}});
  CHECK(coverage(gt, pred, false) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(coverage(gt, pred, true) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(coverage(gt, gt, false) == 1.0);
  CHECK(coverage(gt, gt, true) == 1.0);
  CHECK(coverage(gt, make(6, {}), true) == 0.0);
  CHECK_THROWS_AS(coverage(make(6, {}), gt, false), ContractError);
}

TEST_CASE("precision and recall conventions")
{
  auto gt = make(6, {{{0, 1, 2}, 0}, {{3, 4, 5}, 1}});
  auto pr = precision_recall(gt, gt);
  CHECK(pr.mean_precision == 1.0);
  CHECK(pr.mean_recall == 1.0);

  auto none = precision_recall(gt, make(6, {}));
  CHECK(none.mean_precision == 0.0);
  CHECK(none.mean_recall == 0.0);

  // Class 0 found, class 1 predicted with the wrong class.
  auto pred = make(6, {{{0, 1, 2}, 0}, {{3, 4, 5}, 0}});
  auto mixed = precision_recall(gt, pred);
  CHECK(mixed.mean_precision == doctest::Approx(0.25));
  CHECK(mixed.mean_recall == doctest::Approx(0.5));
  const auto [bp, br] = brute_precision_recall(gt, pred, 0.5);
  CHECK(bp == mixed.mean_precision);
  CHECK(br == mixed.mean_recall);
}

TEST_CASE("random region sets against the brute-force oracle")
{
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    auto gt = random_regions(rng, 30, 5, 3);
    if (gt.regions.empty()) {
      continue;
    }
    auto pred = trial % 2 ? perturb(gt, rng, 0.7, 3) : random_regions(rng, 30, 5, 3);
    pred.universe = std::max(pred.universe, gt.universe);
    gt.universe = pred.universe;
    CHECK(std::abs(coverage(gt, pred, false) - brute_coverage(gt, pred, false)) <= 1e-12);
    CHECK(std::abs(coverage(gt, pred, true) - brute_coverage(gt, pred, true)) <= 1e-12);
    const auto pr = precision_recall(gt, pred);
    const auto [bp, br] = brute_precision_recall(gt, pred, 0.5);
    CHECK(std::abs(pr.mean_precision - bp) <= 1e-12);
    CHECK(std::abs(pr.mean_recall - br) <= 1e-12);
  }
}

TEST_CASE("equal-size regions give WCov == Cov")
{
  auto gt = make(6, {{{0, 1}, 0}, {{2, 3}, 0}, {{4, 5}, 1}});
  auto pred = make(6, {{{0, 1, 2}, 0}, {{5}, 1}});
  CHECK(coverage(gt, pred, true) == doctest::Approx(coverage(gt, pred, false)));
}

TEST_CASE("regions from labels")
{
  std::vector<int> inst{3, 3, 3, 8, 8};
  std::vector<int> sem{1, 2, 2, 0, 4};
  auto s = RegionSet::from_labels(inst, sem);
  REQUIRE(s.regions.size() == 2);
  CHECK(s.regions[0].points == std::vector<std::size_t>{0, 1, 2});
  CHECK(s.regions[0].category == 2);
  CHECK(s.regions[1].category == 0);
}

TEST_CASE("semantic scores")
{
  std::vector<int> y{0, 1, 2, 2, 1};
  auto same = semantic_scores(y, y);
  CHECK(same.overall_accuracy == 1.0);
  CHECK(same.mean_accuracy == 1.0);
  CHECK(same.mean_iou == 1.0);

  std::vector<int> t{0, 0, 0, 0};
  std::vector<int> p{0, 0, 1, 1};
  CHECK(semantic_scores(p, t).overall_accuracy == 0.5);

  // Confusion-matrix oracle.
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> cls(0, 4);
  std::vector<int> gt(200), pred(200);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    gt[i] = cls(rng);
    pred[i] = rng() % 3 ? gt[i] : cls(rng);
  }
  double m[5][5] = {};
  for (std::size_t i = 0; i < gt.size(); ++i) {
    m[gt[i]][pred[i]] += 1;
  }
  double diag = 0, acc = 0, ious = 0;
  for (int c = 0; c < 5; ++c) {
    double row = 0, colsum = 0;
    for (int k = 0; k < 5; ++k) {
      row += m[c][k];
      colsum += m[k][c];
    }
    diag += m[c][c];
    acc += m[c][c] / row;
    ious += m[c][c] / (row + colsum - m[c][c]);
  }
  auto s = semantic_scores(pred, gt);
  CHECK(s.overall_accuracy == doctest::Approx(diag / 200).epsilon(1e-14));
  CHECK(s.mean_accuracy == doctest::Approx(acc / 5).epsilon(1e-14));
  CHECK(s.mean_iou == doctest::Approx(ious / 5).epsilon(1e-14));
  CHECK_THROWS_AS(semantic_scores(std::vector<int>{1}, gt), DimensionError);
}

TEST_CASE("evaluator on a perfect prediction reports all ones")
{
  std::vector<int> sem{0, 0, 1, 1, 2, 2, 2};
  std::vector<int> ins{0, 0, 1, 1, 2, 2, 3};
  Evaluator ev;
  ev.add(sem, ins, sem, ins);
  ev.add(sem, ins, sem, ins);
  const auto r = ev.report();
  CHECK(r.scenes == 2);
  for (double v : {r.mcov, r.mwcov, r.mprec, r.mrec, r.oacc, r.macc, r.miou}) {
    CHECK(v == 1.0);
  }
  CHECK(r.table().find("class-averaged") != std::string::npos);
  CHECK(r.key_values().find("mwcov=1\n") != std::string::npos);
}
