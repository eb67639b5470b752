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

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "jointseg/error.hpp"
#include "jointseg/inference.hpp"
#include "planted.hpp"

using namespace jointseg;
using namespace jointseg::testing;
using TD = Tensor<double>;

namespace
{

std::size_t distinct(const std::vector<int> & v)
{
  return std::set<int>(v.begin(), v.end()).size();
}

}  // namespace

TEST_CASE("mean-shift trivial cases")
{
  MeanShiftConfig cfg;
  std::vector<double> same(10 * 3, 0.7);
  auto r = mean_shift(same, 3, cfg);
  CHECK(r.modes.size() == 1);
  CHECK(distinct(r.labels) == 1);

  std::vector<double> one{1.0, -2.0};
  auto r1 = mean_shift(one, 2, cfg);
  REQUIRE(r1.modes.size() == 1);
  CHECK(r1.modes[0] == std::vector<double>{1.0, -2.0});
  CHECK(r1.labels == std::vector<int>{0});

  CHECK_THROWS_AS(mean_shift(std::vector<double>{1, 2, 3}, 2, cfg), ContractError);
  MeanShiftConfig bad;
  bad.bandwidth = 0.0;
  CHECK_THROWS_AS(mean_shift(one, 2, bad), ConfigError);
}

TEST_CASE("mean-shift recovers planted blobs")
{
  MeanShiftConfig cfg;
  std::mt19937_64 rng(5);
  std::vector<int> truth;
  auto pts = planted_blobs(2, 3, 40, 0.05, 3.0, rng, truth);
  auto r = mean_shift(pts, 3, cfg);
  CHECK(r.modes.size() == 2);
  CHECK(agreement(r.labels, truth) == 1.0);
}

TEST_CASE("mean-shift invariances")
{
  MeanShiftConfig cfg;
  std::mt19937_64 rng(6);
  std::vector<int> truth;
  auto pts = planted_blobs(3, 4, 25, 0.05, 2.0, rng, truth);
  auto base = mean_shift(pts, 4, cfg);

  // Permuted input: same partition up to renaming.
  std::vector<std::size_t> perm(truth.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> shuffled;
  for (auto p : perm) {
    shuffled.insert(shuffled.end(), pts.begin() + p * 4, pts.begin() + p * 4 + 4);
  }
  auto perm_r = mean_shift(shuffled, 4, cfg);
  std::vector<int> unpermuted(truth.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    unpermuted[perm[i]] = perm_r.labels[i];
  }
  CHECK(agreement(unpermuted, base.labels) == 1.0);

  // Translation.
  std::vector<double> moved = pts;
  for (auto & v : moved) {
    v += 10.0;
  }
  CHECK(mean_shift(moved, 4, cfg).labels == base.labels);
}

TEST_CASE("predict_block")
{
  MeanShiftConfig cfg;
  auto logits = TD::from_values({3, 3}, {0, 5, 1, 9, 0, 0, 0, 0, 0.5});
  auto emb = TD::zeros({3, 2});
  auto p = predict_block(logits, emb, cfg);
  CHECK(p.semantic == std::vector<int>{1, 0, 2});
  CHECK(p.instance_count() == 1);

  // Three planted embedding clusters.
  std::mt19937_64 rng(7);
  std::vector<int> truth;
  auto pts = planted_blobs(3, 5, 10, 0.02, 2.0, rng, truth);
  auto e = TD::from_values({30, 5}, pts);
  auto p3 = predict_block(TD::zeros({30, 2}), e, cfg);
  CHECK(p3.instance_count() == 3);
  CHECK(agreement(p3.instance, truth) == 1.0);

  // 2-vs-2 vote inside one instance: lower class wins.
  auto tie_logits = TD::from_values({4, 4}, {0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0});
  auto tie = predict_block(tie_logits, TD::zeros({4, 1}), cfg);
  REQUIRE(tie.instance_count() == 1);
  CHECK(tie.instance_category[0] == 1);

  CHECK_THROWS_AS(predict_block(TD::zeros({3, 2}), TD::zeros({4, 2}), cfg), DimensionError);
}

TEST_CASE("block merging")
{
  SyntheticSceneSpec spec;
  spec.seed = 12;
  const Scene scene = generate_scene(spec);
  const std::size_t truth = std::set<int>(scene.instance_ids.begin(),
      scene.instance_ids.end()).size();

  // Single block covering everything: identity relabeling.
  BlockConfig whole;
  whole.block_size = 10.0;
  whole.points_per_block = scene.size();
  whole.min_points = 1;
  std::mt19937_64 rng(1);
  auto single = split_into_blocks(scene, whole, rng);
  REQUIRE(single.size() == 1);
  auto merged1 = block_merging(oracle_predictions(scene, single), scene, MergeConfig{});
  CHECK(merged1.instance_count == truth);
  CHECK(merged1.semantic == scene.semantic_labels);
  CHECK(agreement(merged1.instance, scene.instance_ids) == 1.0);
  CHECK(merged1.uncovered_points == 0);

  // Overlapping windows with consistent predictions.
  BlockConfig cfg;
  cfg.points_per_block = 512;
  std::mt19937_64 rng2(2);
  auto blocks = split_into_blocks(scene, cfg, rng2);
  REQUIRE(blocks.size() > 1);
  auto merged = block_merging(oracle_predictions(scene, blocks), scene, MergeConfig{});
  CHECK(merged.instance_count == truth);
  CHECK(merged.semantic.size() == scene.size());

  // Disjoint objects: counts add up.
  Scene two;
  two.room_extent = {4.0, 1.0, 1.0};
  for (int i = 0; i < 20; ++i) {
    const double t = i * 0.01;
    two.points.push_back({0.2 + t, 0.5, 0.1});
    two.points.push_back({3.2 + t, 0.5, 0.1});
    for (int k = 0; k < 2; ++k) {
      two.colors.push_back({0.5, 0.5, 0.5});
      two.semantic_labels.push_back(k + 1);
      two.instance_ids.push_back(k);
    }
  }
  std::vector<BlockPrediction> parts(2);
  for (std::size_t i = 0; i < two.size(); ++i) {
    auto & p = parts[i % 2];
    p.point_indices.push_back(i);
    p.semantic.push_back(two.semantic_labels[i]);
    p.instance.push_back(0);
  }
  parts[0].instance_category = {1};
  parts[1].instance_category = {2};
  auto merged2 = block_merging(parts, two, MergeConfig{});
  CHECK(merged2.instance_count == 2);
  CHECK(agreement(merged2.instance, two.instance_ids) == 1.0);
}

TEST_CASE("block merging across many scenes and orders")
{
  // Objects often enter the block sequence as a thin fringe, or as separate
  // pieces that only a later block connects.
  for (int k = 0; k < 40; ++k) {
    SyntheticSceneSpec spec;
    spec.seed = 900 + k;
    const Scene scene = generate_scene(spec);
    const std::size_t truth = std::set<int>(scene.instance_ids.begin(),
        scene.instance_ids.end()).size();
    BlockConfig cfg;
    cfg.points_per_block = 512;
    std::mt19937_64 rng(k);
    auto preds = oracle_predictions(scene, split_into_blocks(scene, cfg, rng));
    CHECK(block_merging(preds, scene, MergeConfig{}).instance_count == truth);
    std::shuffle(preds.begin(), preds.end(), rng);
    CHECK(block_merging(preds, scene, MergeConfig{}).instance_count == truth);
  }

  // A fresh object touching an old one through a shared voxel stays separate.
  Scene s;
  s.room_extent = {2.0, 1.0, 1.0};
  for (int i = 0; i < 30; ++i) {
    const double t = i * 0.02;
    s.points.push_back({0.4 + t, 0.5, 0.0});
    s.points.push_back({1.0 + t, 0.5, 0.0});
    for (int k = 0; k < 2; ++k) {
      s.colors.push_back({0.5, 0.5, 0.5});
      s.semantic_labels.push_back(k);
      s.instance_ids.push_back(k);
    }
  }
  // Point 1 of object 1 sits in the voxel of object 0's last point.
  s.points[1] = s.points[58];
  BlockPrediction a, b;
  for (std::size_t p = 0; p < s.size(); ++p) {
    auto & blk = s.instance_ids[p] == 0 ? a : b;
    blk.point_indices.push_back(p);
    blk.semantic.push_back(s.semantic_labels[p]);
    blk.instance.push_back(0);
  }
  a.instance_category = {0};
  b.instance_category = {1};
  std::vector<BlockPrediction> two{a, b};
  CHECK(block_merging(two, s, MergeConfig{}).instance_count == 2);
}
