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

// Builders shared by the inference tests and the acceptance suite.

#include <algorithm>
#include <map>
#include <random>
#include <tuple>
#include <vector>

#include "jointseg/inference.hpp"
#include "jointseg/pointcloud.hpp"

namespace jointseg::testing
{

/// `count` blobs in `dim` dimensions with centers on scaled axis directions,
/// so every pair of centers is at least `separation` apart.
inline std::vector<double> planted_blobs(
  std::size_t count, std::size_t dim, std::size_t per_blob, double sigma, double separation,
  std::mt19937_64 & rng, std::vector<int> & truth)
{
  std::normal_distribution<double> n(0.0, sigma);
  std::uniform_real_distribution<double> shift(-3.0, 3.0);
  std::vector<double> offset(dim);
  for (auto & o : offset) {
    o = shift(rng);
  }
  std::vector<double> pts;
  truth.clear();
  for (std::size_t b = 0; b < count; ++b) {
    for (std::size_t p = 0; p < per_blob; ++p) {
      for (std::size_t d = 0; d < dim; ++d) {
        // Centers at +-separation on distinct axes are >= separation apart.
        const double c = (d == b % dim) ? separation * (b < dim ? 1.0 : -1.0) : 0.0;
        pts.push_back(offset[d] + c + n(rng));
      }
      truth.push_back(static_cast<int>(b));
    }
  }
  return pts;
}

/// Fraction of points whose label agrees with the truth under the best
/// one-to-one relabeling (greedy on the contingency table, exact when the
/// clusters are pure).
inline double agreement(const std::vector<int> & labels, const std::vector<int> & truth)
{
  std::map<std::pair<int, int>, std::size_t> table;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ++table[{labels[i], truth[i]}];
  }
  std::vector<std::tuple<std::size_t, int, int>> cells;
  for (const auto & [k, v] : table) {
    cells.emplace_back(v, k.first, k.second);
  }
  std::sort(cells.rbegin(), cells.rend());
  std::map<int, bool> used_l, used_t;
  std::size_t hit = 0;
  for (const auto & [v, l, t] : cells) {
    if (!used_l[l] && !used_t[t]) {
      used_l[l] = used_t[t] = true;
      hit += v;
    }
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

/// Per-block predictions that copy the ground truth, with instance ids
/// renumbered locally per block in order of first appearance.
inline std::vector<BlockPrediction> oracle_predictions(
  const Scene & scene, const std::vector<Block> & blocks)
{
  std::vector<BlockPrediction> out;
  for (const auto & b : blocks) {
    BlockPrediction p;
    p.point_indices = b.point_indices;
    std::map<int, int> local;
    for (std::size_t i = 0; i < b.size(); ++i) {
      const auto idx = b.point_indices[i];
      p.semantic.push_back(scene.semantic_labels[idx]);
      auto [it, fresh] = local.try_emplace(scene.instance_ids[idx], static_cast<int>(local.size()));
      if (fresh) {
        p.instance_category.push_back(scene.semantic_labels[idx]);
      }
      p.instance.push_back(it->second);
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace jointseg::testing
