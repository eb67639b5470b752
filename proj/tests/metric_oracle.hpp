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

// Brute-force reference metrics: full IoU tables and exhaustive matching.

#include <algorithm>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "jointseg/metrics.hpp"

namespace jointseg::testing
{

inline double iou_sets(const std::vector<std::size_t> & a, const std::vector<std::size_t> & b)
{
  std::set<std::size_t> u(a.begin(), a.end()), inter;
  for (auto x : b) {
    if (u.count(x)) {
      inter.insert(x);
    }
    u.insert(x);
  }
  return u.empty() ? 0.0 : static_cast<double>(inter.size()) / static_cast<double>(u.size());
}

inline std::vector<std::vector<double>> iou_table(const RegionSet & gt, const RegionSet & pred)
{
  std::vector<std::vector<double>> t(gt.regions.size(),
    std::vector<double>(pred.regions.size()));
  for (std::size_t g = 0; g < gt.regions.size(); ++g) {
    for (std::size_t p = 0; p < pred.regions.size(); ++p) {
      t[g][p] = iou_sets(gt.regions[g].points, pred.regions[p].points);
    }
  }
  return t;
}

inline double brute_coverage(const RegionSet & gt, const RegionSet & pred, bool weighted)
{
  const auto t = iou_table(gt, pred);
  double total_size = 0;
  for (const auto & r : gt.regions) {
    total_size += static_cast<double>(r.points.size());
  }
  double acc = 0;
  for (std::size_t g = 0; g < gt.regions.size(); ++g) {
    double best = 0;
    for (double v : t[g]) {
      best = std::max(best, v);
    }
    const double w = weighted ?
      static_cast<double>(gt.regions[g].points.size()) / total_size :
      1.0 / static_cast<double>(gt.regions.size());
    acc += w * best;
  }
  return acc;
}

/// Largest number of same-class pairs with IoU >= threshold over every
/// one-to-one assignment, per class; means over ground-truth classes.
inline std::pair<double, double> brute_precision_recall(
  const RegionSet & gt, const RegionSet & pred, double threshold)
{
  const auto t = iou_table(gt, pred);
  std::set<int> classes;
  for (const auto & r : gt.regions) {
    classes.insert(r.category);
  }
  double prec = 0, rec = 0;
  for (int c : classes) {
    std::vector<std::size_t> gs, ps;
    for (std::size_t g = 0; g < gt.regions.size(); ++g) {
      if (gt.regions[g].category == c) {
        gs.push_back(g);
      }
    }
    for (std::size_t p = 0; p < pred.regions.size(); ++p) {
      if (pred.regions[p].category == c) {
        ps.push_back(p);
      }
    }
    std::vector<bool> used(ps.size(), false);
    std::function<std::size_t(std::size_t)> best = [&](std::size_t i) -> std::size_t {
        if (i == gs.size()) {
          return 0;
        }
        std::size_t b = best(i + 1);
        for (std::size_t j = 0; j < ps.size(); ++j) {
          if (!used[j] && t[gs[i]][ps[j]] >= threshold) {
            used[j] = true;
            b = std::max(b, 1 + best(i + 1));
            used[j] = false;
          }
        }
        return b;
      };
    const double tp = static_cast<double>(best(0));
    prec += ps.empty() ? 0.0 : tp / static_cast<double>(ps.size());
    rec += tp / static_cast<double>(gs.size());
  }
  const double n = static_cast<double>(classes.size());
  return {prec / n, rec / n};
}

/// Up to `max_regions` disjoint regions over up to `max_points` points;
/// some points may stay unassigned.
inline RegionSet random_regions(std::mt19937_64 & rng, std::size_t max_points,
  std::size_t max_regions, int classes)
{
  std::uniform_int_distribution<std::size_t> np(1, max_points), nr(1, max_regions);
  RegionSet s;
  s.universe = np(rng);
  const std::size_t k = nr(rng);
  std::vector<Region> regions(k);
  std::uniform_int_distribution<int> cat(0, classes - 1);
  for (auto & r : regions) {
    r.category = cat(rng);
  }
  std::uniform_int_distribution<std::size_t> owner(0, k);
  for (std::size_t p = 0; p < s.universe; ++p) {
    const auto o = owner(rng);
    if (o < k) {
      regions[o].points.push_back(p);
    }
  }
  for (auto & r : regions) {
    if (!r.points.empty()) {
      s.regions.push_back(std::move(r));
    }
  }
  return s;
}

/// A perturbed copy of `gt` on the same universe: each point keeps its
/// region with probability `keep`, else moves to a random one or none.
inline RegionSet perturb(const RegionSet & gt, std::mt19937_64 & rng, double keep, int classes)
{
  std::vector<int> owner(gt.universe, -1);
  for (std::size_t r = 0; r < gt.regions.size(); ++r) {
    for (auto p : gt.regions[r].points) {
      owner[p] = static_cast<int>(r);
    }
  }
  const int k = static_cast<int>(gt.regions.size()) + 1;
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> any(-1, k - 1);
  for (auto & o : owner) {
    if (u(rng) > keep) {
      o = any(rng);
    }
  }
  std::vector<Region> regions(static_cast<std::size_t>(k));
  std::uniform_int_distribution<int> cat(0, classes - 1);
  for (std::size_t r = 0; r < regions.size(); ++r) {
    regions[r].category = r < gt.regions.size() && u(rng) < 0.8 ? gt.regions[r].category :
      cat(rng);
  }
  for (std::size_t p = 0; p < owner.size(); ++p) {
    if (owner[p] >= 0) {
      regions[static_cast<std::size_t>(owner[p])].points.push_back(p);
    }
  }
  RegionSet s;
  s.universe = gt.universe;
  for (auto & r : regions) {
    if (!r.points.empty()) {
      s.regions.push_back(std::move(r));
    }
  }
  return s;
}

}  // namespace jointseg::testing
