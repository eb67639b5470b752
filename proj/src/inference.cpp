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

#include "jointseg/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include "jointseg/error.hpp"

namespace jointseg
{
namespace
{

double squared_distance(const double * a, const double * b, std::size_t dim)
{
  double total = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    const double diff = a[d] - b[d];
    total += diff * diff;
  }
  return total;
}

// Lowest index wins ties.
int majority(const std::map<int, std::size_t> & votes)
{
  int best = -1;
  std::size_t best_count = 0;
  for (const auto & [cls, count] : votes) {
    if (count > best_count) {
      best = cls;
      best_count = count;
    }
  }
  return best;
}

// Renumbers ids by first appearance.
std::size_t densify(std::vector<int> & ids)
{
  std::map<int, int> remap;
  for (auto & id : ids) {
    auto [it, inserted] = remap.emplace(id, static_cast<int>(remap.size()));
    id = it->second;
  }
  return remap.size();
}

}  // namespace

void MeanShiftConfig::validate() const
{
  if (!(bandwidth > 0.0)) {
    throw ConfigError("mean-shift bandwidth must be positive");
  }
  if (!(tolerance > 0.0) || max_iterations == 0) {
    throw ConfigError("mean-shift needs positive tolerance and iteration cap");
  }
  if (!(effective_merge_radius() >= 0.0)) {
    throw ConfigError("mean-shift merge radius must be non-negative");
  }
}

MeanShiftResult mean_shift(
  std::span<const double> points, std::size_t dim, const MeanShiftConfig & config)
{
  config.validate();
  if (dim == 0 || points.size() % dim != 0 || points.empty()) {
    throw ContractError("mean_shift needs N >= 1 points of a positive dimension");
  }
  const std::size_t n = points.size() / dim;
  const double bw2 = config.bandwidth * config.bandwidth;
  const double tol2 = config.tolerance * config.tolerance;

  std::vector<double> modes(points.begin(), points.end());
  std::vector<std::size_t> support(n, 0);
  std::vector<double> next(dim);
  for (std::size_t s = 0; s < n; ++s) {
    double * x = modes.data() + s * dim;
    for (std::size_t it = 0; it < config.max_iterations; ++it) {
      std::fill(next.begin(), next.end(), 0.0);
      std::size_t inside = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double * p = points.data() + i * dim;
        if (squared_distance(p, x, dim) <= bw2) {
          for (std::size_t d = 0; d < dim; ++d) {
            next[d] += p[d];
          }
          ++inside;
        }
      }
      if (inside == 0) {
        break;
      }
      for (auto & v : next) {
        v /= static_cast<double>(inside);
      }
      const double shift = squared_distance(next.data(), x, dim);
      std::copy(next.begin(), next.end(), x);
      if (shift < tol2) {
        break;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (squared_distance(points.data() + i * dim, x, dim) <= bw2) {
        ++support[s];
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(
    order.begin(), order.end(),
    [&](std::size_t a, std::size_t b) {return support[a] > support[b];});
  const double merge2 = config.effective_merge_radius() * config.effective_merge_radius();
  std::vector<std::size_t> kept;
  for (std::size_t s : order) {
    const double * x = modes.data() + s * dim;
    const bool close = std::any_of(
      kept.begin(), kept.end(), [&](std::size_t k) {
        return squared_distance(modes.data() + k * dim, x, dim) <= merge2;
      });
    if (!close) {
      kept.push_back(s);
    }
  }

  MeanShiftResult result;
  result.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double * p = points.data() + i * dim;
    int best = 0;
    double best_distance = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < kept.size(); ++k) {
      const double d = squared_distance(p, modes.data() + kept[k] * dim, dim);
      if (d < best_distance) {
        best_distance = d;
        best = static_cast<int>(k);
      }
    }
    result.labels[i] = best;
  }
  // Keep only modes that won points, numbered by first appearance.
  std::vector<int> original = result.labels;
  const std::size_t used = densify(result.labels);
  result.modes.resize(used);
  for (std::size_t i = 0; i < n; ++i) {
    auto & mode = result.modes[static_cast<std::size_t>(result.labels[i])];
    if (mode.empty()) {
      const double * src = modes.data() + kept[static_cast<std::size_t>(original[i])] * dim;
      mode.assign(src, src + dim);
    }
  }
  return result;
}

template<typename T>
BlockPrediction predict_block(
  const Tensor<T> & logits, const Tensor<T> & embeddings, const MeanShiftConfig & config)
{
  if (logits.rank() != 2 || embeddings.rank() != 2 || logits.rows() != embeddings.rows()) {
    throw DimensionError(
            "logits " + shape_string(logits.shape()) + " and embeddings " +
            shape_string(embeddings.shape()) + " disagree");
  }
  const std::size_t n = logits.rows(), c = logits.cols();
  BlockPrediction out;
  out.semantic.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (logits.at(i, j) > logits.at(i, best)) {
        best = j;
      }
    }
    out.semantic[i] = static_cast<int>(best);
  }
  std::vector<double> e(embeddings.values().begin(), embeddings.values().end());
  out.instance = mean_shift(e, embeddings.cols(), config).labels;
  const int count = n ? *std::max_element(out.instance.begin(), out.instance.end()) + 1 : 0;
  std::vector<std::map<int, std::size_t>> votes(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < n; ++i) {
    ++votes[static_cast<std::size_t>(out.instance[i])][out.semantic[i]];
  }
  for (const auto & v : votes) {
    out.instance_category.push_back(majority(v));
  }
  return out;
}

SegmentationResult block_merging(
  std::span<const BlockPrediction> blocks, const Scene & scene, const MergeConfig & config)
{
  if (scene.empty()) {
    throw ContractError("block merging needs a non-empty scene");
  }
  if (!(config.voxel_fraction > 0.0) || !(config.overlap_threshold > 0.0)) {
    throw ConfigError("voxel fraction and overlap threshold must be positive");
  }
  Point3 voxel;
  for (int a = 0; a < 3; ++a) {
    voxel[a] = scene.room_extent[a] * config.voxel_fraction;
  }
  auto voxel_key = [&](std::size_t point) {
      std::uint64_t key = 0;
      for (int a = 0; a < 3; ++a) {
        const auto cell = static_cast<std::int64_t>(std::floor(scene.points[point][a] / voxel[a]));
        key = key * 2097152u + static_cast<std::uint64_t>((cell + 1048576) & 0x1FFFFF);
      }
      return key;
    };

  const std::size_t n = scene.size();
  std::unordered_map<std::uint64_t, int> voxel_label;
  std::vector<std::map<int, std::size_t>> votes(n);
  std::vector<bool> covered(n, false);
  // Global ids form a union-find forest; owned counts voxels per root.
  std::vector<int> parent;
  std::vector<std::size_t> owned;
  auto find = [&](int id) {
      while (parent[id] != id) {
        id = parent[id] = parent[parent[id]];
      }
      return id;
    };
  int next_id = 0;

  for (const auto & block : blocks) {
    if (block.point_indices.size() != block.instance.size() ||
      block.semantic.size() != block.instance.size())
    {
      throw DimensionError("block prediction arrays differ in length");
    }
    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < block.point_indices.size(); ++i) {
      const std::size_t p = block.point_indices[i];
      if (p >= n) {
        throw DimensionError("block refers to point " + std::to_string(p) + " outside scene");
      }
      ++votes[p][block.semantic[i]];
      members[block.instance[i]].push_back(p);
    }
    for (auto & [local, points] : members) {
      std::sort(points.begin(), points.end());
      points.erase(std::unique(points.begin(), points.end()), points.end());
      // Evidence comes only from points an earlier block already labeled.
      // Fresh territory says nothing, and a new object that merely shares a
      // voxel with an old neighbor has no such points at all.
      std::map<int, std::set<std::uint64_t>> overlap;
      std::size_t seen = 0;
      for (auto p : points) {
        if (covered[p]) {
          ++seen;
          const auto key = voxel_key(p);
          overlap[find(voxel_label.at(key))].insert(key);
        }
      }
      int target = -1;
      std::size_t best = 0;
      for (const auto & [global, keys] : overlap) {
        if (keys.size() > best) {
          best = keys.size();
          target = global;
        }
      }
      std::map<int, std::size_t> hits;
      for (auto p : points) {
        if (covered[p]) {
          ++hits[find(voxel_label.at(voxel_key(p)))];
        }
      }
      auto strong = [&](int global) {
          return static_cast<double>(hits[global]) >=
                 config.overlap_threshold * static_cast<double>(seen);
        };
      if (target < 0 || !strong(target)) {
        target = next_id++;
        parent.push_back(target);
        owned.push_back(0);
      } else {
        // Ids minted separately for parts of this object join it: either they
        // hold a large share of what this instance has seen, or this instance
        // covers a large share of them (a stray corner seen first).
        for (const auto & [global, keys] : overlap) {
          if (global != target && (strong(global) ||
            static_cast<double>(keys.size()) >=
            config.overlap_threshold * static_cast<double>(owned[global])))
          {
            parent[global] = target;
            owned[target] += owned[global];
          }
        }
      }
      for (auto p : points) {
        if (voxel_label.emplace(voxel_key(p), target).second) {
          ++owned[target];
        }
      }
    }
    for (auto p : block.point_indices) {
      covered[p] = true;
    }
  }

  SegmentationResult result;
  result.semantic.assign(n, 0);
  result.instance.assign(n, 0);
  std::vector<std::size_t> covered_points;
  for (std::size_t p = 0; p < n; ++p) {
    if (covered[p]) {
      covered_points.push_back(p);
      result.instance[p] = find(voxel_label.at(voxel_key(p)));
      result.semantic[p] = majority(votes[p]);
    }
  }
  if (covered_points.empty()) {
    throw ContractError("no block covers any scene point");
  }
  for (std::size_t p = 0; p < n; ++p) {
    if (covered[p]) {
      continue;
    }
    ++result.uncovered_points;
    std::size_t nearest = covered_points.front();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t q : covered_points) {
      const double d = squared_distance(scene.points[p].data(), scene.points[q].data(), 3);
      if (d < best) {
        best = d;
        nearest = q;
      }
    }
    result.instance[p] = result.instance[nearest];
    result.semantic[p] = result.semantic[nearest];
  }
  result.instance_count = densify(result.instance);
  return result;
}

template BlockPrediction predict_block(
  const Tensor<float> &, const Tensor<float> &, const MeanShiftConfig &);
template BlockPrediction predict_block(
  const Tensor<double> &, const Tensor<double> &, const MeanShiftConfig &);

}  // namespace jointseg
