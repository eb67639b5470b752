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
#include <optional>
#include <span>
#include <vector>

#include "jointseg/pointcloud.hpp"
#include "jointseg/tensor.hpp"

namespace jointseg
{

/// Flat-kernel mean-shift settings. The merge radius defaults to half the
/// bandwidth.
struct MeanShiftConfig
{
  double bandwidth = 0.6;
  std::size_t max_iterations = 300;
  double tolerance = 1e-4;
  std::optional<double> merge_radius;

  double effective_merge_radius() const {return merge_radius.value_or(bandwidth / 2.0);}
  void validate() const;
};

struct MeanShiftResult
{
  /// Cluster of every point, dense in [0, modes.size()).
  std::vector<int> labels;
  /// Row-major modes, modes.size() / dim of them.
  std::vector<std::vector<double>> modes;
};

/// Clusters N row-major points of dimension `dim`. Every point seeds a
/// trajectory; converged modes closer than the merge radius are unified,
/// keeping the best-supported one, and each point joins its nearest mode.
MeanShiftResult mean_shift(
  std::span<const double> points, std::size_t dim, const MeanShiftConfig & config);

struct BlockPrediction
{
  std::vector<int> semantic;
  std::vector<int> instance;
  std::vector<int> instance_category;
  std::vector<std::size_t> point_indices;

  std::size_t instance_count() const {return instance_category.size();}
};

/// Argmax semantics, mean-shift instances and a majority-vote category per
/// instance (lowest class wins ties). point_indices is left for the caller.
template<typename T>
BlockPrediction predict_block(
  const Tensor<T> & logits, const Tensor<T> & embeddings, const MeanShiftConfig & config);

struct MergeConfig
{
  /// Voxel edge per axis as a fraction of the room extent.
  double voxel_fraction = 1.0 / 400.0;
  /// A block instance joins the global instance that labels at least this
  /// share of its points already seen by earlier blocks.
  double overlap_threshold = 0.3;
};

struct SegmentationResult
{
  std::vector<int> semantic;
  std::vector<int> instance;
  std::size_t instance_count = 0;
  /// Scene points that no block sampled; they copy their nearest covered point.
  std::size_t uncovered_points = 0;

  bool operator==(const SegmentationResult &) const = default;
};

/// Folds block predictions into scene-wide labels through a voxel grid.
/// Blocks are processed in order and earlier blocks own shared voxels, so the
/// result depends on block order.
SegmentationResult block_merging(
  std::span<const BlockPrediction> blocks, const Scene & scene, const MergeConfig & config);

}  // namespace jointseg
