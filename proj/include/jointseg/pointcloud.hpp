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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

namespace jointseg
{

using Point3 = std::array<double, 3>;

/// A labeled room. Coordinates are meters in [0, room_extent] per axis;
/// colors are RGB in [0, 1].
struct Scene
{
  std::vector<Point3> points;
  std::vector<Point3> colors;
  std::vector<int> semantic_labels;
  std::vector<int> instance_ids;
  Point3 room_extent{1.0, 1.0, 1.0};

  std::size_t size() const {return points.size();}
  bool empty() const {return points.empty();}
  /// Throws ContractError when arrays disagree in length, an id is negative,
  /// or an instance spans more than one semantic class.
  void validate() const;

  bool operator==(const Scene &) const = default;
};

inline constexpr std::size_t kFeatureWidth = 9;

/// Fixed-size network input cut from a scene. Rows of `features` are
/// [x y z | r g b | x/X y/Y z/Z].
struct Block
{
  std::vector<double> features;
  std::vector<int> semantic_labels;
  std::vector<int> instance_ids;
  std::array<double, 2> origin{0.0, 0.0};
  std::vector<std::size_t> point_indices;

  std::size_t size() const {return point_indices.size();}
  double feature(std::size_t point, std::size_t column) const
  {
    return features[point * kFeatureWidth + column];
  }
};

struct SyntheticSceneSpec
{
  std::uint64_t seed = 1;
  Point3 room_extent{2.0, 2.0, 1.0};
  int num_classes = 4;
  int min_instances = 4;
  int max_instances = 6;
  int min_points_per_instance = 120;
  int max_points_per_instance = 220;
  double noise_stddev = 0.005;

  void validate() const;
};

struct BlockConfig
{
  double block_size = 1.0;
  double stride = 0.5;
  std::size_t points_per_block = 4096;
  // Windows with fewer points are dropped.
  std::size_t min_points = 64;
  // Center XY on the window middle before building features.
  bool center_xy = true;
};

/// Floor (class 0), one wall (class 1) and axis-aligned boxes on the floor.
/// Each primitive is one instance. Deterministic in `spec.seed`.
Scene generate_scene(const SyntheticSceneSpec & spec);

/// Overlapping XY windows over the scene. Each kept window yields exactly
/// `points_per_block` rows: a random subset when it holds more points, all
/// points plus draws with replacement when it holds fewer.
std::vector<Block> split_into_blocks(
  const Scene & scene, const BlockConfig & config, std::mt19937_64 & rng);

/// Self-describing little-endian binary container.
void save_scene(const Scene & scene, const std::filesystem::path & path);
/// Human-readable variant; lossless for doubles.
void save_scene_text(const Scene & scene, const std::filesystem::path & path);
/// Reads either format, detected from the leading bytes.
Scene load_scene(const std::filesystem::path & path);

}  // namespace jointseg
