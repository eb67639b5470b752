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
#include <random>
#include <span>
#include <string>
#include <vector>

#include "jointseg/pointcloud.hpp"
#include "jointseg/tensor.hpp"

namespace jointseg
{

/// One set-abstraction level: sample `points` centers, group up to
/// `max_neighbors` within `radius`, then apply a shared MLP of `widths`.
struct LevelSpec
{
  std::size_t points = 0;
  double radius = 0.0;
  std::size_t max_neighbors = 0;
  std::vector<std::size_t> widths;
};

/// Encoder geometry: N_a input points, then three levels N_b > N_c > N_e.
struct LayerSpec
{
  std::size_t input_points = 512;
  std::array<LevelSpec, 3> levels;
  bool density_reweight = false;

  static LayerSpec desk_scale();
  static LayerSpec full_scale();
  /// Small configuration used by gradient checks.
  static LayerSpec tiny(std::size_t input_points = 32);

  std::size_t encoder_width() const {return levels[2].widths.back();}
  void validate() const;
};

inline constexpr std::size_t kEncoderWidth = 512;
inline constexpr std::size_t kDecoderWidthA = 128;
inline constexpr std::size_t kDecoderWidthB = 128;
inline constexpr std::size_t kDecoderWidthC = 256;
inline constexpr double kInterpolationEps = 1e-8;

/// Iterative farthest-point sampling. The first pick is index 0; ties go to
/// the lowest index.
std::vector<std::size_t> farthest_point_sampling(std::span<const Point3> coords, std::size_t m);

/// Flat list of centers.size() * max_neighbors indices into `coords`. Each
/// group starts with its center, continues with in-radius points in index
/// order and is padded by repeating its first entry.
std::vector<std::size_t> ball_group(
  std::span<const Point3> coords, std::span<const std::size_t> centers, double radius,
  std::size_t max_neighbors);

/// Per grouped entry, inverse Gaussian-KDE density over its group (bandwidth
/// radius / 2), scaled so each group's largest weight is 1.
std::vector<double> inverse_density_weights(
  std::span<const Point3> coords, std::span<const std::size_t> groups, std::size_t group_size,
  double radius);

/// Inverse-square-distance weights over the (up to) three nearest coarse
/// points of every fine point. Weights of one fine point sum to 1.
struct Interpolation
{
  std::vector<std::size_t> rows;
  std::vector<double> weights;
  std::size_t k = 0;
};

Interpolation three_nn_interpolation(
  std::span<const Point3> coarse, std::span<const Point3> fine,
  double eps = kInterpolationEps);

/// Shared shapes of one encoder level, derived from coordinates only.
struct LevelGeometry
{
  std::vector<std::size_t> centers;
  std::vector<Point3> coords;
  std::vector<std::size_t> neighbors;
  std::vector<double> relative;
  std::vector<double> density;
  std::size_t group_size = 0;
};

struct BlockGeometry
{
  std::vector<Point3> input_coords;
  std::array<LevelGeometry, 3> levels;

  /// Coordinates of level 0 (input), 1 (N_b), 2 (N_c) or 3 (N_e).
  const std::vector<Point3> & coords(std::size_t level) const
  {
    return level == 0 ? input_coords : levels[level - 1].coords;
  }
};

BlockGeometry build_geometry(std::span<const Point3> input_coords, const LayerSpec & spec);

template<typename T>
Tensor<T> set_abstraction(
  const Tensor<T> & features, const LevelGeometry & level,
  std::span<const ConvLayer<T>> mlp, bool density_reweight);

template<typename T>
Tensor<T> feature_propagation(
  const Tensor<T> & coarse_features, const Interpolation & interpolation,
  const Tensor<T> & skip_features, std::span<const ConvLayer<T>> mlp);

template<typename T>
Tensor<T> feature_propagation(
  const Tensor<T> & coarse_features, std::span<const Point3> coarse_coords,
  std::span<const Point3> fine_coords, const Tensor<T> & skip_features,
  std::span<const ConvLayer<T>> mlp);

/// Last three decoder outputs with the coordinates of their points.
template<typename T>
struct DecoderFeatures
{
  Tensor<T> f_a;  // N_a x 128
  Tensor<T> f_b;  // N_b x 128
  Tensor<T> f_c;  // N_c x 256
  std::vector<Point3> coords_a;
  std::vector<Point3> coords_b;
  std::vector<Point3> coords_c;
};

template<typename T>
struct BackboneOutput
{
  Tensor<T> encoded;  // N_e x 512
  DecoderFeatures<T> semantic;
  DecoderFeatures<T> instance;
};

/// Shared encoder feeding two structurally identical decoders with separate
/// parameters.
template<typename T>
class Backbone
{
public:
  Backbone(
    const LayerSpec & spec, std::size_t input_channels, ParameterStore<T> & store,
    std::mt19937_64 & rng);

  BackboneOutput<T> forward(const Tensor<T> & block_features) const;

  const LayerSpec & spec() const {return spec_;}

private:
  struct Decoder
  {
    std::vector<ConvLayer<T>> up_c;
    std::vector<ConvLayer<T>> up_b;
    std::vector<ConvLayer<T>> up_a;
  };

  Decoder make_decoder(
    const std::string & prefix, std::size_t input_channels, ParameterStore<T> & store,
    std::mt19937_64 & rng) const;
  DecoderFeatures<T> decode(
    const Decoder & decoder, const BlockGeometry & geometry, const Tensor<T> & input,
    const std::array<Tensor<T>, 3> & encoded) const;

  LayerSpec spec_;
  std::array<std::vector<ConvLayer<T>>, 3> encoder_;
  Decoder semantic_;
  Decoder instance_;
};

/// Point coordinates (columns 0-2) of an N x 9 feature matrix.
template<typename T>
std::vector<Point3> coordinates_of(const Tensor<T> & block_features);

}  // namespace jointseg
