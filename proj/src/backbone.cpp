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

#include "jointseg/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace jointseg
{
namespace
{

double squared_distance(const Point3 & a, const Point3 & b)
{
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

template<typename T>
Tensor<T> constant_matrix(std::size_t rows, std::size_t cols, std::span<const double> values)
{
  return Tensor<T>::from_values({rows, cols}, std::vector<T>(values.begin(), values.end()));
}

template<typename T>
Tensor<T> apply_mlp(Tensor<T> x, std::span<const ConvLayer<T>> mlp)
{
  for (const auto & layer : mlp) {
    x = layer(x);
  }
  return x;
}

template<typename T>
std::vector<ConvLayer<T>> make_mlp(
  ParameterStore<T> & store, const std::string & prefix, std::size_t in,
  const std::vector<std::size_t> & widths, std::mt19937_64 & rng)
{
  std::vector<ConvLayer<T>> layers;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    layers.push_back(
      ConvLayer<T>::create(
        store, prefix + "." + std::to_string(i), in, widths[i], Activation::kRelu, rng));
    in = widths[i];
  }
  return layers;
}

}  // namespace

LayerSpec LayerSpec::desk_scale()
{
  LayerSpec s;
  s.input_points = 512;
  s.levels = {{
    {128, 0.2, 32, {32, 64}},
    {32, 0.4, 32, {128}},
    {8, 0.8, 16, {256, kEncoderWidth}},
  }};
  return s;
}

LayerSpec LayerSpec::full_scale()
{
  LayerSpec s;
  s.input_points = 4096;
  s.levels = {{
    {1024, 0.1, 32, {32, 32, 64}},
    {256, 0.2, 32, {64, 64, 128}},
    {64, 0.4, 32, {128, 256, kEncoderWidth}},
  }};
  return s;
}

LayerSpec LayerSpec::tiny(std::size_t input_points)
{
  LayerSpec s;
  s.input_points = input_points;
  s.levels = {{
    {std::max<std::size_t>(input_points / 2, 3), 0.4, 8, {16}},
    {std::max<std::size_t>(input_points / 4, 2), 0.7, 8, {32}},
    {std::max<std::size_t>(input_points / 8, 1), 1.2, 8, {kEncoderWidth}},
  }};
  return s;
}

void LayerSpec::validate() const
{
  std::size_t previous = input_points;
  for (const auto & level : levels) {
    if (level.points == 0 || level.points >= previous) {
      throw ConfigError("layer point counts must strictly decrease");
    }
    if (!(level.radius > 0.0) || level.max_neighbors == 0 || level.widths.empty()) {
      throw ConfigError("every level needs a positive radius, neighbor cap and widths");
    }
    previous = level.points;
  }
  if (encoder_width() != kEncoderWidth) {
    throw ConfigError("encoder must end at width " + std::to_string(kEncoderWidth));
  }
}

std::vector<std::size_t> farthest_point_sampling(std::span<const Point3> coords, std::size_t m)
{
  if (m > coords.size()) {
    throw ContractError(
            "cannot sample " + std::to_string(m) + " of " + std::to_string(coords.size()) +
            " points");
  }
  std::vector<std::size_t> picked;
  if (m == 0) {
    return picked;
  }
  picked.reserve(m);
  std::vector<double> nearest(coords.size(), std::numeric_limits<double>::infinity());
  std::size_t current = 0;
  for (std::size_t s = 0; s < m; ++s) {
    picked.push_back(current);
    std::size_t best = 0;
    double best_distance = -1.0;
    for (std::size_t i = 0; i < coords.size(); ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(coords[i], coords[current]));
      if (nearest[i] > best_distance) {
        best_distance = nearest[i];
        best = i;
      }
    }
    current = best;
  }
  return picked;
}

std::vector<std::size_t> ball_group(
  std::span<const Point3> coords, std::span<const std::size_t> centers, double radius,
  std::size_t max_neighbors)
{
  if (!(radius > 0.0)) {
    throw ContractError("ball radius must be positive");
  }
  if (max_neighbors == 0) {
    throw ContractError("ball group needs room for at least the center");
  }
  const double r2 = radius * radius;
  std::vector<std::size_t> out;
  out.reserve(centers.size() * max_neighbors);
  for (std::size_t c : centers) {
    const std::size_t start = out.size();
    out.push_back(c);
    for (std::size_t i = 0; i < coords.size() && out.size() - start < max_neighbors; ++i) {
      if (i != c && squared_distance(coords[i], coords[c]) <= r2) {
        out.push_back(i);
      }
    }
    while (out.size() - start < max_neighbors) {
      out.push_back(out[start]);
    }
  }
  return out;
}

std::vector<double> inverse_density_weights(
  std::span<const Point3> coords, std::span<const std::size_t> groups, std::size_t group_size,
  double radius)
{
  const double h = radius / 2.0;
  const double inv_two_h2 = 1.0 / (2.0 * h * h);
  std::vector<double> out(groups.size());
  for (std::size_t g = 0; g * group_size < groups.size(); ++g) {
    auto members = groups.subspan(g * group_size, group_size);
    std::vector<std::size_t> unique(members.begin(), members.end());
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    double peak = 0.0;
    for (std::size_t j = 0; j < group_size; ++j) {
      double density = 0.0;
      for (std::size_t l : unique) {
        density += std::exp(-squared_distance(coords[members[j]], coords[l]) * inv_two_h2);
      }
      density /= static_cast<double>(unique.size());
      out[g * group_size + j] = 1.0 / density;
      peak = std::max(peak, out[g * group_size + j]);
    }
    for (std::size_t j = 0; j < group_size; ++j) {
      out[g * group_size + j] /= peak;
    }
  }
  return out;
}

Interpolation three_nn_interpolation(
  std::span<const Point3> coarse, std::span<const Point3> fine, double eps)
{
  if (coarse.empty()) {
    throw ContractError("interpolation needs a non-empty coarse level");
  }
  Interpolation out;
  out.k = std::min<std::size_t>(3, coarse.size());
  out.rows.reserve(fine.size() * out.k);
  out.weights.reserve(fine.size() * out.k);
  std::vector<std::pair<double, std::size_t>> best;
  for (const auto & p : fine) {
    best.clear();
    for (std::size_t i = 0; i < coarse.size(); ++i) {
      const double d = squared_distance(p, coarse[i]);
      if (best.size() < out.k || d < best.back().first) {
        auto pos = std::upper_bound(
          best.begin(), best.end(), d,
          [](double v, const auto & e) {return v < e.first;});
        best.insert(pos, {d, i});
        if (best.size() > out.k) {
          best.pop_back();
        }
      }
    }
    double total = 0.0;
    for (const auto & [d, i] : best) {
      total += 1.0 / (d + eps);
    }
    for (const auto & [d, i] : best) {
      out.rows.push_back(i);
      out.weights.push_back((1.0 / (d + eps)) / total);
    }
  }
  return out;
}

BlockGeometry build_geometry(std::span<const Point3> input_coords, const LayerSpec & spec)
{
  if (input_coords.size() != spec.input_points) {
    throw DimensionError(
            "block has " + std::to_string(input_coords.size()) + " points, layer spec expects " +
            std::to_string(spec.input_points));
  }
  BlockGeometry geometry;
  geometry.input_coords.assign(input_coords.begin(), input_coords.end());
  for (std::size_t l = 0; l < 3; ++l) {
    const auto & level_spec = spec.levels[l];
    const auto & prev = geometry.coords(l);
    LevelGeometry & level = geometry.levels[l];
    level.centers = farthest_point_sampling(prev, level_spec.points);
    level.coords.reserve(level.centers.size());
    for (std::size_t c : level.centers) {
      level.coords.push_back(prev[c]);
    }
    level.group_size = level_spec.max_neighbors;
    level.neighbors = ball_group(prev, level.centers, level_spec.radius, level.group_size);
    level.relative.reserve(level.neighbors.size() * 3);
    for (std::size_t i = 0; i < level.neighbors.size(); ++i) {
      const auto & center = level.coords[i / level.group_size];
      const auto & p = prev[level.neighbors[i]];
      for (int a = 0; a < 3; ++a) {
        level.relative.push_back(p[a] - center[a]);
      }
    }
    if (spec.density_reweight) {
      level.density =
        inverse_density_weights(prev, level.neighbors, level.group_size, level_spec.radius);
    }
  }
  return geometry;
}

template<typename T>
Tensor<T> set_abstraction(
  const Tensor<T> & features, const LevelGeometry & level,
  std::span<const ConvLayer<T>> mlp, bool density_reweight)
{
  const std::size_t grouped_rows = level.neighbors.size();
  Tensor<T> x = concat(
    gather_rows(features, level.neighbors),
    constant_matrix<T>(grouped_rows, 3, level.relative));
  x = apply_mlp(std::move(x), mlp);
  if (density_reweight) {
    if (level.density.size() != grouped_rows) {
      throw ContractError("density reweighting requested but no density weights were built");
    }
    x = mul(x, constant_matrix<T>(grouped_rows, 1, level.density));
  }
  return group_max(x, level.group_size);
}

template<typename T>
Tensor<T> feature_propagation(
  const Tensor<T> & coarse_features, const Interpolation & interpolation,
  const Tensor<T> & skip_features, std::span<const ConvLayer<T>> mlp)
{
  std::vector<T> weights(interpolation.weights.begin(), interpolation.weights.end());
  Tensor<T> x = weighted_rows(
    coarse_features, std::span<const std::size_t>(interpolation.rows),
    std::span<const T>(weights), interpolation.k);
  if (skip_features.defined()) {
    x = concat(x, skip_features);
  }
  return apply_mlp(std::move(x), mlp);
}

template<typename T>
Tensor<T> feature_propagation(
  const Tensor<T> & coarse_features, std::span<const Point3> coarse_coords,
  std::span<const Point3> fine_coords, const Tensor<T> & skip_features,
  std::span<const ConvLayer<T>> mlp)
{
  if (coarse_features.rows() != coarse_coords.size()) {
    throw DimensionError("coarse features and coordinates differ in point count");
  }
  return feature_propagation(
    coarse_features, three_nn_interpolation(coarse_coords, fine_coords), skip_features, mlp);
}

template<typename T>
std::vector<Point3> coordinates_of(const Tensor<T> & block_features)
{
  if (block_features.rank() != 2 || block_features.cols() < 3) {
    throw DimensionError(
            "block features need at least 3 columns, got " +
            shape_string(block_features.shape()));
  }
  std::vector<Point3> coords(block_features.rows());
  for (std::size_t i = 0; i < coords.size(); ++i) {
    for (std::size_t a = 0; a < 3; ++a) {
      coords[i][a] = static_cast<double>(block_features.at(i, a));
    }
  }
  return coords;
}

template<typename T>
Backbone<T>::Backbone(
  const LayerSpec & spec, std::size_t input_channels, ParameterStore<T> & store,
  std::mt19937_64 & rng)
: spec_(spec)
{
  spec_.validate();
  std::size_t in = input_channels;
  for (std::size_t l = 0; l < 3; ++l) {
    encoder_[l] = make_mlp(
      store, "encoder.sa" + std::to_string(l + 1), in + 3, spec_.levels[l].widths, rng);
    in = spec_.levels[l].widths.back();
  }
  semantic_ = make_decoder("semantic_decoder", input_channels, store, rng);
  instance_ = make_decoder("instance_decoder", input_channels, store, rng);
}

template<typename T>
typename Backbone<T>::Decoder Backbone<T>::make_decoder(
  const std::string & prefix, std::size_t input_channels, ParameterStore<T> & store,
  std::mt19937_64 & rng) const
{
  const std::size_t width_b = spec_.levels[0].widths.back();
  const std::size_t width_c = spec_.levels[1].widths.back();
  Decoder d;
  d.up_c = make_mlp(store, prefix + ".fp3", kEncoderWidth + width_c, {kDecoderWidthC}, rng);
  d.up_b = make_mlp(store, prefix + ".fp2", kDecoderWidthC + width_b, {kDecoderWidthB}, rng);
  d.up_a = make_mlp(store, prefix + ".fp1", kDecoderWidthB + input_channels, {kDecoderWidthA}, rng);
  return d;
}

template<typename T>
DecoderFeatures<T> Backbone<T>::decode(
  const Decoder & decoder, const BlockGeometry & geometry, const Tensor<T> & input,
  const std::array<Tensor<T>, 3> & encoded) const
{
  DecoderFeatures<T> out;
  out.coords_a = geometry.coords(0);
  out.coords_b = geometry.coords(1);
  out.coords_c = geometry.coords(2);
  out.f_c = feature_propagation<T>(
    encoded[2], geometry.coords(3), out.coords_c, encoded[1], decoder.up_c);
  out.f_b = feature_propagation<T>(out.f_c, out.coords_c, out.coords_b, encoded[0], decoder.up_b);
  out.f_a = feature_propagation<T>(out.f_b, out.coords_b, out.coords_a, input, decoder.up_a);
  return out;
}

template<typename T>
BackboneOutput<T> Backbone<T>::forward(const Tensor<T> & block_features) const
{
  const auto coords = coordinates_of(block_features);
  const BlockGeometry geometry = build_geometry(coords, spec_);
  std::array<Tensor<T>, 3> encoded;
  Tensor<T> x = block_features;
  for (std::size_t l = 0; l < 3; ++l) {
    x = set_abstraction<T>(x, geometry.levels[l], encoder_[l], spec_.density_reweight);
    encoded[l] = x;
  }
  BackboneOutput<T> out;
  out.encoded = encoded[2];
  out.semantic = decode(semantic_, geometry, block_features, encoded);
  out.instance = decode(instance_, geometry, block_features, encoded);
  return out;
}

#define JOINTSEG_INSTANTIATE(T) \
  template Tensor<T> set_abstraction( \
    const Tensor<T> &, const LevelGeometry &, std::span<const ConvLayer<T>>, bool); \
  template Tensor<T> feature_propagation( \
    const Tensor<T> &, const Interpolation &, const Tensor<T> &, \
    std::span<const ConvLayer<T>>); \
  template Tensor<T> feature_propagation( \
    const Tensor<T> &, std::span<const Point3>, std::span<const Point3>, const Tensor<T> &, \
    std::span<const ConvLayer<T>>); \
  template std::vector<Point3> coordinates_of(const Tensor<T> &); \
  template class Backbone<T>;

JOINTSEG_INSTANTIATE(float)
JOINTSEG_INSTANTIATE(double)

#undef JOINTSEG_INSTANTIATE

}  // namespace jointseg
