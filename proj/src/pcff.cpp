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

#include "jointseg/pcff.hpp"

namespace jointseg
{
namespace
{

template<typename T>
Tensor<T> upsample(
  const Tensor<T> & coarse, std::span<const Point3> coarse_coords,
  std::span<const Point3> fine_coords)
{
  const Interpolation interp = three_nn_interpolation(coarse_coords, fine_coords);
  std::vector<T> weights(interp.weights.begin(), interp.weights.end());
  return weighted_rows(
    coarse, std::span<const std::size_t>(interp.rows), std::span<const T>(weights), interp.k);
}

void expect_shape(const Shape & shape, std::size_t rows, std::size_t cols, const char * name)
{
  if (shape != Shape{rows, cols}) {
    throw DimensionError(
            std::string("PCFF input ") + name + " is " + shape_string(shape) + ", expected " +
            shape_string({rows, cols}));
  }
}

}  // namespace

template<typename T>
PcffParams<T> PcffParams<T>::create(
  ParameterStore<T> & store, const std::string & prefix, std::mt19937_64 & rng)
{
  return PcffParams{ConvLayer<T>::create(
      store, prefix + ".fuse", kDecoderWidthA + kDecoderWidthB, kDecoderWidthA,
      Activation::kRelu, rng)};
}

template<typename T>
Tensor<T> pcff_fuse(const DecoderFeatures<T> & df, const PcffParams<T> & params)
{
  expect_shape(df.f_a.shape(), df.coords_a.size(), kDecoderWidthA, "F_a");
  expect_shape(df.f_b.shape(), df.coords_b.size(), kDecoderWidthB, "F_b");
  expect_shape(df.f_c.shape(), df.coords_c.size(), kDecoderWidthC, "F_c");
  const Tensor<T> b_up = upsample(df.f_b, df.coords_b, df.coords_a);
  const Tensor<T> c_up = upsample(df.f_c, df.coords_c, df.coords_a);
  return params.fuse(add(concat(df.f_a, b_up), c_up));
}

template struct PcffParams<float>;
template struct PcffParams<double>;
template Tensor<float> pcff_fuse(const DecoderFeatures<float> &, const PcffParams<float> &);
template Tensor<double> pcff_fuse(const DecoderFeatures<double> &, const PcffParams<double> &);

}  // namespace jointseg
