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

#include <random>
#include <string>

#include "jointseg/backbone.hpp"

namespace jointseg
{

template<typename T>
struct PcffParams
{
  ConvLayer<T> fuse;  // 256 -> 128, relu

  static PcffParams create(
    ParameterStore<T> & store, const std::string & prefix, std::mt19937_64 & rng);
};

/// Fuses the last three decoder outputs into an N_a x 128 matrix:
/// conv(concat(F_a, up(F_b)) + up(F_c)), where up() is 3-NN inverse square
/// distance interpolation onto the N_a points.
template<typename T>
Tensor<T> pcff_fuse(const DecoderFeatures<T> & features, const PcffParams<T> & params);

}  // namespace jointseg
