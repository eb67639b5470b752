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
#include <cstdint>
#include <optional>
#include <random>

#include "jointseg/backbone.hpp"
#include "jointseg/jiss.hpp"
#include "jointseg/pcff.hpp"
#include "jointseg/pointcloud.hpp"

namespace jointseg
{

struct ModelConfig
{
  LayerSpec layers = LayerSpec::desk_scale();
  std::size_t input_channels = kFeatureWidth;
  std::size_t embedding_dim = 5;
  std::size_t num_classes = 4;
  bool pcff = true;
  JissConfig jiss;
};

template<typename T>
struct ModelOutput
{
  BackboneOutput<T> backbone;
  JissFeatures<T> jiss;

  const Tensor<T> & logits() const {return jiss.p_ssi;}
  const Tensor<T> & embeddings() const {return jiss.e_iss;}
};

/// Backbone, one PCFF per decoder (optional) and the joint module.
template<typename T>
class JointSegNet
{
public:
  JointSegNet(const ModelConfig & config, std::uint64_t seed);

  ModelOutput<T> forward(const Tensor<T> & block_features) const;

  const ModelConfig & config() const {return config_;}
  ParameterStore<T> & parameters() {return store_;}
  const ParameterStore<T> & parameters() const {return store_;}

private:
  ModelConfig config_;
  ParameterStore<T> store_;
  std::mt19937_64 rng_;
  Backbone<T> backbone_;
  std::optional<PcffParams<T>> semantic_pcff_;
  std::optional<PcffParams<T>> instance_pcff_;
  JissParams<T> jiss_;
};

/// N x 9 tensor of a block's features.
template<typename T>
Tensor<T> block_tensor(const Block & block);

}  // namespace jointseg
