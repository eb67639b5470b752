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

#include "jointseg/model.hpp"

namespace jointseg
{

template<typename T>
JointSegNet<T>::JointSegNet(const ModelConfig & config, std::uint64_t seed)
: config_(config),
  rng_(seed),
  backbone_(config.layers, config.input_channels, store_, rng_)
{
  if (config_.pcff) {
    semantic_pcff_ = PcffParams<T>::create(store_, "semantic_pcff", rng_);
    instance_pcff_ = PcffParams<T>::create(store_, "instance_pcff", rng_);
  }
  jiss_ = JissParams<T>::create(store_, config_.embedding_dim, config_.num_classes, rng_);
}

template<typename T>
ModelOutput<T> JointSegNet<T>::forward(const Tensor<T> & block_features) const
{
  if (block_features.rank() != 2 || block_features.cols() != config_.input_channels) {
    throw DimensionError(
            "model input " + shape_string(block_features.shape()) + ", expected N x " +
            std::to_string(config_.input_channels));
  }
  ModelOutput<T> out;
  out.backbone = backbone_.forward(block_features);
  Tensor<T> f_ss = out.backbone.semantic.f_a;
  Tensor<T> f_is = out.backbone.instance.f_a;
  if (config_.pcff) {
    f_ss = pcff_fuse(out.backbone.semantic, *semantic_pcff_);
    f_is = pcff_fuse(out.backbone.instance, *instance_pcff_);
  }
  out.jiss = jiss_forward(f_ss, f_is, jiss_, config_.jiss);
  return out;
}

template<typename T>
Tensor<T> block_tensor(const Block & block)
{
  return Tensor<T>::from_values(
    {block.size(), kFeatureWidth}, std::vector<T>(block.features.begin(), block.features.end()));
}

template class JointSegNet<float>;
template class JointSegNet<double>;
template Tensor<float> block_tensor(const Block &);
template Tensor<double> block_tensor(const Block &);

}  // namespace jointseg
