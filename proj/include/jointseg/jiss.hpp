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
#include <random>

#include "jointseg/tensor.hpp"

namespace jointseg
{

inline constexpr std::size_t kJissWidth = 128;

/// Which axis each Mean reduces. The gate means (instance and semantic
/// re-weighting) default to the feature axis, giving one scalar per point;
/// the instance-to-semantic context mean defaults to the point axis and is
/// tiled back over the points.
struct JissConfig
{
  bool instance_fusion = true;
  bool semantic_fusion = true;
  std::size_t gate_axis = 1;
  std::size_t context_axis = 0;
};

template<typename T>
struct JissParams
{
  ConvLayer<T> sem_to_ins;   // 128 -> 128
  ConvLayer<T> ins_hidden;   // 256 -> 128
  ConvLayer<T> ins_embed;    // 128 -> K, linear
  ConvLayer<T> ins_to_sem;   // 256 -> 128
  ConvLayer<T> sem_hidden;   // 256 -> 128
  ConvLayer<T> sem_logits;   // 128 -> C, linear

  std::size_t embedding_dim() const {return ins_embed.out_channels();}
  std::size_t num_classes() const {return sem_logits.out_channels();}

  static JissParams create(
    ParameterStore<T> & store, std::size_t embedding_dim, std::size_t num_classes,
    std::mt19937_64 & rng);
};

/// Every intermediate matrix of the joint module, kept for inspection.
template<typename T>
struct JissFeatures
{
  Tensor<T> f_ss;    // N x 128 semantic input
  Tensor<T> f_is;    // N x 128 instance input
  Tensor<T> f_sst;   // N x 128 semantic features mapped to instance space
  Tensor<T> f_iss;   // N x 128
  Tensor<T> f_issc;  // N x 256
  Tensor<T> f_isr;   // N x 1 gate
  Tensor<T> f_issr;  // N x 256
  Tensor<T> f_isst;  // N x 128 tiled instance context
  Tensor<T> f_ssi;   // N x 256
  Tensor<T> f_ssir;  // N x 256
  Tensor<T> e_iss;   // N x K embeddings
  Tensor<T> p_ssi;   // N x C logits
};

template<typename T>
struct InstanceBranch
{
  Tensor<T> f_sst, f_iss, f_issc, f_isr, f_issr, e_iss;
};

template<typename T>
struct SemanticBranch
{
  Tensor<T> f_isst, f_ssi, f_ssir, p_ssi;
};

template<typename T>
InstanceBranch<T> jiss_instance_branch(
  const Tensor<T> & f_ss, const Tensor<T> & f_is, const JissParams<T> & params,
  const JissConfig & config = {});

template<typename T>
SemanticBranch<T> jiss_semantic_branch(
  const Tensor<T> & f_ss, const Tensor<T> & f_issr, const JissParams<T> & params,
  const JissConfig & config = {});

template<typename T>
JissFeatures<T> jiss_forward(
  const Tensor<T> & f_ss, const Tensor<T> & f_is, const JissParams<T> & params,
  const JissConfig & config = {});

}  // namespace jointseg
