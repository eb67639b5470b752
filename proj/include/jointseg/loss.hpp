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

#include "jointseg/tensor.hpp"

namespace jointseg
{

/// Margins of the discriminative embedding loss, in L1 embedding units.
struct LossConfig
{
  double pull_margin = 0.5;  // delta_v
  double push_margin = 1.5;  // delta_d

  void validate() const;
};

/// Member point lists of each annotated instance, ordered by instance id.
struct InstanceGrouping
{
  std::vector<std::vector<std::size_t>> members;

  std::size_t count() const {return members.size();}

  /// Groups points by id. Points carrying `unannotated` are left out.
  static InstanceGrouping from_ids(
    std::span<const int> instance_ids, std::optional<int> unannotated = std::nullopt);
};

/// (1/M) sum_m (1/N_m) sum_n [ |mu_m - e_n|_1 - delta_v ]_+^2
template<typename T>
Tensor<T> pull_loss(
  const Tensor<T> & embeddings, const InstanceGrouping & grouping, const LossConfig & config);

/// 1/(M(M-1)) sum_{i != j} [ 2 delta_d - |mu_i - mu_j|_1 ]_+^2, zero for M = 1.
template<typename T>
Tensor<T> push_loss(
  const Tensor<T> & embeddings, const InstanceGrouping & grouping, const LossConfig & config);

template<typename T>
Tensor<T> discriminative_loss(
  const Tensor<T> & embeddings, const InstanceGrouping & grouping, const LossConfig & config);

/// Cross-entropy over all points plus the discriminative loss.
template<typename T>
Tensor<T> total_loss(
  const Tensor<T> & logits, std::span<const int> semantic_labels, const Tensor<T> & embeddings,
  const InstanceGrouping & grouping, const LossConfig & config);

}  // namespace jointseg
