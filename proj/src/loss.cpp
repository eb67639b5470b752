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

#include "jointseg/loss.hpp"

#include <cmath>
#include <map>

namespace jointseg
{
namespace
{

template<typename T>
T sign(T v)
{
  return v > T(0) ? T(1) : v < T(0) ? T(-1) : T(0);
}

template<typename T>
void check_inputs(const Tensor<T> & embeddings, const InstanceGrouping & grouping)
{
  if (embeddings.rank() != 2) {
    throw DimensionError("embeddings must be N x K, got " + shape_string(embeddings.shape()));
  }
  if (grouping.count() == 0) {
    throw ContractError("discriminative loss needs at least one instance");
  }
  for (const auto & m : grouping.members) {
    if (m.empty()) {
      throw ContractError("instance with no member points");
    }
    for (std::size_t i : m) {
      if (i >= embeddings.rows()) {
        throw DimensionError(
                "instance member " + std::to_string(i) + " outside embeddings " +
                shape_string(embeddings.shape()));
      }
    }
  }
}

template<typename T>
std::vector<T> instance_means(const Tensor<T> & e, const InstanceGrouping & grouping)
{
  const std::size_t k = e.cols();
  std::vector<T> mu(grouping.count() * k, T(0));
  for (std::size_t m = 0; m < grouping.count(); ++m) {
    for (std::size_t i : grouping.members[m]) {
      for (std::size_t d = 0; d < k; ++d) {
        mu[m * k + d] += e.at(i, d);
      }
    }
    const T inv = T(1) / static_cast<T>(grouping.members[m].size());
    for (std::size_t d = 0; d < k; ++d) {
      mu[m * k + d] *= inv;
    }
  }
  return mu;
}

// Adds d(loss)/d(mu) back onto the member embeddings.
template<typename T>
void spread_mean_grad(
  std::vector<T> & grad, const std::vector<T> & mu_grad, const InstanceGrouping & grouping,
  std::size_t k)
{
  for (std::size_t m = 0; m < grouping.count(); ++m) {
    const T inv = T(1) / static_cast<T>(grouping.members[m].size());
    for (std::size_t i : grouping.members[m]) {
      for (std::size_t d = 0; d < k; ++d) {
        grad[i * k + d] += mu_grad[m * k + d] * inv;
      }
    }
  }
}

}  // namespace

void LossConfig::validate() const
{
  if (!(pull_margin > 0.0) || !(push_margin > pull_margin)) {
    throw ConfigError("loss margins need push > pull > 0");
  }
}

InstanceGrouping InstanceGrouping::from_ids(
  std::span<const int> instance_ids, std::optional<int> unannotated)
{
  std::map<int, std::vector<std::size_t>> by_id;
  for (std::size_t i = 0; i < instance_ids.size(); ++i) {
    if (unannotated && instance_ids[i] == *unannotated) {
      continue;
    }
    by_id[instance_ids[i]].push_back(i);
  }
  InstanceGrouping g;
  for (auto & [id, members] : by_id) {
    g.members.push_back(std::move(members));
  }
  return g;
}

template<typename T>
Tensor<T> pull_loss(
  const Tensor<T> & embeddings, const InstanceGrouping & grouping, const LossConfig & config)
{
  check_inputs(embeddings, grouping);
  const std::size_t k = embeddings.cols();
  const std::size_t count = grouping.count();
  const T margin = static_cast<T>(config.pull_margin);
  const std::vector<T> mu = instance_means(embeddings, grouping);
  auto ev = embeddings.values();

  // d(loss)/d(e) for the direct path and d(loss)/d(mu) for the mean path.
  std::vector<T> direct(embeddings.numel(), T(0));
  std::vector<T> mu_grad(mu.size(), T(0));
  T total = T(0);
  for (std::size_t m = 0; m < count; ++m) {
    const auto & members = grouping.members[m];
    const T norm = T(1) / (static_cast<T>(members.size()) * static_cast<T>(count));
    T term = T(0);
    for (std::size_t i : members) {
      T dist = T(0);
      for (std::size_t d = 0; d < k; ++d) {
        dist += std::abs(mu[m * k + d] - ev[i * k + d]);
      }
      const T hinge = dist - margin;
      KinkSignature::mix(hinge > T(0) ? 1 : 0);
      if (hinge <= T(0)) {
        continue;
      }
      term += hinge * hinge;
      for (std::size_t d = 0; d < k; ++d) {
        const T s = sign(mu[m * k + d] - ev[i * k + d]);
        KinkSignature::mix(static_cast<std::uint64_t>(s + T(1)));
        const T g = T(2) * hinge * s * norm;
        mu_grad[m * k + d] += g;
        direct[i * k + d] -= g;
      }
    }
    total += term / static_cast<T>(members.size());
  }
  total /= static_cast<T>(count);
  spread_mean_grad(direct, mu_grad, grouping, k);

  return detail::make_op<T>(
    "pull_loss", Shape{}, {total}, {embeddings},
    [direct = std::move(direct)](TensorNode<T> & self) {
      auto & g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += self.grad[0] * direct[i];
      }
    });
}

template<typename T>
Tensor<T> push_loss(
  const Tensor<T> & embeddings, const InstanceGrouping & grouping, const LossConfig & config)
{
  check_inputs(embeddings, grouping);
  const std::size_t k = embeddings.cols();
  const std::size_t count = grouping.count();
  std::vector<T> direct(embeddings.numel(), T(0));
  T total = T(0);
  if (count > 1) {
    const T reach = static_cast<T>(2.0 * config.push_margin);
    const T norm = T(1) / (static_cast<T>(count) * static_cast<T>(count - 1));
    const std::vector<T> mu = instance_means(embeddings, grouping);
    std::vector<T> mu_grad(mu.size(), T(0));
    for (std::size_t a = 0; a < count; ++a) {
      for (std::size_t b = 0; b < count; ++b) {
        if (a == b) {
          continue;
        }
        T dist = T(0);
        for (std::size_t d = 0; d < k; ++d) {
          dist += std::abs(mu[a * k + d] - mu[b * k + d]);
        }
        const T hinge = reach - dist;
        KinkSignature::mix(hinge > T(0) ? 1 : 0);
        if (hinge <= T(0)) {
          continue;
        }
        total += hinge * hinge;
        for (std::size_t d = 0; d < k; ++d) {
          const T s = sign(mu[a * k + d] - mu[b * k + d]);
          KinkSignature::mix(static_cast<std::uint64_t>(s + T(1)));
          const T g = T(2) * hinge * s * norm;
          mu_grad[a * k + d] -= g;
          mu_grad[b * k + d] += g;
        }
      }
    }
    total *= norm;
    spread_mean_grad(direct, mu_grad, grouping, k);
  }
  return detail::make_op<T>(
    "push_loss", Shape{}, {total}, {embeddings},
    [direct = std::move(direct)](TensorNode<T> & self) {
      auto & g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += self.grad[0] * direct[i];
      }
    });
}

template<typename T>
Tensor<T> discriminative_loss(
  const Tensor<T> & embeddings, const InstanceGrouping & grouping, const LossConfig & config)
{
  return add(pull_loss(embeddings, grouping, config), push_loss(embeddings, grouping, config));
}

template<typename T>
Tensor<T> total_loss(
  const Tensor<T> & logits, std::span<const int> semantic_labels, const Tensor<T> & embeddings,
  const InstanceGrouping & grouping, const LossConfig & config)
{
  if (logits.rank() != 2 || embeddings.rank() != 2 || logits.rows() != embeddings.rows()) {
    throw DimensionError(
            "logits " + shape_string(logits.shape()) + " and embeddings " +
            shape_string(embeddings.shape()) + " disagree");
  }
  return add(
    softmax_cross_entropy(logits, semantic_labels),
    discriminative_loss(embeddings, grouping, config));
}

#define JOINTSEG_INSTANTIATE(T) \
  template Tensor<T> pull_loss( \
    const Tensor<T> &, const InstanceGrouping &, const LossConfig &); \
  template Tensor<T> push_loss( \
    const Tensor<T> &, const InstanceGrouping &, const LossConfig &); \
  template Tensor<T> discriminative_loss( \
    const Tensor<T> &, const InstanceGrouping &, const LossConfig &); \
  template Tensor<T> total_loss( \
    const Tensor<T> &, std::span<const int>, const Tensor<T> &, const InstanceGrouping &, \
    const LossConfig &);

JOINTSEG_INSTANTIATE(float)
JOINTSEG_INSTANTIATE(double)

#undef JOINTSEG_INSTANTIATE

}  // namespace jointseg
