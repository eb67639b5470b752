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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fd_check.hpp"
#include "jointseg/error.hpp"
#include "jointseg/loss.hpp"

using namespace jointseg;
using jointseg::testing::max_grad_error;
using jointseg::testing::random_tensor;
using TD = Tensor<double>;

namespace
{

// Direct evaluation from the embedding table and id list.
std::pair<double, double> loss_loop(const TD & e, const std::vector<int> & ids,
  double dv, double dd)
{
  std::vector<int> uniq(ids.begin(), ids.end());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  const std::size_t k = e.cols(), m = uniq.size();
  std::vector<std::vector<double>> mu(m, std::vector<double>(k, 0.0));
  std::vector<double> n(m, 0.0);
  for (std::size_t p = 0; p < ids.size(); ++p) {
    const auto g = std::lower_bound(uniq.begin(), uniq.end(), ids[p]) - uniq.begin();
    n[g] += 1;
    for (std::size_t c = 0; c < k; ++c) {
      mu[g][c] += e.at(p, c);
    }
  }
  for (std::size_t g = 0; g < m; ++g) {
    for (auto & v : mu[g]) {
      v /= n[g];
    }
  }
  std::vector<double> pull_g(m, 0.0);
  for (std::size_t p = 0; p < ids.size(); ++p) {
    const auto g = std::lower_bound(uniq.begin(), uniq.end(), ids[p]) - uniq.begin();
    double d = 0;
    for (std::size_t c = 0; c < k; ++c) {
      d += std::abs(mu[g][c] - e.at(p, c));
    }
    pull_g[g] += std::pow(std::max(d - dv, 0.0), 2) / n[g];
  }
  const double pull = std::accumulate(pull_g.begin(), pull_g.end(), 0.0) / m;
  double push = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) {
        continue;
      }
      double d = 0;
      for (std::size_t c = 0; c < k; ++c) {
        d += std::abs(mu[i][c] - mu[j][c]);
      }
      push += std::pow(std::max(2 * dd - d, 0.0), 2);
    }
  }
  if (m > 1) {
    push /= static_cast<double>(m * (m - 1));
  }
  return {pull, push};
}

}  // namespace

TEST_CASE("hand cases")
{
  LossConfig cfg;
  std::vector<int> one{7, 7};
  auto e1 = TD::from_values({2, 1}, {0.0, 2.0});
  auto g1 = InstanceGrouping::from_ids(one);
  CHECK(std::abs(pull_loss(e1, g1, cfg).item() - 0.25) <= 1e-12);
  CHECK(push_loss(e1, g1, cfg).item() == 0.0);

  std::vector<int> two{0, 1};
  auto e2 = TD::from_values({2, 1}, {0.0, 1.0});
  auto g2 = InstanceGrouping::from_ids(two);
  CHECK(std::abs(push_loss(e2, g2, cfg).item() - 4.0) <= 1e-12);
  CHECK(pull_loss(e2, g2, cfg).item() == 0.0);

  // Tight clusters with means 3.0 apart in L1 satisfy both margins.
  std::vector<int> ids{0, 0, 1, 1};
  auto e3 = TD::from_values({4, 2}, {0.1, 0.0, -0.1, 0.0, 1.6, 1.4, 1.6, 1.4});
  auto g3 = InstanceGrouping::from_ids(ids);
  CHECK(discriminative_loss(e3, g3, cfg).item() == 0.0);
}

TEST_CASE("grouping")
{
  std::vector<int> ids{5, 2, 5, -1, 2, 9};
  auto g = InstanceGrouping::from_ids(ids, -1);
  REQUIRE(g.count() == 3);
  CHECK(g.members[0] == std::vector<std::size_t>{1, 4});
  CHECK(g.members[1] == std::vector<std::size_t>{0, 2});
  CHECK(g.members[2] == std::vector<std::size_t>{5});
  CHECK(InstanceGrouping::from_ids(ids).count() == 4);
}

TEST_CASE("random instances match the direct loop")
{
  LossConfig cfg;
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 6 + trial, k = 1 + trial % 5;
    auto e = random_tensor({n, k}, rng, true, -1.5, 1.5);
    std::vector<int> ids(n);
    std::uniform_int_distribution<int> pick(0, 3);
    for (auto & id : ids) {
      id = pick(rng);
    }
    auto g = InstanceGrouping::from_ids(ids);
    const auto [pull, push] = loss_loop(e, ids, cfg.pull_margin, cfg.push_margin);
    CHECK(pull_loss(e, g, cfg).item() == doctest::Approx(pull).epsilon(1e-12));
    CHECK(push_loss(e, g, cfg).item() == doctest::Approx(push).epsilon(1e-12));
    CHECK(max_grad_error([&] {return discriminative_loss(e, g, cfg);}, {e}) < 1e-5);

    // Additivity of the total loss.
    auto logits = random_tensor({n, 3}, rng);
    std::vector<int> labels(n);
    for (auto & l : labels) {
      l = pick(rng) % 3;
    }
    const double total = total_loss(logits, labels, e, g, cfg).item();
    const double ce = softmax_cross_entropy(logits, labels).item();
    CHECK(total == doctest::Approx(ce + pull + push).epsilon(1e-12));
    CHECK(max_grad_error([&] {return total_loss(logits, labels, e, g, cfg);}, {logits, e}) <
      1e-5);
  }
}

TEST_CASE("invariances")
{
  LossConfig cfg;
  std::mt19937_64 rng(8);
  auto e = random_tensor({10, 3}, rng, false, -1, 1);
  std::vector<int> ids{0, 1, 2, 0, 1, 2, 0, 1, 2, 2};
  auto g = InstanceGrouping::from_ids(ids);
  const double pull = pull_loss(e, g, cfg).item();
  const double push = push_loss(e, g, cfg).item();
  CHECK(pull >= 0.0);
  CHECK(push >= 0.0);

  // Renaming instances.
  std::vector<int> renamed(ids.size());
  std::transform(ids.begin(), ids.end(), renamed.begin(), [](int i) {return 2 - i;});
  auto gr = InstanceGrouping::from_ids(renamed);
  CHECK(pull_loss(e, gr, cfg).item() == doctest::Approx(pull).epsilon(1e-14));
  CHECK(push_loss(e, gr, cfg).item() == doctest::Approx(push).epsilon(1e-14));

  // Common translation.
  std::vector<double> shifted(e.values().begin(), e.values().end());
  for (std::size_t i = 0; i < shifted.size(); ++i) {
    shifted[i] += (i % 3 == 0) ? 4.0 : -2.5;
  }
  auto et = TD::from_values(e.shape(), shifted);
  CHECK(pull_loss(et, g, cfg).item() == doctest::Approx(pull).epsilon(1e-12));
  CHECK(push_loss(et, g, cfg).item() == doctest::Approx(push).epsilon(1e-12));
}

TEST_CASE("perfect predictions give near-zero total")
{
  LossConfig cfg;
  std::vector<int> ids{0, 0, 1, 1};
  std::vector<int> labels{1, 1, 0, 0};
  auto e = TD::from_values({4, 1}, {0.0, 0.0, 3.0, 3.0});
  auto logits = TD::from_values({4, 2}, {-40, 40, -40, 40, 40, -40, 40, -40});
  CHECK(total_loss(logits, labels, e, InstanceGrouping::from_ids(ids), cfg).item() < 1e-12);
}

TEST_CASE("bad inputs")
{
  LossConfig bad;
  bad.pull_margin = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  std::vector<int> ids{0, 1, 2};
  auto e = TD::zeros({2, 3});
  CHECK_THROWS_AS(pull_loss(e, InstanceGrouping::from_ids(ids), LossConfig{}), DimensionError);
  CHECK_THROWS_AS(push_loss(e, InstanceGrouping{}, LossConfig{}), ContractError);
}
