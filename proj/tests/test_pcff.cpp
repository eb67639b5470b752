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

#include <random>

#include "fd_check.hpp"
#include "jointseg/error.hpp"
#include "jointseg/pcff.hpp"
#include "loop_oracle.hpp"

using namespace jointseg;
using namespace jointseg::testing;
using TD = Tensor<double>;

namespace
{

DecoderFeatures<double> random_decoder(std::size_t na, std::size_t nb, std::size_t nc,
  std::mt19937_64 & rng)
{
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto pts = [&](std::size_t n) {
      std::vector<Point3> p(n);
      for (auto & q : p) {
        q = {u(rng), u(rng), u(rng)};
      }
      return p;
    };
  DecoderFeatures<double> df;
  df.coords_a = pts(na);
  df.coords_b = pts(nb);
  df.coords_c = pts(nc);
  df.f_a = random_tensor({na, 128}, rng);
  df.f_b = random_tensor({nb, 128}, rng);
  df.f_c = random_tensor({nc, 256}, rng);
  return df;
}

Mat interpolate_loop(const Mat & coarse, const std::vector<Point3> & cc,
  const std::vector<Point3> & fine)
{
  Mat out(fine.size(), std::vector<double>(coarse[0].size(), 0.0));
  for (std::size_t f = 0; f < fine.size(); ++f) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t i = 0; i < cc.size(); ++i) {
      double s = 0;
      for (int a = 0; a < 3; ++a) {
        s += (fine[f][a] - cc[i][a]) * (fine[f][a] - cc[i][a]);
      }
      d.push_back({s, i});
    }
    std::sort(d.begin(), d.end());
    const std::size_t k = std::min<std::size_t>(3, d.size());
    double total = 0;
    for (std::size_t j = 0; j < k; ++j) {
      total += 1.0 / (d[j].first + kInterpolationEps);
    }
    for (std::size_t j = 0; j < k; ++j) {
      const double w = 1.0 / (d[j].first + kInterpolationEps) / total;
      for (std::size_t c = 0; c < out[f].size(); ++c) {
        out[f][c] += w * coarse[d[j].second][c];
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("coincident levels reduce to a plain fused conv")
{
  std::mt19937_64 rng(1);
  auto df = random_decoder(6, 6, 6, rng);
  df.coords_b = df.coords_a;
  df.coords_c = df.coords_a;
  ParameterStore<double> store;
  auto params = PcffParams<double>::create(store, "pcff", rng);
  auto got = pcff_fuse(df, params);
  auto expect = params.fuse(add(concat(df.f_a, df.f_b), df.f_c));
  CHECK(got.shape() == Shape{6, 128});
  // Exact up to the interpolation epsilon leaking weight to other points.
  for (std::size_t i = 0; i < got.numel(); ++i) {
    CHECK(got.values()[i] == doctest::Approx(expect.values()[i]).epsilon(1e-5));
  }
}

TEST_CASE("zero inputs give zero output")
{
  std::mt19937_64 rng(2);
  auto df = random_decoder(5, 3, 2, rng);
  df.f_a = TD::zeros({5, 128});
  df.f_b = TD::zeros({3, 128});
  df.f_c = TD::zeros({2, 256});
  ParameterStore<double> store;
  auto params = PcffParams<double>::create(store, "pcff", rng);
  const auto out = pcff_fuse(df, params);
  for (double v : out.values()) {
    CHECK(v == 0.0);
  }
}

TEST_CASE("straight-line oracle and gradients")
{
  std::mt19937_64 rng(3);
  auto df = random_decoder(9, 5, 3, rng);
  ParameterStore<double> store;
  auto params = PcffParams<double>::create(store, "pcff", rng);
  auto b_up = interpolate_loop(to_mat(df.f_b), df.coords_b, df.coords_a);
  auto c_up = interpolate_loop(to_mat(df.f_c), df.coords_c, df.coords_a);
  auto expect = conv_loop(add_loop(cat_loop(to_mat(df.f_a), b_up), c_up), params.fuse);
  auto got = pcff_fuse(df, params);
  CHECK(got.shape() == Shape{9, 128});
  CHECK(max_abs_diff(expect, got) < 1e-12);

  // Every input matrix receives gradient.
  CHECK(max_grad_error([&] {return project(pcff_fuse(df, params));},
    {df.f_a, df.f_b, df.f_c}) < 1e-5);
  for (auto * t : {&df.f_a, &df.f_b, &df.f_c}) {
    double norm = 0;
    for (double g : t->grad()) {
      norm += std::abs(g);
    }
    CHECK(norm > 0.0);
  }
}

TEST_CASE("shape checks")
{
  std::mt19937_64 rng(4);
  auto df = random_decoder(4, 3, 2, rng);
  ParameterStore<double> store;
  auto params = PcffParams<double>::create(store, "pcff", rng);
  auto bad = df;
  bad.f_c = random_tensor({2, 128}, rng);
  CHECK_THROWS_AS(pcff_fuse(bad, params), DimensionError);
  bad = df;
  bad.coords_b.pop_back();
  CHECK_THROWS_AS(pcff_fuse(bad, params), DimensionError);
}
