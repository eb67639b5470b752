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

// Plain nested-loop re-implementations used as independent oracles.

#include <algorithm>
#include <cmath>
#include <vector>

#include "jointseg/tensor.hpp"

namespace jointseg::testing
{

using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const Tensor<double> & t)
{
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      m[r][c] = t.at(r, c);
    }
  }
  return m;
}

inline Mat conv_loop(const Mat & x, const ConvLayer<double> & layer)
{
  const std::size_t in = layer.in_channels(), out = layer.out_channels();
  Mat y(x.size(), std::vector<double>(out));
  for (std::size_t r = 0; r < x.size(); ++r) {
    for (std::size_t o = 0; o < out; ++o) {
      double acc = layer.bias.values()[o];
      for (std::size_t i = 0; i < in; ++i) {
        acc += x[r][i] * layer.weight.values()[i * out + o];
      }
      y[r][o] = layer.activation == Activation::kRelu ? std::max(acc, 0.0) : acc;
    }
  }
  return y;
}

inline Mat cat_loop(const Mat & a, const Mat & b)
{
  Mat y = a;
  for (std::size_t r = 0; r < a.size(); ++r) {
    y[r].insert(y[r].end(), b[r].begin(), b[r].end());
  }
  return y;
}

inline Mat add_loop(const Mat & a, const Mat & b)
{
  Mat y = a;
  for (std::size_t r = 0; r < a.size(); ++r) {
    for (std::size_t c = 0; c < a[r].size(); ++c) {
      y[r][c] += b[r][c];
    }
  }
  return y;
}

inline double max_abs_diff(const Mat & a, const Tensor<double> & t)
{
  double worst = 0.0;
  for (std::size_t r = 0; r < a.size(); ++r) {
    for (std::size_t c = 0; c < a[r].size(); ++c) {
      worst = std::max(worst, std::abs(a[r][c] - t.at(r, c)));
    }
  }
  return worst;
}

}  // namespace jointseg::testing
