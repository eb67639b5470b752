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
#include <random>

#include "fd_check.hpp"
#include "jointseg/error.hpp"
#include "jointseg/jiss.hpp"
#include "loop_oracle.hpp"

using namespace jointseg;
using namespace jointseg::testing;
using TD = Tensor<double>;

namespace
{

struct Fixture
{
  std::mt19937_64 rng{42};
  ParameterStore<double> store;
  JissParams<double> params = JissParams<double>::create(store, 5, 4, rng);
};

Mat gate_loop(const Mat & x)
{
  Mat y = x;
  for (auto & row : y) {
    double m = 0;
    for (double v : row) {
      m += v;
    }
    m /= static_cast<double>(row.size());
    const double g = 1.0 / (1.0 + std::exp(-m));
    for (auto & v : row) {
      v *= g;
    }
  }
  return y;
}

bool bit_equal(const TD & a, const TD & b)
{
  return a.shape() == b.shape() &&
         std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

void zero_biases(JissParams<double> & p)
{
  for (auto * l : {&p.sem_to_ins, &p.ins_hidden, &p.ins_embed, &p.ins_to_sem, &p.sem_hidden,
      &p.sem_logits})
  {
    std::fill(l->bias.mutable_values().begin(), l->bias.mutable_values().end(), 0.0);
  }
}

}  // namespace

TEST_CASE("zero-mean rows gate at one half")
{
  Fixture f;
  // F_IS rows alternate +a/-a and F_SS = 0, so F_ISSC rows have mean 0.
  std::vector<double> v(3 * 128);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = (i % 2 ? -1.0 : 1.0) * 0.3;
  }
  zero_biases(f.params);
  auto fis = TD::from_values({3, 128}, v);
  auto b = jiss_instance_branch(TD::zeros({3, 128}), fis, f.params);
  for (double g : b.f_isr.values()) {
    CHECK(g == 0.5);
  }
  for (std::size_t i = 0; i < b.f_issc.numel(); ++i) {
    CHECK(b.f_issr.values()[i] == 0.5 * b.f_issc.values()[i]);
  }
  // Zero semantic input adds nothing.
  CHECK(bit_equal(b.f_iss, fis));
}

TEST_CASE("zero instance context leaves the semantic concat")
{
  Fixture f;
  zero_biases(f.params);
  auto fss = random_tensor({4, 128}, f.rng);
  auto sb = jiss_semantic_branch(fss, TD::zeros({4, 256}), f.params);
  for (double v : sb.f_isst.values()) {
    CHECK(v == 0.0);
  }
  CHECK(bit_equal(sb.f_ssi, concat(fss, fss)));

  // One point: tiling is the identity.
  auto one = random_tensor({1, 128}, f.rng);
  auto issr = random_tensor({1, 256}, f.rng);
  auto s1 = jiss_semantic_branch(one, issr, f.params);
  auto direct = f.params.ins_to_sem(issr);
  CHECK(bit_equal(s1.f_isst, direct));
}

TEST_CASE("scalar loop oracle for both branches")
{
  Fixture f;
  auto fss = random_tensor({4, 128}, f.rng);
  auto fis = random_tensor({4, 128}, f.rng);
  auto out = jiss_forward(fss, fis, f.params);

  const Mat ss = to_mat(fss), is = to_mat(fis);
  const Mat sst = conv_loop(ss, f.params.sem_to_ins);
  const Mat iss = add_loop(is, sst);
  const Mat issr = gate_loop(cat_loop(is, iss));
  const Mat e = conv_loop(conv_loop(issr, f.params.ins_hidden), f.params.ins_embed);
  CHECK(max_abs_diff(issr, out.f_issr) < 1e-12);
  CHECK(max_abs_diff(e, out.e_iss) < 1e-12);

  const Mat ctx = conv_loop(issr, f.params.ins_to_sem);
  Mat isst(4, std::vector<double>(128, 0.0));
  for (std::size_t c = 0; c < 128; ++c) {
    double m = 0;
    for (std::size_t r = 0; r < 4; ++r) {
      m += ctx[r][c];
    }
    for (std::size_t r = 0; r < 4; ++r) {
      isst[r][c] = m / 4;
    }
  }
  const Mat ssir = gate_loop(cat_loop(ss, add_loop(ss, isst)));
  const Mat p = conv_loop(conv_loop(ssir, f.params.sem_hidden), f.params.sem_logits);
  CHECK(max_abs_diff(isst, out.f_isst) < 1e-12);
  CHECK(max_abs_diff(p, out.p_ssi) < 1e-12);
  CHECK(out.p_ssi.shape() == Shape{4, 4});
  CHECK(out.e_iss.shape() == Shape{4, 5});

  for (const auto * g : {&out.f_isr}) {
    for (double v : g->values()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("ablation decouples the branches")
{
  Fixture f;
  JissConfig off;
  off.instance_fusion = false;
  off.semantic_fusion = false;
  auto fss = random_tensor({6, 128}, f.rng);
  auto fis = random_tensor({6, 128}, f.rng);
  auto base = jiss_forward(fss, fis, f.params, off);

  auto fis2 = random_tensor({6, 128}, f.rng);
  auto fss2 = random_tensor({6, 128}, f.rng);
  CHECK(bit_equal(jiss_forward(fss, fis2, f.params, off).p_ssi, base.p_ssi));
  CHECK(bit_equal(jiss_forward(fss2, fis, f.params, off).e_iss, base.e_iss));

  // Embedding loss reaches no semantic-only parameter.
  f.store.zero_grad();
  project(jiss_forward(fss, fis, f.params, off).e_iss).backward();
  for (const auto * l : {&f.params.sem_to_ins, &f.params.ins_to_sem, &f.params.sem_hidden,
      &f.params.sem_logits})
  {
    for (double g : l->weight.grad()) {
      CHECK(g == 0.0);
    }
  }

  // Coupled: each output moves with the other branch's input.
  JissConfig on;
  auto p_on = jiss_forward(fss, fis, f.params, on);
  CHECK_FALSE(bit_equal(jiss_forward(fss, fis2, f.params, on).p_ssi, p_on.p_ssi));
  CHECK_FALSE(bit_equal(jiss_forward(fss2, fis, f.params, on).e_iss, p_on.e_iss));
}

TEST_CASE("gradients through every parameter")
{
  Fixture f;
  auto fss = random_tensor({5, 128}, f.rng);
  auto fis = random_tensor({5, 128}, f.rng);
  auto loss = [&] {
      auto o = jiss_forward(fss, fis, f.params);
      return add(project(o.p_ssi, 1), project(o.e_iss, 2));
    };
  CHECK(max_grad_error(loss, {fss, fis, f.params.sem_logits.weight, f.params.ins_embed.bias})
    < 1e-5);
  CHECK(max_grad_error(loss, {f.params.sem_to_ins.bias, f.params.ins_to_sem.bias,
      f.params.sem_hidden.bias, f.params.ins_hidden.bias}) < 1e-5);
}

TEST_CASE("alternate mean axes and bad shapes")
{
  Fixture f;
  JissConfig alt;
  alt.gate_axis = 0;
  alt.context_axis = 1;
  auto fss = random_tensor({3, 128}, f.rng);
  auto fis = random_tensor({3, 128}, f.rng);
  auto out = jiss_forward(fss, fis, f.params, alt);
  CHECK(out.f_isr.shape() == Shape{1, 256});
  CHECK(out.p_ssi.shape() == Shape{3, 4});

  JissConfig bad;
  bad.gate_axis = 2;
  CHECK_THROWS_AS(jiss_forward(fss, fis, f.params, bad), ConfigError);
  CHECK_THROWS_AS(jiss_forward(fss, random_tensor({4, 128}, f.rng), f.params), DimensionError);
  CHECK_THROWS_AS(jiss_forward(random_tensor({3, 64}, f.rng), fis, f.params), DimensionError);
}
