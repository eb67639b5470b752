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

#include "jointseg/jiss.hpp"

#include <tuple>
#include <utility>

namespace jointseg
{
namespace
{

template<typename T>
void expect_shape(const Tensor<T> & x, std::size_t cols, const char * name)
{
  if (x.rank() != 2 || x.cols() != cols) {
    throw DimensionError(
            std::string("JISS input ") + name + " is " + shape_string(x.shape()) +
            ", expected N x " + std::to_string(cols));
  }
}

// x scaled by sigmoid(mean(x)) along the configured axis.
template<typename T>
std::pair<Tensor<T>, Tensor<T>> gate(const Tensor<T> & x, std::size_t axis)
{
  if (axis > 1) {
    throw ConfigError("JISS gate axis must be 0 or 1");
  }
  Tensor<T> weight = sigmoid(reduce_mean(x, axis));
  return {weight, mul(x, weight)};
}

}  // namespace

template<typename T>
JissParams<T> JissParams<T>::create(
  ParameterStore<T> & store, std::size_t embedding_dim, std::size_t num_classes,
  std::mt19937_64 & rng)
{
  if (embedding_dim == 0 || num_classes < 2) {
    throw ConfigError("JISS needs K >= 1 and C >= 2");
  }
  const std::size_t w = kJissWidth;
  JissParams p;
  p.sem_to_ins = ConvLayer<T>::create(store, "jiss.sem_to_ins", w, w, Activation::kRelu, rng);
  p.ins_hidden = ConvLayer<T>::create(store, "jiss.ins_hidden", 2 * w, w, Activation::kRelu, rng);
  p.ins_embed =
    ConvLayer<T>::create(store, "jiss.ins_embed", w, embedding_dim, Activation::kNone, rng);
  p.ins_to_sem = ConvLayer<T>::create(store, "jiss.ins_to_sem", 2 * w, w, Activation::kRelu, rng);
  p.sem_hidden = ConvLayer<T>::create(store, "jiss.sem_hidden", 2 * w, w, Activation::kRelu, rng);
  p.sem_logits =
    ConvLayer<T>::create(store, "jiss.sem_logits", w, num_classes, Activation::kNone, rng);
  return p;
}

template<typename T>
InstanceBranch<T> jiss_instance_branch(
  const Tensor<T> & f_ss, const Tensor<T> & f_is, const JissParams<T> & params,
  const JissConfig & config)
{
  expect_shape(f_ss, kJissWidth, "F_SS");
  expect_shape(f_is, kJissWidth, "F_IS");
  if (f_ss.rows() != f_is.rows()) {
    throw DimensionError(
            "F_SS " + shape_string(f_ss.shape()) + " and F_IS " + shape_string(f_is.shape()) +
            " differ in point count");
  }
  InstanceBranch<T> b;
  b.f_sst = config.instance_fusion ? params.sem_to_ins(f_ss) :
    Tensor<T>::zeros({f_is.rows(), kJissWidth});
  b.f_iss = add(f_is, b.f_sst);
  b.f_issc = concat(f_is, b.f_iss);
  std::tie(b.f_isr, b.f_issr) = gate(b.f_issc, config.gate_axis);
  b.e_iss = params.ins_embed(params.ins_hidden(b.f_issr));
  return b;
}

template<typename T>
SemanticBranch<T> jiss_semantic_branch(
  const Tensor<T> & f_ss, const Tensor<T> & f_issr, const JissParams<T> & params,
  const JissConfig & config)
{
  expect_shape(f_ss, kJissWidth, "F_SS");
  expect_shape(f_issr, 2 * kJissWidth, "F_ISSR");
  if (f_ss.rows() != f_issr.rows()) {
    throw DimensionError(
            "F_SS " + shape_string(f_ss.shape()) + " and F_ISSR " +
            shape_string(f_issr.shape()) + " differ in point count");
  }
  const std::size_t n = f_ss.rows();
  SemanticBranch<T> b;
  if (config.semantic_fusion) {
    if (config.context_axis > 1) {
      throw ConfigError("JISS context axis must be 0 or 1");
    }
    const Tensor<T> mean = reduce_mean(params.ins_to_sem(f_issr), config.context_axis);
    b.f_isst = config.context_axis == 0 ? tile(mean, 0, n) : tile(mean, 1, kJissWidth);
  } else {
    b.f_isst = Tensor<T>::zeros({n, kJissWidth});
  }
  b.f_ssi = concat(f_ss, add(f_ss, b.f_isst));
  Tensor<T> weight;
  std::tie(weight, b.f_ssir) = gate(b.f_ssi, config.gate_axis);
  b.p_ssi = params.sem_logits(params.sem_hidden(b.f_ssir));
  return b;
}

template<typename T>
JissFeatures<T> jiss_forward(
  const Tensor<T> & f_ss, const Tensor<T> & f_is, const JissParams<T> & params,
  const JissConfig & config)
{
  auto ins = jiss_instance_branch(f_ss, f_is, params, config);
  auto sem = jiss_semantic_branch(f_ss, ins.f_issr, params, config);
  JissFeatures<T> f;
  f.f_ss = f_ss;
  f.f_is = f_is;
  f.f_sst = ins.f_sst;
  f.f_iss = ins.f_iss;
  f.f_issc = ins.f_issc;
  f.f_isr = ins.f_isr;
  f.f_issr = ins.f_issr;
  f.e_iss = ins.e_iss;
  f.f_isst = sem.f_isst;
  f.f_ssi = sem.f_ssi;
  f.f_ssir = sem.f_ssir;
  f.p_ssi = sem.p_ssi;
  return f;
}

#define JOINTSEG_INSTANTIATE(T) \
  template struct JissParams<T>; \
  template InstanceBranch<T> jiss_instance_branch( \
    const Tensor<T> &, const Tensor<T> &, const JissParams<T> &, const JissConfig &); \
  template SemanticBranch<T> jiss_semantic_branch( \
    const Tensor<T> &, const Tensor<T> &, const JissParams<T> &, const JissConfig &); \
  template JissFeatures<T> jiss_forward( \
    const Tensor<T> &, const Tensor<T> &, const JissParams<T> &, const JissConfig &);

JOINTSEG_INSTANTIATE(float)
JOINTSEG_INSTANTIATE(double)

#undef JOINTSEG_INSTANTIATE

}  // namespace jointseg
