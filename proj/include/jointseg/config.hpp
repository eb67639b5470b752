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
#include <filesystem>
#include <string>

#include "jointseg/inference.hpp"
#include "jointseg/loss.hpp"
#include "jointseg/model.hpp"
#include "jointseg/pointcloud.hpp"

namespace jointseg
{

struct OptimizerSettings
{
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double decay_rate = 0.5;
  std::size_t decay_every = 500;
};

/// Everything a run depends on. Serialized as flat `key = value` lines.
struct RunConfig
{
  std::uint64_t seed = 1;

  // Data: scene files under data_dir, or `scenes` synthetic scenes.
  std::string data_dir;
  std::size_t scenes = 8;
  std::size_t validation_scenes = 2;
  SyntheticSceneSpec scene;
  BlockConfig blocks;

  std::string model_scale = "desk";
  ModelConfig model;
  LossConfig loss;
  MeanShiftConfig mean_shift;
  MergeConfig merge;

  OptimizerSettings optimizer;
  std::size_t batch_size = 4;
  std::size_t iterations = 2000;
  // 0 means bounded by `iterations` only.
  std::size_t epochs = 0;
  bool early_stopping = false;
  std::size_t patience = 5;
  bool random_sample = false;

  /// Desk-scale defaults for every field.
  static RunConfig defaults();

  void validate() const;
  /// Canonical text; parse_config(to_text()) reproduces the config.
  std::string to_text() const;
  /// FNV-1a hash of the canonical text.
  std::uint64_t digest() const;
};

/// Applies `key = value` lines on top of the defaults. Unknown keys and
/// malformed values raise ConfigError naming the line.
RunConfig parse_config(const std::string & text);
RunConfig load_config(const std::filesystem::path & path);

/// Seed of the i-th synthetic scene of a run; validation scenes use a
/// disjoint range.
std::uint64_t scene_seed(const RunConfig & config, std::size_t index, bool validation = false);

}  // namespace jointseg
