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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "jointseg/config.hpp"
#include "jointseg/inference.hpp"
#include "jointseg/model.hpp"

namespace jointseg
{

using TrainNet = JointSegNet<float>;

/// Adam with bias correction. Moments are kept per parameter in creation
/// order of the store.
template<typename T>
class AdamOptimizer
{
public:
  AdamOptimizer(ParameterStore<T> & store, const OptimizerSettings & settings);

  void step(double learning_rate);

  std::uint64_t steps() const {return steps_;}
  std::vector<std::vector<T>> & first_moments() {return m_;}
  std::vector<std::vector<T>> & second_moments() {return v_;}
  const std::vector<std::vector<T>> & first_moments() const {return m_;}
  const std::vector<std::vector<T>> & second_moments() const {return v_;}
  void set_steps(std::uint64_t steps) {steps_ = steps;}

private:
  ParameterStore<T> & store_;
  OptimizerSettings settings_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::uint64_t steps_ = 0;
};

/// Step-decayed learning rate at a given iteration.
double learning_rate_at(const OptimizerSettings & settings, std::size_t iteration);

struct ParameterRecord
{
  std::string name;
  Shape shape;
  std::vector<float> values;
  std::vector<float> first_moment;
  std::vector<float> second_moment;

  bool operator==(const ParameterRecord &) const = default;
};

struct Checkpoint
{
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::uint64_t config_digest = 0;
  std::string config_text;
  std::uint64_t iteration = 0;
  std::uint64_t optimizer_steps = 0;
  std::vector<ParameterRecord> parameters;

  RunConfig config() const;
  bool operator==(const Checkpoint &) const = default;
};

Checkpoint make_checkpoint(
  const TrainNet & net, const AdamOptimizer<float> * optimizer, const RunConfig & config,
  std::uint64_t iteration);
/// Copies parameter values (and optimizer state when given) out of a
/// checkpoint. Names, count and shapes must match exactly.
void restore_checkpoint(
  const Checkpoint & checkpoint, TrainNet & net, AdamOptimizer<float> * optimizer = nullptr);

void save_checkpoint(const Checkpoint & checkpoint, const std::filesystem::path & path);
Checkpoint load_checkpoint(const std::filesystem::path & path);

/// Scenes of a run: files from data_dir when set, otherwise synthetic scenes.
std::vector<Scene> training_scenes(const RunConfig & config);
std::vector<Scene> validation_scenes(const RunConfig & config);

struct TrainResult
{
  Checkpoint checkpoint;
  std::vector<double> loss_trace;
  std::vector<double> validation_trace;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::size_t iterations = 0;
  bool early_stopped = false;
};

using ProgressCallback = std::function<void (std::size_t iteration, double loss)>;

/// Mean total loss over blocks, without recording a graph.
double dataset_loss(const TrainNet & net, std::span<const Block> blocks, const LossConfig & loss);

/// Trains from scratch. initial_loss/final_loss are whole-training-set losses
/// before the first and after the last update.
TrainResult train(
  const RunConfig & config, std::span<const Scene> scenes,
  std::span<const Scene> validation = {}, const ProgressCallback & progress = {});

/// split -> forward -> per-block prediction -> block merging.
SegmentationResult infer(const TrainNet & net, const RunConfig & config, const Scene & scene);
SegmentationResult infer(const Checkpoint & checkpoint, const Scene & scene);

void save_segmentation(const SegmentationResult & result, const std::filesystem::path & path);
SegmentationResult load_segmentation(const std::filesystem::path & path);

struct GradCheckSettings
{
  std::size_t block_points = 32;
  std::size_t entries_per_parameter = 4;
  double step = 1e-5;
  /// Gradients smaller than this are compared in absolute terms.
  double magnitude_floor = 1e-4;
  double tolerance = 1e-5;
};

struct GradCheckEntry
{
  std::string parameter;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradCheckReport
{
  std::vector<GradCheckEntry> entries;
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t parameters_checked = 0;
  // Entries whose +/- step evaluations straddled a kink and were redrawn.
  std::size_t kinks_skipped = 0;
  double loss = 0.0;
  double seconds = 0.0;

  bool passed(double tolerance) const {return max_relative_error < tolerance;}
  std::string summary() const;
};

/// 64-bit central-difference sweep over every parameter tensor of the full
/// network and total loss on one small synthetic block.
GradCheckReport grad_check(const RunConfig & config, const GradCheckSettings & settings = {});

}  // namespace jointseg
