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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "jointseg/config.hpp"
#include "jointseg/error.hpp"
#include "jointseg/metrics.hpp"
#include "jointseg/training.hpp"

namespace fs = std::filesystem;
using namespace jointseg;

namespace
{

struct Common
{
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

void add_common(CLI::App * cmd, Common & c)
{
  cmd->add_option("--config", c.config_path, "key = value config file");
  cmd->add_option("--seed", c.seed, "overrides the config seed");
  cmd->add_option("--out", c.out, "output directory");
}

RunConfig resolve(const Common & c)
{
  RunConfig config = c.config_path.empty() ? RunConfig::defaults() : load_config(c.config_path);
  if (c.seed) {
    config.seed = *c.seed;
  }
  config.validate();
  return config;
}

fs::path prepare_out(const std::string & dir)
{
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create " + dir + ": " + ec.message());
  }
  return fs::path(dir);
}

std::string indexed(const char * stem, std::size_t i, const char * ext)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03zu%s", stem, i, ext);
  return buf;
}

void write_text(const fs::path & path, const std::string & text)
{
  std::ofstream out(path);
  out << text;
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
}

int run_gen_data(const Common & c, bool text)
{
  const RunConfig config = resolve(c);
  const fs::path out = prepare_out(c.out);
  const auto scenes = training_scenes(config);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const fs::path path = out / indexed("scene", i, ".scn");
    save_scene(scenes[i], path);
    if (text) {
      save_scene_text(scenes[i], out / indexed("scene", i, ".txt"));
    }
    std::cout << path.string() << " " << scenes[i].points.size() << " points\n";
  }
  write_text(out / "config.txt", config.to_text());
  return 0;
}

int run_train(const Common & c)
{
  const RunConfig config = resolve(c);
  const fs::path out = prepare_out(c.out);
  const auto scenes = training_scenes(config);
  const auto validation = config.early_stopping ? validation_scenes(config) :
    std::vector<Scene>{};
  const std::size_t every = std::max<std::size_t>(1, config.iterations / 20);
  const auto result = train(
    config, scenes, validation, [&](std::size_t it, double loss) {
      if (it % every == 0) {
        std::cerr << "iter " << it << " loss " << loss << "\n";
      }
    });
  save_checkpoint(result.checkpoint, out / "checkpoint.bin");
  std::ofstream trace(out / "loss_trace.txt");
  trace.precision(17);
  for (std::size_t i = 0; i < result.loss_trace.size(); ++i) {
    trace << i << ' ' << result.loss_trace[i] << '\n';
  }
  if (!trace) {
    throw IoError("cannot write loss trace");
  }
  std::cout << "iterations " << result.iterations << "\n";
  std::cout << "initial_loss " << result.initial_loss << "\n";
  std::cout << "final_loss " << result.final_loss << "\n";
  if (result.early_stopped) {
    std::cout << "early_stopped\n";
  }
  return 0;
}

int run_infer(const Common & c, const std::string & checkpoint_path,
  const std::vector<std::string> & scene_paths)
{
  const Checkpoint checkpoint = load_checkpoint(checkpoint_path);
  const RunConfig config = checkpoint.config();
  const fs::path out = prepare_out(c.out);
  TrainNet net(config.model, config.seed);
  restore_checkpoint(checkpoint, net);
  std::vector<Scene> scenes;
  if (scene_paths.empty()) {
    scenes = training_scenes(config);
  } else {
    for (const auto & p : scene_paths) {
      scenes.push_back(load_scene(p));
    }
  }
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto seg = infer(net, config, scenes[i]);
    const fs::path path = out / indexed("segmentation", i, ".txt");
    save_segmentation(seg, path);
    std::cout << path.string() << " " << seg.instance_count << " instances\n";
  }
  return 0;
}

int run_eval(const Common & c, const std::string & checkpoint_path,
  const std::vector<std::string> & scene_paths, const std::vector<std::string> & result_paths)
{
  Evaluator evaluator;
  if (!checkpoint_path.empty()) {
    const Checkpoint checkpoint = load_checkpoint(checkpoint_path);
    const RunConfig config = checkpoint.config();
    TrainNet net(config.model, config.seed);
    restore_checkpoint(checkpoint, net);
    const auto scenes = scene_paths.empty() ? training_scenes(config) : [&] {
        std::vector<Scene> s;
        for (const auto & p : scene_paths) {
          s.push_back(load_scene(p));
        }
        return s;
      }();
    for (const auto & scene : scenes) {
      const auto seg = infer(net, config, scene);
      evaluator.add(seg.semantic, seg.instance, scene.semantic_labels, scene.instance_ids);
    }
  } else {
    if (scene_paths.empty() || scene_paths.size() != result_paths.size()) {
      throw ConfigError("eval needs matching --scene and --result lists, or --checkpoint");
    }
    for (std::size_t i = 0; i < scene_paths.size(); ++i) {
      const Scene scene = load_scene(scene_paths[i]);
      const auto seg = load_segmentation(result_paths[i]);
      if (seg.semantic.size() != scene.points.size()) {
        throw DimensionError(
                result_paths[i] + " labels " + std::to_string(seg.semantic.size()) +
                " points, scene has " + std::to_string(scene.points.size()));
      }
      evaluator.add(seg.semantic, seg.instance, scene.semantic_labels, scene.instance_ids);
    }
  }
  const auto report = evaluator.report();
  std::cout << report.table();
  const fs::path out = prepare_out(c.out);
  write_text(out / "metrics.txt", report.key_values());
  return 0;
}

int run_grad_check(const Common & c, std::size_t points, std::size_t entries)
{
  const RunConfig config = resolve(c);
  GradCheckSettings settings;
  settings.block_points = points;
  settings.entries_per_parameter = entries;
  const auto report = grad_check(config, settings);
  std::cout << report.summary();
  const bool ok = report.passed(settings.tolerance);
  std::cout << (ok ? "PASS" : "FAIL") << " (tolerance " << settings.tolerance << ")\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"joint semantic and instance segmentation of point clouds"};
  app.require_subcommand(1);

  Common common;
  bool text = false;
  std::string checkpoint;
  std::vector<std::string> scene_paths;
  std::vector<std::string> result_paths;
  std::size_t gc_points = 32;
  std::size_t gc_entries = 4;

  auto * gen = app.add_subcommand("gen-data", "write synthetic scenes");
  add_common(gen, common);
  gen->add_flag("--text", text, "also write a text copy of every scene");

  auto * tr = app.add_subcommand("train", "train and write checkpoint.bin and loss_trace.txt");
  add_common(tr, common);

  auto * inf = app.add_subcommand("infer", "segment scenes with a checkpoint");
  add_common(inf, common);
  inf->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  inf->add_option("--scene", scene_paths, "scene files (default: the run's training scenes)");

  auto * ev = app.add_subcommand("eval", "score segmentations against ground truth");
  add_common(ev, common);
  ev->add_option("--checkpoint", checkpoint, "infer with this checkpoint, then score");
  ev->add_option("--scene", scene_paths, "ground-truth scene files");
  ev->add_option("--result", result_paths, "segmentation files, paired with --scene");

  auto * gc = app.add_subcommand("grad-check", "finite-difference check of the full network");
  add_common(gc, common);
  gc->add_option("--points", gc_points, "block size");
  gc->add_option("--entries", gc_entries, "entries sampled per parameter tensor");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      return run_gen_data(common, text);
    }
    if (tr->parsed()) {
      return run_train(common);
    }
    if (inf->parsed()) {
      return run_infer(common, checkpoint, scene_paths);
    }
    if (ev->parsed()) {
      return run_eval(common, checkpoint, scene_paths, result_paths);
    }
    return run_grad_check(common, gc_points, gc_entries);
  } catch (const Error & e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.category());
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
