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

#include "jointseg/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <type_traits>

#include "jointseg/error.hpp"

namespace jointseg
{
namespace
{

// Calls f(key, field) for every serialized field, in canonical order.
template<typename F>
void visit_fields(RunConfig & c, F && f)
{
  f("seed", c.seed);
  f("data.dir", c.data_dir);
  f("data.scenes", c.scenes);
  f("data.validation_scenes", c.validation_scenes);
  f("scene.room_x", c.scene.room_extent[0]);
  f("scene.room_y", c.scene.room_extent[1]);
  f("scene.room_z", c.scene.room_extent[2]);
  f("scene.classes", c.scene.num_classes);
  f("scene.min_instances", c.scene.min_instances);
  f("scene.max_instances", c.scene.max_instances);
  f("scene.min_points", c.scene.min_points_per_instance);
  f("scene.max_points", c.scene.max_points_per_instance);
  f("scene.noise", c.scene.noise_stddev);
  f("block.size", c.blocks.block_size);
  f("block.stride", c.blocks.stride);
  f("block.points", c.blocks.points_per_block);
  f("block.min_points", c.blocks.min_points);
  f("block.center_xy", c.blocks.center_xy);
  f("model.scale", c.model_scale);
  f("model.embedding_dim", c.model.embedding_dim);
  f("loss.pull_margin", c.loss.pull_margin);
  f("loss.push_margin", c.loss.push_margin);
  f("meanshift.bandwidth", c.mean_shift.bandwidth);
  f("meanshift.max_iterations", c.mean_shift.max_iterations);
  f("meanshift.tolerance", c.mean_shift.tolerance);
  f("meanshift.merge_radius", c.mean_shift.merge_radius);
  f("merge.voxel_fraction", c.merge.voxel_fraction);
  f("merge.overlap_threshold", c.merge.overlap_threshold);
  f("train.learning_rate", c.optimizer.learning_rate);
  f("train.momentum", c.optimizer.beta1);
  f("train.beta2", c.optimizer.beta2);
  f("train.epsilon", c.optimizer.epsilon);
  f("train.decay_rate", c.optimizer.decay_rate);
  f("train.decay_every", c.optimizer.decay_every);
  f("train.batch_size", c.batch_size);
  f("train.iterations", c.iterations);
  f("train.epochs", c.epochs);
  f("train.early_stopping", c.early_stopping);
  f("train.patience", c.patience);
  f("train.random_sample", c.random_sample);
  f("ablation.pcff", c.model.pcff);
  f("ablation.instance_fusion", c.model.jiss.instance_fusion);
  f("ablation.semantic_fusion", c.model.jiss.semantic_fusion);
  f("ablation.density_reweight", c.model.layers.density_reweight);
  f("jiss.gate_axis", c.model.jiss.gate_axis);
  f("jiss.context_axis", c.model.jiss.context_axis);
}

std::string format_double(double v)
{
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct Printer
{
  std::ostringstream & os;

  template<typename V>
  void operator()(const char * key, const V & value) const
  {
    os << key << " = ";
    if constexpr (std::is_same_v<V, bool>) {
      os << (value ? "true" : "false");
    } else if constexpr (std::is_same_v<V, double>) {
      os << format_double(value);
    } else if constexpr (std::is_same_v<V, std::optional<double>>) {
      os << (value ? format_double(*value) : "auto");
    } else {
      os << value;
    }
    os << "\n";
  }
};

template<typename V>
bool parse_number(const std::string & text, V & out)
{
  const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc() && res.ptr == text.data() + text.size();
}

struct Assigner
{
  const std::string & key;
  const std::string & value;
  std::size_t line;
  bool & matched;

  template<typename V>
  void operator()(const char * name, V & field) const
  {
    if (key != name) {
      return;
    }
    matched = true;
    bool ok = true;
    if constexpr (std::is_same_v<V, bool>) {
      ok = value == "true" || value == "false";
      field = value == "true";
    } else if constexpr (std::is_same_v<V, std::string>) {
      field = value;
    } else if constexpr (std::is_same_v<V, std::optional<double>>) {
      if (value == "auto") {
        field.reset();
      } else {
        double v = 0.0;
        ok = parse_number(value, v);
        field = v;
      }
    } else {
      ok = parse_number(value, field);
    }
    if (!ok) {
      throw ConfigError(
              "line " + std::to_string(line) + ": bad value '" + value + "' for " + key);
    }
  }
};

std::string trim(const std::string & s)
{
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) {
    return {};
  }
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

// Rebuilds the layer spec after the scale or block size changed.
void apply_scale(RunConfig & c)
{
  const bool density = c.model.layers.density_reweight;
  if (c.model_scale == "desk") {
    c.model.layers = LayerSpec::desk_scale();
  } else if (c.model_scale == "full") {
    c.model.layers = LayerSpec::full_scale();
  } else if (c.model_scale == "tiny") {
    c.model.layers = LayerSpec::tiny(c.blocks.points_per_block);
  } else {
    throw ConfigError("model.scale must be desk, full or tiny, got '" + c.model_scale + "'");
  }
  c.model.layers.density_reweight = density;
  c.model.num_classes = static_cast<std::size_t>(std::max(c.scene.num_classes, 0));
}

}  // namespace

RunConfig RunConfig::defaults()
{
  RunConfig c;
  c.blocks.points_per_block = 512;
  apply_scale(c);
  return c;
}

void RunConfig::validate() const
{
  if (!(optimizer.learning_rate >= 0.0) || !std::isfinite(optimizer.learning_rate)) {
    throw ConfigError("learning rate must be finite and non-negative");
  }
  if (batch_size < 1) {
    throw ConfigError("batch size must be at least 1");
  }
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) ||
    !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0) || !(optimizer.epsilon > 0.0))
  {
    throw ConfigError("optimizer moments need beta in [0, 1) and positive epsilon");
  }
  if (!(optimizer.decay_rate > 0.0) || optimizer.decay_every == 0) {
    throw ConfigError("learning-rate decay needs a positive rate and interval");
  }
  if (data_dir.empty() && scenes == 0) {
    throw ConfigError("no training data: set data.dir or data.scenes > 0");
  }
  if (early_stopping && (patience == 0 || (data_dir.empty() && validation_scenes == 0))) {
    throw ConfigError("early stopping needs patience >= 1 and validation scenes");
  }
  if (model.embedding_dim == 0) {
    throw ConfigError("embedding dimension must be positive");
  }
  if (model.jiss.gate_axis > 1 || model.jiss.context_axis > 1) {
    throw ConfigError("JISS axes must be 0 or 1");
  }
  if (blocks.points_per_block != model.layers.input_points) {
    throw ConfigError(
            "block.points (" + std::to_string(blocks.points_per_block) +
            ") must match the model input size (" + std::to_string(model.layers.input_points) +
            ")");
  }
  try {
    scene.validate();
    model.layers.validate();
    loss.validate();
    mean_shift.validate();
  } catch (const ConfigError &) {
    throw;
  } catch (const Error & e) {
    throw ConfigError(e.what());
  }
  if (!(merge.voxel_fraction > 0.0) || !(merge.overlap_threshold > 0.0)) {
    throw ConfigError("merge voxel fraction and overlap threshold must be positive");
  }
}

std::string RunConfig::to_text() const
{
  std::ostringstream os;
  visit_fields(const_cast<RunConfig &>(*this), Printer{os});
  return os.str();
}

std::uint64_t RunConfig::digest() const
{
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : to_text()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

RunConfig parse_config(const std::string & text)
{
  RunConfig c = RunConfig::defaults();
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) {
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line) + ": expected key = value");
    }
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    bool matched = false;
    visit_fields(c, Assigner{key, value, line, matched});
    if (!matched) {
      throw ConfigError("line " + std::to_string(line) + ": unknown key '" + key + "'");
    }
  }
  apply_scale(c);
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open config " + path.string());
  }
  return parse_config(
    std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()));
}

std::uint64_t scene_seed(const RunConfig & config, std::size_t index, bool validation)
{
  std::uint64_t x = config.seed * 0x9e3779b97f4a7c15ull + index + (validation ? 1000003u : 0u);
  // splitmix64 finalizer
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace jointseg
