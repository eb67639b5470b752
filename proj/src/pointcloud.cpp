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

#include "jointseg/pointcloud.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "binary_io.hpp"
#include "jointseg/error.hpp"

namespace jointseg
{
namespace
{

constexpr char kMagic[4] = {'J', 'S', 'C', 'N'};
constexpr std::uint32_t kVersion = 1;
constexpr const char * kTextHeader = "# jointseg scene v1";

struct Box
{
  double x0, y0, x1, y1, height;
};

Point3 class_color(int cls)
{
  switch (cls) {
    case 0: return {0.55, 0.45, 0.35};
    case 1: return {0.85, 0.85, 0.80};
    case 2: return {0.20, 0.40, 0.80};
    case 3: return {0.80, 0.30, 0.20};
    default: {
        const double h = std::fmod(0.37 * cls, 1.0);
        return {h, 1.0 - h, std::fmod(0.61 * cls, 1.0)};
      }
  }
}

double clamp01(double v) {return std::clamp(v, 0.0, 1.0);}

std::string read_file(const std::filesystem::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path & path, const std::string & data)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

void validate_loaded(const Scene & scene, std::size_t offset)
{
  try {
    scene.validate();
  } catch (const ContractError & e) {
    throw ParseError(e.what(), offset);
  }
}

Scene parse_binary(const std::string & data)
{
  binary::Reader r(data);
  for (char c : kMagic) {
    if (r.get<char>("magic") != c) {
      throw ParseError("bad magic bytes", r.offset() - 1);
    }
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion) {
    throw ParseError("unsupported version " + std::to_string(version), r.offset() - 4);
  }
  const auto count = r.get<std::uint64_t>("point count");
  if (count == 0) {
    throw ParseError("empty scene", r.offset() - 8);
  }
  Scene scene;
  for (auto & e : scene.room_extent) {
    e = r.get<double>("room extent");
  }
  const std::size_t per_point = 6 * sizeof(double) + 2 * sizeof(std::int32_t);
  if (r.remaining() / per_point < count) {
    throw ParseError(
            "truncated file: " + std::to_string(count) + " points declared but only " +
            std::to_string(r.remaining()) + " bytes of columns follow",
            r.offset());
  }
  scene.points.resize(count);
  scene.colors.resize(count);
  scene.semantic_labels.resize(count);
  scene.instance_ids.resize(count);
  for (auto & p : scene.points) {
    for (auto & v : p) {
      v = r.get<double>("points");
    }
  }
  for (auto & c : scene.colors) {
    for (auto & v : c) {
      v = r.get<double>("colors");
    }
  }
  for (auto & s : scene.semantic_labels) {
    s = r.get<std::int32_t>("semantic labels");
  }
  for (auto & s : scene.instance_ids) {
    s = r.get<std::int32_t>("instance ids");
  }
  if (r.remaining() != 0) {
    throw ParseError("trailing bytes after scene", r.offset());
  }
  validate_loaded(scene, r.offset());
  return scene;
}

// Whitespace tokenizer that remembers byte offsets for error reporting.
class TextReader
{
public:
  explicit TextReader(const std::string & data)
  : data_(data) {}

  bool at_end()
  {
    skip();
    return pos_ >= data_.size();
  }

  std::string_view token(const char * what)
  {
    skip();
    if (pos_ >= data_.size()) {
      throw ParseError(std::string("unexpected end of file, expected ") + what, pos_);
    }
    const std::size_t start = pos_;
    while (pos_ < data_.size() && !std::isspace(static_cast<unsigned char>(data_[pos_]))) {
      ++pos_;
    }
    last_ = start;
    return std::string_view(data_).substr(start, pos_ - start);
  }

  void expect(std::string_view word)
  {
    if (token(std::string(word).c_str()) != word) {
      throw ParseError("expected '" + std::string(word) + "'", last_);
    }
  }

  template<typename U>
  U number(const char * what)
  {
    const auto tok = token(what);
    U value{};
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      throw ParseError(std::string("malformed ") + what, last_);
    }
    return value;
  }

  std::size_t offset() const {return pos_;}

private:
  void skip()
  {
    while (pos_ < data_.size()) {
      if (std::isspace(static_cast<unsigned char>(data_[pos_]))) {
        ++pos_;
      } else if (data_[pos_] == '#') {
        while (pos_ < data_.size() && data_[pos_] != '\n') {
          ++pos_;
        }
      } else {
        break;
      }
    }
  }

  const std::string & data_;
  std::size_t pos_ = 0;
  std::size_t last_ = 0;
};

Scene parse_text(const std::string & data)
{
  TextReader r(data);
  Scene scene;
  r.expect("room_extent");
  for (auto & e : scene.room_extent) {
    e = r.number<double>("room extent");
  }
  r.expect("points");
  const auto count = r.number<std::uint64_t>("point count");
  if (count == 0) {
    throw ParseError("empty scene", r.offset());
  }
  scene.points.resize(count);
  scene.colors.resize(count);
  scene.semantic_labels.resize(count);
  scene.instance_ids.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (auto & v : scene.points[i]) {
      v = r.number<double>("coordinate");
    }
    for (auto & v : scene.colors[i]) {
      v = r.number<double>("color");
    }
    scene.semantic_labels[i] = r.number<int>("semantic label");
    scene.instance_ids[i] = r.number<int>("instance id");
  }
  if (!r.at_end()) {
    throw ParseError("trailing data after scene", r.offset());
  }
  validate_loaded(scene, r.offset());
  return scene;
}

void append_number(std::string & out, double v)
{
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

}  // namespace

void Scene::validate() const
{
  const std::size_t n = points.size();
  if (colors.size() != n || semantic_labels.size() != n || instance_ids.size() != n) {
    throw ContractError("scene arrays differ in length");
  }
  for (double e : room_extent) {
    if (!(e > 0.0)) {
      throw ContractError("room extent must be positive");
    }
  }
  std::map<int, int> class_of;
  for (std::size_t i = 0; i < n; ++i) {
    if (semantic_labels[i] < 0 || instance_ids[i] < 0) {
      throw ContractError("negative label at point " + std::to_string(i));
    }
    auto [it, inserted] = class_of.emplace(instance_ids[i], semantic_labels[i]);
    if (!inserted && it->second != semantic_labels[i]) {
      throw ContractError(
              "instance " + std::to_string(instance_ids[i]) + " spans classes " +
              std::to_string(it->second) + " and " + std::to_string(semantic_labels[i]));
    }
  }
}

void SyntheticSceneSpec::validate() const
{
  if (num_classes < 2) {
    throw ContractError("synthetic scene needs at least 2 classes");
  }
  if (min_instances < 1 || max_instances < min_instances) {
    throw ContractError("synthetic scene needs 1 <= min_instances <= max_instances");
  }
  if (min_points_per_instance < 1 || max_points_per_instance < min_points_per_instance) {
    throw ContractError("invalid points-per-instance range");
  }
  if (noise_stddev < 0.0) {
    throw ContractError("noise stddev must be non-negative");
  }
  for (double e : room_extent) {
    if (!(e > 0.0)) {
      throw ContractError("room extent must be positive");
    }
  }
}

Scene generate_scene(const SyntheticSceneSpec & spec)
{
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) {return lo + (hi - lo) * unit(rng);};
  auto uniform_int = [&](int lo, int hi) {
      return std::uniform_int_distribution<int>(lo, hi)(rng);
    };

  const auto [ex, ey, ez] = spec.room_extent;
  const int instances = uniform_int(spec.min_instances, spec.max_instances);

  // Boxes first so the floor can skip their footprints.
  constexpr double kMargin = 0.1;
  constexpr int kMaxRetries = 500;
  std::vector<Box> boxes;
  for (int b = 0; b + 2 < instances; ++b) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxRetries && !placed; ++attempt) {
      const double sx = uniform(0.25, 0.5);
      const double sy = uniform(0.25, 0.5);
      const double h = std::min(uniform(0.2, 0.6), ez);
      if (ex - sx - 2 * kMargin <= 0.0 || ey - sy - kMargin <= 0.0) {
        break;
      }
      const double x0 = uniform(kMargin, ex - sx - kMargin);
      const double y0 = uniform(0.0, ey - sy - kMargin);
      Box cand{x0, y0, x0 + sx, y0 + sy, h};
      placed = std::none_of(
        boxes.begin(), boxes.end(), [&](const Box & o) {
          return cand.x0 < o.x1 + kMargin && o.x0 < cand.x1 + kMargin &&
          cand.y0 < o.y1 + kMargin && o.y0 < cand.y1 + kMargin;
        });
      if (placed) {
        boxes.push_back(cand);
      }
    }
    if (!placed) {
      throw GenerationError(
              "could not place box " + std::to_string(b) + " after " +
              std::to_string(kMaxRetries) + " attempts");
    }
  }

  Scene scene;
  scene.room_extent = spec.room_extent;
  std::normal_distribution<double> noise(0.0, 1.0);
  auto emit = [&](Point3 p, int cls, int id, const Point3 & base) {
      for (int a = 0; a < 3; ++a) {
        if (spec.noise_stddev > 0.0) {
          p[a] += spec.noise_stddev * noise(rng);
        }
        p[a] = std::clamp(p[a], 0.0, spec.room_extent[a]);
      }
      Point3 c;
      for (int a = 0; a < 3; ++a) {
        c[a] = clamp01(base[a] + 0.02 * noise(rng));
      }
      scene.points.push_back(p);
      scene.colors.push_back(c);
      scene.semantic_labels.push_back(cls);
      scene.instance_ids.push_back(id);
    };
  auto instance_color = [&](int cls) {
      Point3 c = class_color(cls);
      for (auto & v : c) {
        v = clamp01(v + uniform(-0.08, 0.08));
      }
      return c;
    };

  for (int id = 0; id < instances; ++id) {
    const int count = uniform_int(spec.min_points_per_instance, spec.max_points_per_instance);
    if (id == 0) {
      const Point3 base = instance_color(0);
      int made = 0;
      for (int tries = 0; made < count && tries < 100 * count; ++tries) {
        const double x = uniform(0.0, ex), y = uniform(0.0, ey);
        const bool covered = std::any_of(
          boxes.begin(), boxes.end(), [&](const Box & b) {
            return x >= b.x0 && x <= b.x1 && y >= b.y0 && y <= b.y1;
          });
        if (!covered) {
          emit({x, y, 0.0}, 0, id, base);
          ++made;
        }
      }
    } else if (id == 1) {
      const Point3 base = instance_color(1);
      for (int i = 0; i < count; ++i) {
        emit({0.0, uniform(0.0, ey), uniform(0.0, ez)}, 1, id, base);
      }
    } else {
      const Box & b = boxes[static_cast<std::size_t>(id - 2)];
      const int cls = spec.num_classes > 2 ? 2 + (id - 2) % (spec.num_classes - 2) : 1;
      const Point3 base = instance_color(cls);
      const double sx = b.x1 - b.x0, sy = b.y1 - b.y0, h = b.height;
      const double areas[3] = {sx * sy, 2 * sy * h, 2 * sx * h};
      std::discrete_distribution<int> face(std::begin(areas), std::end(areas));
      for (int i = 0; i < count; ++i) {
        const int f = face(rng);
        const bool low = unit(rng) < 0.5;
        if (f == 0) {
          emit({uniform(b.x0, b.x1), uniform(b.y0, b.y1), h}, cls, id, base);
        } else if (f == 1) {
          emit({low ? b.x0 : b.x1, uniform(b.y0, b.y1), uniform(0.0, h)}, cls, id, base);
        } else {
          emit({uniform(b.x0, b.x1), low ? b.y0 : b.y1, uniform(0.0, h)}, cls, id, base);
        }
      }
    }
  }
  scene.validate();
  return scene;
}

std::vector<Block> split_into_blocks(
  const Scene & scene, const BlockConfig & config, std::mt19937_64 & rng)
{
  if (scene.empty()) {
    throw ContractError("cannot split an empty scene");
  }
  if (!(config.block_size > 0.0) || !(config.stride > 0.0) || config.points_per_block == 0) {
    throw ContractError("block size, stride and points per block must be positive");
  }
  double lo[2] = {scene.points[0][0], scene.points[0][1]};
  double hi[2] = {lo[0], lo[1]};
  for (const auto & p : scene.points) {
    for (int a = 0; a < 2; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  std::size_t steps[2];
  for (int a = 0; a < 2; ++a) {
    const double span = hi[a] - lo[a] - config.block_size;
    steps[a] = span <= 0.0 ? 1 : static_cast<std::size_t>(std::ceil(span / config.stride)) + 1;
  }

  std::vector<Block> blocks;
  std::set<std::vector<std::size_t>> seen;
  const std::size_t target = config.points_per_block;
  for (std::size_t ix = 0; ix < steps[0]; ++ix) {
    for (std::size_t iy = 0; iy < steps[1]; ++iy) {
      const double x0 = lo[0] + static_cast<double>(ix) * config.stride;
      const double y0 = lo[1] + static_cast<double>(iy) * config.stride;
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < scene.size(); ++i) {
        const auto & p = scene.points[i];
        if (p[0] >= x0 && p[0] <= x0 + config.block_size && p[1] >= y0 &&
          p[1] <= y0 + config.block_size)
        {
          members.push_back(i);
        }
      }
      if (members.size() < config.min_points || members.empty()) {
        continue;
      }
      if (!seen.insert(members).second) {
        continue;
      }
      std::vector<std::size_t> chosen;
      if (members.size() == target) {
        chosen = members;
      } else if (members.size() > target) {
        chosen = members;
        std::shuffle(chosen.begin(), chosen.end(), rng);
        chosen.resize(target);
      } else {
        chosen = members;
        std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
        while (chosen.size() < target) {
          chosen.push_back(members[pick(rng)]);
        }
      }

      Block block;
      block.origin = {x0, y0};
      block.point_indices = chosen;
      block.features.reserve(target * kFeatureWidth);
      const double cx = config.center_xy ? x0 + 0.5 * config.block_size : 0.0;
      const double cy = config.center_xy ? y0 + 0.5 * config.block_size : 0.0;
      for (std::size_t i : chosen) {
        const auto & p = scene.points[i];
        const auto & c = scene.colors[i];
        block.features.insert(
          block.features.end(),
          {p[0] - cx, p[1] - cy, p[2], c[0], c[1], c[2],
            clamp01(p[0] / scene.room_extent[0]), clamp01(p[1] / scene.room_extent[1]),
            clamp01(p[2] / scene.room_extent[2])});
        block.semantic_labels.push_back(scene.semantic_labels[i]);
        block.instance_ids.push_back(scene.instance_ids[i]);
      }
      blocks.push_back(std::move(block));
    }
  }
  return blocks;
}

void save_scene(const Scene & scene, const std::filesystem::path & path)
{
  scene.validate();
  std::string out(kMagic, sizeof(kMagic));
  binary::put<std::uint32_t>(out, kVersion);
  binary::put<std::uint64_t>(out, scene.size());
  for (double e : scene.room_extent) {
    binary::put(out, e);
  }
  for (const auto & p : scene.points) {
    for (double v : p) {
      binary::put(out, v);
    }
  }
  for (const auto & c : scene.colors) {
    for (double v : c) {
      binary::put(out, v);
    }
  }
  for (int s : scene.semantic_labels) {
    binary::put<std::int32_t>(out, s);
  }
  for (int s : scene.instance_ids) {
    binary::put<std::int32_t>(out, s);
  }
  write_file(path, out);
}

void save_scene_text(const Scene & scene, const std::filesystem::path & path)
{
  scene.validate();
  std::string out = std::string(kTextHeader) + "\nroom_extent";
  for (double e : scene.room_extent) {
    out += ' ';
    append_number(out, e);
  }
  out += "\npoints " + std::to_string(scene.size()) + "\n# x y z r g b semantic instance\n";
  for (std::size_t i = 0; i < scene.size(); ++i) {
    for (double v : scene.points[i]) {
      append_number(out, v);
      out += ' ';
    }
    for (double v : scene.colors[i]) {
      append_number(out, v);
      out += ' ';
    }
    out += std::to_string(scene.semantic_labels[i]) + ' ' +
      std::to_string(scene.instance_ids[i]) + '\n';
  }
  write_file(path, out);
}

Scene load_scene(const std::filesystem::path & path)
{
  const std::string data = read_file(path);
  if (data.empty()) {
    throw ParseError("empty scene file " + path.string(), 0);
  }
  if (data.compare(0, sizeof(kMagic), kMagic, sizeof(kMagic)) == 0) {
    return parse_binary(data);
  }
  if (data.rfind(kTextHeader, 0) == 0) {
    return parse_text(data);
  }
  throw ParseError("unrecognized scene format in " + path.string(), 0);
}

}  // namespace jointseg
