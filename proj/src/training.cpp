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

#include "jointseg/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "jointseg/error.hpp"
#include "jointseg/loss.hpp"

namespace jointseg
{
namespace
{

constexpr char kCheckpointMagic[4] = {'J', 'S', 'C', 'K'};
constexpr const char * kSegmentationHeader = "# jointseg segmentation v1";

std::string slurp(const std::filesystem::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spill(const std::filesystem::path & path, const std::string & data)
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

std::vector<Block> split_all(
  std::span<const Scene> scenes, const BlockConfig & config, std::mt19937_64 & rng)
{
  std::vector<Block> blocks;
  for (const auto & scene : scenes) {
    auto part = split_into_blocks(scene, config, rng);
    std::move(part.begin(), part.end(), std::back_inserter(blocks));
  }
  return blocks;
}

template<typename T>
Tensor<T> block_loss(const JointSegNet<T> & net, const Block & block, const LossConfig & loss)
{
  const auto out = net.forward(block_tensor<T>(block));
  return total_loss(
    out.logits(), block.semantic_labels, out.embeddings(),
    InstanceGrouping::from_ids(block.instance_ids), loss);
}

}  // namespace

// ---------------------------------------------------------------------------
// Optimizer

template<typename T>
AdamOptimizer<T>::AdamOptimizer(ParameterStore<T> & store, const OptimizerSettings & settings)
: store_(store), settings_(settings)
{
  for (const auto & p : store_.all()) {
    m_.emplace_back(p.tensor.numel(), T(0));
    v_.emplace_back(p.tensor.numel(), T(0));
  }
}

template<typename T>
void AdamOptimizer<T>::step(double learning_rate)
{
  ++steps_;
  const double b1 = settings_.beta1, b2 = settings_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const T step_size = static_cast<T>(learning_rate * std::sqrt(correction2) / correction1);
  const T eps = static_cast<T>(settings_.epsilon * std::sqrt(correction2));
  auto & params = store_.all();
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto & tensor = params[p].tensor;
    if (!tensor.has_grad()) {
      continue;
    }
    auto values = tensor.mutable_values();
    auto grad = tensor.grad();
    auto & m = m_[p];
    auto & v = v_[p];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T g = grad[i];
      m[i] = static_cast<T>(b1) * m[i] + static_cast<T>(1.0 - b1) * g;
      v[i] = static_cast<T>(b2) * v[i] + static_cast<T>(1.0 - b2) * g * g;
      values[i] -= step_size * m[i] / (std::sqrt(v[i]) + eps);
    }
  }
}

template class AdamOptimizer<float>;
template class AdamOptimizer<double>;

double learning_rate_at(const OptimizerSettings & settings, std::size_t iteration)
{
  const auto drops = static_cast<double>(iteration / settings.decay_every);
  return settings.learning_rate * std::pow(settings.decay_rate, drops);
}

// ---------------------------------------------------------------------------
// Checkpoints

RunConfig Checkpoint::config() const
{
  RunConfig c;
  try {
    c = parse_config(config_text);
  } catch (const Error & e) {
    throw CheckpointError(std::string("stored config is unreadable: ") + e.what());
  }
  if (c.digest() != config_digest) {
    throw CheckpointError("stored config does not match its digest");
  }
  return c;
}

Checkpoint make_checkpoint(
  const TrainNet & net, const AdamOptimizer<float> * optimizer, const RunConfig & config,
  std::uint64_t iteration)
{
  Checkpoint ck;
  ck.config_text = config.to_text();
  ck.config_digest = config.digest();
  ck.iteration = iteration;
  ck.optimizer_steps = optimizer ? optimizer->steps() : 0;
  const auto & params = net.parameters().all();
  for (std::size_t p = 0; p < params.size(); ++p) {
    ParameterRecord rec;
    rec.name = params[p].name;
    rec.shape = params[p].tensor.shape();
    rec.values.assign(params[p].tensor.values().begin(), params[p].tensor.values().end());
    if (optimizer) {
      rec.first_moment = optimizer->first_moments()[p];
      rec.second_moment = optimizer->second_moments()[p];
    }
    ck.parameters.push_back(std::move(rec));
  }
  return ck;
}

void restore_checkpoint(
  const Checkpoint & checkpoint, TrainNet & net, AdamOptimizer<float> * optimizer)
{
  auto & params = net.parameters().all();
  if (params.size() != checkpoint.parameters.size()) {
    throw CheckpointError(
            "checkpoint holds " + std::to_string(checkpoint.parameters.size()) +
            " parameters, model has " + std::to_string(params.size()));
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto & rec = checkpoint.parameters[p];
    if (rec.name != params[p].name || rec.shape != params[p].tensor.shape()) {
      throw CheckpointError(
              "parameter " + std::to_string(p) + " is " + rec.name + shape_string(rec.shape) +
              " in the checkpoint but " + params[p].name +
              shape_string(params[p].tensor.shape()) + " in the model");
    }
    std::copy(rec.values.begin(), rec.values.end(), params[p].tensor.mutable_values().begin());
    if (optimizer) {
      if (rec.first_moment.size() != rec.values.size() ||
        rec.second_moment.size() != rec.values.size())
      {
        throw CheckpointError("checkpoint carries no optimizer state for " + rec.name);
      }
      optimizer->first_moments()[p] = rec.first_moment;
      optimizer->second_moments()[p] = rec.second_moment;
    }
  }
  if (optimizer) {
    optimizer->set_steps(checkpoint.optimizer_steps);
  }
}

void save_checkpoint(const Checkpoint & ck, const std::filesystem::path & path)
{
  using binary::put;
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(out, ck.version);
  put<std::uint64_t>(out, ck.config_digest);
  binary::put_string(out, ck.config_text);
  put<std::uint64_t>(out, ck.iteration);
  put<std::uint64_t>(out, ck.optimizer_steps);
  put<std::uint64_t>(out, ck.parameters.size());
  for (const auto & rec : ck.parameters) {
    binary::put_string(out, rec.name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(rec.shape.size()));
    for (auto d : rec.shape) {
      put<std::uint64_t>(out, d);
    }
    const bool has_moments = !rec.first_moment.empty();
    put<std::uint8_t>(out, has_moments ? 1 : 0);
    for (float v : rec.values) {
      put(out, v);
    }
    if (has_moments) {
      for (float v : rec.first_moment) {
        put(out, v);
      }
      for (float v : rec.second_moment) {
        put(out, v);
      }
    }
  }
  spill(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path & path)
{
  const std::string data = slurp(path);
  binary::Reader r(data);
  try {
    for (char c : kCheckpointMagic) {
      if (r.get<char>("magic") != c) {
        throw CheckpointError("not a checkpoint file: " + path.string());
      }
    }
    Checkpoint ck;
    ck.version = r.get<std::uint32_t>("version");
    if (ck.version != Checkpoint::kVersion) {
      throw CheckpointError(
              "unsupported checkpoint version " + std::to_string(ck.version) + " in " +
              path.string());
    }
    ck.config_digest = r.get<std::uint64_t>("config digest");
    ck.config_text = r.get_string("config");
    ck.iteration = r.get<std::uint64_t>("iteration");
    ck.optimizer_steps = r.get<std::uint64_t>("optimizer steps");
    const auto count = r.get<std::uint64_t>("parameter count");
    for (std::uint64_t p = 0; p < count; ++p) {
      ParameterRecord rec;
      rec.name = r.get_string("parameter name");
      const auto rank = r.get<std::uint32_t>("rank");
      for (std::uint32_t d = 0; d < rank; ++d) {
        rec.shape.push_back(r.get<std::uint64_t>("extent"));
      }
      const bool has_moments = r.get<std::uint8_t>("moment flag") != 0;
      const std::size_t n = shape_numel(rec.shape);
      if (r.remaining() / sizeof(float) < n * (has_moments ? 3 : 1)) {
        throw ParseError("truncated parameter " + rec.name, r.offset());
      }
      rec.values.resize(n);
      for (auto & v : rec.values) {
        v = r.get<float>("values");
      }
      if (has_moments) {
        rec.first_moment.resize(n);
        rec.second_moment.resize(n);
        for (auto & v : rec.first_moment) {
          v = r.get<float>("first moment");
        }
        for (auto & v : rec.second_moment) {
          v = r.get<float>("second moment");
        }
      }
      ck.parameters.push_back(std::move(rec));
    }
    if (r.remaining() != 0) {
      throw ParseError("trailing bytes", r.offset());
    }
    return ck;
  } catch (const ParseError & e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Data

std::vector<Scene> training_scenes(const RunConfig & config)
{
  std::vector<Scene> scenes;
  if (!config.data_dir.empty()) {
    std::vector<std::filesystem::path> files;
    for (const auto & entry : std::filesystem::directory_iterator(config.data_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".scn") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto & f : files) {
      scenes.push_back(load_scene(f));
    }
    if (scenes.empty()) {
      throw ConfigError("no .scn files in " + config.data_dir);
    }
    return scenes;
  }
  for (std::size_t i = 0; i < config.scenes; ++i) {
    SyntheticSceneSpec spec = config.scene;
    spec.seed = scene_seed(config, i);
    scenes.push_back(generate_scene(spec));
  }
  return scenes;
}

std::vector<Scene> validation_scenes(const RunConfig & config)
{
  std::vector<Scene> scenes;
  for (std::size_t i = 0; i < config.validation_scenes; ++i) {
    SyntheticSceneSpec spec = config.scene;
    spec.seed = scene_seed(config, i, true);
    scenes.push_back(generate_scene(spec));
  }
  return scenes;
}

// ---------------------------------------------------------------------------
// Training

double dataset_loss(const TrainNet & net, std::span<const Block> blocks, const LossConfig & loss)
{
  if (blocks.empty()) {
    throw ContractError("dataset loss over zero blocks");
  }
  NoGradGuard no_grad;
  double total = 0.0;
  for (const auto & block : blocks) {
    total += static_cast<double>(block_loss(net, block, loss).item());
  }
  return total / static_cast<double>(blocks.size());
}

TrainResult train(
  const RunConfig & config, std::span<const Scene> scenes, std::span<const Scene> validation,
  const ProgressCallback & progress)
{
  config.validate();
  if (scenes.empty()) {
    throw ConfigError("training needs at least one scene");
  }
  TrainNet net(config.model, config.seed);
  AdamOptimizer<float> optimizer(net.parameters(), config.optimizer);
  std::mt19937_64 rng(config.seed ^ 0x7f4a7c159e3779b9ull);

  std::vector<Block> blocks = split_all(scenes, config.blocks, rng);
  if (blocks.empty()) {
    throw ConfigError("scenes produced no blocks; check block.size and block.min_points");
  }
  const std::vector<Block> reference = blocks;
  std::vector<Block> validation_blocks;
  if (config.early_stopping) {
    std::mt19937_64 vrng(config.seed ^ 0x3c6ef372fe94f82bull);
    validation_blocks = split_all(validation, config.blocks, vrng);
    if (validation_blocks.empty()) {
      throw ConfigError("early stopping needs validation blocks");
    }
  }

  TrainResult result;
  result.initial_loss = dataset_loss(net, reference, config.loss);

  const std::size_t batch = config.batch_size;
  std::size_t iteration = 0;
  std::size_t epoch = 0;
  double best_validation = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  while (iteration < config.iterations && (config.epochs == 0 || epoch < config.epochs)) {
    if (epoch > 0 && config.random_sample) {
      blocks = split_all(scenes, config.blocks, rng);
    }
    std::vector<std::size_t> order(blocks.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size() && iteration < config.iterations;
      start += batch)
    {
      const std::size_t end = std::min(start + batch, order.size());
      const float weight = 1.0f / static_cast<float>(end - start);
      net.parameters().zero_grad();
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        Tensor<float> loss = block_loss(net, blocks[order[b]], config.loss);
        batch_loss += static_cast<double>(loss.item());
        scale(loss, weight).backward();
      }
      batch_loss /= static_cast<double>(end - start);
      optimizer.step(learning_rate_at(config.optimizer, iteration));
      result.loss_trace.push_back(batch_loss);
      if (progress) {
        progress(iteration, batch_loss);
      }
      ++iteration;
    }
    ++epoch;
    if (config.early_stopping) {
      const double v = dataset_loss(net, validation_blocks, config.loss);
      result.validation_trace.push_back(v);
      if (v < best_validation) {
        best_validation = v;
        stale = 0;
      } else if (++stale >= config.patience) {
        result.early_stopped = true;
        break;
      }
    }
  }
  result.iterations = iteration;
  result.final_loss = dataset_loss(net, reference, config.loss);
  result.checkpoint = make_checkpoint(net, &optimizer, config, iteration);
  return result;
}

// ---------------------------------------------------------------------------
// Inference

SegmentationResult infer(const TrainNet & net, const RunConfig & config, const Scene & scene)
{
  std::mt19937_64 rng(config.seed ^ 0x2545f4914f6cdd1dull);
  const auto blocks = split_into_blocks(scene, config.blocks, rng);
  std::vector<BlockPrediction> predictions;
  predictions.reserve(blocks.size());
  NoGradGuard no_grad;
  for (const auto & block : blocks) {
    const auto out = net.forward(block_tensor<float>(block));
    BlockPrediction p = predict_block(out.logits(), out.embeddings(), config.mean_shift);
    p.point_indices = block.point_indices;
    predictions.push_back(std::move(p));
  }
  return block_merging(predictions, scene, config.merge);
}

SegmentationResult infer(const Checkpoint & checkpoint, const Scene & scene)
{
  const RunConfig config = checkpoint.config();
  TrainNet net(config.model, config.seed);
  restore_checkpoint(checkpoint, net);
  return infer(net, config, scene);
}

void save_segmentation(const SegmentationResult & result, const std::filesystem::path & path)
{
  std::ostringstream os;
  os << kSegmentationHeader << "\n";
  os << "points " << result.semantic.size() << "\n";
  os << "instances " << result.instance_count << "\n";
  os << "uncovered " << result.uncovered_points << "\n";
  os << "# semantic instance\n";
  for (std::size_t i = 0; i < result.semantic.size(); ++i) {
    os << result.semantic[i] << ' ' << result.instance[i] << '\n';
  }
  spill(path, os.str());
}

SegmentationResult load_segmentation(const std::filesystem::path & path)
{
  const std::string data = slurp(path);
  if (data.rfind(kSegmentationHeader, 0) != 0) {
    throw ParseError("missing segmentation header in " + path.string(), 0);
  }
  std::istringstream in(data.substr(std::string(kSegmentationHeader).size()));
  auto fail = [&](const std::string & what) {
      const auto pos = in.tellg();
      throw ParseError(
              what + " in " + path.string(),
              std::string(kSegmentationHeader).size() +
              (pos < 0 ? data.size() : static_cast<std::size_t>(pos)));
    };
  std::string word;
  std::size_t points = 0;
  SegmentationResult result;
  if (!(in >> word >> points) || word != "points") {
    fail("expected 'points <count>'");
  }
  if (!(in >> word >> result.instance_count) || word != "instances") {
    fail("expected 'instances <count>'");
  }
  if (!(in >> word >> result.uncovered_points) || word != "uncovered") {
    fail("expected 'uncovered <count>'");
  }
  in >> std::ws;
  if (in.peek() == '#') {
    std::getline(in, word);
  }
  result.semantic.resize(points);
  result.instance.resize(points);
  for (std::size_t i = 0; i < points; ++i) {
    if (!(in >> result.semantic[i] >> result.instance[i])) {
      fail("truncated label rows");
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Gradient check

std::string GradCheckReport::summary() const
{
  std::ostringstream os;
  os << "grad-check: " << entries.size() << " entries over " << parameters_checked <<
    " parameter tensors, loss " << loss << "\n";
  os << "max relative error " << max_relative_error << " (" << worst_parameter << ")\n";
  os << "kink straddles redrawn: " << kinks_skipped << "\n";
  os << "elapsed " << seconds << " s\n";
  return os.str();
}

GradCheckReport grad_check(const RunConfig & base, const GradCheckSettings & settings)
{
  const auto started = std::chrono::steady_clock::now();
  RunConfig config = base;
  config.model_scale = "tiny";
  config.blocks.points_per_block = settings.block_points;
  config.blocks.min_points = 1;
  config = parse_config(config.to_text());

  // Pick the window with the most instances so both loss terms are active.
  SyntheticSceneSpec spec = config.scene;
  spec.seed = scene_seed(config, 0);
  const Scene scene = generate_scene(spec);
  std::mt19937_64 rng(config.seed);
  const auto blocks = split_into_blocks(scene, config.blocks, rng);
  if (blocks.empty()) {
    throw ContractError("grad-check scene produced no blocks");
  }
  const Block * block = &blocks.front();
  std::size_t most = 0;
  for (const auto & b : blocks) {
    const std::size_t distinct =
      std::set<int>(b.instance_ids.begin(), b.instance_ids.end()).size();
    if (distinct > most) {
      most = distinct;
      block = &b;
    }
  }

  JointSegNet<double> net(config.model, config.seed);
  auto evaluate = [&](std::uint64_t * signature) {
      KinkSignature kinks;
      const double v = block_loss(net, *block, config.loss).item();
      if (signature) {
        *signature = kinks.value();
      }
      return v;
    };

  GradCheckReport report;
  net.parameters().zero_grad();
  {
    Tensor<double> loss = block_loss(net, *block, config.loss);
    report.loss = loss.item();
    loss.backward();
  }
  std::uint64_t base_signature = 0;
  evaluate(&base_signature);

  std::mt19937_64 pick(config.seed ^ 0xa5a5a5a5ull);
  const double h = settings.step;
  for (auto & param : net.parameters().all()) {
    ++report.parameters_checked;
    auto values = param.tensor.mutable_values();
    std::vector<double> analytic(param.tensor.grad().begin(), param.tensor.grad().end());
    if (analytic.empty()) {
      analytic.assign(values.size(), 0.0);
    }
    std::uniform_int_distribution<std::size_t> entry(0, values.size() - 1);
    const std::size_t wanted = std::min(settings.entries_per_parameter, values.size());
    std::size_t done = 0;
    for (std::size_t attempt = 0; done < wanted && attempt < 8 * wanted; ++attempt) {
      const std::size_t i = entry(pick);
      const double original = values[i];
      std::uint64_t sig_plus = 0, sig_minus = 0;
      values[i] = original + h;
      const double plus = evaluate(&sig_plus);
      values[i] = original - h;
      const double minus = evaluate(&sig_minus);
      values[i] = original;
      if (sig_plus != base_signature || sig_minus != base_signature) {
        ++report.kinks_skipped;
        continue;
      }
      GradCheckEntry e;
      e.parameter = param.name;
      e.index = i;
      e.analytic = analytic[i];
      e.numeric = (plus - minus) / (2.0 * h);
      const double scale_ref = std::max(
        {std::abs(e.analytic), std::abs(e.numeric), settings.magnitude_floor});
      e.relative_error = std::abs(e.analytic - e.numeric) / scale_ref;
      if (report.entries.empty() || e.relative_error > report.max_relative_error) {
        report.max_relative_error = e.relative_error;
        report.worst_parameter = param.name + "[" + std::to_string(i) + "]";
      }
      report.entries.push_back(e);
      ++done;
    }
  }
  report.seconds = std::chrono::duration<double>(
    std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace jointseg
