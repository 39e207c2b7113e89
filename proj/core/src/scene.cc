// Copyright 2026 The Segleak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "segleak/scene.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "absl/strings/str_cat.h"
#include "segleak/rng.h"

namespace segleak {
namespace {

constexpr int kMinExtent = 16;

// Uniform integer in [lo, hi], collapsing to lo when the range is empty.
int UniformInt(Rng& rng, int lo, int hi) {
  if (hi <= lo) return lo;
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

float Clamp01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

std::array<float, 3> HsvToRgb(float h, float s, float v) {
  const float c = v * s;
  const float hp = h * 6.0f;
  const float x = c * (1.0f - std::abs(std::fmod(hp, 2.0f) - 1.0f));
  std::array<float, 3> rgb{};
  switch (static_cast<int>(hp) % 6) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  for (float& ch : rgb) ch += v - c;
  return rgb;
}

}  // namespace

std::vector<ClassStyle> DefaultPalette(int num_classes) {
  // Objects vary far more per instance than the bands do; the motif gives
  // each object a texture a 3x3 receptive field can memorise.
  constexpr float kBandJitter = 0.03f;
  constexpr float kObjectJitter = 0.15f;
  constexpr float kMotif = 0.45f;
  std::vector<ClassStyle> palette = {
      {{0.35f, 0.35f, 0.35f}, kBandJitter, 0.0f},
      {{0.55f, 0.70f, 0.90f}, kBandJitter, 0.0f},
      {{0.70f, 0.30f, 0.30f}, kObjectJitter, kMotif},
      {{0.55f, 0.45f, 0.30f}, kObjectJitter, kMotif},
      {{0.40f, 0.50f, 0.35f}, kObjectJitter, kMotif},
  };
  for (int k = static_cast<int>(palette.size()); k < num_classes; ++k) {
    const float hue = std::fmod(0.618034f * static_cast<float>(k - 5), 1.0f);
    palette.push_back({HsvToRgb(hue, 0.5f, 0.7f), kObjectJitter, kMotif});
  }
  palette.resize(std::max(0, num_classes));
  return palette;
}

SceneConfig ShiftedSceneConfig(const SceneConfig& base) {
  SceneConfig shifted = base;
  if (shifted.palette.empty()) shifted.palette = DefaultPalette(base.num_classes);
  constexpr std::array<float, 3> kShift = {0.08f, -0.05f, 0.06f};
  for (ClassStyle& style : shifted.palette) {
    for (int ch = 0; ch < 3; ++ch) style.color[ch] = Clamp01(style.color[ch] + kShift[ch]);
  }
  shifted.texture_noise_sigma = 2.0f * base.texture_noise_sigma;
  return shifted;
}

absl::Status ValidateSceneConfig(const SceneConfig& config) {
  if (config.height < kMinExtent || config.width < kMinExtent) {
    return absl::InvalidArgumentError(
        absl::StrCat("scene dims ", config.height, "x", config.width,
                     " are degenerate; both must be at least ", kMinExtent, " px"));
  }
  if (config.num_classes < 3) {
    return absl::InvalidArgumentError(
        absl::StrCat("num_classes must be at least 3, got ", config.num_classes));
  }
  if (config.min_objects < 0 || config.max_objects < config.min_objects) {
    return absl::InvalidArgumentError(absl::StrCat(
        "objects_per_scene range [", config.min_objects, ", ", config.max_objects,
        "] is invalid"));
  }
  if (!(config.texture_noise_sigma >= 0.0f) || !std::isfinite(config.texture_noise_sigma)) {
    return absl::InvalidArgumentError("texture_noise_sigma must be finite and >= 0");
  }
  if (!config.palette.empty() &&
      static_cast<int>(config.palette.size()) != config.num_classes) {
    return absl::InvalidArgumentError(absl::StrCat(
        "palette has ", config.palette.size(), " entries for ", config.num_classes,
        " classes"));
  }
  for (const ClassStyle& style : config.palette) {
    for (float c : style.color) {
      if (!(c >= 0.0f && c <= 1.0f)) {
        return absl::InvalidArgumentError("palette colors must lie in [0, 1]");
      }
    }
    if (!(style.color_jitter >= 0.0f) || !(style.motif_amplitude >= 0.0f)) {
      return absl::InvalidArgumentError("palette jitter/motif must be >= 0");
    }
  }
  return absl::OkStatus();
}

bool SceneObject::Contains(int y, int x) const {
  const double dy = y - center_y;
  const double dx = x - center_x;
  const double ry = height / 2.0;
  const double rx = width / 2.0;
  if (shape == ObjectShape::kRectangle) {
    return std::abs(dy) <= ry && std::abs(dx) <= rx;
  }
  return (dy / ry) * (dy / ry) + (dx / rx) * (dx / rx) <= 1.0;
}

absl::StatusOr<LabeledImage> GenerateScene(const SceneConfig& config,
                                           uint64_t seed, SceneLayout* layout) {
  if (absl::Status s = ValidateSceneConfig(config); !s.ok()) return s;
  const int h = config.height;
  const int w = config.width;
  const std::vector<ClassStyle> palette =
      config.palette.empty() ? DefaultPalette(config.num_classes) : config.palette;
  Rng rng(MixSeed(seed));
  std::normal_distribution<float> unit(0.0f, 1.0f);

  LabeledImage scene;
  scene.height = h;
  scene.width = w;
  scene.image = Tensor({3, h, w});
  scene.labels.assign(static_cast<size_t>(h) * w, kGroundClass);
  SceneLayout geometry;

  // Bands.
  geometry.horizon = static_cast<int>(
      std::uniform_real_distribution<double>(0.3, 0.5)(rng) * h);
  std::array<std::array<float, 3>, 2> band{};
  for (int b = 0; b < 2; ++b) {
    const ClassStyle& style = palette[b == 0 ? kSkyClass : kGroundClass];
    for (int ch = 0; ch < 3; ++ch) band[b][ch] = style.color[ch] + style.color_jitter * unit(rng);
  }
  for (int y = 0; y < h; ++y) {
    const bool sky = y < geometry.horizon;
    for (int x = 0; x < w; ++x) {
      scene.labels[static_cast<size_t>(y) * w + x] = sky ? kSkyClass : kGroundClass;
      for (int ch = 0; ch < 3; ++ch) scene.image.at(ch, y, x) = band[sky ? 0 : 1][ch];
    }
  }

  // Objects, sized relative to the shorter side (8-24 px at 64x64) and
  // centred around the horizon so they straddle both bands.
  const int side = std::min(h, w);
  const int count = UniformInt(rng, config.min_objects, config.max_objects);
  for (int n = 0; n < count; ++n) {
    SceneObject obj;
    obj.class_id = UniformInt(rng, 2, config.num_classes - 1);
    obj.height = UniformInt(rng, side / 8, 3 * side / 8);
    obj.width = UniformInt(rng, side / 8, 3 * side / 8);
    obj.center_y = UniformInt(rng, geometry.horizon - obj.height / 2 - h / 16,
                              std::min(h - 2, geometry.horizon + 5 * h / 16) - 1);
    obj.center_x = UniformInt(rng, 0, w - 1);
    const ClassStyle& style = palette[obj.class_id];
    std::array<float, 3> color{};
    for (int ch = 0; ch < 3; ++ch) color[ch] = style.color[ch] + style.color_jitter * unit(rng);
    const int period = UniformInt(rng, 3, 4);
    std::vector<float> motif(static_cast<size_t>(period) * period * 3);
    for (float& m : motif) m = style.motif_amplitude * unit(rng);
    obj.shape = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.5
                    ? ObjectShape::kRectangle
                    : ObjectShape::kEllipse;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!obj.Contains(y, x)) continue;
        scene.labels[static_cast<size_t>(y) * w + x] = obj.class_id;
        const float* tile = &motif[((y % period) * period + (x % period)) * 3];
        for (int ch = 0; ch < 3; ++ch) scene.image.at(ch, y, x) = color[ch] + tile[ch];
      }
    }
    geometry.objects.push_back(obj);
  }

  // Pixel noise; the draw happens even at sigma 0 so the stream layout does
  // not depend on the noise level.
  for (float& v : scene.image.data()) {
    v = Clamp01(v + config.texture_noise_sigma * unit(rng));
  }
  if (layout != nullptr) *layout = std::move(geometry);
  return scene;
}

absl::StatusOr<std::vector<LabeledImage>> GenerateDataset(
    const SceneConfig& config, int count, uint64_t seed) {
  if (count < 1) {
    return absl::InvalidArgumentError(absl::StrCat("count must be >= 1, got ", count));
  }
  std::vector<LabeledImage> data;
  data.reserve(count);
  for (int i = 0; i < count; ++i) {
    absl::StatusOr<LabeledImage> scene = GenerateScene(config, seed + static_cast<uint64_t>(i));
    if (!scene.ok()) return scene.status();
    data.push_back(*std::move(scene));
  }
  return data;
}

absl::StatusOr<Tensor> OneHot(const std::vector<int>& labels, int height,
                              int width, int num_classes) {
  if (static_cast<int64_t>(labels.size()) != static_cast<int64_t>(height) * width) {
    return absl::InvalidArgumentError(absl::StrCat(
        "label map has ", labels.size(), " entries for ", height, "x", width));
  }
  Tensor t({num_classes, height, width});
  const int64_t plane = static_cast<int64_t>(height) * width;
  for (int64_t i = 0; i < plane; ++i) {
    const int k = labels[i];
    if (k < 0 || k >= num_classes) {
      return absl::InvalidArgumentError(
          absl::StrCat("label ", k, " at pixel ", i, " is outside [0, ", num_classes, ")"));
    }
    t[k * plane + i] = 1.0f;
  }
  return t;
}

double ClassShare(const std::vector<LabeledImage>& data, int class_id) {
  int64_t hits = 0;
  int64_t total = 0;
  for (const LabeledImage& scene : data) {
    hits += std::count(scene.labels.begin(), scene.labels.end(), class_id);
    total += static_cast<int64_t>(scene.labels.size());
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

absl::StatusOr<DatasetSplit> SplitDataset(int count, const SplitSizes& sizes,
                                          uint64_t seed) {
  if (sizes.victim_in < 0 || sizes.victim_out < 0 || sizes.shadow_in < 0 ||
      sizes.shadow_out < 0) {
    return absl::InvalidArgumentError("split sizes must be nonnegative");
  }
  if (static_cast<int64_t>(sizes.victim_in) + sizes.victim_out + sizes.shadow_in +
          sizes.shadow_out > count) {
    return absl::InvalidArgumentError(absl::StrCat(
        "split sizes ", sizes.victim_in, "/", sizes.victim_out, "/", sizes.shadow_in,
        "/", sizes.shadow_out, " exceed the pool of ", count));
  }
  std::vector<int> order(count);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(MixSeed(seed));
  std::shuffle(order.begin(), order.end(), rng);
  DatasetSplit split;
  auto take = [&, next = order.begin()](int n) mutable {
    std::vector<int> part(next, next + n);
    next += n;
    return part;
  };
  split.victim_in = take(sizes.victim_in);
  split.victim_out = take(sizes.victim_out);
  split.shadow_in = take(sizes.shadow_in);
  split.shadow_out = take(sizes.shadow_out);
  return split;
}

}  // namespace segleak
