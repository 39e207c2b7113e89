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

// Procedural street-like scenes: a sky band over a ground band, with
// textured rectangles and ellipses of the remaining classes composited
// back-to-front on top.

#ifndef SEGLEAK_SCENE_H_
#define SEGLEAK_SCENE_H_

#include <array>
#include <cstdint>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "segleak/tensor.h"

namespace segleak {

inline constexpr int kGroundClass = 0;
inline constexpr int kSkyClass = 1;

// Texture descriptor of one class. Every object instance draws its own color
// as `color` + N(0, color_jitter^2) per channel, plus a small periodic motif of
// N(0, motif_amplitude^2) entries tiled over the object.
struct ClassStyle {
  std::array<float, 3> color = {0.5f, 0.5f, 0.5f};
  float color_jitter = 0.0f;
  float motif_amplitude = 0.0f;

  friend bool operator==(const ClassStyle&, const ClassStyle&) = default;
};

struct SceneConfig {
  int height = 64;
  int width = 64;
  int num_classes = 5;
  int min_objects = 2;
  int max_objects = 6;
  // Per-pixel, per-channel Gaussian noise added last.
  float texture_noise_sigma = 0.02f;
  // One entry per class; empty means DefaultPalette(num_classes).
  std::vector<ClassStyle> palette;

  friend bool operator==(const SceneConfig&, const SceneConfig&) = default;
};

// Ground, sky and three object colors; further classes are spread around a
// color wheel.
std::vector<ClassStyle> DefaultPalette(int num_classes);

// The configuration of an unrelated data source, for a shadow model that
// shares nothing with the victim: colors shifted and noisier pixels.
SceneConfig ShiftedSceneConfig(const SceneConfig& base);

absl::Status ValidateSceneConfig(const SceneConfig& config);

enum class ObjectShape { kRectangle, kEllipse };

struct SceneObject {
  int class_id = 0;
  ObjectShape shape = ObjectShape::kRectangle;
  int center_y = 0;
  int center_x = 0;
  int height = 0;
  int width = 0;

  // True when pixel (y, x) lies inside the object.
  bool Contains(int y, int x) const;
};

// Geometry of a scene, free of any texture.
struct SceneLayout {
  int horizon = 0;  // rows [0, horizon) are sky
  std::vector<SceneObject> objects;  // back to front
};

struct LabeledImage {
  Tensor image;             // {3, H, W}, values in [0, 1]
  std::vector<int> labels;  // H * W class ids, row-major
  int height = 0;
  int width = 0;

  int label(int y, int x) const { return labels[static_cast<size_t>(y) * width + x]; }
};

absl::StatusOr<LabeledImage> GenerateScene(const SceneConfig& config,
                                           uint64_t seed,
                                           SceneLayout* layout = nullptr);

// Scene i uses seed + i.
absl::StatusOr<std::vector<LabeledImage>> GenerateDataset(
    const SceneConfig& config, int count, uint64_t seed);

// {C, H, W} one-hot expansion of a label map.
absl::StatusOr<Tensor> OneHot(const std::vector<int>& labels, int height,
                              int width, int num_classes);

// Fraction of pixels carrying `class_id` across the dataset.
double ClassShare(const std::vector<LabeledImage>& data, int class_id);

struct DatasetSplit {
  std::vector<int> victim_in;
  std::vector<int> victim_out;
  std::vector<int> shadow_in;
  std::vector<int> shadow_out;

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

struct SplitSizes {
  int victim_in = 96;
  int victim_out = 64;
  int shadow_in = 96;
  int shadow_out = 64;

  int total() const { return victim_in + victim_out + shadow_in + shadow_out; }
  friend bool operator==(const SplitSizes&, const SplitSizes&) = default;
};

// Uniformly random disjoint assignment of indices [0, count).
absl::StatusOr<DatasetSplit> SplitDataset(int count, const SplitSizes& sizes,
                                          uint64_t seed);

}  // namespace segleak

#endif  // SEGLEAK_SCENE_H_
