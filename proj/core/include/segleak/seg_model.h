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


// Tiny fully-convolutional segmenters used as victim and shadow models:
// training with SGD or DP-SGD, posterior inference, mIoU, and confidence
// ranking of query images.

#ifndef SEGLEAK_SEG_MODEL_H_
#define SEGLEAK_SEG_MODEL_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "segleak/network.h"
#include "segleak/scene.h"
#include "segleak/tensor.h"

namespace segleak {

// Same-padded 3x3 convolutions with rectifiers, stride 1 throughout, a
// dropout layer before the classifier convolution, channel softmax on top.
struct SegArchitecture {
  std::vector<int> hidden_widths = {16, 32, 32};
  float dropout_ratio = 0.1f;

  friend bool operator==(const SegArchitecture&, const SegArchitecture&) = default;
};

// The independent-setting shadow: narrower than the victim.
SegArchitecture IndependentShadowArchitecture();

absl::StatusOr<NetworkSpec> SegmenterSpec(const SegArchitecture& arch,
                                          int height, int width,
                                          int num_classes);

enum class OptimizerKind { kSgd, kDpsgd };

std::string OptimizerName(OptimizerKind kind);
absl::StatusOr<OptimizerKind> ParseOptimizer(std::string_view name);

struct TrainConfig {
  int epochs = 80;
  int batch_size = 1;
  float learning_rate = 0.03f;
  float momentum = 0.9f;
  // Train-time ratio of the dropout layer.
  float dropout_ratio = 0.1f;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  // DP-SGD only.
  double noise_variance = 0.0;
  double clip_quantile = 0.9;
  uint64_t seed = 0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

absl::Status ValidateTrainConfig(const TrainConfig& config);

struct SegModel {
  Network net;
  TrainConfig train_config;
  int num_classes = 0;
  // Mean training loss of every epoch, in order.
  std::vector<double> loss_history;
  // Per-layer clip factors used by DP-SGD; empty for SGD.
  std::vector<float> clip_factors;
  // DP-SGD only: the largest ratio of a clipped per-example group gradient
  // norm to its clip factor over all steps; <= 1 when clipping held.
  double max_clip_ratio = 0.0;

  bool trained_with_dpsgd() const {
    return train_config.optimizer == OptimizerKind::kDpsgd;
  }
};

// The untrained network TrainSegmenter starts from.
absl::StatusOr<Network> InitialSegmenter(const SegArchitecture& arch, int height,
                                         int width, int num_classes,
                                         uint64_t seed);

// Network input for an image: values re-centred around zero.
Tensor PrepareInput(const Tensor& image);

// Trains on `data` with the mean per-pixel cross entropy. `epochs` = 0
// returns the initialization. A non-finite loss aborts with an error that
// names the step.
absl::StatusOr<SegModel> TrainSegmenter(const std::vector<LabeledImage>& data,
                                        int num_classes,
                                        const SegArchitecture& arch,
                                        const TrainConfig& config);

// {C, H, W} per-location class distribution. With `stochastic_dropout_ratio`
// the dropout layers run at that ratio in a single stochastic pass seeded by
// `seed`.
absl::StatusOr<Tensor> PredictPosterior(
    const SegModel& model, const Tensor& image,
    std::optional<float> stochastic_dropout_ratio = std::nullopt,
    uint64_t seed = 0);

// Per-location argmax, lowest class on ties.
std::vector<int> ArgmaxLabels(const Tensor& posterior);

// Per-class pixel counts behind mIoU; additive over disjoint images.
struct IouCounts {
  explicit IouCounts(int num_classes)
      : intersection(num_classes, 0), union_size(num_classes, 0) {}

  std::vector<int64_t> intersection;
  std::vector<int64_t> union_size;

  // Mean IoU over classes with a nonempty union; 1 when there are none.
  double Miou() const;
};

// Adds the counts of one label-map pair; sizes and ids are checked.
absl::Status AccumulateIou(const std::vector<int>& predicted,
                           const std::vector<int>& ground_truth, IouCounts* counts);

// Mean IoU over classes present in either map.
absl::StatusOr<double> Miou(const std::vector<int>& predicted,
                            const std::vector<int>& ground_truth,
                            int num_classes);

// mIoU of the deterministic predictions with intersections and unions pooled
// over the whole dataset, the usual benchmark convention.
absl::StatusOr<double> DatasetMiou(const SegModel& model,
                                   const std::vector<LabeledImage>& data);

// Mean over locations of the largest class probability.
double MeanMaxConfidence(const Tensor& posterior);

// Indices of `data` by descending MeanMaxConfidence of the model's
// posterior; ties keep the original order.
absl::StatusOr<std::vector<int>> RankByConfidence(
    const SegModel& model, const std::vector<LabeledImage>& data);

// Checkpoint plus sidecars: train_config.txt (key = value) and
// loss_history.csv.
absl::Status SaveSegModel(const std::filesystem::path& dir, const SegModel& model);
absl::StatusOr<SegModel> LoadSegModel(const std::filesystem::path& dir);

}  // namespace segleak

#endif  // SEGLEAK_SEG_MODEL_H_
