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

#ifndef SEGLEAK_OPTIMIZER_H_
#define SEGLEAK_OPTIMIZER_H_

#include <cstdint>
#include <span>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "segleak/loss.h"
#include "segleak/network.h"
#include "segleak/tensor.h"

namespace segleak {

// Heavy-ball state: v <- momentum * v + g; p <- p - lr * v.
struct MomentumBuffer {
  std::vector<Tensor> velocity;
};

absl::Status SgdStep(std::vector<Tensor>& params, const GradientSet& grads,
                     float learning_rate, float momentum,
                     MomentumBuffer& buffer);

// Coordinate-wise mean, summed in example order.
absl::StatusOr<GradientSet> MeanGradient(std::span<const GradientSet> grads);

// L2 norm of each parameter group (weights and bias of one layer).
std::vector<double> GroupNorms(const GradientSet& grads,
                               std::span<const int> group_of_tensor,
                               int num_groups);

// Rescales each example's group gradient whose norm exceeds that group's clip
// factor down to exactly the clip factor. Gradients already within bounds are
// returned untouched (bitwise).
absl::StatusOr<std::vector<GradientSet>> ClipPerExample(
    std::span<const GradientSet> per_example,
    std::span<const int> group_of_tensor, std::span<const float> clip_factors);

struct DpsgdOptions {
  std::vector<float> clip_factors;  // one per parameter group, > 0
  double noise_variance = 0.0;      // >= 0
  float learning_rate = 0.01f;
  float momentum = 0.0f;
  uint64_t seed = 0;
};

// Clip per example, average, add N(0, noise_variance * clip^2) / batch noise
// per coordinate (clip = the coordinate's group factor), then SgdStep.
absl::Status DpsgdStep(std::vector<Tensor>& params,
                       std::span<const int> group_of_tensor,
                       std::span<const GradientSet> per_example,
                       const DpsgdOptions& options, MomentumBuffer& buffer);

struct Example {
  Tensor input;
  Tensor target;
};

struct ExampleGradient {
  float loss = 0.0f;
  GradientSet grads;
};

absl::StatusOr<ExampleGradient> ComputeExampleGradient(
    const Network& net, const Tensor& input, const Tensor& target,
    const LossFunction& loss, const ForwardOptions& options = {});

// Per group, the `quantile` (nearest-rank, in (0, 1]) of per-example gradient
// norms over one deterministic pass of `dataset` at the current parameters.
absl::StatusOr<std::vector<float>> EstimateClipFactors(
    const Network& net, std::span<const Example> dataset,
    const LossFunction& loss, double quantile);

// Nearest-rank quantile of `values` (sorted copy), q in (0, 1].
double NearestRankQuantile(std::vector<double> values, double q);

}  // namespace segleak

#endif  // SEGLEAK_OPTIMIZER_H_
