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

#include "segleak/optimizer.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <utility>

#include "absl/strings/str_cat.h"
#include "segleak/rng.h"

namespace segleak {
namespace {

absl::Status CheckAligned(const std::vector<Tensor>& params,
                          const GradientSet& grads) {
  if (params.size() != grads.tensors.size()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "gradient set has ", grads.tensors.size(), " tensors, parameters have ",
        params.size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads.tensors[i].shape()) {
      return absl::InvalidArgumentError(absl::StrCat(
          "gradient ", i, " has shape ", ShapeToString(grads.tensors[i].shape()),
          ", parameter has ", ShapeToString(params[i].shape())));
    }
  }
  return absl::OkStatus();
}

}  // namespace

absl::Status SgdStep(std::vector<Tensor>& params, const GradientSet& grads,
                     float learning_rate, float momentum,
                     MomentumBuffer& buffer) {
  if (absl::Status s = CheckAligned(params, grads); !s.ok()) return s;
  if (buffer.velocity.empty()) {
    for (const Tensor& p : params) buffer.velocity.emplace_back(p.shape(), 0.0f);
  }
  if (buffer.velocity.size() != params.size()) {
    return absl::InvalidArgumentError("momentum buffer does not match parameters");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    float* p = params[i].raw();
    float* v = buffer.velocity[i].raw();
    const float* g = grads.tensors[i].raw();
    for (int64_t j = 0; j < params[i].size(); ++j) {
      v[j] = momentum * v[j] + g[j];
      p[j] -= learning_rate * v[j];
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<GradientSet> MeanGradient(std::span<const GradientSet> grads) {
  if (grads.empty()) return absl::InvalidArgumentError("no gradients to average");
  GradientSet mean = grads[0];
  for (size_t e = 1; e < grads.size(); ++e) {
    if (grads[e].tensors.size() != mean.tensors.size()) {
      return absl::InvalidArgumentError("gradient sets differ in tensor count");
    }
    for (size_t t = 0; t < mean.tensors.size(); ++t) {
      if (grads[e].tensors[t].shape() != mean.tensors[t].shape()) {
        return absl::InvalidArgumentError("gradient sets differ in shape");
      }
      float* dst = mean.tensors[t].raw();
      const float* src = grads[e].tensors[t].raw();
      for (int64_t j = 0; j < mean.tensors[t].size(); ++j) dst[j] += src[j];
    }
  }
  if (grads.size() > 1) {
    const float inv = 1.0f / static_cast<float>(grads.size());
    for (Tensor& t : mean.tensors) {
      for (float& v : t.data()) v *= inv;
    }
  }
  return mean;
}

std::vector<double> GroupNorms(const GradientSet& grads,
                               std::span<const int> group_of_tensor,
                               int num_groups) {
  std::vector<double> sq(num_groups, 0.0);
  for (size_t t = 0; t < grads.tensors.size(); ++t) {
    sq[group_of_tensor[t]] += grads.tensors[t].SquaredNorm();
  }
  for (double& v : sq) v = std::sqrt(v);
  return sq;
}

absl::StatusOr<std::vector<GradientSet>> ClipPerExample(
    std::span<const GradientSet> per_example,
    std::span<const int> group_of_tensor, std::span<const float> clip_factors) {
  const int groups = static_cast<int>(clip_factors.size());
  for (float c : clip_factors) {
    if (!(c > 0.0f) || !std::isfinite(c)) {
      return absl::InvalidArgumentError(
          absl::StrCat("clip factors must be positive, got ", c));
    }
  }
  for (int g : group_of_tensor) {
    if (g < 0 || g >= groups) {
      return absl::InvalidArgumentError(absl::StrCat(
          "need one clip factor per layer; got ", groups, " for group ", g));
    }
  }
  std::vector<GradientSet> clipped(per_example.begin(), per_example.end());
  for (GradientSet& grads : clipped) {
    if (grads.tensors.size() != group_of_tensor.size()) {
      return absl::InvalidArgumentError("gradient set does not match layout");
    }
    const std::vector<double> norms = GroupNorms(grads, group_of_tensor, groups);
    for (size_t t = 0; t < grads.tensors.size(); ++t) {
      const int g = group_of_tensor[t];
      if (norms[g] <= clip_factors[g]) continue;
      const float scale = static_cast<float>(clip_factors[g] / norms[g]);
      for (float& v : grads.tensors[t].data()) v *= scale;
    }
  }
  return clipped;
}

absl::Status DpsgdStep(std::vector<Tensor>& params,
                       std::span<const int> group_of_tensor,
                       std::span<const GradientSet> per_example,
                       const DpsgdOptions& options, MomentumBuffer& buffer) {
  if (per_example.empty()) {
    return absl::InvalidArgumentError("dpsgd needs at least one example gradient");
  }
  if (!(options.noise_variance >= 0.0) || !std::isfinite(options.noise_variance)) {
    return absl::InvalidArgumentError(absl::StrCat(
        "noise variance must be non-negative, got ", options.noise_variance));
  }
  absl::StatusOr<std::vector<GradientSet>> clipped =
      ClipPerExample(per_example, group_of_tensor, options.clip_factors);
  if (!clipped.ok()) return clipped.status();
  absl::StatusOr<GradientSet> mean = MeanGradient(*clipped);
  if (!mean.ok()) return mean.status();
  if (options.noise_variance > 0.0) {
    Rng rng(options.seed);
    const double batch = static_cast<double>(per_example.size());
    for (size_t t = 0; t < mean->tensors.size(); ++t) {
      const double clip = options.clip_factors[group_of_tensor[t]];
      std::normal_distribution<double> normal(
          0.0, std::sqrt(options.noise_variance) * clip);
      for (float& v : mean->tensors[t].data()) {
        v += static_cast<float>(normal(rng) / batch);
      }
    }
  }
  return SgdStep(params, *mean, options.learning_rate, options.momentum, buffer);
}

absl::StatusOr<ExampleGradient> ComputeExampleGradient(
    const Network& net, const Tensor& input, const Tensor& target,
    const LossFunction& loss, const ForwardOptions& options) {
  absl::StatusOr<Activations> act = net.Forward(input, options);
  if (!act.ok()) return act.status();
  absl::StatusOr<LossResult> l = loss(act->output(), target);
  if (!l.ok()) return l.status();
  absl::StatusOr<GradientSet> grads = net.Backward(*act, l->gradient);
  if (!grads.ok()) return grads.status();
  return ExampleGradient{l->loss, *std::move(grads)};
}

double NearestRankQuantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  size_t rank = static_cast<size_t>(std::ceil(q * n));
  rank = std::clamp<size_t>(rank, 1, values.size());
  return values[rank - 1];
}

absl::StatusOr<std::vector<float>> EstimateClipFactors(
    const Network& net, std::span<const Example> dataset,
    const LossFunction& loss, double quantile) {
  if (dataset.empty()) {
    return absl::InvalidArgumentError("cannot estimate clip factors on an empty dataset");
  }
  if (!(quantile > 0.0 && quantile <= 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("clip quantile must lie in (0,1], got ", quantile));
  }
  const int groups = net.num_param_groups();
  std::vector<std::vector<double>> norms(groups);
  for (const Example& ex : dataset) {
    absl::StatusOr<ExampleGradient> g =
        ComputeExampleGradient(net, ex.input, ex.target, loss);
    if (!g.ok()) return g.status();
    const std::vector<double> n = GroupNorms(g->grads, net.group_of_tensor(), groups);
    for (int k = 0; k < groups; ++k) norms[k].push_back(n[k]);
  }
  std::vector<float> factors(groups);
  for (int k = 0; k < groups; ++k) {
    // Rounded up so that the observed norm itself never exceeds its factor.
    const double q = NearestRankQuantile(norms[k], quantile);
    float f = static_cast<float>(q);
    if (static_cast<double>(f) < q) f = std::nextafter(f, std::numeric_limits<float>::max());
    factors[k] = std::max(f, 1e-12f);
  }
  return factors;
}

}  // namespace segleak
