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

#include "segleak/loss.h"

#include <cmath>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"

namespace segleak {

absl::StatusOr<LossResult> CrossEntropyLoss(const Tensor& prediction,
                                            const Tensor& target) {
  if (prediction.shape() != target.shape() ||
      (prediction.rank() != 1 && prediction.rank() != 3)) {
    return absl::InvalidArgumentError(absl::StrCat(
        "cross-entropy needs matching {C} or {C,H,W} tensors; got ",
        ShapeToString(prediction.shape()), " and ",
        ShapeToString(target.shape())));
  }
  const int channels = prediction.dim(0);
  const int64_t locations = prediction.size() / channels;
  LossResult result{0.0f, Tensor(prediction.shape())};
  const float inv_locations = 1.0f / static_cast<float>(locations);
  double total = 0.0;
  for (int64_t j = 0; j < locations; ++j) {
    int hot = -1;
    for (int c = 0; c < channels; ++c) {
      const float t = target[c * locations + j];
      if (t == 1.0f && hot < 0) {
        hot = c;
      } else if (t != 0.0f) {
        hot = -2;
        break;
      }
    }
    if (hot < 0) {
      return absl::InvalidArgumentError(
          absl::StrCat("target is not one-hot at location ", j));
    }
    const float p = prediction[hot * locations + j];
    if (p > kLogEpsilon) {
      total -= std::log(static_cast<double>(p));
      result.gradient[hot * locations + j] = -inv_locations / p;
    } else {
      total -= std::log(static_cast<double>(kLogEpsilon));
    }
  }
  result.loss = static_cast<float>(total / static_cast<double>(locations));
  return result;
}

absl::StatusOr<LossResult> BinaryCrossEntropyLoss(const Tensor& prediction,
                                                  const Tensor& target) {
  if (prediction.shape() != target.shape() || prediction.empty()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "binary cross-entropy needs matching shapes; got ",
        ShapeToString(prediction.shape()), " and ",
        ShapeToString(target.shape())));
  }
  const float inv_n = 1.0f / static_cast<float>(prediction.size());
  LossResult result{0.0f, Tensor(prediction.shape())};
  double total = 0.0;
  for (int64_t j = 0; j < prediction.size(); ++j) {
    const float y = target[j];
    if (y != 0.0f && y != 1.0f) {
      return absl::InvalidArgumentError(
          absl::StrCat("binary target must be 0 or 1, got ", y));
    }
    const float p = prediction[j];
    if (y == 1.0f) {
      if (p > kLogEpsilon) {
        total -= std::log(static_cast<double>(p));
        result.gradient[j] = -inv_n / p;
      } else {
        total -= std::log(static_cast<double>(kLogEpsilon));
      }
    } else {
      const float q = 1.0f - p;
      if (q > kLogEpsilon) {
        total -= std::log(static_cast<double>(q));
        result.gradient[j] = inv_n / q;
      } else {
        total -= std::log(static_cast<double>(kLogEpsilon));
      }
    }
  }
  result.loss = static_cast<float>(total / static_cast<double>(prediction.size()));
  return result;
}

}  // namespace segleak
