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

#ifndef SEGLEAK_LOSS_H_
#define SEGLEAK_LOSS_H_

#include <functional>

#include "absl/status/statusor.h"
#include "segleak/tensor.h"

namespace segleak {

// Probabilities are clamped to this floor before every logarithm.
inline constexpr float kLogEpsilon = 1e-7f;

struct LossResult {
  float loss = 0.0f;
  Tensor gradient;  // d loss / d prediction
};

// Mean over locations of -log(max(p_true, eps)). `prediction` and `target`
// are {C, H, W} (or {C}); `target` must be one-hot at every location.
absl::StatusOr<LossResult> CrossEntropyLoss(const Tensor& prediction,
                                            const Tensor& target);

// Mean binary cross-entropy of probabilities against {0, 1} targets.
absl::StatusOr<LossResult> BinaryCrossEntropyLoss(const Tensor& prediction,
                                                  const Tensor& target);

using LossFunction = std::function<absl::StatusOr<LossResult>(
    const Tensor& prediction, const Tensor& target)>;

}  // namespace segleak

#endif  // SEGLEAK_LOSS_H_
