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


// Attacker input representations built from a posterior map P and its one-hot
// ground truth Y (both {C, H, W}), and patch crops of them.

#ifndef SEGLEAK_REPRESENTATION_H_
#define SEGLEAK_REPRESENTATION_H_

#include <string>
#include <string_view>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "segleak/tensor.h"

namespace segleak {

enum class RepresentationKind {
  kConcat,  // P and Y stacked over channels: 2C channels
  kSlm,     // structured loss map, normalised to [0, 1]: 1 channel
};

std::string RepresentationName(RepresentationKind kind);
absl::StatusOr<RepresentationKind> ParseRepresentation(std::string_view name);
int RepresentationChannels(RepresentationKind kind, int num_classes);

struct PatchRect {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;

  friend bool operator==(const PatchRect&, const PatchRect&) = default;
};

// OK when the rect is non-empty and lies inside a height x width image.
absl::Status CheckRect(const PatchRect& rect, int height, int width);

// {2C, H, W}: channels [0, C) are P, [C, 2C) are Y.
absl::StatusOr<Tensor> ConcatRepresentation(const Tensor& p, const Tensor& y);

// {1, H, W}: -sum_c Y log(max(P, eps)), i.e. -log(max(P_true, eps)).
absl::StatusOr<Tensor> StructuredLossMap(const Tensor& p, const Tensor& y);

// -log(eps): the largest value a structured loss map can take.
double MaxStructuredLoss();

// The attacker's input for `kind`; the loss map is divided by
// MaxStructuredLoss() so both representations live in [0, 1].
absl::StatusOr<Tensor> BuildRepresentation(RepresentationKind kind,
                                           const Tensor& p, const Tensor& y);

// Copy of the rect's sub-array of a {C, H, W} tensor.
absl::StatusOr<Tensor> Crop(const Tensor& t, const PatchRect& rect);

// Mean over the rect of P at the true class.
absl::StatusOr<double> MeanTrueConfidence(const Tensor& p, const Tensor& y,
                                          const PatchRect& rect);

}  // namespace segleak

#endif  // SEGLEAK_REPRESENTATION_H_
