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


// Output-side defenses on victim posteriors (Argmax, Gauss) and dispatch for
// the model-side ones (test-time dropout, DP-SGD training).

#ifndef SEGLEAK_DEFENSE_H_
#define SEGLEAK_DEFENSE_H_

#include <cstdint>
#include <string>
#include <string_view>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "segleak/seg_model.h"
#include "segleak/tensor.h"

namespace segleak {

enum class DefenseKind { kNone, kArgmax, kGauss, kDropout, kDpsgd };

struct DefenseConfig {
  DefenseKind kind = DefenseKind::kNone;
  // gauss: noise variance; dropout: test-time ratio; dpsgd: noise variance.
  double param = 0.0;
  // dpsgd only.
  double clip_quantile = 0.9;

  friend bool operator==(const DefenseConfig&, const DefenseConfig&) = default;
};

std::string DefenseName(DefenseKind kind);
absl::StatusOr<DefenseKind> ParseDefense(std::string_view name);
absl::Status ValidateDefense(const DefenseConfig& defense);

// One-hot at the largest class of every location; ties go to the lowest id.
Tensor ApplyArgmax(const Tensor& posterior);

// Adds N(0, variance) to every coordinate, clamps negatives to zero and
// renormalises each location; a location left all-zero becomes uniform.
absl::StatusOr<Tensor> ApplyGauss(const Tensor& posterior, double variance,
                                  uint64_t seed);

// The posterior a defended victim releases for `image`. `seed` drives the
// per-query randomness of gauss and dropout. A dpsgd defense only checks that
// the model was trained with DP-SGD.
absl::StatusOr<Tensor> DefendedPosterior(const SegModel& model, const Tensor& image,
                                         const DefenseConfig& defense,
                                         uint64_t seed);

}  // namespace segleak

#endif  // SEGLEAK_DEFENSE_H_
