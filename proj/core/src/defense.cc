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


#include "segleak/defense.h"

#include <cmath>
#include <random>
#include <vector>

#include "absl/strings/str_cat.h"
#include "segleak/rng.h"

namespace segleak {

std::string DefenseName(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::kNone: return "none";
    case DefenseKind::kArgmax: return "argmax";
    case DefenseKind::kGauss: return "gauss";
    case DefenseKind::kDropout: return "dropout";
    case DefenseKind::kDpsgd: return "dpsgd";
  }
  return "none";
}

absl::StatusOr<DefenseKind> ParseDefense(std::string_view name) {
  for (DefenseKind kind : {DefenseKind::kNone, DefenseKind::kArgmax, DefenseKind::kGauss,
                           DefenseKind::kDropout, DefenseKind::kDpsgd}) {
    if (name == DefenseName(kind)) return kind;
  }
  return absl::InvalidArgumentError(
      absl::StrCat("unknown defense '", absl::string_view(name.data(), name.size()),
                   "' (expected none, argmax, gauss, dropout or dpsgd)"));
}

absl::Status ValidateDefense(const DefenseConfig& defense) {
  if (!std::isfinite(defense.param)) {
    return absl::InvalidArgumentError("defense parameter must be finite");
  }
  switch (defense.kind) {
    case DefenseKind::kGauss:
    case DefenseKind::kDpsgd:
      if (defense.param < 0.0) {
        return absl::InvalidArgumentError(absl::StrCat(
            DefenseName(defense.kind), " variance must be >= 0, got ", defense.param));
      }
      if (defense.kind == DefenseKind::kDpsgd &&
          !(defense.clip_quantile > 0.0 && defense.clip_quantile <= 1.0)) {
        return absl::InvalidArgumentError("dpsgd clip quantile must lie in (0, 1]");
      }
      break;
    case DefenseKind::kDropout:
      if (!(defense.param >= 0.0 && defense.param < 1.0)) {
        return absl::InvalidArgumentError(
            absl::StrCat("dropout ratio must lie in [0, 1), got ", defense.param));
      }
      break;
    default:
      break;
  }
  return absl::OkStatus();
}

Tensor ApplyArgmax(const Tensor& posterior) {
  const std::vector<int> labels = ArgmaxLabels(posterior);
  Tensor out(posterior.shape());
  const int64_t plane = static_cast<int64_t>(labels.size());
  for (int64_t j = 0; j < plane; ++j) out[labels[j] * plane + j] = 1.0f;
  return out;
}

absl::StatusOr<Tensor> ApplyGauss(const Tensor& posterior, double variance,
                                  uint64_t seed) {
  if (!(variance >= 0.0) || !std::isfinite(variance)) {
    return absl::InvalidArgumentError(
        absl::StrCat("gauss variance must be finite and >= 0, got ", variance));
  }
  if (variance == 0.0) return posterior;
  const int c = posterior.dim(0);
  const int64_t plane = posterior.size() / c;
  const double sigma = std::sqrt(variance);
  Rng rng(MixSeed(seed));
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<double> noisy(posterior.size());
  for (int64_t i = 0; i < posterior.size(); ++i) {
    noisy[i] = std::max(0.0, posterior[i] + noise(rng));
  }
  Tensor out(posterior.shape());
  for (int64_t j = 0; j < plane; ++j) {
    double sum = 0.0;
    for (int k = 0; k < c; ++k) sum += noisy[k * plane + j];
    for (int k = 0; k < c; ++k) {
      out[k * plane + j] =
          sum > 0.0 ? static_cast<float>(noisy[k * plane + j] / sum) : 1.0f / c;
    }
  }
  return out;
}

absl::StatusOr<Tensor> DefendedPosterior(const SegModel& model, const Tensor& image,
                                         const DefenseConfig& defense, uint64_t seed) {
  if (absl::Status s = ValidateDefense(defense); !s.ok()) return s;
  switch (defense.kind) {
    case DefenseKind::kDropout:
      return PredictPosterior(model, image, static_cast<float>(defense.param), seed);
    case DefenseKind::kDpsgd:
      if (!model.trained_with_dpsgd()) {
        return absl::FailedPreconditionError(
            "dpsgd defense requires a model trained with optimizer=dpsgd");
      }
      return PredictPosterior(model, image);
    default:
      break;
  }
  absl::StatusOr<Tensor> p = PredictPosterior(model, image);
  if (!p.ok()) return p.status();
  if (defense.kind == DefenseKind::kArgmax) return ApplyArgmax(*p);
  if (defense.kind == DefenseKind::kGauss) return ApplyGauss(*p, defense.param, seed);
  return p;
}

}  // namespace segleak
