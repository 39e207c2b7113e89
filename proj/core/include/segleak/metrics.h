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


// Attack-evaluation metrics: ROC / AUC, precision-recall / max-F, and the
// random-guess references they are compared against.

#ifndef SEGLEAK_METRICS_H_
#define SEGLEAK_METRICS_H_

#include <span>
#include <string>
#include <vector>

#include "absl/status/statusor.h"

namespace segleak {

struct ScoredExample {
  double score = 0.0;
  bool is_member = false;
};

// One operating point: predict "member" iff score >= threshold. The first
// ROC point uses threshold +inf (nothing predicted positive).
struct CurvePoint {
  double threshold = 0.0;
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};
using Curve = std::vector<CurvePoint>;

// (FPR, TPR) at every distinct score, from (0, 0) to (1, 1); tied scores
// form a single step.
absl::StatusOr<Curve> RocCurve(std::span<const ScoredExample> examples);

// Trapezoid area under a curve.
double Auc(const Curve& curve);

// (recall, precision) at every distinct score, highest threshold first.
absl::StatusOr<Curve> PrCurve(std::span<const ScoredExample> examples);

// Largest harmonic mean of precision and recall over the curve's points.
double MaxF(const Curve& pr_curve);

// Fraction of (member, non-member) pairs ranked correctly, ties counting
// one half, computed from mid-ranks.
absl::StatusOr<double> MannWhitneyAuc(std::span<const ScoredExample> examples);

// F-score of guessing at random: precision M / (M + N), recall 1/2.
double RandomGuessF(int members, int non_members);

// "threshold,x,y" with a header row; +inf prints as "inf".
std::string CurveToCsv(const Curve& curve);

}  // namespace segleak

#endif  // SEGLEAK_METRICS_H_
