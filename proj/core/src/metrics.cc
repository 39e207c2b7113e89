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


#include "segleak/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"

namespace segleak {
namespace {

struct Counts {
  int members = 0;
  int non_members = 0;
};

absl::StatusOr<Counts> CountClasses(std::span<const ScoredExample> examples) {
  Counts c;
  for (const ScoredExample& e : examples) {
    if (!std::isfinite(e.score)) {
      return absl::InvalidArgumentError(absl::StrCat("non-finite score ", e.score));
    }
    (e.is_member ? c.members : c.non_members) += 1;
  }
  return c;
}

// Indices ordered by descending score.
std::vector<size_t> DescendingOrder(std::span<const ScoredExample> examples) {
  std::vector<size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return examples[a].score > examples[b].score;
  });
  return order;
}

}  // namespace

absl::StatusOr<Curve> RocCurve(std::span<const ScoredExample> examples) {
  absl::StatusOr<Counts> counts = CountClasses(examples);
  if (!counts.ok()) return counts.status();
  if (counts->members == 0 || counts->non_members == 0) {
    return absl::InvalidArgumentError(absl::StrCat(
        "ROC needs both classes; got ", counts->members, " members and ",
        counts->non_members, " non-members"));
  }
  const std::vector<size_t> order = DescendingOrder(examples);
  Curve curve = {{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  int tp = 0;
  int fp = 0;
  for (size_t i = 0; i < order.size();) {
    const double s = examples[order[i]].score;
    for (; i < order.size() && examples[order[i]].score == s; ++i) {
      (examples[order[i]].is_member ? tp : fp) += 1;
    }
    curve.push_back({s, static_cast<double>(fp) / counts->non_members,
                     static_cast<double>(tp) / counts->members});
  }
  return curve;
}

double Auc(const Curve& curve) {
  double area = 0.0;
  for (size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].x - curve[i - 1].x) * (curve[i].y + curve[i - 1].y) / 2.0;
  }
  return area;
}

absl::StatusOr<Curve> PrCurve(std::span<const ScoredExample> examples) {
  absl::StatusOr<Counts> counts = CountClasses(examples);
  if (!counts.ok()) return counts.status();
  if (counts->members == 0) {
    return absl::InvalidArgumentError("precision-recall needs at least one member");
  }
  const std::vector<size_t> order = DescendingOrder(examples);
  Curve curve;
  int tp = 0;
  int predicted = 0;
  for (size_t i = 0; i < order.size();) {
    const double s = examples[order[i]].score;
    for (; i < order.size() && examples[order[i]].score == s; ++i) {
      tp += examples[order[i]].is_member ? 1 : 0;
      ++predicted;
    }
    curve.push_back({s, static_cast<double>(tp) / counts->members,
                     static_cast<double>(tp) / predicted});
  }
  return curve;
}

double MaxF(const Curve& pr_curve) {
  double best = 0.0;
  for (const CurvePoint& p : pr_curve) {
    if (p.x + p.y > 0.0) best = std::max(best, 2.0 * p.x * p.y / (p.x + p.y));
  }
  return best;
}

absl::StatusOr<double> MannWhitneyAuc(std::span<const ScoredExample> examples) {
  absl::StatusOr<Counts> counts = CountClasses(examples);
  if (!counts.ok()) return counts.status();
  if (counts->members == 0 || counts->non_members == 0) {
    return absl::InvalidArgumentError("Mann-Whitney AUC needs both classes");
  }
  std::vector<size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return examples[a].score < examples[b].score; });
  // Sum of 1-based mid-ranks of the members.
  double rank_sum = 0.0;
  for (size_t i = 0; i < order.size();) {
    size_t j = i;
    while (j < order.size() && examples[order[j]].score == examples[order[i]].score) ++j;
    const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (size_t k = i; k < j; ++k) {
      if (examples[order[k]].is_member) rank_sum += mid_rank;
    }
    i = j;
  }
  const double m = counts->members;
  const double n = counts->non_members;
  return (rank_sum - m * (m + 1.0) / 2.0) / (m * n);
}

double RandomGuessF(int members, int non_members) {
  const double precision = static_cast<double>(members) / (members + non_members);
  return 2.0 * precision * 0.5 / (precision + 0.5);
}

std::string CurveToCsv(const Curve& curve) {
  std::string out = "threshold,x,y\n";
  for (const CurvePoint& p : curve) {
    absl::StrAppend(&out,
                    std::isinf(p.threshold) ? std::string("inf")
                                            : absl::StrFormat("%.17g", p.threshold),
                    absl::StrFormat(",%.17g,%.17g\n", p.x, p.y));
  }
  return out;
}

}  // namespace segleak
