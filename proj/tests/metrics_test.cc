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

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "oracles.h"

namespace segleak {
namespace {

using ::segleak::testing::PairwiseAucOracle;
using ::testing::HasSubstr;

std::vector<ScoredExample> Examples(const std::vector<double>& members,
                                    const std::vector<double>& non_members) {
  std::vector<ScoredExample> out;
  for (double s : members) out.push_back({s, true});
  for (double s : non_members) out.push_back({s, false});
  return out;
}

double RocAuc(const std::vector<ScoredExample>& e) { return Auc(*RocCurve(e)); }
double PrMaxF(const std::vector<ScoredExample>& e) { return MaxF(*PrCurve(e)); }

double PairwiseAuc(const std::vector<ScoredExample>& e) {
  std::vector<double> scores;
  std::vector<bool> member;
  for (const ScoredExample& x : e) {
    scores.push_back(x.score);
    member.push_back(x.is_member);
  }
  return PairwiseAucOracle(scores, member);
}

// Max-F by trying every threshold directly.
double MaxFOracle(const std::vector<ScoredExample>& e) {
  double best = 0.0;
  for (const ScoredExample& t : e) {
    double tp = 0, fp = 0, members = 0;
    for (const ScoredExample& x : e) {
      members += x.is_member;
      if (x.score >= t.score) (x.is_member ? tp : fp) += 1;
    }
    if (tp == 0) continue;
    const double p = tp / (tp + fp);
    const double r = tp / members;
    best = std::max(best, 2 * p * r / (p + r));
  }
  return best;
}

TEST(RocTest, PerfectSeparation) {
  const auto e = Examples({0.9, 0.8}, {0.2, 0.1, 0.0});
  EXPECT_DOUBLE_EQ(RocAuc(e), 1.0);
  EXPECT_DOUBLE_EQ(*MannWhitneyAuc(e), 1.0);
  EXPECT_DOUBLE_EQ(PrMaxF(e), 1.0);
}

TEST(RocTest, AllTiesGiveOneHalf) {
  const auto e = Examples({0.3, 0.3, 0.3}, {0.3, 0.3});
  const Curve roc = *RocCurve(e);
  ASSERT_EQ(roc.size(), 2u);
  EXPECT_EQ(roc[0].x, 0.0);
  EXPECT_EQ(roc[0].y, 0.0);
  EXPECT_TRUE(std::isinf(roc[0].threshold));
  EXPECT_EQ(roc[1].x, 1.0);
  EXPECT_EQ(roc[1].y, 1.0);
  EXPECT_DOUBLE_EQ(Auc(roc), 0.5);
  EXPECT_DOUBLE_EQ(*MannWhitneyAuc(e), 0.5);
}

TEST(RocTest, WorkedExample) {
  const auto e = Examples({0.9, 0.4}, {0.6, 0.1});
  EXPECT_DOUBLE_EQ(PairwiseAuc(e), 0.75);
  EXPECT_DOUBLE_EQ(RocAuc(e), 0.75);
  EXPECT_DOUBLE_EQ(*MannWhitneyAuc(e), 0.75);
}

TEST(RocTest, CurveShape) {
  const auto e = Examples({0.9, 0.5, 0.5}, {0.5, 0.2});
  const Curve roc = *RocCurve(e);
  // +inf, 0.9, 0.5 (one tied step), 0.2.
  ASSERT_EQ(roc.size(), 4u);
  EXPECT_EQ(roc[1], (CurvePoint{0.9, 0.0, 1.0 / 3}));
  EXPECT_EQ(roc[2], (CurvePoint{0.5, 0.5, 1.0}));
  EXPECT_EQ(roc[3], (CurvePoint{0.2, 1.0, 1.0}));
  for (size_t i = 1; i < roc.size(); ++i) {
    EXPECT_GE(roc[i].x, roc[i - 1].x);
    EXPECT_GE(roc[i].y, roc[i - 1].y);
  }
}

TEST(RocTest, Errors) {
  EXPECT_FALSE(RocCurve(Examples({0.1}, {})).ok());
  EXPECT_FALSE(RocCurve(Examples({}, {0.1})).ok());
  EXPECT_FALSE(RocCurve(Examples({}, {})).ok());
  EXPECT_FALSE(MannWhitneyAuc(Examples({0.1}, {})).ok());
  EXPECT_FALSE(PrCurve(Examples({}, {0.3})).ok());
  EXPECT_FALSE(RocCurve(Examples({std::nan("")}, {0.1})).ok());
  EXPECT_FALSE(
      RocCurve(Examples({std::numeric_limits<double>::infinity()}, {0.1})).ok());
}

TEST(RocTest, MatchesMannWhitneyAndPairwiseOracles) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const int m = std::uniform_int_distribution<int>(1, 40)(rng);
    const int n = std::uniform_int_distribution<int>(1, 40)(rng);
    // Coarse scores on some trials to exercise ties.
    const int levels = trial % 3 == 0 ? 5 : 1 << 30;
    std::uniform_int_distribution<int> pick(0, levels - 1);
    std::vector<double> a(m), b(n);
    for (double& s : a) s = pick(rng) / static_cast<double>(levels) + 0.1 * (trial % 2);
    for (double& s : b) s = pick(rng) / static_cast<double>(levels);
    const auto e = Examples(a, b);
    const double roc = RocAuc(e);
    ASSERT_NEAR(roc, *MannWhitneyAuc(e), 1e-9);
    ASSERT_NEAR(roc, PairwiseAuc(e), 1e-9);
  }
}

TEST(RocTest, MonotoneTransformInvariance) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(20), b(25);
    for (double& s : a) s = normal(rng) + 0.5;
    for (double& s : b) s = normal(rng);
    a[0] = b[0];  // a tie
    std::vector<double> ta = a, tb = b;
    for (double& s : ta) s = std::exp(3 * s) - 7;
    for (double& s : tb) s = std::exp(3 * s) - 7;
    const auto e = Examples(a, b);
    const auto t = Examples(ta, tb);
    const Curve ra = *RocCurve(e);
    const Curve rt = *RocCurve(t);
    ASSERT_EQ(ra.size(), rt.size());
    for (size_t i = 0; i < ra.size(); ++i) {
      ASSERT_EQ(ra[i].x, rt[i].x);
      ASSERT_EQ(ra[i].y, rt[i].y);
    }
    ASSERT_EQ(Auc(ra), Auc(rt));
    ASSERT_EQ(PrMaxF(e), PrMaxF(t));
  }
}

TEST(RocTest, RandomScoresNearChance) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u;
  std::vector<double> a(250), b(250);
  for (double& s : a) s = u(rng);
  for (double& s : b) s = u(rng);
  const double auc = RocAuc(Examples(a, b));
  EXPECT_GE(auc, 0.4);
  EXPECT_LE(auc, 0.6);
}

TEST(PrTest, AllTiesClassifyEverythingPositive) {
  for (int m : {1, 3, 10}) {
    for (int n : {1, 4, 9}) {
      const auto e = Examples(std::vector<double>(m, 0.5), std::vector<double>(n, 0.5));
      EXPECT_NEAR(PrMaxF(e), 2.0 * m / (2.0 * m + n), 1e-12) << m << " " << n;
    }
  }
}

TEST(PrTest, CurveShape) {
  const Curve pr = *PrCurve(Examples({0.9, 0.4}, {0.6}));
  ASSERT_EQ(pr.size(), 3u);
  EXPECT_EQ(pr[0], (CurvePoint{0.9, 0.5, 1.0}));
  EXPECT_EQ(pr[1], (CurvePoint{0.6, 0.5, 0.5}));
  EXPECT_EQ(pr[2], (CurvePoint{0.4, 1.0, 2.0 / 3}));
}

TEST(PrTest, MaxFMatchesThresholdOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    const int m = std::uniform_int_distribution<int>(1, 30)(rng);
    const int n = std::uniform_int_distribution<int>(0, 30)(rng);
    std::uniform_int_distribution<int> pick(0, 9);
    std::vector<double> a(m), b(n);
    for (double& s : a) s = pick(rng);
    for (double& s : b) s = pick(rng);
    const auto e = Examples(a, b);
    ASSERT_NEAR(PrMaxF(e), MaxFOracle(e), 1e-12);
  }
}

TEST(RandomGuessTest, ClosedForm) {
  for (int m : {1, 96, 50}) {
    for (int n : {1, 64, 50}) {
      const double p = m / static_cast<double>(m + n);
      EXPECT_NEAR(RandomGuessF(m, n), 2 * p * 0.5 / (p + 0.5), 1e-15);
    }
  }
  EXPECT_NEAR(RandomGuessF(50, 50), 0.5, 1e-15);
}

TEST(CurveCsvTest, Format) {
  const std::string csv = CurveToCsv(*RocCurve(Examples({0.75}, {0.25})));
  EXPECT_EQ(csv, "threshold,x,y\ninf,0,0\n0.75,0,1\n0.25,1,1\n");
}

}  // namespace
}  // namespace segleak
