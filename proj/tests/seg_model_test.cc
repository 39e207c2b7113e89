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


#include "segleak/seg_model.h"

#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <vector>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "oracles.h"
#include "segleak/loss.h"

namespace segleak {
namespace {

using ::testing::ElementsAre;
using ::testing::HasSubstr;

SceneConfig SmallScenes() {
  SceneConfig config;
  config.height = 32;
  config.width = 32;
  return config;
}

// Mean over pixels of P(true class).
double MeanTrueConfidence(const Tensor& p, const LabeledImage& scene) {
  double sum = 0.0;
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) sum += p.at(scene.label(y, x), y, x);
  }
  return sum / (scene.height * scene.width);
}

// One 32x32 scene trained to memorisation; shared by several tests.
const SegModel& OverfitModel() {
  static const SegModel* model = [] {
    const std::vector<LabeledImage> data = *GenerateDataset(SmallScenes(), 1, 17);
    TrainConfig config;
    config.epochs = 150;
    config.seed = 3;
    return new SegModel(*TrainSegmenter(data, 5, SegArchitecture{}, config));
  }();
  return *model;
}

TEST(SegmenterSpecTest, DefaultArchitecture) {
  const NetworkSpec spec = *SegmenterSpec(SegArchitecture{}, 64, 64, 5);
  ASSERT_EQ(spec.layers.size(), 9u);
  EXPECT_EQ(spec.layers[0], LayerSpec(ConvLayer{3, 3, 16, 1, 1}));
  EXPECT_EQ(spec.layers[2], LayerSpec(ConvLayer{3, 16, 32, 1, 1}));
  EXPECT_EQ(spec.layers[4], LayerSpec(ConvLayer{3, 32, 32, 1, 1}));
  EXPECT_EQ(spec.layers[6], LayerSpec(DropoutLayer{0.1f}));
  EXPECT_EQ(spec.layers[7], LayerSpec(ConvLayer{3, 32, 5, 1, 1}));
  EXPECT_EQ(spec.layers[8], LayerSpec(ChannelSoftmaxLayer{}));
  EXPECT_EQ(InferShapes(spec)->back(), (Shape{5, 64, 64}));
  const NetworkSpec shadow = *SegmenterSpec(IndependentShadowArchitecture(), 64, 64, 5);
  EXPECT_EQ(shadow.layers[2], LayerSpec(ConvLayer{3, 16, 24, 1, 1}));
}

TEST(SegmenterSpecTest, RejectsBadArchitectures) {
  EXPECT_FALSE(SegmenterSpec({{}, 0.1f}, 16, 16, 5).ok());
  EXPECT_FALSE(SegmenterSpec({{8, 0}, 0.1f}, 16, 16, 5).ok());
  EXPECT_FALSE(SegmenterSpec({{8}, 1.0f}, 16, 16, 5).ok());
  EXPECT_FALSE(SegmenterSpec({{8}, 0.1f}, 16, 16, 1).ok());
}

TEST(TrainTest, OptimizerNamesRoundTrip) {
  EXPECT_EQ(*ParseOptimizer(OptimizerName(OptimizerKind::kSgd)), OptimizerKind::kSgd);
  EXPECT_EQ(*ParseOptimizer(OptimizerName(OptimizerKind::kDpsgd)), OptimizerKind::kDpsgd);
  EXPECT_FALSE(ParseOptimizer("adam").ok());
}

TEST(TrainTest, ZeroEpochsReturnsInitialization) {
  const std::vector<LabeledImage> data = *GenerateDataset(SmallScenes(), 2, 0);
  TrainConfig config;
  config.epochs = 0;
  config.seed = 9;
  const SegModel model = *TrainSegmenter(data, 5, SegArchitecture{}, config);
  EXPECT_EQ(model.net.parameters(),
            InitialSegmenter(SegArchitecture{}, 32, 32, 5, 9)->parameters());
  EXPECT_TRUE(model.loss_history.empty());
}

TEST(TrainTest, OverfitsASingleImage) {
  const SegModel& model = OverfitModel();
  const std::vector<LabeledImage> data = *GenerateDataset(SmallScenes(), 1, 17);
  EXPECT_GE(*DatasetMiou(model, data), 0.95);
  ASSERT_EQ(model.loss_history.size(), 150u);
  EXPECT_LT(model.loss_history.back(), model.loss_history.front());
}

TEST(TrainTest, TrainingIsDeterministic) {
  const std::vector<LabeledImage> data = *GenerateDataset(SmallScenes(), 3, 5);
  TrainConfig config;
  config.epochs = 2;
  config.batch_size = 2;
  const SegModel a = *TrainSegmenter(data, 5, SegArchitecture{}, config);
  const SegModel b = *TrainSegmenter(data, 5, SegArchitecture{}, config);
  EXPECT_EQ(a.net.parameters(), b.net.parameters());
  EXPECT_EQ(a.loss_history, b.loss_history);
  config.seed = 1;
  EXPECT_NE(TrainSegmenter(data, 5, SegArchitecture{}, config)->net.parameters(),
            a.net.parameters());
}

// With no noise and the max-norm clip on one example, clipping is inactive
// whenever later gradients stay below the initial norm, so DP-SGD must retrace
// SGD bit for bit. Train-time dropout is off: the clip factors come from a
// deterministic pass, and a dropout-perturbed gradient may exceed them.
TEST(TrainTest, NoiselessMaxClipDpsgdMatchesSgd) {
  const std::vector<LabeledImage> data = *GenerateDataset(SmallScenes(), 1, 21);
  for (int epochs : {1, 3, 6}) {
    TrainConfig sgd;
    sgd.epochs = epochs;
    sgd.dropout_ratio = 0.0f;
    sgd.learning_rate = 0.01f;
    TrainConfig dp = sgd;
    dp.optimizer = OptimizerKind::kDpsgd;
    dp.noise_variance = 0.0;
    dp.clip_quantile = 1.0;
    const SegModel a = *TrainSegmenter(data, 5, SegArchitecture{}, sgd);
    const SegModel b = *TrainSegmenter(data, 5, SegArchitecture{}, dp);
    EXPECT_EQ(a.net.parameters(), b.net.parameters()) << epochs << " epochs";
    EXPECT_EQ(b.clip_factors.size(), 4u);
    EXPECT_TRUE(b.trained_with_dpsgd());
  }
}

// A low quantile clips most examples; the audit must see the bound hold at
// every step, and reach it (up to float rounding of the rescale).
TEST(TrainTest, DpsgdClippingBoundHoldsAtEveryStep) {
  const std::vector<LabeledImage> data = *GenerateDataset(SmallScenes(), 4, 31);
  TrainConfig dp;
  dp.epochs = 3;
  dp.optimizer = OptimizerKind::kDpsgd;
  dp.noise_variance = 1e-4;
  dp.clip_quantile = 0.25;
  const SegModel model = *TrainSegmenter(data, 5, SegArchitecture{}, dp);
  EXPECT_LE(model.max_clip_ratio, 1.0 + 1e-6);
  EXPECT_GT(model.max_clip_ratio, 1.0 - 1e-6);
  const SegModel sgd = *TrainSegmenter(data, 5, SegArchitecture{}, TrainConfig{.epochs = 1});
  EXPECT_EQ(sgd.max_clip_ratio, 0.0);
}

TEST(TrainTest, DivergenceNamesTheStep) {
  const std::vector<LabeledImage> data = *GenerateDataset(SmallScenes(), 2, 0);
  TrainConfig config;
  config.epochs = 5;
  config.learning_rate = 1e30f;
  absl::StatusOr<SegModel> model = TrainSegmenter(data, 5, SegArchitecture{}, config);
  ASSERT_FALSE(model.ok());
  EXPECT_THAT(model.status().message(), HasSubstr("step")) << model.status();
}

TEST(TrainTest, RejectsBadInputs) {
  const std::vector<LabeledImage> data = *GenerateDataset(SmallScenes(), 2, 0);
  EXPECT_FALSE(TrainSegmenter({}, 5, SegArchitecture{}, TrainConfig{}).ok());
  TrainConfig bad;
  bad.batch_size = 0;
  EXPECT_FALSE(TrainSegmenter(data, 5, SegArchitecture{}, bad).ok());
  bad = TrainConfig{};
  bad.learning_rate = 0.0f;
  EXPECT_FALSE(TrainSegmenter(data, 5, SegArchitecture{}, bad).ok());
  bad = TrainConfig{};
  bad.optimizer = OptimizerKind::kDpsgd;
  bad.clip_quantile = 0.0;
  EXPECT_FALSE(TrainSegmenter(data, 5, SegArchitecture{}, bad).ok());
  std::vector<LabeledImage> mixed = data;
  SceneConfig bigger;
  mixed.push_back(*GenerateScene(bigger, 0));
  EXPECT_FALSE(TrainSegmenter(mixed, 5, SegArchitecture{}, TrainConfig{}).ok());
  // Labels beyond the class count.
  EXPECT_FALSE(TrainSegmenter(data, 3, SegArchitecture{}, TrainConfig{}).ok());
}

TEST(PredictTest, PosteriorIsASimplex) {
  const SegModel& model = OverfitModel();
  const std::vector<LabeledImage> data = *GenerateDataset(SmallScenes(), 4, 100);
  for (const LabeledImage& scene : data) {
    for (std::optional<float> ratio : {std::optional<float>(), std::optional<float>(0.5f)}) {
      const Tensor p = *PredictPosterior(model, scene.image, ratio, 1);
      ASSERT_EQ(p.shape(), (Shape{5, 32, 32}));
      for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
          double sum = 0.0;
          for (int k = 0; k < 5; ++k) {
            ASSERT_GE(p.at(k, y, x), 0.0f);
            sum += p.at(k, y, x);
          }
          ASSERT_NEAR(sum, 1.0, 1e-5);
        }
      }
    }
  }
}

TEST(PredictTest, ZeroDropoutRatioEqualsDeterministicPass) {
  const SegModel& model = OverfitModel();
  const LabeledImage scene = *GenerateScene(SmallScenes(), 17);
  EXPECT_EQ(*PredictPosterior(model, scene.image, 0.0f, 123),
            *PredictPosterior(model, scene.image));
}

TEST(PredictTest, HeavyDropoutLowersTrueClassConfidence) {
  const SegModel& model = OverfitModel();
  const LabeledImage scene = *GenerateScene(SmallScenes(), 17);
  const double clean = MeanTrueConfidence(*PredictPosterior(model, scene.image), scene);
  const double blurred =
      MeanTrueConfidence(*PredictPosterior(model, scene.image, 0.9f, 77), scene);
  EXPECT_LT(blurred, clean);
}

TEST(PredictTest, StochasticPassIsSeeded) {
  const SegModel& model = OverfitModel();
  const LabeledImage scene = *GenerateScene(SmallScenes(), 3);
  EXPECT_EQ(*PredictPosterior(model, scene.image, 0.5f, 4),
            *PredictPosterior(model, scene.image, 0.5f, 4));
  EXPECT_NE(*PredictPosterior(model, scene.image, 0.5f, 4),
            *PredictPosterior(model, scene.image, 0.5f, 5));
}

TEST(PredictTest, Errors) {
  const SegModel& model = OverfitModel();
  EXPECT_FALSE(PredictPosterior(model, Tensor({3, 16, 16})).ok());
  EXPECT_FALSE(PredictPosterior(model, Tensor({3, 32, 32}), 1.0f, 0).ok());
}

TEST(ArgmaxTest, TiesGoToTheLowestClass) {
  const Tensor p = *Tensor::Create({3, 1, 2}, {0.4f, 0.2f, 0.4f, 0.2f, 0.2f, 0.6f});
  EXPECT_THAT(ArgmaxLabels(p), ElementsAre(0, 2));
}

TEST(MiouTest, Examples) {
  EXPECT_DOUBLE_EQ(*Miou({0, 1, 2, 2}, {0, 1, 2, 2}, 3), 1.0);
  EXPECT_DOUBLE_EQ(*Miou({0, 0, 1, 1}, {2, 2, 3, 3}, 4), 0.0);
  // GT [[0,0],[1,1]], pred [[0,1],[1,1]]: IoU0 = 1/2, IoU1 = 2/3.
  EXPECT_NEAR(*Miou({0, 1, 1, 1}, {0, 0, 1, 1}, 2), 7.0 / 12.0, 1e-12);
  // Class 2 absent from both maps is skipped, not counted as zero.
  EXPECT_NEAR(*Miou({0, 1, 1, 1}, {0, 0, 1, 1}, 3), 7.0 / 12.0, 1e-12);
}

TEST(MiouTest, Errors) {
  EXPECT_FALSE(Miou({0, 3}, {0, 1}, 3).ok());
  EXPECT_FALSE(Miou({0, 1}, {0, 5}, 3).ok());
  EXPECT_FALSE(Miou({0, 1}, {0, 1, 1}, 3).ok());
}

TEST(MiouTest, MatchesSetOracleOnRandomMaps) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const int c = std::uniform_int_distribution<int>(2, 6)(rng);
    const int n = std::uniform_int_distribution<int>(1, 50)(rng);
    std::uniform_int_distribution<int> label(0, c - 1);
    std::vector<int> pred(n), gt(n);
    for (int i = 0; i < n; ++i) {
      pred[i] = label(rng);
      gt[i] = label(rng);
    }
    double sum = 0.0;
    int present = 0;
    for (int k = 0; k < c; ++k) {
      std::set<int> in_pred, in_gt, both, either;
      for (int i = 0; i < n; ++i) {
        if (pred[i] == k) in_pred.insert(i);
        if (gt[i] == k) in_gt.insert(i);
      }
      for (int i : in_pred) {
        either.insert(i);
        if (in_gt.count(i)) both.insert(i);
      }
      either.insert(in_gt.begin(), in_gt.end());
      if (either.empty()) continue;
      sum += static_cast<double>(both.size()) / either.size();
      ++present;
    }
    ASSERT_NEAR(*Miou(pred, gt, c), sum / present, 1e-12);
  }
}

TEST(MiouTest, PooledCountsEqualConcatenatedMaps) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = std::uniform_int_distribution<int>(2, 6)(rng);
    std::uniform_int_distribution<int> label(0, c - 1);
    IouCounts pooled(c);
    std::vector<int> all_pred, all_gt;
    const int images = std::uniform_int_distribution<int>(1, 5)(rng);
    for (int m = 0; m < images; ++m) {
      const int n = std::uniform_int_distribution<int>(1, 30)(rng);
      std::vector<int> pred(n), gt(n);
      for (int i = 0; i < n; ++i) {
        pred[i] = label(rng);
        gt[i] = label(rng);
      }
      ASSERT_TRUE(AccumulateIou(pred, gt, &pooled).ok());
      all_pred.insert(all_pred.end(), pred.begin(), pred.end());
      all_gt.insert(all_gt.end(), gt.begin(), gt.end());
    }
    ASSERT_NEAR(pooled.Miou(), *Miou(all_pred, all_gt, c), 1e-12);
  }
}

TEST(MiouTest, PoolingIgnoresClassesMissingFromOneImage) {
  // A single stray pixel of a class absent from its image costs that image a
  // whole zero-IoU term, but barely moves the pooled value.
  IouCounts pooled(3);
  ASSERT_TRUE(AccumulateIou({0, 0, 1, 1}, {0, 0, 1, 1}, &pooled).ok());
  ASSERT_TRUE(AccumulateIou({0, 0, 2, 2}, {0, 0, 2, 1}, &pooled).ok());
  EXPECT_NEAR(*Miou({0, 0, 2, 2}, {0, 0, 2, 1}, 3), (1.0 + 0.0 + 0.5) / 3, 1e-12);
  EXPECT_NEAR(pooled.Miou(), (1.0 + 2.0 / 3 + 0.5) / 3, 1e-12);
  EXPECT_EQ(IouCounts(4).Miou(), 1.0);
}

TEST(RankTest, SingleImage) {
  const std::vector<LabeledImage> data = *GenerateDataset(SmallScenes(), 1, 50);
  EXPECT_THAT(*RankByConfidence(OverfitModel(), data), ElementsAre(0));
  EXPECT_FALSE(RankByConfidence(OverfitModel(), {}).ok());
}

TEST(RankTest, TrainingImageRanksFirstOnOverfitModel) {
  std::vector<LabeledImage> data = *GenerateDataset(SmallScenes(), 1, 60);
  data.push_back(*GenerateScene(SmallScenes(), 17));
  EXPECT_THAT(*RankByConfidence(OverfitModel(), data), ElementsAre(1, 0));
}

TEST(RankTest, MatchesMeanOfMaxLoopOracleWithStableTies) {
  std::vector<LabeledImage> data = *GenerateDataset(SmallScenes(), 12, 200);
  data.push_back(data[3]);  // an exact tie with index 3
  std::vector<double> score;
  for (const LabeledImage& scene : data) {
    const Tensor p = *PredictPosterior(OverfitModel(), scene.image);
    double sum = 0.0;
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) {
        double best = 0.0;
        for (int k = 0; k < 5; ++k) best = std::max(best, static_cast<double>(p.at(k, y, x)));
        sum += best;
      }
    }
    score.push_back(sum / 1024.0);
  }
  const std::vector<int> order = *RankByConfidence(OverfitModel(), data);
  ASSERT_EQ(order.size(), data.size());
  for (size_t i = 1; i < order.size(); ++i) {
    ASSERT_GE(score[order[i - 1]], score[order[i]] - 1e-9);
  }
  const auto pos3 = std::find(order.begin(), order.end(), 3);
  const auto pos12 = std::find(order.begin(), order.end(), 12);
  EXPECT_EQ(pos12 - pos3, 1);
}

TEST(SegModelIoTest, RoundTrip) {
  const std::filesystem::path dir =
      std::filesystem::path(::testing::TempDir()) / "seg_model_round_trip";
  std::filesystem::remove_all(dir);
  const std::vector<LabeledImage> data = *GenerateDataset(SmallScenes(), 1, 0);
  TrainConfig config;
  config.epochs = 2;
  config.optimizer = OptimizerKind::kDpsgd;
  config.noise_variance = 1e-4;
  config.seed = 77;
  const SegModel model = *TrainSegmenter(data, 5, SegArchitecture{}, config);
  ASSERT_TRUE(SaveSegModel(dir, model).ok());
  const SegModel loaded = *LoadSegModel(dir);
  EXPECT_EQ(loaded.net.spec(), model.net.spec());
  EXPECT_EQ(loaded.net.parameters(), model.net.parameters());
  EXPECT_EQ(loaded.train_config, model.train_config);
  EXPECT_EQ(loaded.num_classes, 5);
  EXPECT_EQ(loaded.loss_history, model.loss_history);
  EXPECT_EQ(loaded.clip_factors, model.clip_factors);
  EXPECT_EQ(loaded.max_clip_ratio, model.max_clip_ratio);
  EXPECT_FALSE(LoadSegModel(dir / "missing").ok());
}

}  // namespace
}  // namespace segleak
