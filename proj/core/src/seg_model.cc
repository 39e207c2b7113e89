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

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <utility>

#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "absl/strings/strip.h"
#include "segleak/loss.h"
#include "segleak/optimizer.h"
#include "segleak/rng.h"
#include "segleak/tensor_io.h"

namespace segleak {
namespace {

constexpr char kTrainConfigFile[] = "train_config.txt";
constexpr char kLossHistoryFile[] = "loss_history.csv";

absl::Status CheckDims(const SegModel& model, const Tensor& image) {
  const Shape& want = model.net.spec().input_shape;
  if (image.shape() != want) {
    return absl::InvalidArgumentError(
        absl::StrCat("image shape ", ShapeToString(image.shape()),
                     " does not match model input ", ShapeToString(want)));
  }
  return absl::OkStatus();
}

std::string FormatTrainConfig(const SegModel& model) {
  const TrainConfig& c = model.train_config;
  std::vector<std::string> clip;
  for (float f : model.clip_factors) clip.push_back(absl::StrFormat("%.9g", f));
  return absl::StrCat(
      "num_classes = ", model.num_classes, "\n",
      "epochs = ", c.epochs, "\n",
      "batch_size = ", c.batch_size, "\n",
      absl::StrFormat("learning_rate = %.9g\n", c.learning_rate),
      absl::StrFormat("momentum = %.9g\n", c.momentum),
      absl::StrFormat("dropout_ratio = %.9g\n", c.dropout_ratio),
      "optimizer = ", OptimizerName(c.optimizer), "\n",
      absl::StrFormat("noise_variance = %.17g\n", c.noise_variance),
      absl::StrFormat("clip_quantile = %.17g\n", c.clip_quantile),
      "seed = ", c.seed, "\n",
      "clip_factors = ", absl::StrJoin(clip, ","), "\n",
      absl::StrFormat("max_clip_ratio = %.17g\n", model.max_clip_ratio));
}

absl::Status ParseTrainConfig(absl::string_view text, SegModel& model) {
  std::map<std::string, std::string, std::less<>> kv;
  for (absl::string_view line : absl::StrSplit(text, '\n', absl::SkipWhitespace())) {
    const std::pair<absl::string_view, absl::string_view> parts =
        absl::StrSplit(line, absl::MaxSplits('=', 1));
    kv[std::string(absl::StripAsciiWhitespace(parts.first))] =
        std::string(absl::StripAsciiWhitespace(parts.second));
  }
  auto field = [&](absl::string_view key) -> absl::StatusOr<absl::string_view> {
    auto it = kv.find(key);
    if (it == kv.end()) {
      return absl::DataLossError(absl::StrCat(kTrainConfigFile, " lacks '", key, "'"));
    }
    return absl::string_view(it->second);
  };
  auto bad = [](absl::string_view key) {
    return absl::DataLossError(absl::StrCat("bad value for '", key, "' in ", kTrainConfigFile));
  };
  TrainConfig& c = model.train_config;
  struct IntField { const char* key; int* dst; };
  for (const IntField& f : {IntField{"num_classes", &model.num_classes},
                            IntField{"epochs", &c.epochs},
                            IntField{"batch_size", &c.batch_size}}) {
    absl::StatusOr<absl::string_view> v = field(f.key);
    if (!v.ok()) return v.status();
    if (!absl::SimpleAtoi(*v, f.dst)) return bad(f.key);
  }
  struct FloatField { const char* key; float* dst; };
  for (const FloatField& f : {FloatField{"learning_rate", &c.learning_rate},
                              FloatField{"momentum", &c.momentum},
                              FloatField{"dropout_ratio", &c.dropout_ratio}}) {
    absl::StatusOr<absl::string_view> v = field(f.key);
    if (!v.ok()) return v.status();
    if (!absl::SimpleAtof(*v, f.dst)) return bad(f.key);
  }
  struct DoubleField { const char* key; double* dst; };
  for (const DoubleField& f : {DoubleField{"noise_variance", &c.noise_variance},
                               DoubleField{"clip_quantile", &c.clip_quantile},
                               DoubleField{"max_clip_ratio", &model.max_clip_ratio}}) {
    absl::StatusOr<absl::string_view> v = field(f.key);
    if (!v.ok()) return v.status();
    if (!absl::SimpleAtod(*v, f.dst)) return bad(f.key);
  }
  absl::StatusOr<absl::string_view> seed = field("seed");
  if (!seed.ok()) return seed.status();
  if (!absl::SimpleAtoi(*seed, &c.seed)) return bad("seed");
  absl::StatusOr<absl::string_view> opt = field("optimizer");
  if (!opt.ok()) return opt.status();
  absl::StatusOr<OptimizerKind> kind = ParseOptimizer(std::string_view(opt->data(), opt->size()));
  if (!kind.ok()) return kind.status();
  c.optimizer = *kind;
  absl::StatusOr<absl::string_view> clip = field("clip_factors");
  if (!clip.ok()) return clip.status();
  model.clip_factors.clear();
  for (absl::string_view tok : absl::StrSplit(*clip, ',', absl::SkipEmpty())) {
    float f;
    if (!absl::SimpleAtof(tok, &f)) return bad("clip_factors");
    model.clip_factors.push_back(f);
  }
  return absl::OkStatus();
}

}  // namespace

SegArchitecture IndependentShadowArchitecture() {
  SegArchitecture arch;
  arch.hidden_widths = {16, 24, 24};
  return arch;
}

absl::StatusOr<NetworkSpec> SegmenterSpec(const SegArchitecture& arch,
                                          int height, int width,
                                          int num_classes) {
  if (arch.hidden_widths.empty()) {
    return absl::InvalidArgumentError("segmenter needs at least one hidden layer");
  }
  if (!(arch.dropout_ratio >= 0.0f && arch.dropout_ratio < 1.0f)) {
    return absl::InvalidArgumentError("dropout ratio must lie in [0, 1)");
  }
  if (num_classes < 2) {
    return absl::InvalidArgumentError("segmenter needs at least two classes");
  }
  NetworkSpec spec;
  spec.input_shape = {3, height, width};
  int channels = 3;
  for (int w : arch.hidden_widths) {
    if (w < 1) return absl::InvalidArgumentError("hidden widths must be positive");
    spec.layers.push_back(ConvLayer{3, channels, w, 1, 1});
    spec.layers.push_back(ReluLayer{});
    channels = w;
  }
  spec.layers.push_back(DropoutLayer{arch.dropout_ratio});
  spec.layers.push_back(ConvLayer{3, channels, num_classes, 1, 1});
  spec.layers.push_back(ChannelSoftmaxLayer{});
  absl::StatusOr<std::vector<Shape>> shapes = InferShapes(spec);
  if (!shapes.ok()) return shapes.status();
  return spec;
}

std::string OptimizerName(OptimizerKind kind) {
  return kind == OptimizerKind::kDpsgd ? "dpsgd" : "sgd";
}

absl::StatusOr<OptimizerKind> ParseOptimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "dpsgd") return OptimizerKind::kDpsgd;
  return absl::InvalidArgumentError(
      absl::StrCat("unknown optimizer '", absl::string_view(name.data(), name.size()),
                   "' (expected sgd or dpsgd)"));
}

absl::Status ValidateTrainConfig(const TrainConfig& c) {
  if (c.epochs < 0) return absl::InvalidArgumentError("epochs must be >= 0");
  if (c.batch_size < 1) return absl::InvalidArgumentError("batch_size must be positive");
  if (!(c.learning_rate > 0.0f)) {
    return absl::InvalidArgumentError("learning_rate must be positive");
  }
  if (!(c.momentum >= 0.0f && c.momentum < 1.0f)) {
    return absl::InvalidArgumentError("momentum must lie in [0, 1)");
  }
  if (!(c.dropout_ratio >= 0.0f && c.dropout_ratio < 1.0f)) {
    return absl::InvalidArgumentError("dropout_ratio must lie in [0, 1)");
  }
  if (c.optimizer == OptimizerKind::kDpsgd) {
    if (!(c.noise_variance >= 0.0) || !std::isfinite(c.noise_variance)) {
      return absl::InvalidArgumentError("noise_variance must be finite and >= 0");
    }
    if (!(c.clip_quantile > 0.0 && c.clip_quantile <= 1.0)) {
      return absl::InvalidArgumentError("clip_quantile must lie in (0, 1]");
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<Network> InitialSegmenter(const SegArchitecture& arch, int height,
                                         int width, int num_classes,
                                         uint64_t seed) {
  absl::StatusOr<NetworkSpec> spec = SegmenterSpec(arch, height, width, num_classes);
  if (!spec.ok()) return spec.status();
  return Network::Create(*std::move(spec), DeriveSeed(seed, "init"));
}

Tensor PrepareInput(const Tensor& image) {
  Tensor x = image;
  for (float& v : x.data()) v -= 0.5f;
  return x;
}

absl::StatusOr<SegModel> TrainSegmenter(const std::vector<LabeledImage>& data,
                                        int num_classes,
                                        const SegArchitecture& arch,
                                        const TrainConfig& config) {
  if (data.empty()) return absl::InvalidArgumentError("training set is empty");
  if (absl::Status s = ValidateTrainConfig(config); !s.ok()) return s;
  const int h = data[0].height;
  const int w = data[0].width;
  std::vector<Example> examples;
  examples.reserve(data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    if (data[i].height != h || data[i].width != w) {
      return absl::InvalidArgumentError(absl::StrCat(
          "training image ", i, " is ", data[i].height, "x", data[i].width,
          ", expected ", h, "x", w));
    }
    absl::StatusOr<Tensor> target = OneHot(data[i].labels, h, w, num_classes);
    if (!target.ok()) return target.status();
    examples.push_back({PrepareInput(data[i].image), *std::move(target)});
  }
  absl::StatusOr<Network> net = InitialSegmenter(arch, h, w, num_classes, config.seed);
  if (!net.ok()) return net.status();

  SegModel model;
  model.net = *std::move(net);
  model.train_config = config;
  model.num_classes = num_classes;
  const LossFunction loss = CrossEntropyLoss;
  if (config.optimizer == OptimizerKind::kDpsgd) {
    absl::StatusOr<std::vector<float>> clip =
        EstimateClipFactors(model.net, examples, loss, config.clip_quantile);
    if (!clip.ok()) return clip.status();
    model.clip_factors = *std::move(clip);
  }

  const uint64_t shuffle_seed = DeriveSeed(config.seed, "shuffle");
  const uint64_t dropout_seed = DeriveSeed(config.seed, "dropout");
  const uint64_t noise_seed = DeriveSeed(config.seed, "noise");
  MomentumBuffer buffer;
  std::vector<int> order(examples.size());
  int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(DeriveSeed(shuffle_seed, static_cast<uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (size_t begin = 0; begin < order.size(); begin += config.batch_size, ++step) {
      const size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<GradientSet> grads;
      grads.reserve(end - begin);
      for (size_t j = begin; j < end; ++j) {
        ForwardOptions options;
        options.stochastic = true;
        options.seed = DeriveSeed(dropout_seed, static_cast<uint64_t>(j) +
                                                    static_cast<uint64_t>(epoch) * order.size());
        options.dropout_ratio = config.dropout_ratio;
        const Example& ex = examples[order[j]];
        absl::StatusOr<ExampleGradient> g =
            ComputeExampleGradient(model.net, ex.input, ex.target, loss, options);
        if (!g.ok()) {
          // Parameters blown up to inf surface here as non-finite activations.
          return absl::Status(g.status().code(),
                              absl::StrCat("training diverged at step ", step, " (epoch ",
                                           epoch, "): ", g.status().message()));
        }
        if (!std::isfinite(g->loss)) {
          return absl::InternalError(
              absl::StrCat("training diverged: non-finite loss at step ", step,
                           " (epoch ", epoch, ")"));
        }
        epoch_loss += g->loss;
        grads.push_back(std::move(g->grads));
      }
      absl::Status s;
      if (config.optimizer == OptimizerKind::kDpsgd) {
        // Audit the clipping bound on exactly the gradients the step uses;
        // clipping is idempotent, so DpsgdStep leaves these untouched.
        absl::StatusOr<std::vector<GradientSet>> clipped = ClipPerExample(
            grads, model.net.group_of_tensor(), model.clip_factors);
        if (!clipped.ok()) return clipped.status();
        const int groups = static_cast<int>(model.clip_factors.size());
        for (const GradientSet& g : *clipped) {
          const std::vector<double> norms =
              GroupNorms(g, model.net.group_of_tensor(), groups);
          for (int k = 0; k < groups; ++k) {
            model.max_clip_ratio = std::max(
                model.max_clip_ratio, norms[k] / static_cast<double>(model.clip_factors[k]));
          }
        }
        grads = *std::move(clipped);
        DpsgdOptions opts;
        opts.clip_factors = model.clip_factors;
        opts.noise_variance = config.noise_variance;
        opts.learning_rate = config.learning_rate;
        opts.momentum = config.momentum;
        opts.seed = DeriveSeed(noise_seed, static_cast<uint64_t>(step));
        s = DpsgdStep(model.net.mutable_parameters(), model.net.group_of_tensor(), grads,
                      opts, buffer);
      } else if (grads.size() == 1) {
        s = SgdStep(model.net.mutable_parameters(), grads[0], config.learning_rate,
                    config.momentum, buffer);
      } else {
        absl::StatusOr<GradientSet> mean = MeanGradient(grads);
        if (!mean.ok()) return mean.status();
        s = SgdStep(model.net.mutable_parameters(), *mean, config.learning_rate,
                    config.momentum, buffer);
      }
      if (!s.ok()) return s;
    }
    model.loss_history.push_back(epoch_loss / static_cast<double>(examples.size()));
  }
  for (const Tensor& p : model.net.parameters()) {
    if (!p.AllFinite()) {
      return absl::InternalError(
          absl::StrCat("training diverged: non-finite parameters after step ", step));
    }
  }
  return model;
}

absl::StatusOr<Tensor> PredictPosterior(const SegModel& model, const Tensor& image,
                                        std::optional<float> stochastic_dropout_ratio,
                                        uint64_t seed) {
  if (absl::Status s = CheckDims(model, image); !s.ok()) return s;
  ForwardOptions options;
  if (stochastic_dropout_ratio.has_value()) {
    const float r = *stochastic_dropout_ratio;
    if (!(r >= 0.0f && r < 1.0f)) {
      return absl::InvalidArgumentError(
          absl::StrCat("test-time dropout ratio must lie in [0, 1), got ", r));
    }
    options.stochastic = true;
    options.seed = seed;
    options.dropout_ratio = r;
  }
  absl::StatusOr<Activations> act = model.net.Forward(PrepareInput(image), options);
  if (!act.ok()) return act.status();
  return std::move(act->values.back());
}

std::vector<int> ArgmaxLabels(const Tensor& posterior) {
  const int c = posterior.dim(0);
  const int64_t plane = posterior.size() / c;
  std::vector<int> labels(plane, 0);
  for (int64_t j = 0; j < plane; ++j) {
    float best = posterior[j];
    for (int k = 1; k < c; ++k) {
      if (posterior[k * plane + j] > best) {
        best = posterior[k * plane + j];
        labels[j] = k;
      }
    }
  }
  return labels;
}

double IouCounts::Miou() const {
  double sum = 0.0;
  int present = 0;
  for (size_t k = 0; k < union_size.size(); ++k) {
    if (union_size[k] == 0) continue;
    sum += static_cast<double>(intersection[k]) / static_cast<double>(union_size[k]);
    ++present;
  }
  return present == 0 ? 1.0 : sum / present;
}

absl::Status AccumulateIou(const std::vector<int>& predicted,
                           const std::vector<int>& ground_truth, IouCounts* counts) {
  if (predicted.size() != ground_truth.size()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "label maps differ in size: ", predicted.size(), " vs ", ground_truth.size()));
  }
  const int num_classes = static_cast<int>(counts->intersection.size());
  for (size_t i = 0; i < predicted.size(); ++i) {
    const int p = predicted[i];
    const int g = ground_truth[i];
    if (p < 0 || p >= num_classes || g < 0 || g >= num_classes) {
      return absl::InvalidArgumentError(absl::StrCat(
          "label id out of range [0, ", num_classes, ") at pixel ", i, ": pred ", p,
          ", gt ", g));
    }
    if (p == g) {
      ++counts->intersection[p];
      ++counts->union_size[p];
    } else {
      ++counts->union_size[p];
      ++counts->union_size[g];
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<double> Miou(const std::vector<int>& predicted,
                            const std::vector<int>& ground_truth, int num_classes) {
  IouCounts counts(num_classes);
  if (absl::Status s = AccumulateIou(predicted, ground_truth, &counts); !s.ok()) return s;
  return counts.Miou();
}

absl::StatusOr<double> DatasetMiou(const SegModel& model,
                                   const std::vector<LabeledImage>& data) {
  if (data.empty()) return absl::InvalidArgumentError("mIoU of an empty dataset");
  IouCounts counts(model.num_classes);
  for (const LabeledImage& scene : data) {
    absl::StatusOr<Tensor> p = PredictPosterior(model, scene.image);
    if (!p.ok()) return p.status();
    if (absl::Status s = AccumulateIou(ArgmaxLabels(*p), scene.labels, &counts); !s.ok()) {
      return s;
    }
  }
  return counts.Miou();
}

double MeanMaxConfidence(const Tensor& posterior) {
  const int c = posterior.dim(0);
  const int64_t plane = posterior.size() / c;
  double sum = 0.0;
  for (int64_t j = 0; j < plane; ++j) {
    float best = posterior[j];
    for (int k = 1; k < c; ++k) best = std::max(best, posterior[k * plane + j]);
    sum += best;
  }
  return sum / static_cast<double>(plane);
}

absl::StatusOr<std::vector<int>> RankByConfidence(const SegModel& model,
                                                  const std::vector<LabeledImage>& data) {
  if (data.empty()) return absl::InvalidArgumentError("cannot rank an empty dataset");
  std::vector<double> score(data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    absl::StatusOr<Tensor> p = PredictPosterior(model, data[i].image);
    if (!p.ok()) return p.status();
    score[i] = MeanMaxConfidence(*p);
  }
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return score[a] > score[b]; });
  return order;
}

absl::Status SaveSegModel(const std::filesystem::path& dir, const SegModel& model) {
  if (absl::Status s = SaveCheckpoint(dir, model.net); !s.ok()) return s;
  if (absl::Status s = WriteStringToFile(dir / kTrainConfigFile, FormatTrainConfig(model));
      !s.ok()) {
    return s;
  }
  std::string csv = "epoch,loss\n";
  for (size_t e = 0; e < model.loss_history.size(); ++e) {
    absl::StrAppend(&csv, e, ",", absl::StrFormat("%.17g", model.loss_history[e]), "\n");
  }
  return WriteStringToFile(dir / kLossHistoryFile, csv);
}

absl::StatusOr<SegModel> LoadSegModel(const std::filesystem::path& dir) {
  SegModel model;
  absl::StatusOr<Network> net = LoadCheckpoint(dir);
  if (!net.ok()) return net.status();
  model.net = *std::move(net);
  absl::StatusOr<std::string> config = ReadFileToString(dir / kTrainConfigFile);
  if (!config.ok()) return config.status();
  if (absl::Status s = ParseTrainConfig(*config, model); !s.ok()) return s;
  absl::StatusOr<std::string> history = ReadFileToString(dir / kLossHistoryFile);
  if (!history.ok()) return history.status();
  bool header = true;
  for (absl::string_view line : absl::StrSplit(*history, '\n', absl::SkipWhitespace())) {
    if (header) {
      header = false;
      continue;
    }
    const std::vector<absl::string_view> cols = absl::StrSplit(line, ',');
    double v;
    if (cols.size() != 2 || !absl::SimpleAtod(cols[1], &v)) {
      return absl::DataLossError(absl::StrCat("bad row in ", kLossHistoryFile, ": ", line));
    }
    model.loss_history.push_back(v);
  }
  const Shape& out = model.net.output_shape();
  if (out.size() != 3 || out[0] != model.num_classes) {
    return absl::DataLossError(absl::StrCat("checkpoint output ", ShapeToString(out),
                                            " does not match num_classes ",
                                            model.num_classes));
  }
  return model;
}

}  // namespace segleak
