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


#include "segleak/attack.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

#include "absl/strings/match.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_split.h"
#include "absl/strings/strip.h"
#include "segleak/loss.h"
#include "segleak/optimizer.h"
#include "segleak/rng.h"
#include "segleak/seg_model.h"
#include "segleak/tensor_io.h"

namespace segleak {
namespace {

constexpr absl::string_view kAllRejected = "all-rejected";
constexpr char kAttackerFile[] = "attacker.txt";
constexpr char kLossHistoryFile[] = "loss_history.csv";

PatchRect RandomRect(Rng& rng, int height, int width, int ph, int pw) {
  PatchRect r;
  r.height = ph;
  r.width = pw;
  r.top = std::uniform_int_distribution<int>(0, height - ph)(rng);
  r.left = std::uniform_int_distribution<int>(0, width - pw)(rng);
  return r;
}

// Offsets at multiples of `step` plus a final clamped one reaching the edge.
std::vector<int> SlidingOffsets(int extent, int patch, int step) {
  std::vector<int> offsets;
  for (int o = 0; o + patch <= extent; o += step) offsets.push_back(o);
  if (offsets.back() + patch < extent) offsets.push_back(extent - patch);
  return offsets;
}

}  // namespace

std::string SelectorName(SelectorKind kind) {
  switch (kind) {
    case SelectorKind::kSliding: return "sliding";
    case SelectorKind::kRandom: return "random";
    case SelectorKind::kRejection: return "rejection";
  }
  return "random";
}

absl::StatusOr<SelectorKind> ParseSelector(std::string_view name) {
  for (SelectorKind kind :
       {SelectorKind::kSliding, SelectorKind::kRandom, SelectorKind::kRejection}) {
    if (name == SelectorName(kind)) return kind;
  }
  return absl::InvalidArgumentError(
      absl::StrCat("unknown selector '", absl::string_view(name.data(), name.size()),
                   "' (expected sliding, random or rejection)"));
}

absl::Status ValidateSelector(const PatchSelector& s) {
  if (s.step < 1) return absl::InvalidArgumentError("selector step must be >= 1");
  if (s.count < 1) return absl::InvalidArgumentError("selector count must be >= 1");
  if (!(s.tau > 0.0 && s.tau <= 1.0)) {
    return absl::InvalidArgumentError(absl::StrCat("tau must lie in (0, 1], got ", s.tau));
  }
  if (s.max_attempts != 0 && s.max_attempts < s.count) {
    return absl::InvalidArgumentError("max_attempts must be >= count");
  }
  return absl::OkStatus();
}

bool IsAllRejected(const absl::Status& status) {
  return status.code() == absl::StatusCode::kResourceExhausted &&
         absl::StartsWith(status.message(), kAllRejected);
}

absl::StatusOr<Selection> SelectPatches(const PatchSelector& selector, const Tensor& p,
                                        const Tensor& y, int patch_height,
                                        int patch_width, uint64_t seed) {
  if (absl::Status s = ValidateSelector(selector); !s.ok()) return s;
  if (p.rank() != 3 || p.shape() != y.shape()) {
    return absl::InvalidArgumentError("selector needs matching {C,H,W} posterior and labels");
  }
  const int h = p.dim(1);
  const int w = p.dim(2);
  if (absl::Status s = CheckRect({0, 0, patch_height, patch_width}, h, w); !s.ok()) {
    return s;
  }
  Selection out;
  if (selector.kind == SelectorKind::kSliding) {
    if (selector.step > std::min(patch_height, patch_width)) {
      return absl::InvalidArgumentError(absl::StrCat(
          "sliding step ", selector.step, " exceeds the ", patch_height, "x", patch_width,
          " patch and would leave pixels uncovered"));
    }
    for (int top : SlidingOffsets(h, patch_height, selector.step)) {
      for (int left : SlidingOffsets(w, patch_width, selector.step)) {
        out.rects.push_back({top, left, patch_height, patch_width});
      }
    }
    return out;
  }
  Rng rng(MixSeed(seed));
  if (selector.kind == SelectorKind::kRandom) {
    for (int i = 0; i < selector.count; ++i) {
      out.rects.push_back(RandomRect(rng, h, w, patch_height, patch_width));
    }
    return out;
  }
  for (int attempt = 0;
       attempt < selector.attempts() && static_cast<int>(out.rects.size()) < selector.count;
       ++attempt) {
    const PatchRect r = RandomRect(rng, h, w, patch_height, patch_width);
    absl::StatusOr<double> conf = MeanTrueConfidence(p, y, r);
    if (!conf.ok()) return conf.status();
    if (*conf <= selector.tau) {
      out.rects.push_back(r);
    } else {
      ++out.rejected;
    }
  }
  if (out.rects.empty()) {
    return absl::ResourceExhaustedError(
        absl::StrCat(kAllRejected, ": every one of ", out.rejected,
                     " drawn patches has mean true-class confidence above tau=",
                     selector.tau));
  }
  return out;
}

absl::StatusOr<NetworkSpec> AttackerSpec(RepresentationKind kind, int num_classes,
                                         int patch_height, int patch_width) {
  if (num_classes < 2 || patch_height < 1 || patch_width < 1) {
    return absl::InvalidArgumentError("attacker needs >= 2 classes and a positive patch");
  }
  const bool pointwise = patch_height == 1 || patch_width == 1;
  const int k = pointwise ? 1 : 3;
  const int pad = pointwise ? 0 : 1;
  NetworkSpec spec;
  spec.input_shape = {RepresentationChannels(kind, num_classes), patch_height, patch_width};
  int channels = spec.input_shape[0];
  for (int width : {8, 16, 16}) {
    spec.layers.push_back(ConvLayer{k, channels, width, 1, pad});
    spec.layers.push_back(ReluLayer{});
    channels = width;
  }
  spec.layers.push_back(GlobalAvgPoolLayer{});
  spec.layers.push_back(DenseLayer{channels, 1});
  spec.layers.push_back(SigmoidLayer{});
  return spec;
}

absl::Status ValidateAttackerConfig(const AttackerConfig& c) {
  if (c.patch_size < 1) return absl::InvalidArgumentError("patch_size must be >= 1");
  if (c.epochs < 0) return absl::InvalidArgumentError("attacker epochs must be >= 0");
  if (!(c.learning_rate > 0.0f)) {
    return absl::InvalidArgumentError("attacker learning_rate must be positive");
  }
  if (!(c.momentum >= 0.0f && c.momentum < 1.0f)) {
    return absl::InvalidArgumentError("attacker momentum must lie in [0, 1)");
  }
  if (c.patches_per_image < 1) {
    return absl::InvalidArgumentError("patches_per_image must be >= 1");
  }
  return absl::OkStatus();
}

absl::StatusOr<PatchAttacker> TrainPatchAttacker(
    const std::vector<LabeledPosterior>& shadow_in,
    const std::vector<LabeledPosterior>& shadow_out, const AttackerConfig& config) {
  if (shadow_in.empty() || shadow_out.empty()) {
    return absl::InvalidArgumentError("attacker training needs member and non-member shadow data");
  }
  if (absl::Status s = ValidateAttackerConfig(config); !s.ok()) return s;
  const Shape& shape = shadow_in[0].posterior.shape();
  if (shape.size() != 3) {
    return absl::InvalidArgumentError("shadow posteriors must be {C,H,W} maps");
  }
  PatchAttacker attacker;
  attacker.representation = config.representation;
  attacker.patch_height = config.patch_size;
  attacker.patch_width = config.patch_size;
  attacker.num_classes = shape[0];
  if (absl::Status s = CheckRect({0, 0, config.patch_size, config.patch_size}, shape[1],
                                 shape[2]);
      !s.ok()) {
    return s;
  }
  // Full-image representations, cropped afresh every epoch.
  std::vector<Tensor> reps[2];
  for (int label = 0; label < 2; ++label) {
    for (const LabeledPosterior& lp : label == 1 ? shadow_in : shadow_out) {
      if (lp.posterior.shape() != shape) {
        return absl::InvalidArgumentError(absl::StrCat(
            "shadow posterior ", ShapeToString(lp.posterior.shape()), " differs from ",
            ShapeToString(shape)));
      }
      absl::StatusOr<Tensor> rep =
          BuildRepresentation(config.representation, lp.posterior, lp.onehot);
      if (!rep.ok()) return rep.status();
      reps[label].push_back(*std::move(rep));
    }
  }
  absl::StatusOr<NetworkSpec> spec = AttackerSpec(config.representation, attacker.num_classes,
                                                  config.patch_size, config.patch_size);
  if (!spec.ok()) return spec.status();
  absl::StatusOr<Network> net = Network::Create(*spec, DeriveSeed(config.seed, "init"));
  if (!net.ok()) return net.status();
  attacker.net = *std::move(net);

  const LossFunction loss = BinaryCrossEntropyLoss;
  const Tensor targets[2] = {Tensor({1}, 0.0f), Tensor({1}, 1.0f)};
  const uint64_t order_seed = DeriveSeed(config.seed, "order");
  const uint64_t patch_seed = DeriveSeed(config.seed, "patches");
  const size_t pairs = std::max(reps[0].size(), reps[1].size());
  MomentumBuffer buffer;
  int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng order_rng(DeriveSeed(order_seed, static_cast<uint64_t>(epoch)));
    std::vector<int> order[2];
    for (int label = 0; label < 2; ++label) {
      order[label].resize(reps[label].size());
      std::iota(order[label].begin(), order[label].end(), 0);
      std::shuffle(order[label].begin(), order[label].end(), order_rng);
    }
    Rng patch_rng(DeriveSeed(patch_seed, static_cast<uint64_t>(epoch)));
    double epoch_loss = 0.0;
    int64_t epoch_patches = 0;
    for (size_t k = 0; k < pairs; ++k, ++step) {
      std::vector<GradientSet> grads;
      for (int label : {1, 0}) {
        const Tensor& rep = reps[label][order[label][k % order[label].size()]];
        for (int n = 0; n < config.patches_per_image; ++n) {
          const PatchRect r = RandomRect(patch_rng, shape[1], shape[2], config.patch_size,
                                         config.patch_size);
          absl::StatusOr<Tensor> patch = Crop(rep, r);
          if (!patch.ok()) return patch.status();
          absl::StatusOr<ExampleGradient> g =
              ComputeExampleGradient(attacker.net, *patch, targets[label], loss);
          if (!g.ok() || !std::isfinite(g->loss)) {
            return absl::InternalError(absl::StrCat(
                "attacker training diverged at step ", step,
                g.ok() ? std::string(": non-finite loss") : ": " + g.status().ToString()));
          }
          epoch_loss += g->loss;
          ++epoch_patches;
          grads.push_back(std::move(g->grads));
        }
      }
      absl::StatusOr<GradientSet> mean = MeanGradient(grads);
      if (!mean.ok()) return mean.status();
      if (absl::Status s = SgdStep(attacker.net.mutable_parameters(), *mean,
                                   config.learning_rate, config.momentum, buffer);
          !s.ok()) {
        return s;
      }
    }
    attacker.loss_history.push_back(epoch_loss / static_cast<double>(epoch_patches));
  }
  return attacker;
}

absl::StatusOr<double> ScoreRepresentationPatch(const PatchAttacker& attacker,
                                                const Tensor& patch) {
  absl::StatusOr<Activations> act = attacker.net.Forward(patch);
  if (!act.ok()) return act.status();
  return static_cast<double>(act->output()[0]);
}

absl::StatusOr<double> ScorePatch(const PatchAttacker& attacker, const Tensor& p_patch,
                                  const Tensor& y_patch) {
  if (p_patch.rank() != 3 || p_patch.dim(0) != attacker.num_classes) {
    return absl::InvalidArgumentError(absl::StrCat(
        "attacker expects ", attacker.num_classes, "-class posteriors, got ",
        ShapeToString(p_patch.shape())));
  }
  absl::StatusOr<Tensor> rep = BuildRepresentation(attacker.representation, p_patch, y_patch);
  if (!rep.ok()) return rep.status();
  return ScoreRepresentationPatch(attacker, *rep);
}

absl::StatusOr<MembershipVerdict> InferMembership(const PatchAttacker& attacker,
                                                  const Tensor& p, const Tensor& y,
                                                  const PatchSelector& selector,
                                                  uint64_t seed) {
  MembershipVerdict verdict;
  if (p.rank() != 3 || p.dim(0) != attacker.num_classes) {
    return absl::InvalidArgumentError(absl::StrCat(
        "attacker expects ", attacker.num_classes, "-class posteriors, got ",
        ShapeToString(p.shape())));
  }
  absl::StatusOr<Selection> selection =
      SelectPatches(selector, p, y, attacker.patch_height, attacker.patch_width, seed);
  if (!selection.ok() && IsAllRejected(selection.status())) {
    PatchSelector random = selector;
    random.kind = SelectorKind::kRandom;
    const int rejected = selector.attempts();
    selection = SelectPatches(random, p, y, attacker.patch_height, attacker.patch_width, seed);
    if (selection.ok()) selection->rejected = rejected;
    verdict.fell_back = true;
  }
  if (!selection.ok()) return selection.status();
  absl::StatusOr<Tensor> rep = BuildRepresentation(attacker.representation, p, y);
  if (!rep.ok()) return rep.status();
  double sum = 0.0;
  for (const PatchRect& r : selection->rects) {
    absl::StatusOr<Tensor> patch = Crop(*rep, r);
    if (!patch.ok()) return patch.status();
    absl::StatusOr<double> s = ScoreRepresentationPatch(attacker, *patch);
    if (!s.ok()) return s.status();
    verdict.patch_scores.push_back(*s);
    sum += *s;
  }
  verdict.rects = std::move(selection->rects);
  verdict.rejected = selection->rejected;
  verdict.score = sum / static_cast<double>(verdict.patch_scores.size());
  return verdict;
}

double BaselineMeanConfidence(const Tensor& p) { return MeanMaxConfidence(p); }

absl::StatusOr<double> BaselineMeanLoss(const Tensor& p, const Tensor& y) {
  absl::StatusOr<Tensor> slm = StructuredLossMap(p, y);
  if (!slm.ok()) return slm.status();
  double sum = 0.0;
  for (float v : slm->data()) sum += v;
  return -sum / static_cast<double>(slm->size());
}

AttackerConfig PixelAttackerConfig(const AttackerConfig& base) {
  AttackerConfig config = base;
  config.representation = RepresentationKind::kConcat;
  config.patch_size = 1;
  config.patches_per_image = 64;
  return config;
}

PatchSelector PixelSelector() {
  PatchSelector selector;
  selector.kind = SelectorKind::kSliding;
  selector.step = 1;
  return selector;
}

absl::Status SavePatchAttacker(const std::filesystem::path& dir,
                               const PatchAttacker& attacker) {
  if (absl::Status s = SaveCheckpoint(dir, attacker.net); !s.ok()) return s;
  const std::string meta = absl::StrCat(
      "representation = ", RepresentationName(attacker.representation), "\n",
      "patch_height = ", attacker.patch_height, "\n", "patch_width = ", attacker.patch_width,
      "\n", "num_classes = ", attacker.num_classes, "\n");
  if (absl::Status s = WriteStringToFile(dir / kAttackerFile, meta); !s.ok()) return s;
  std::string csv = "epoch,loss\n";
  for (size_t e = 0; e < attacker.loss_history.size(); ++e) {
    absl::StrAppend(&csv, e, ",", absl::StrFormat("%.17g", attacker.loss_history[e]), "\n");
  }
  return WriteStringToFile(dir / kLossHistoryFile, csv);
}

absl::StatusOr<PatchAttacker> LoadPatchAttacker(const std::filesystem::path& dir) {
  PatchAttacker attacker;
  absl::StatusOr<Network> net = LoadCheckpoint(dir);
  if (!net.ok()) return net.status();
  attacker.net = *std::move(net);
  absl::StatusOr<std::string> meta = ReadFileToString(dir / kAttackerFile);
  if (!meta.ok()) return meta.status();
  std::map<std::string, std::string, std::less<>> kv;
  for (absl::string_view line : absl::StrSplit(*meta, '\n', absl::SkipWhitespace())) {
    const std::pair<absl::string_view, absl::string_view> parts =
        absl::StrSplit(line, absl::MaxSplits('=', 1));
    kv[std::string(absl::StripAsciiWhitespace(parts.first))] =
        std::string(absl::StripAsciiWhitespace(parts.second));
  }
  absl::StatusOr<RepresentationKind> kind = ParseRepresentation(kv["representation"]);
  if (!kind.ok()) return kind.status();
  attacker.representation = *kind;
  if (!absl::SimpleAtoi(kv["patch_height"], &attacker.patch_height) ||
      !absl::SimpleAtoi(kv["patch_width"], &attacker.patch_width) ||
      !absl::SimpleAtoi(kv["num_classes"], &attacker.num_classes)) {
    return absl::DataLossError(absl::StrCat("malformed ", kAttackerFile));
  }
  absl::StatusOr<std::string> history = ReadFileToString(dir / kLossHistoryFile);
  if (!history.ok()) return history.status();
  bool header = true;
  for (absl::string_view line : absl::StrSplit(*history, '\n', absl::SkipWhitespace())) {
    if (std::exchange(header, false)) continue;
    const std::vector<absl::string_view> cols = absl::StrSplit(line, ',');
    double v;
    if (cols.size() != 2 || !absl::SimpleAtod(cols[1], &v)) {
      return absl::DataLossError(absl::StrCat("bad row in ", kLossHistoryFile));
    }
    attacker.loss_history.push_back(v);
  }
  const Shape want = {RepresentationChannels(attacker.representation, attacker.num_classes),
                      attacker.patch_height, attacker.patch_width};
  if (attacker.net.spec().input_shape != want) {
    return absl::DataLossError("attacker checkpoint does not match its metadata");
  }
  return attacker;
}

}  // namespace segleak
