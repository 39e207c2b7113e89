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


// Per-patch membership attackers: patch selection, shadow-model attacker
// training, image-level inference (mean of patch scores), and the three
// baselines adapted from classification attacks.

#ifndef SEGLEAK_ATTACK_H_
#define SEGLEAK_ATTACK_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "segleak/network.h"
#include "segleak/representation.h"
#include "segleak/tensor.h"

namespace segleak {

enum class SelectorKind { kSliding, kRandom, kRejection };

std::string SelectorName(SelectorKind kind);
absl::StatusOr<SelectorKind> ParseSelector(std::string_view name);

struct PatchSelector {
  SelectorKind kind = SelectorKind::kRejection;
  int step = 16;      // sliding
  int count = 10;     // random, rejection
  double tau = 0.99;  // rejection: accept iff mean true confidence <= tau
  // Rejection draws at most this many rects; 0 means 20 * count.
  int max_attempts = 0;

  int attempts() const { return max_attempts > 0 ? max_attempts : 20 * count; }
  friend bool operator==(const PatchSelector&, const PatchSelector&) = default;
};

absl::Status ValidateSelector(const PatchSelector& selector);

struct Selection {
  std::vector<PatchRect> rects;
  int rejected = 0;
};

// True for the status SelectPatches returns when rejection accepted nothing.
bool IsAllRejected(const absl::Status& status);

// Sliding: every step-aligned rect plus edge-clamped final row and column, so
// the rects cover the image; a step larger than either patch side would leave
// gaps and is an error. Random: `count` uniform rects. Rejection: the
// same draws as random, keeping those at or below tau until `count` are kept
// or attempts run out.
absl::StatusOr<Selection> SelectPatches(const PatchSelector& selector,
                                        const Tensor& p, const Tensor& y,
                                        int patch_height, int patch_width,
                                        uint64_t seed);

// conv(8)-relu-conv(16)-relu-conv(16)-relu-gap-dense(1)-sigmoid; 3x3 same
// convolutions, or pointwise ones when a patch side is 1.
absl::StatusOr<NetworkSpec> AttackerSpec(RepresentationKind kind, int num_classes,
                                         int patch_height, int patch_width);

struct AttackerConfig {
  RepresentationKind representation = RepresentationKind::kSlm;
  int patch_size = 16;
  int epochs = 30;
  float learning_rate = 0.01f;
  float momentum = 0.9f;
  // Random patches drawn from every shadow image in every epoch.
  int patches_per_image = 8;
  uint64_t seed = 0;

  friend bool operator==(const AttackerConfig&, const AttackerConfig&) = default;
};

absl::Status ValidateAttackerConfig(const AttackerConfig& config);

struct PatchAttacker {
  RepresentationKind representation = RepresentationKind::kSlm;
  int patch_height = 0;
  int patch_width = 0;
  int num_classes = 0;
  Network net;
  // Mean binary cross-entropy of every epoch.
  std::vector<double> loss_history;
};

// A posterior with its one-hot ground truth, both {C, H, W}.
struct LabeledPosterior {
  Tensor posterior;
  Tensor onehot;
};

// Shadow images are visited as alternating member / non-member pairs (the
// smaller side cycles), so both classes get equal weight; each SGD step
// averages the patches of one pair.
absl::StatusOr<PatchAttacker> TrainPatchAttacker(
    const std::vector<LabeledPosterior>& shadow_in,
    const std::vector<LabeledPosterior>& shadow_out, const AttackerConfig& config);

// Sigmoid score of a patch of P and Y.
absl::StatusOr<double> ScorePatch(const PatchAttacker& attacker,
                                  const Tensor& p_patch, const Tensor& y_patch);

// Score of an already-built representation patch.
absl::StatusOr<double> ScoreRepresentationPatch(const PatchAttacker& attacker,
                                                const Tensor& patch);

struct MembershipVerdict {
  double score = 0.0;  // mean of patch_scores
  std::vector<double> patch_scores;
  std::vector<PatchRect> rects;
  int rejected = 0;
  // Rejection accepted nothing and random selection was used instead.
  bool fell_back = false;
};

absl::StatusOr<MembershipVerdict> InferMembership(const PatchAttacker& attacker,
                                                  const Tensor& p, const Tensor& y,
                                                  const PatchSelector& selector,
                                                  uint64_t seed);

// Learning-free baselines; higher means "member".
double BaselineMeanConfidence(const Tensor& p);
absl::StatusOr<double> BaselineMeanLoss(const Tensor& p, const Tensor& y);

// The per-pixel learning-based baseline: the patch attacker on 1x1 concat
// patches, scored over every pixel.
AttackerConfig PixelAttackerConfig(const AttackerConfig& base);
PatchSelector PixelSelector();

absl::Status SavePatchAttacker(const std::filesystem::path& dir,
                               const PatchAttacker& attacker);
absl::StatusOr<PatchAttacker> LoadPatchAttacker(const std::filesystem::path& dir);

}  // namespace segleak

#endif  // SEGLEAK_ATTACK_H_
