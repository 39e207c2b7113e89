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


// Declarative description of one experiment, and its YAML form.
//
// The file is versioned (`schema_version`) and strict: unknown keys, wrong
// types and out-of-range values are errors that name the offending key.
// Omitted keys take the defaults of DefaultExperimentConfig().

#ifndef SEGLEAK_EXPERIMENT_CONFIG_H_
#define SEGLEAK_EXPERIMENT_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "segleak/attack.h"
#include "segleak/defense.h"
#include "segleak/scene.h"
#include "segleak/seg_model.h"

namespace segleak {

inline constexpr int kExperimentSchemaVersion = 1;

enum class AttackSetting {
  // Shadow shares the victim's data source, architecture and training
  // protocol; its membership split comes from ranking by victim confidence.
  kDependent,
  // Shadow trained on a different data source with its own architecture.
  kIndependent,
};

std::string AttackSettingName(AttackSetting setting);
absl::StatusOr<AttackSetting> ParseAttackSetting(std::string_view name);

// An additional attacker evaluated next to the main one (undefended only).
struct AttackVariant {
  std::string name;
  RepresentationKind representation = RepresentationKind::kSlm;
  int patch_size = 16;
  PatchSelector selector;

  friend bool operator==(const AttackVariant&, const AttackVariant&) = default;
};

struct ModelConfig {
  SegArchitecture architecture;
  // The seed field is ignored; seeds derive from the experiment seed.
  TrainConfig train;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ExperimentConfig {
  int schema_version = kExperimentSchemaVersion;
  uint64_t seed = 42;
  SceneConfig scene;
  SplitSizes splits;
  ModelConfig victim;
  AttackSetting setting = AttackSetting::kDependent;
  // Independent setting only: draw shadow data from ShiftedSceneConfig(scene)
  // rather than from `scene` itself.
  bool shadow_shifted_scene = true;
  ModelConfig shadow;
  // Main attacker; its selector is `selector`.
  AttackerConfig attacker;
  PatchSelector selector;
  std::vector<AttackVariant> variants;
  // Patch sizes of the patch-level structure sweep (slm, main selector).
  std::vector<int> structure_patch_sizes;
  // Mean-confidence, mean-loss and pixel-attacker baselines.
  bool baselines = true;
  std::vector<DefenseConfig> defenses = {DefenseConfig{}};

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// The defaults: 64x64 scenes, 96/64/96/64 splits, dependent setting, slm
// attacker on 16x16 patches with rejection at tau 0.99, no defense.
ExperimentConfig DefaultExperimentConfig();

// Defaults for the shadow model of an independent-setting run.
ModelConfig IndependentShadowConfig();

absl::Status ValidateExperimentConfig(const ExperimentConfig& config);

absl::StatusOr<ExperimentConfig> ParseExperimentConfig(std::string_view yaml);
absl::StatusOr<ExperimentConfig> LoadExperimentConfig(const std::filesystem::path& path);

// Fully resolved YAML; parses back to an equal config.
std::string FormatExperimentConfig(const ExperimentConfig& config);

// Stable short name of a defense, e.g. "none", "gauss-0.05", "dpsgd-0.001".
std::string DefenseTag(const DefenseConfig& defense);

}  // namespace segleak

#endif  // SEGLEAK_EXPERIMENT_CONFIG_H_
