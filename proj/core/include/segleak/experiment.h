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


// End-to-end experiment pipeline: data generation, victim and shadow
// training, attacker training, attack evaluation under each defense, and
// report emission. Every stage reads its inputs from and writes its outputs
// to one run directory:
//
//   data/       images, labels and membership splits
//   models/     victim and shadow segmenters (one per DP-SGD strength)
//   attacker/   trained attackers, per shadow view
//   verdicts/   per-image scores and held-out utility, per defense
//   reports/    metric CSVs, curves, summary.txt, ledger.json
//
// All randomness derives from the experiment seed through named substreams:
// "data", "split" and "shadow-data" (scenes and splits), "victim", "shadow",
// "attacker", "defense" and "shadow-defense" (per-query defense noise, indexed
// by image), and "selector" (patch selection, indexed by image). Any stage
// can therefore be re-run in isolation and reproduces its outputs byte for
// byte.

#ifndef SEGLEAK_EXPERIMENT_H_
#define SEGLEAK_EXPERIMENT_H_

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "segleak/experiment_config.h"

namespace segleak {

struct RunOptions {
  // Receives one line per progress event; null discards them.
  std::function<void(std::string_view)> log;
};

// Stages, in pipeline order. A failing stage returns an error prefixed with
// its name; artifacts written before the failure stay on disk.
absl::Status GenerateDataStage(const ExperimentConfig& config,
                               const std::filesystem::path& out,
                               const RunOptions& options = {});
absl::Status TrainVictimStage(const ExperimentConfig& config,
                              const std::filesystem::path& out,
                              const RunOptions& options = {});
absl::Status TrainShadowStage(const ExperimentConfig& config,
                              const std::filesystem::path& out,
                              const RunOptions& options = {});
absl::Status TrainAttackerStage(const ExperimentConfig& config,
                                const std::filesystem::path& out,
                                const RunOptions& options = {});
// Evaluates the undefended victim: main attacker, variants, structure sweep
// and baselines.
absl::Status AttackStage(const ExperimentConfig& config,
                         const std::filesystem::path& out,
                         const RunOptions& options = {});
// Evaluates every configured defense other than "none".
absl::Status DefendSweepStage(const ExperimentConfig& config,
                              const std::filesystem::path& out,
                              const RunOptions& options = {});

struct AttackMetrics {
  std::string attacker;  // "main", a variant name, "pixel", "mean-confidence", ...
  double auc = 0.0;
  double max_f = 0.0;
  // Over every evaluated patch, labelled by its image; NaN for baselines.
  double patch_auc = 0.0;
  double member_mean = 0.0;
  double non_member_mean = 0.0;
  int fallbacks = 0;  // images whose rejection accepted nothing
};

struct DefenseReport {
  DefenseConfig defense;
  std::string tag;
  // Held-out mIoU of the defended victim, intersections and unions pooled
  // over images; image_miou averages the per-image values instead.
  double miou = 0.0;
  double image_miou = 0.0;
  std::vector<AttackMetrics> attacks;

  // Null when the attacker was not evaluated under this defense.
  const AttackMetrics* Find(std::string_view attacker) const;
};

struct StructurePoint {
  int patch_size = 0;
  double patch_auc = 0.0;
  double image_auc = 0.0;
};

struct RunReport {
  // "none" first, then the other defenses in configuration order.
  std::vector<DefenseReport> defenses;
  std::vector<StructurePoint> structure;
  double random_guess_f = 0.0;
  // DP-SGD models only: largest clipped-norm / clip ratio seen in training,
  // keyed by model name.
  std::vector<std::pair<std::string, double>> clip_audit;

  const DefenseReport* Find(std::string_view tag) const;
};

// Recomputes every metric from persisted verdicts and models, and writes
// reports/: privacy_utility.csv (defense,param,auc,max_f,miou), attacks.csv,
// structure.csv, curves/<defense>/<attacker>_{roc,pr}.csv, summary.txt and
// ledger.json (config, artifact hashes, metrics, stage timings).
absl::StatusOr<RunReport> ReportStage(const ExperimentConfig& config,
                                      const std::filesystem::path& out,
                                      const RunOptions& options = {});

// All stages in order, then the report.
absl::StatusOr<RunReport> RunExperiment(const ExperimentConfig& config,
                                        const std::filesystem::path& out,
                                        const RunOptions& options = {});

}  // namespace segleak

#endif  // SEGLEAK_EXPERIMENT_H_
