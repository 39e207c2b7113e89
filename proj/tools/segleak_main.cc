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


// segleak: command-line driver for membership-inference experiments on
// segmentation models.
//
//   segleak run --out runs/a                 # full pipeline, default config
//   segleak gen-data --config exp.yaml --out runs/b
//   segleak report --config exp.yaml --out runs/b
//
// Errors are reported as one JSON object on stderr and a nonzero exit code.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "json.hpp"
#include "segleak/experiment.h"
#include "segleak/experiment_config.h"

namespace {

struct Flags {
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<double> tau;
  std::string out;
  bool quiet = false;
};

int ReportError(const std::string& command, const absl::Status& status) {
  nlohmann::ordered_json j;
  j["error"] = {{"command", command},
                {"code", absl::StatusCodeToString(status.code())},
                {"message", std::string(status.message())}};
  std::cerr << j.dump() << "\n";
  return 1;
}

absl::StatusOr<segleak::ExperimentConfig> ResolveConfig(const Flags& flags) {
  segleak::ExperimentConfig config = segleak::DefaultExperimentConfig();
  if (!flags.config.empty()) {
    absl::StatusOr<segleak::ExperimentConfig> loaded =
        segleak::LoadExperimentConfig(flags.config);
    if (!loaded.ok()) return loaded.status();
    config = *std::move(loaded);
  }
  if (flags.seed) config.seed = *flags.seed;
  if (flags.tau) config.selector.tau = *flags.tau;
  if (absl::Status s = segleak::ValidateExperimentConfig(config); !s.ok()) return s;
  return config;
}

absl::Status Dispatch(const std::string& command, const segleak::ExperimentConfig& config,
                      const std::filesystem::path& out, const segleak::RunOptions& options) {
  if (command == "gen-data") return segleak::GenerateDataStage(config, out, options);
  if (command == "train-victim") return segleak::TrainVictimStage(config, out, options);
  if (command == "train-shadow") return segleak::TrainShadowStage(config, out, options);
  if (command == "train-attacker") return segleak::TrainAttackerStage(config, out, options);
  if (command == "attack") return segleak::AttackStage(config, out, options);
  if (command == "defend-sweep") return segleak::DefendSweepStage(config, out, options);
  absl::StatusOr<segleak::RunReport> report =
      command == "report" ? segleak::ReportStage(config, out, options)
                          : segleak::RunExperiment(config, out, options);
  return report.status();
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training allocates and frees many mid-sized tensors; keep them on the
  // heap instead of round-tripping through mmap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Membership inference against semantic segmentation models"};
  app.require_subcommand(1);
  Flags flags;
  app.add_option("--config", flags.config, "YAML experiment config (default: built-in)")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", flags.seed, "Master seed, overrides the config");
  app.add_option("--tau", flags.tau, "Rejection threshold of the main selector");
  app.add_option("--out", flags.out, "Run directory")->required();
  app.add_flag("--quiet", flags.quiet, "Suppress progress output");

  const std::pair<const char*, const char*> commands[] = {
      {"gen-data", "Generate scenes and membership splits"},
      {"train-victim", "Train the victim (and any DP-SGD victims)"},
      {"train-shadow", "Split the shadow pool and train the shadow model(s)"},
      {"train-attacker", "Train the patch attackers on shadow posteriors"},
      {"attack", "Attack the undefended victim"},
      {"defend-sweep", "Attack the victim under every configured defense"},
      {"report", "Recompute metrics and write reports"},
      {"run", "Run every stage, then report"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    const std::string sub = app.get_subcommands().empty()
                                ? ""
                                : app.get_subcommands().front()->get_name();
    std::cerr << app.help() << "\n";
    ReportError(sub, absl::InvalidArgumentError(e.what()));
    return 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  absl::StatusOr<segleak::ExperimentConfig> config = ResolveConfig(flags);
  if (!config.ok()) return ReportError(command, config.status());
  segleak::RunOptions options;
  if (!flags.quiet) {
    options.log = [](std::string_view line) { std::cerr << line << std::endl; };
  }
  if (absl::Status s = Dispatch(command, *config, flags.out, options); !s.ok()) {
    return ReportError(command, s);
  }
  if (command == "report" || command == "run") {
    if (!flags.quiet) {
      std::cerr << "reports written to " << (std::filesystem::path(flags.out) / "reports")
                << std::endl;
    }
  }
  return 0;
}
