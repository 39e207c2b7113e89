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


// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Criteria 3-9 read the reports of two seed-42 pipeline
// runs (configs/acceptance_dependent.yaml, configs/acceptance_independent.yaml);
// criterion 10 runs the `segleak` CLI twice on the same config.
//
//   segleak_acceptance [--work <dir>] [--known-failures 4,9]
//
// --known-failures lists criteria documented as not attainable at this
// scale; they still print FAIL, but only other failures change the exit
// status.

#include <algorithm>
#include <cfloat>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "absl/status/statusor.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "oracles.h"
#include "segleak/experiment.h"
#include "segleak/experiment_config.h"
#include "segleak/loss.h"
#include "segleak/metrics.h"
#include "segleak/network.h"
#include "segleak/representation.h"
#include "segleak/tensor_io.h"

namespace segleak {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// Tolerances and thresholds.
constexpr double kMapTolerance = 1e-6;
constexpr double kAucTolerance = 1e-9;
constexpr int kOracleInstances = 150;
constexpr double kOracleSeconds = 30.0;
constexpr double kGradientTolerance = 1e-3;
// eps^(1/5) for 32-bit floats: balances the O(h^4) truncation of the
// five-point rule against O(eps / h) rounding.
const double kGradientStep = std::pow(static_cast<double>(FLT_EPSILON), 0.2);
constexpr double kGradientSeconds = 60.0;
constexpr double kAttackAuc = 0.70;
constexpr double kBaselineAuc = 0.55;
constexpr double kDefaultRunSeconds = 600.0;
constexpr double kStructureJitter = 0.03;
constexpr double kRankingSlack = 0.02;
constexpr double kArgmaxMaxDrop = 0.10;
constexpr double kArgmaxFloor = 0.60;
constexpr double kGaussJitter = 0.03;
constexpr double kGaussNoiseGain = 0.02;
constexpr double kGaussDrop = 0.15;
constexpr double kUtilityBudget = 0.05;
constexpr double kDpsgdDrop = 0.10;
constexpr double kClipTolerance = 1e-6;
constexpr double kDropoutUtilityGap = 0.10;
constexpr double kSuiteSeconds = 1200.0;
// Main attacker AUC of the seed-42 calibration run; later runs must stay
// within kRegressionSlack of it.
constexpr double kCalibratedMainAuc = 0.9937;
constexpr double kRegressionSlack = 0.05;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  // Records a check; returns its result.
  bool Check(bool ok, std::string what) {
    notes.push_back(absl::StrCat(ok ? "" : "FAILED ", what));
    pass = pass && ok;
    return ok;
  }
};

// ---------------------------------------------------------------------------
// 1. Formula oracles.

Outcome FormulaOracles() {
  Outcome o;
  const Clock::time_point start = Clock::now();
  std::mt19937_64 rng(20260101);
  std::uniform_int_distribution<int> classes(2, 6), side(1, 12);

  double slm_err = 0.0, mtc_err = 0.0, ce_err = 0.0;
  for (int t = 0; t < kOracleInstances; ++t) {
    const int c = classes(rng), h = side(rng), w = side(rng);
    const Tensor p = testing::RandomPosterior(c, h, w, rng);
    const Tensor y = testing::RandomOneHot(c, h, w, rng);
    const Tensor slm = *StructuredLossMap(p, y);
    const std::vector<double> want = testing::StructuredLossOracle(p, y, kLogEpsilon);
    for (size_t j = 0; j < want.size(); ++j) slm_err = std::max(slm_err, std::abs(slm[j] - want[j]));
    const int ph = std::uniform_int_distribution<int>(1, h)(rng);
    const int pw = std::uniform_int_distribution<int>(1, w)(rng);
    const PatchRect r{std::uniform_int_distribution<int>(0, h - ph)(rng),
                      std::uniform_int_distribution<int>(0, w - pw)(rng), ph, pw};
    mtc_err = std::max(mtc_err, std::abs(*MeanTrueConfidence(p, y, r) -
                                         testing::MeanTrueConfidenceOracle(p, y, r.top, r.left,
                                                                           ph, pw)));
    ce_err = std::max(ce_err, std::abs(CrossEntropyLoss(p, y)->loss -
                                       testing::CrossEntropyOracle(p, y, kLogEpsilon)));
  }
  o.Check(slm_err <= kMapTolerance, absl::StrFormat("slm max err %.2e", slm_err));
  o.Check(mtc_err <= kMapTolerance, absl::StrFormat("mean-true-conf max err %.2e", mtc_err));
  o.Check(ce_err <= kMapTolerance, absl::StrFormat("cross-entropy max err %.2e", ce_err));

  // Convolution: error on the conditioning scale |b| + sum |w x| of each sum.
  double conv_err = 0.0;
  std::uniform_int_distribution<int> dim(1, 20), ch(1, 6), kern(1, 4), str(1, 3);
  for (int t = 0; t < kOracleInstances;) {
    ConvLayer layer{kern(rng), ch(rng), ch(rng), str(rng), 0};
    layer.padding = std::uniform_int_distribution<int>(0, layer.kernel)(rng);
    const Shape shape{layer.in_channels, dim(rng), dim(rng)};
    absl::StatusOr<Network> net = Network::Create({shape, {layer}}, t);
    if (!net.ok()) continue;
    ++t;
    net->mutable_parameters()[1] = testing::RandomTensor({layer.out_channels}, rng);
    const Tensor x = testing::RandomTensor(shape, rng);
    const Tensor out = net->Forward(x)->output();
    std::vector<double> mag;
    const std::vector<double> want =
        testing::ConvolutionOracle(layer, x, net->parameters()[0], net->parameters()[1], &mag);
    for (size_t j = 0; j < want.size(); ++j) {
      conv_err = std::max(conv_err, std::abs(out[j] - want[j]) / std::max(1.0, mag[j]));
    }
  }
  o.Check(conv_err <= kMapTolerance, absl::StrFormat("conv scaled max err %.2e", conv_err));

  // AUC, with heavy ties.
  double auc_err = 0.0;
  for (int t = 0; t < kOracleInstances; ++t) {
    const int n = std::uniform_int_distribution<int>(2, 200)(rng);
    const int levels = std::uniform_int_distribution<int>(2, 50)(rng);
    std::vector<ScoredExample> ex(n);
    std::vector<double> scores(n);
    std::vector<bool> member(n);
    for (int i = 0; i < n; ++i) {
      scores[i] = std::uniform_int_distribution<int>(0, levels)(rng) / static_cast<double>(levels);
      member[i] = i == 0 || (i != 1 && std::bernoulli_distribution(0.5)(rng));
      ex[i] = {scores[i], member[i]};
    }
    auc_err = std::max(auc_err,
                       std::abs(Auc(*RocCurve(ex)) - testing::PairwiseAucOracle(scores, member)));
  }
  o.Check(auc_err <= kAucTolerance, absl::StrFormat("auc max err %.2e", auc_err));
  const double s = Seconds(start);
  o.Check(s < kOracleSeconds, absl::StrFormat("%d instances each, %.1f s", kOracleInstances, s));
  return o;
}

// ---------------------------------------------------------------------------
// 2. Gradients of every layer type.

Outcome Gradients() {
  Outcome o;
  const Clock::time_point start = Clock::now();
  struct Case {
    const char* name;
    NetworkSpec spec;
    bool stochastic;
    testing::Functional functional;
  };
  const testing::Functional lin = testing::Functional::kLinear;
  const std::vector<Case> cases = {
      {"conv", {{2, 5, 5}, {ConvLayer{3, 2, 3, 1, 1}}}, false, lin},
      {"conv-strided", {{2, 7, 6}, {ConvLayer{3, 2, 2, 2, 1}}}, false, lin},
      {"relu", {{2, 5, 5}, {ConvLayer{3, 2, 3, 1, 1}, ReluLayer{}}}, false, lin},
      {"maxpool", {{2, 6, 6}, {ConvLayer{3, 2, 2, 1, 1}, MaxPoolLayer{2}}}, false, lin},
      {"gap", {{2, 5, 5}, {ConvLayer{3, 2, 3, 1, 1}, GlobalAvgPoolLayer{}}}, false, lin},
      {"dense", {{3, 4, 4}, {DenseLayer{3, 2}}}, false, lin},
      {"dropout", {{2, 5, 5}, {ConvLayer{3, 2, 3, 1, 1}, DropoutLayer{0.3f}}}, true, lin},
      {"softmax", {{2, 4, 4}, {ConvLayer{3, 2, 4, 1, 1}, ChannelSoftmaxLayer{}}}, false,
       testing::Functional::kLogLikelihood},
      {"sigmoid",
       {{2, 4, 4}, {ConvLayer{3, 2, 2, 1, 1}, GlobalAvgPoolLayer{}, DenseLayer{2, 1},
                    SigmoidLayer{}}},
       false, lin},
  };
  std::vector<std::string> parts;
  for (const Case& c : cases) {
    std::mt19937_64 rng(77);
    Network net = *Network::Create(c.spec, 3);
    for (Tensor& p : net.mutable_parameters()) {
      for (float& v : p.data()) v += std::uniform_real_distribution<float>(-0.2f, 0.2f)(rng);
    }
    const Tensor x = testing::RandomTensor(c.spec.input_shape, rng, 0.0f, 1.0f);
    const testing::GradCheckResult r =
        CheckGradients(net, x, {.stochastic = c.stochastic, .seed = 5}, rng, c.functional,
                       kGradientStep, 48, 1e-2, testing::Stencil::kFivePoint);
    const bool ok = r.checked > 0 && r.max_relative_error <= kGradientTolerance;
    o.pass = o.pass && ok;
    parts.push_back(absl::StrFormat("%s%s %.1e (%d/%d)", ok ? "" : "FAILED ", c.name,
                                    r.max_relative_error, r.checked,
                                    r.checked + r.skipped));
  }
  o.notes.push_back(absl::StrJoin(parts, ", "));
  const double s = Seconds(start);
  o.Check(s < kGradientSeconds, absl::StrFormat("%.1f s", s));
  return o;
}

// ---------------------------------------------------------------------------
// Pipeline runs.

struct Run {
  RunReport report;
  double seconds = 0.0;
};

absl::StatusOr<Run> RunConfig(const fs::path& config_path, const fs::path& out) {
  absl::StatusOr<ExperimentConfig> config = LoadExperimentConfig(config_path);
  if (!config.ok()) return config.status();
  fs::remove_all(out);
  RunOptions options;
  const Clock::time_point start = Clock::now();
  options.log = [start](std::string_view line) {
    std::cerr << absl::StrFormat("  [%6.1fs] ", Seconds(start)) << line << std::endl;
  };
  absl::StatusOr<RunReport> report = RunExperiment(*config, out, options);
  if (!report.ok()) return report.status();
  return Run{*std::move(report), Seconds(start)};
}

double AucOf(const RunReport& r, std::string_view tag, std::string_view attacker) {
  const DefenseReport* d = r.Find(tag);
  const AttackMetrics* m = d == nullptr ? nullptr : d->Find(attacker);
  return m == nullptr ? std::nan("") : m->auc;
}

double MiouOf(const RunReport& r, std::string_view tag) {
  const DefenseReport* d = r.Find(tag);
  return d == nullptr ? std::nan("") : d->miou;
}

double ImageMiouOf(const RunReport& r, std::string_view tag) {
  const DefenseReport* d = r.Find(tag);
  return d == nullptr ? std::nan("") : d->image_miou;
}

Outcome AttackExists(const Run& dep) {
  Outcome o;
  const double main = AucOf(dep.report, "none", "main");
  o.Check(main >= kAttackAuc, absl::StrFormat("slm+rejection AUC %.4f >= %.2f", main, kAttackAuc));
  o.Check(main >= kCalibratedMainAuc - kRegressionSlack,
          absl::StrFormat("regression floor %.4f", kCalibratedMainAuc - kRegressionSlack));
  for (const char* b : {"mean-confidence", "mean-loss", "pixel"}) {
    const double auc = AucOf(dep.report, "none", b);
    o.Check(auc > kBaselineAuc, absl::StrFormat("%s %.4f > %.2f", b, auc, kBaselineAuc));
  }
  o.Check(dep.seconds < kDefaultRunSeconds,
          absl::StrFormat("run %.0f s < %.0f s", dep.seconds, kDefaultRunSeconds));
  return o;
}

Outcome StructureMatters(const Run& dep) {
  Outcome o;
  const std::vector<StructurePoint>& s = dep.report.structure;
  std::vector<std::string> pts;
  for (const StructurePoint& p : s) pts.push_back(absl::StrFormat("%d:%.4f", p.patch_size, p.patch_auc));
  o.Check(s.size() == 4 && s[0].patch_size == 16 && s[1].patch_size == 8 &&
              s[2].patch_size == 4 && s[3].patch_size == 1,
          "sweep over {16, 8, 4, 1}");
  for (size_t i = 1; i < s.size(); ++i) {
    o.pass = o.pass && s[i].patch_auc <= s[i - 1].patch_auc + kStructureJitter;
  }
  o.Check(o.pass, "patch AUC " + absl::StrJoin(pts, " "));
  const double pixel = AucOf(dep.report, "none", "pixel");
  const double slm16 = AucOf(dep.report, "none", "main");
  o.Check(pixel <= slm16, absl::StrFormat("pixel image AUC %.4f <= slm-16 %.4f", pixel, slm16));
  return o;
}

Outcome RepresentationRanking(const Run& dep) {
  Outcome o;
  const double main = AucOf(dep.report, "none", "main");
  for (const char* v : {"slm-random", "concat-random"}) {
    const double auc = AucOf(dep.report, "none", v);
    o.Check(main >= auc - kRankingSlack,
            absl::StrFormat("slm+rejection %.4f >= %s %.4f - %.2f", main, v, auc, kRankingSlack));
  }
  return o;
}

Outcome ArgmaxIsWeak(const Run& dep) {
  Outcome o;
  const double none = AucOf(dep.report, "none", "main");
  const double argmax = AucOf(dep.report, "argmax", "main");
  o.Check(argmax >= none - kArgmaxMaxDrop,
          absl::StrFormat("argmax AUC %.4f >= %.4f - %.2f", argmax, none, kArgmaxMaxDrop));
  o.Check(argmax >= kArgmaxFloor, absl::StrFormat(">= %.2f", kArgmaxFloor));
  const double conf = AucOf(dep.report, "argmax", "mean-confidence");
  o.Check(conf == 0.5, absl::StrFormat("mean-confidence AUC %.17g == 0.5", conf));
  return o;
}

std::vector<const DefenseReport*> Of(const RunReport& r, DefenseKind kind) {
  std::vector<const DefenseReport*> out;
  for (const DefenseReport& d : r.defenses) {
    if (d.defense.kind == kind) out.push_back(&d);
  }
  return out;
}

Outcome GaussDefends(const Run& ind) {
  Outcome o;
  const double none = AucOf(ind.report, "none", "main");
  const double none_miou = MiouOf(ind.report, "none");
  const std::vector<const DefenseReport*> sweep = Of(ind.report, DefenseKind::kGauss);
  std::vector<std::string> pts;
  bool monotone = true, no_gain = true;
  for (size_t i = 0; i < sweep.size(); ++i) {
    const double auc = sweep[i]->Find("main")->auc;
    pts.push_back(absl::StrFormat("%g:%.4f", sweep[i]->defense.param, auc));
    if (i > 0) monotone = monotone && auc <= sweep[i - 1]->Find("main")->auc + kGaussJitter;
    no_gain = no_gain && auc <= none + kGaussNoiseGain;
  }
  o.Check(sweep.size() == 10 && sweep.front()->defense.param == 0.01 &&
              std::abs(sweep.back()->defense.param - 0.1) < 1e-12,
          "sweep 0.01..0.1");
  o.Check(monotone, "non-increasing within 0.03: " + absl::StrJoin(pts, " "));
  o.Check(no_gain, absl::StrFormat("no row above undefended %.4f + %.2f", none, kGaussNoiseGain));
  if (!sweep.empty()) {
    const DefenseReport& top = *sweep.back();
    const double auc = top.Find("main")->auc;
    o.Check(auc <= none - kGaussDrop,
            absl::StrFormat("var 0.1 AUC %.4f <= %.4f - %.2f", auc, none, kGaussDrop));
    o.Check(none_miou - top.miou <= kUtilityBudget,
            absl::StrFormat("mIoU drop %.4f <= %.2f (per-image mean: %.4f)",
                            none_miou - top.miou, kUtilityBudget,
                            ImageMiouOf(ind.report, "none") - top.image_miou));
  }
  return o;
}

Outcome DpsgdDefends(const Run& dep, const Run& ind) {
  Outcome o;
  for (const auto& [setting, run] : {std::pair<const char*, const Run*>{"dependent", &dep},
                                     {"independent", &ind}}) {
    const std::vector<const DefenseReport*> dp = Of(run->report, DefenseKind::kDpsgd);
    if (!o.Check(dp.size() == 1, absl::StrCat(setting, ": one dpsgd defense"))) continue;
    const double none = AucOf(run->report, "none", "main");
    const double auc = dp[0]->Find("main")->auc;
    const double drop = MiouOf(run->report, "none") - dp[0]->miou;
    o.Check(auc <= none - kDpsgdDrop, absl::StrFormat("%s %s AUC %.4f <= %.4f - %.2f", setting,
                                                      dp[0]->tag, auc, none, kDpsgdDrop));
    o.Check(drop <= kUtilityBudget,
            absl::StrFormat("mIoU drop %.4f (per-image mean: %.4f)", drop,
                            ImageMiouOf(run->report, "none") - dp[0]->image_miou));
    for (const auto& [name, ratio] : run->report.clip_audit) {
      o.Check(ratio <= 1.0 + kClipTolerance,
              absl::StrFormat("%s max norm/clip %.9f", name, ratio));
    }
  }
  return o;
}

Outcome DropoutTradeoff(const Run& dep) {
  Outcome o;
  const double auc_lo = AucOf(dep.report, "dropout-0.1", "main");
  const double auc_hi = AucOf(dep.report, "dropout-0.9", "main");
  const double miou_lo = MiouOf(dep.report, "dropout-0.1");
  const double miou_hi = MiouOf(dep.report, "dropout-0.9");
  o.Check(auc_hi <= auc_lo, absl::StrFormat("AUC r=0.9 %.4f <= r=0.1 %.4f", auc_hi, auc_lo));
  o.Check(miou_hi <= miou_lo - kDropoutUtilityGap,
          absl::StrFormat("mIoU r=0.9 %.4f <= r=0.1 %.4f - %.2f (per-image mean: %.4f vs %.4f)",
                          miou_hi, miou_lo, kDropoutUtilityGap,
                          ImageMiouOf(dep.report, "dropout-0.9"),
                          ImageMiouOf(dep.report, "dropout-0.1")));
  return o;
}

Outcome Determinism(const fs::path& cli, const fs::path& config, const fs::path& work) {
  Outcome o;
  const fs::path a = work / "determinism_a";
  const fs::path b = work / "determinism_b";
  for (const fs::path& out : {a, b}) {
    fs::remove_all(out);
    const std::string cmd = absl::StrCat("\"", cli.string(), "\" run --quiet --config \"",
                                         config.string(), "\" --out \"", out.string(), "\"");
    if (!o.Check(std::system(cmd.c_str()) == 0, "segleak run exits 0")) return o;
  }
  int compared = 0;
  for (const fs::directory_entry& e : fs::recursive_directory_iterator(a / "reports")) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    const fs::path rel = fs::relative(e.path(), a);
    if (rel.begin()->string() == "reports" && rel.string().find("timings") != std::string::npos) {
      continue;
    }
    absl::StatusOr<std::string> x = ReadFileToString(a / rel);
    absl::StatusOr<std::string> y = ReadFileToString(b / rel);
    ++compared;
    if (!x.ok() || !y.ok() || *x != *y) o.Check(false, "differs: " + rel.string());
  }
  o.Check(compared > 0, absl::StrFormat("%d metric CSVs byte-identical", compared));
  return o;
}

void Print(int id, const char* title, const Outcome& o) {
  std::cout << absl::StrFormat("CRITERION %2d %s  %s: %s", id, o.pass ? "PASS" : "FAIL", title,
                               absl::StrJoin(o.notes, "; "))
            << std::endl;
}

}  // namespace
}  // namespace segleak

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  namespace fs = std::filesystem;
  CLI::App app{"segleak acceptance suite"};
  std::string work = "acceptance_runs";
  std::string configs = SEGLEAK_CONFIG_DIR;
  std::string cli = SEGLEAK_CLI_PATH;
  app.add_option("--work", work, "Scratch directory for pipeline runs");
  app.add_option("--configs", configs, "Directory holding the acceptance configs");
  app.add_option("--cli", cli, "Path of the segleak binary");
  std::vector<int> known;
  app.add_option("--known-failures", known, "Criteria expected to fail")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  using segleak::Outcome;
  const auto start = std::chrono::steady_clock::now();
  std::vector<int> failed;
  auto report = [&](int id, const char* title, const Outcome& o) {
    segleak::Print(id, title, o);
    if (!o.pass) failed.push_back(id);
  };
  report(1, "formula oracles", segleak::FormulaOracles());
  report(2, "gradient correctness", segleak::Gradients());

  std::cerr << "dependent run" << std::endl;
  absl::StatusOr<segleak::Run> dep =
      segleak::RunConfig(fs::path(configs) / "acceptance_dependent.yaml",
                         fs::path(work) / "dependent");
  std::cerr << "independent run" << std::endl;
  absl::StatusOr<segleak::Run> ind =
      segleak::RunConfig(fs::path(configs) / "acceptance_independent.yaml",
                         fs::path(work) / "independent");
  auto failed_run = [](const absl::Status& s) {
    Outcome o;
    o.Check(false, absl::StrCat("pipeline error: ", s.ToString()));
    return o;
  };
  if (dep.ok()) {
    report(3, "attack exists", segleak::AttackExists(*dep));
    report(4, "structure matters", segleak::StructureMatters(*dep));
    report(5, "representation ranking", segleak::RepresentationRanking(*dep));
    report(6, "argmax is weak", segleak::ArgmaxIsWeak(*dep));
  } else {
    for (int id : {3, 4, 5, 6}) report(id, "dependent run", failed_run(dep.status()));
  }
  if (ind.ok()) {
    report(7, "gauss defends independent setting", segleak::GaussDefends(*ind));
  } else {
    report(7, "independent run", failed_run(ind.status()));
  }
  if (dep.ok() && ind.ok()) {
    report(8, "dpsgd defends", segleak::DpsgdDefends(*dep, *ind));
  } else {
    report(8, "dpsgd defends", failed_run(dep.ok() ? ind.status() : dep.status()));
  }
  if (dep.ok()) {
    report(9, "dropout tradeoff", segleak::DropoutTradeoff(*dep));
  } else {
    report(9, "dropout tradeoff", failed_run(dep.status()));
  }
  Outcome det = segleak::Determinism(cli, fs::path(configs) / "determinism.yaml", work);
  const double total =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  det.Check(total < segleak::kSuiteSeconds,
            absl::StrFormat("suite %.0f s < %.0f s", total, segleak::kSuiteSeconds));
  report(10, "determinism", det);
  std::vector<int> unexpected;
  for (int id : failed) {
    if (std::find(known.begin(), known.end(), id) == known.end()) unexpected.push_back(id);
  }
  std::cout << absl::StrFormat("ACCEPTANCE %s: %d/10 criteria pass", failed.empty() ? "PASS" : "FAIL",
                               10 - static_cast<int>(failed.size()));
  if (!failed.empty()) std::cout << "; failing: " << absl::StrJoin(failed, ", ");
  if (!known.empty()) std::cout << "; known failures: " << absl::StrJoin(known, ", ");
  std::vector<int> stale;
  for (int id : known) {
    if (std::find(failed.begin(), failed.end(), id) == failed.end()) stale.push_back(id);
  }
  if (!stale.empty()) std::cout << "; known failures now passing: " << absl::StrJoin(stale, ", ");
  std::cout << std::endl;
  return unexpected.empty() ? 0 : 1;
}
