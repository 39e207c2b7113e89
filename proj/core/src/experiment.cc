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


#include "segleak/experiment.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>
#include <utility>

#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "json.hpp"
#include "segleak/attack.h"
#include "segleak/hash.h"
#include "segleak/metrics.h"
#include "segleak/rng.h"
#include "segleak/tensor_io.h"

namespace segleak {
namespace {

namespace fs = std::filesystem;

constexpr char kConfigFile[] = "config.yaml";
constexpr char kMain[] = "main";
constexpr char kPixel[] = "pixel";
constexpr char kMeanConfidence[] = "mean-confidence";
constexpr char kMeanLoss[] = "mean-loss";

fs::path DataDir(const fs::path& out) { return out / "data"; }
fs::path ModelDir(const fs::path& out, std::string_view name) {
  return out / "models" / std::string(name);
}
fs::path AttackerDir(const fs::path& out, std::string_view view, std::string_view name) {
  return out / "attacker" / std::string(view) / std::string(name);
}
fs::path VerdictDir(const fs::path& out, std::string_view tag) {
  return out / "verdicts" / std::string(tag);
}
fs::path ReportDir(const fs::path& out) { return out / "reports"; }

void Log(const RunOptions& options, std::string_view line) {
  if (options.log) options.log(line);
}

absl::Status InStage(absl::string_view stage, const absl::Status& s) {
  if (s.ok()) return s;
  return absl::Status(s.code(), absl::StrCat("stage ", stage, ": ", s.message()));
}

std::string Num(double v) { return absl::StrFormat("%.17g", v); }

// ---------------------------------------------------------------------------
// Persistence of scenes and membership lists.

absl::Status SaveScenes(const fs::path& dir, std::string_view name,
                        const std::vector<LabeledImage>& scenes) {
  if (scenes.empty()) return absl::InvalidArgumentError("no scenes to save");
  const int h = scenes[0].height;
  const int w = scenes[0].width;
  const int n = static_cast<int>(scenes.size());
  Tensor images({n, 3, h, w});
  Tensor labels({n, h, w});
  const int64_t image_size = 3LL * h * w;
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    std::copy(scenes[i].image.raw(), scenes[i].image.raw() + image_size,
              images.raw() + i * image_size);
    for (int64_t j = 0; j < plane; ++j) {
      labels[i * plane + j] = static_cast<float>(scenes[i].labels[j]);
    }
  }
  const std::string base(name);
  if (absl::Status s = WriteTensorFile(dir / (base + "_images.slkt"), images); !s.ok()) return s;
  return WriteTensorFile(dir / (base + "_labels.slkt"), labels);
}

absl::StatusOr<std::vector<LabeledImage>> LoadScenes(const fs::path& dir,
                                                     std::string_view name) {
  const std::string base(name);
  absl::StatusOr<Tensor> images = ReadTensorFile(dir / (base + "_images.slkt"));
  if (!images.ok()) return images.status();
  absl::StatusOr<Tensor> labels = ReadTensorFile(dir / (base + "_labels.slkt"));
  if (!labels.ok()) return labels.status();
  if (images->rank() != 4 || images->dim(1) != 3 || labels->rank() != 3 ||
      labels->dim(0) != images->dim(0) || labels->dim(1) != images->dim(2) ||
      labels->dim(2) != images->dim(3)) {
    return absl::DataLossError(absl::StrCat("inconsistent scene files for '", base, "'"));
  }
  const int n = images->dim(0), h = images->dim(2), w = images->dim(3);
  const int64_t image_size = 3LL * h * w;
  const int64_t plane = static_cast<int64_t>(h) * w;
  std::vector<LabeledImage> scenes(n);
  for (int i = 0; i < n; ++i) {
    LabeledImage& s = scenes[i];
    s.height = h;
    s.width = w;
    s.image = Tensor({3, h, w});
    std::copy(images->raw() + i * image_size, images->raw() + (i + 1) * image_size,
              s.image.raw());
    s.labels.resize(plane);
    for (int64_t j = 0; j < plane; ++j) {
      s.labels[j] = static_cast<int>((*labels)[i * plane + j]);
    }
  }
  return scenes;
}

using Roles = std::map<std::string, std::vector<int>>;

absl::Status WriteRoles(const fs::path& path, const std::vector<std::string>& order,
                        const Roles& roles) {
  std::string csv = "index,role\n";
  for (const std::string& role : order) {
    for (int i : roles.at(role)) absl::StrAppend(&csv, i, ",", role, "\n");
  }
  return WriteStringToFile(path, csv);
}

absl::StatusOr<Roles> ReadRoles(const fs::path& path) {
  absl::StatusOr<std::string> text = ReadFileToString(path);
  if (!text.ok()) return text.status();
  Roles roles;
  bool header = true;
  for (absl::string_view line : absl::StrSplit(*text, '\n', absl::SkipEmpty())) {
    if (std::exchange(header, false)) continue;
    const std::vector<absl::string_view> cols = absl::StrSplit(line, ',');
    int index;
    if (cols.size() != 2 || !absl::SimpleAtoi(cols[0], &index)) {
      return absl::DataLossError(absl::StrCat("bad row '", line, "' in ", path.string()));
    }
    roles[std::string(cols[1])].push_back(index);
  }
  return roles;
}

// ---------------------------------------------------------------------------
// Stage bookkeeping.

class StageTimer {
 public:
  StageTimer(const fs::path& out, std::string stage)
      : out_(out), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}

  absl::Status Finish() {
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    return WriteStringToFile(ReportDir(out_) / "timings" / (stage_ + ".txt"),
                             absl::StrFormat("%.3f\n", seconds));
  }

 private:
  fs::path out_;
  std::string stage_;
  std::chrono::steady_clock::time_point start_;
};

// Stages after data generation must run with the configuration the run
// directory was created with.
absl::Status CheckSnapshot(const ExperimentConfig& config, const fs::path& out) {
  absl::StatusOr<std::string> stored = ReadFileToString(out / kConfigFile);
  if (!stored.ok()) {
    return absl::FailedPreconditionError(absl::StrCat(
        "no ", kConfigFile, " in ", out.string(), "; run gen-data first"));
  }
  if (*stored != FormatExperimentConfig(config)) {
    return absl::FailedPreconditionError(absl::StrCat(
        out.string(), " was generated with a different configuration (see ", kConfigFile,
        "); use a fresh output directory"));
  }
  return absl::OkStatus();
}

// ---------------------------------------------------------------------------
// Views of the shadow model used to train attackers for a defense.

struct ShadowView {
  std::string name;          // attacker/<name>
  std::string shadow_model;  // models/<shadow_model>
  DefenseConfig transform;   // applied to shadow posteriors
};

bool IsDpsgd(const DefenseConfig& d) { return d.kind == DefenseKind::kDpsgd; }

std::string VictimModelName(const DefenseConfig& d) {
  return IsDpsgd(d) ? "victim-" + DefenseTag(d) : "victim";
}

// Dependent runs mirror every defense on the shadow; independent runs leave
// the shadow undefended except for argmax, which is easy to notice.
ShadowView ViewFor(const ExperimentConfig& config, const DefenseConfig& d) {
  if (config.setting == AttackSetting::kDependent) {
    if (IsDpsgd(d)) return {DefenseTag(d), "shadow-" + DefenseTag(d), DefenseConfig{}};
    return {DefenseTag(d), "shadow", d};
  }
  if (d.kind == DefenseKind::kArgmax) return {"argmax", "shadow", d};
  return {"none", "shadow", DefenseConfig{}};
}

// "none" first, then the configured defenses other than "none".
std::vector<DefenseConfig> EvaluatedDefenses(const ExperimentConfig& config) {
  std::vector<DefenseConfig> out = {DefenseConfig{}};
  for (const DefenseConfig& d : config.defenses) {
    if (d.kind != DefenseKind::kNone) out.push_back(d);
  }
  return out;
}

struct NamedAttacker {
  std::string name;
  AttackerConfig train;
  PatchSelector selector;
  bool record_patches = true;
};

std::string StructureName(int patch) { return absl::StrCat("patch-", patch); }

// Attackers evaluated under `defense`.
std::vector<NamedAttacker> AttackersFor(const ExperimentConfig& config,
                                        const DefenseConfig& defense) {
  AttackerConfig base = config.attacker;
  base.seed = DeriveSeed(config.seed, "attacker");
  std::vector<NamedAttacker> out = {{kMain, base, config.selector}};
  if (defense.kind == DefenseKind::kNone) {
    for (const AttackVariant& v : config.variants) {
      AttackerConfig a = base;
      a.representation = v.representation;
      a.patch_size = v.patch_size;
      out.push_back({v.name, a, v.selector});
    }
    for (int p : config.structure_patch_sizes) {
      AttackerConfig a = p == 1 ? PixelAttackerConfig(base) : base;
      a.representation = RepresentationKind::kSlm;
      a.patch_size = p;
      out.push_back({StructureName(p), a, config.selector});
    }
  }
  if (config.baselines) out.push_back({kPixel, PixelAttackerConfig(base), PixelSelector(), false});
  return out;
}

// ---------------------------------------------------------------------------
// Loaded run state.

struct RunData {
  std::vector<LabeledImage> scenes;         // victim source
  Roles split;                              // victim_in, victim_out, shadow_in, shadow_out
  std::vector<LabeledImage> shadow_scenes;  // independent runs only
  const std::vector<LabeledImage>& ShadowSource(const ExperimentConfig& c) const {
    return c.setting == AttackSetting::kDependent ? scenes : shadow_scenes;
  }
};

absl::StatusOr<RunData> LoadRunData(const ExperimentConfig& config, const fs::path& out) {
  RunData data;
  absl::StatusOr<std::vector<LabeledImage>> scenes = LoadScenes(DataDir(out), "scenes");
  if (!scenes.ok()) return scenes.status();
  data.scenes = *std::move(scenes);
  absl::StatusOr<Roles> split = ReadRoles(DataDir(out) / "split.csv");
  if (!split.ok()) return split.status();
  data.split = *std::move(split);
  if (config.setting == AttackSetting::kIndependent) {
    absl::StatusOr<std::vector<LabeledImage>> shadow = LoadScenes(DataDir(out), "shadow_scenes");
    if (!shadow.ok()) return shadow.status();
    data.shadow_scenes = *std::move(shadow);
  }
  return data;
}

std::vector<LabeledImage> Select(const std::vector<LabeledImage>& all,
                                 const std::vector<int>& indices) {
  std::vector<LabeledImage> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(all[i]);
  return out;
}

TrainConfig DpsgdTrainConfig(TrainConfig base, const DefenseConfig& d) {
  base.optimizer = OptimizerKind::kDpsgd;
  base.noise_variance = d.param;
  base.clip_quantile = d.clip_quantile;
  return base;
}

absl::Status TrainAndSave(const ExperimentConfig& config, const fs::path& out,
                          const std::string& name, const std::vector<LabeledImage>& data,
                          const ModelConfig& model, TrainConfig train,
                          const RunOptions& options) {
  Log(options, absl::StrCat("training ", name, " on ", data.size(), " images (",
                            OptimizerName(train.optimizer), ", ", train.epochs, " epochs)"));
  absl::StatusOr<SegModel> trained =
      TrainSegmenter(data, config.scene.num_classes, model.architecture, train);
  if (!trained.ok()) {
    return absl::Status(trained.status().code(),
                        absl::StrCat(name, ": ", trained.status().message()));
  }
  return SaveSegModel(ModelDir(out, name), *trained);
}

absl::StatusOr<std::vector<LabeledPosterior>> Posteriors(
    const SegModel& model, const std::vector<LabeledImage>& all,
    const std::vector<int>& indices, const DefenseConfig& defense, uint64_t seed) {
  std::vector<LabeledPosterior> out;
  out.reserve(indices.size());
  for (int i : indices) {
    const LabeledImage& s = all[i];
    absl::StatusOr<Tensor> p =
        DefendedPosterior(model, s.image, defense, DeriveSeed(seed, static_cast<uint64_t>(i)));
    if (!p.ok()) return p.status();
    absl::StatusOr<Tensor> y = OneHot(s.labels, s.height, s.width, model.num_classes);
    if (!y.ok()) return y.status();
    out.push_back({*std::move(p), *std::move(y)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Verdict files.

struct VerdictRow {
  int image = 0;
  bool member = false;
  double score = 0.0;
  bool fell_back = false;
  int rejected = 0;
  std::vector<double> patch_scores;
};

std::string FormatVerdicts(const std::vector<VerdictRow>& rows,
                           const std::vector<std::vector<PatchRect>>& rects) {
  std::string csv = "image,member,score,fell_back,rejected,patches\n";
  for (size_t r = 0; r < rows.size(); ++r) {
    const VerdictRow& v = rows[r];
    std::vector<std::string> patches;
    for (size_t k = 0; k < v.patch_scores.size(); ++k) {
      patches.push_back(absl::StrCat(rects[r][k].top, ":", rects[r][k].left, ":",
                                     Num(v.patch_scores[k])));
    }
    absl::StrAppend(&csv, v.image, ",", v.member ? 1 : 0, ",", Num(v.score), ",",
                    v.fell_back ? 1 : 0, ",", v.rejected, ",", absl::StrJoin(patches, ";"),
                    "\n");
  }
  return csv;
}

absl::StatusOr<std::vector<VerdictRow>> ReadVerdicts(const fs::path& path) {
  absl::StatusOr<std::string> text = ReadFileToString(path);
  if (!text.ok()) return text.status();
  std::vector<VerdictRow> rows;
  bool header = true;
  auto bad = [&](absl::string_view line) {
    return absl::DataLossError(absl::StrCat("bad row '", line.substr(0, 80), "' in ",
                                            path.string()));
  };
  for (absl::string_view line : absl::StrSplit(*text, '\n', absl::SkipEmpty())) {
    if (std::exchange(header, false)) continue;
    const std::vector<absl::string_view> cols = absl::StrSplit(line, ',');
    VerdictRow v;
    int member, fell_back;
    if (cols.size() != 6 || !absl::SimpleAtoi(cols[0], &v.image) ||
        !absl::SimpleAtoi(cols[1], &member) || !absl::SimpleAtod(cols[2], &v.score) ||
        !absl::SimpleAtoi(cols[3], &fell_back) || !absl::SimpleAtoi(cols[4], &v.rejected)) {
      return bad(line);
    }
    v.member = member != 0;
    v.fell_back = fell_back != 0;
    for (absl::string_view patch : absl::StrSplit(cols[5], ';', absl::SkipEmpty())) {
      const std::vector<absl::string_view> parts = absl::StrSplit(patch, ':');
      double s;
      if (parts.size() != 3 || !absl::SimpleAtod(parts[2], &s)) return bad(line);
      v.patch_scores.push_back(s);
    }
    rows.push_back(std::move(v));
  }
  return rows;
}

// Numeric CSV with a header; returns the columns by name.
absl::StatusOr<std::map<std::string, std::vector<double>>> ReadNumericCsv(const fs::path& path) {
  absl::StatusOr<std::string> text = ReadFileToString(path);
  if (!text.ok()) return text.status();
  std::vector<std::string> names;
  std::map<std::string, std::vector<double>> cols;
  for (absl::string_view line : absl::StrSplit(*text, '\n', absl::SkipEmpty())) {
    const std::vector<std::string> cells = absl::StrSplit(line, ',');
    if (names.empty()) {
      names = cells;
      continue;
    }
    if (cells.size() != names.size()) {
      return absl::DataLossError(absl::StrCat("ragged row in ", path.string()));
    }
    for (size_t k = 0; k < cells.size(); ++k) {
      double v;
      if (!absl::SimpleAtod(cells[k], &v)) {
        return absl::DataLossError(absl::StrCat("bad number '", cells[k], "' in ", path.string()));
      }
      cols[names[k]].push_back(v);
    }
  }
  return cols;
}

// ---------------------------------------------------------------------------
// Evaluation of one defense.

absl::Status EvaluateDefense(const ExperimentConfig& config, const fs::path& out,
                             const RunData& data, const DefenseConfig& defense,
                             const RunOptions& options) {
  const std::string tag = DefenseTag(defense);
  const ShadowView view = ViewFor(config, defense);
  Log(options, absl::StrCat("evaluating defense ", tag));
  absl::StatusOr<SegModel> victim = LoadSegModel(ModelDir(out, VictimModelName(defense)));
  if (!victim.ok()) return victim.status();

  const std::vector<int>& in = data.split.at("victim_in");
  const std::vector<int>& held_out = data.split.at("victim_out");
  std::vector<int> images = in;
  images.insert(images.end(), held_out.begin(), held_out.end());
  absl::StatusOr<std::vector<LabeledPosterior>> released =
      Posteriors(*victim, data.scenes, images, defense, DeriveSeed(config.seed, "defense"));
  if (!released.ok()) return released.status();

  const fs::path dir = VerdictDir(out, tag);
  // Held-out utility of exactly the released posteriors, with the per-class
  // counts so the pooled mIoU can be recomputed.
  const int num_classes = config.scene.num_classes;
  std::string utility = "image,miou";
  for (const char* col : {"intersection", "union"}) {
    for (int c = 0; c < num_classes; ++c) absl::StrAppend(&utility, ",", col, "_", c);
  }
  utility += "\n";
  for (size_t k = in.size(); k < images.size(); ++k) {
    IouCounts counts(num_classes);
    if (absl::Status s = AccumulateIou(ArgmaxLabels((*released)[k].posterior),
                                       data.scenes[images[k]].labels, &counts);
        !s.ok()) {
      return s;
    }
    absl::StrAppend(&utility, images[k], ",", Num(counts.Miou()), ",",
                    absl::StrJoin(counts.intersection, ","), ",",
                    absl::StrJoin(counts.union_size, ","), "\n");
  }
  if (absl::Status s = WriteStringToFile(dir / "utility.csv", utility); !s.ok()) return s;

  if (config.baselines) {
    std::string csv = "image,member,mean_confidence,mean_loss\n";
    for (size_t k = 0; k < images.size(); ++k) {
      const LabeledPosterior& lp = (*released)[k];
      absl::StatusOr<double> loss = BaselineMeanLoss(lp.posterior, lp.onehot);
      if (!loss.ok()) return loss.status();
      absl::StrAppend(&csv, images[k], ",", k < in.size() ? 1 : 0, ",",
                      Num(BaselineMeanConfidence(lp.posterior)), ",", Num(*loss), "\n");
    }
    if (absl::Status s = WriteStringToFile(dir / "baselines.csv", csv); !s.ok()) return s;
  }

  const uint64_t selector_seed = DeriveSeed(config.seed, "selector");
  for (const NamedAttacker& a : AttackersFor(config, defense)) {
    absl::StatusOr<PatchAttacker> attacker =
        LoadPatchAttacker(AttackerDir(out, view.name, a.name));
    if (!attacker.ok()) return attacker.status();
    std::vector<VerdictRow> rows;
    std::vector<std::vector<PatchRect>> rects;
    for (size_t k = 0; k < images.size(); ++k) {
      const LabeledPosterior& lp = (*released)[k];
      absl::StatusOr<MembershipVerdict> v =
          InferMembership(*attacker, lp.posterior, lp.onehot, a.selector,
                          DeriveSeed(selector_seed, static_cast<uint64_t>(images[k])));
      if (!v.ok()) return v.status();
      VerdictRow row{images[k], k < in.size(), v->score, v->fell_back, v->rejected, {}};
      if (a.record_patches) {
        row.patch_scores = v->patch_scores;
        rects.push_back(v->rects);
      } else {
        rects.emplace_back();
      }
      rows.push_back(std::move(row));
    }
    if (absl::Status s = WriteStringToFile(dir / (a.name + ".csv"), FormatVerdicts(rows, rects));
        !s.ok()) {
      return s;
    }
  }
  return absl::OkStatus();
}

// ---------------------------------------------------------------------------
// Metrics.

absl::StatusOr<AttackMetrics> MetricsOf(std::string name, const std::vector<double>& scores,
                                        const std::vector<bool>& member,
                                        const std::vector<std::vector<double>>* patches,
                                        int fallbacks, Curve* roc, Curve* pr) {
  std::vector<ScoredExample> ex;
  AttackMetrics m;
  m.attacker = std::move(name);
  m.fallbacks = fallbacks;
  int members = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    ex.push_back({scores[i], member[i]});
    (member[i] ? m.member_mean : m.non_member_mean) += scores[i];
    members += member[i];
  }
  m.member_mean /= std::max(1, members);
  m.non_member_mean /= std::max(1, static_cast<int>(scores.size()) - members);
  absl::StatusOr<Curve> r = RocCurve(ex);
  if (!r.ok()) return r.status();
  absl::StatusOr<Curve> p = PrCurve(ex);
  if (!p.ok()) return p.status();
  m.auc = Auc(*r);
  m.max_f = MaxF(*p);
  *roc = *std::move(r);
  *pr = *std::move(p);
  m.patch_auc = std::nan("");
  if (patches != nullptr) {
    std::vector<ScoredExample> px;
    for (size_t i = 0; i < scores.size(); ++i) {
      for (double s : (*patches)[i]) px.push_back({s, member[i]});
    }
    if (!px.empty()) {
      absl::StatusOr<Curve> pc = RocCurve(px);
      if (!pc.ok()) return pc.status();
      m.patch_auc = Auc(*pc);
    }
  }
  return m;
}

std::string CsvNum(double v) { return std::isnan(v) ? "" : Num(v); }

nlohmann::ordered_json MetricsJson(const AttackMetrics& m) {
  nlohmann::ordered_json j;
  j["attacker"] = m.attacker;
  j["auc"] = m.auc;
  j["max_f"] = m.max_f;
  if (!std::isnan(m.patch_auc)) j["patch_auc"] = m.patch_auc;
  j["member_mean"] = m.member_mean;
  j["non_member_mean"] = m.non_member_mean;
  j["fallbacks"] = m.fallbacks;
  return j;
}

absl::StatusOr<std::string> HashArtifacts(const fs::path& out, nlohmann::ordered_json* j) {
  std::vector<fs::path> files;
  for (const char* sub : {"data", "models", "attacker", "verdicts"}) {
    if (!fs::exists(out / sub)) continue;
    for (const fs::directory_entry& e : fs::recursive_directory_iterator(out / sub)) {
      if (e.is_regular_file()) files.push_back(fs::relative(e.path(), out));
    }
  }
  files.push_back(kConfigFile);
  std::sort(files.begin(), files.end());
  for (const fs::path& f : files) {
    absl::StatusOr<std::string> bytes = ReadFileToString(out / f);
    if (!bytes.ok()) return bytes.status();
    (*j)[f.generic_string()] = Sha256Hex(*bytes);
  }
  return std::string();
}

}  // namespace

const AttackMetrics* DefenseReport::Find(std::string_view attacker) const {
  for (const AttackMetrics& m : attacks) {
    if (m.attacker == attacker) return &m;
  }
  return nullptr;
}

const DefenseReport* RunReport::Find(std::string_view tag) const {
  for (const DefenseReport& d : defenses) {
    if (d.tag == tag) return &d;
  }
  return nullptr;
}

absl::Status GenerateDataStage(const ExperimentConfig& config, const fs::path& out,
                               const RunOptions& options) {
  auto run = [&]() -> absl::Status {
    if (absl::Status s = ValidateExperimentConfig(config); !s.ok()) return s;
    StageTimer timer(out, "gen-data");
    const int total = config.splits.total();
    Log(options, absl::StrCat("generating ", total, " scenes"));
    absl::StatusOr<std::vector<LabeledImage>> scenes =
        GenerateDataset(config.scene, total, DeriveSeed(config.seed, "data"));
    if (!scenes.ok()) return scenes.status();
    absl::StatusOr<DatasetSplit> split =
        SplitDataset(total, config.splits, DeriveSeed(config.seed, "split"));
    if (!split.ok()) return split.status();
    if (absl::Status s = WriteStringToFile(out / kConfigFile, FormatExperimentConfig(config));
        !s.ok()) {
      return s;
    }
    if (absl::Status s = SaveScenes(DataDir(out), "scenes", *scenes); !s.ok()) return s;
    const Roles roles = {{"victim_in", split->victim_in},
                         {"victim_out", split->victim_out},
                         {"shadow_in", split->shadow_in},
                         {"shadow_out", split->shadow_out}};
    if (absl::Status s = WriteRoles(DataDir(out) / "split.csv",
                                    {"victim_in", "victim_out", "shadow_in", "shadow_out"},
                                    roles);
        !s.ok()) {
      return s;
    }
    if (config.setting == AttackSetting::kIndependent) {
      const SceneConfig shadow_scene =
          config.shadow_shifted_scene ? ShiftedSceneConfig(config.scene) : config.scene;
      const int count = config.splits.shadow_in + config.splits.shadow_out;
      Log(options, absl::StrCat("generating ", count, " independent shadow scenes"));
      absl::StatusOr<std::vector<LabeledImage>> shadow =
          GenerateDataset(shadow_scene, count, DeriveSeed(config.seed, "shadow-data"));
      if (!shadow.ok()) return shadow.status();
      if (absl::Status s = SaveScenes(DataDir(out), "shadow_scenes", *shadow); !s.ok()) return s;
    }
    return timer.Finish();
  };
  return InStage("gen-data", run());
}

absl::Status TrainVictimStage(const ExperimentConfig& config, const fs::path& out,
                              const RunOptions& options) {
  auto run = [&]() -> absl::Status {
    if (absl::Status s = CheckSnapshot(config, out); !s.ok()) return s;
    StageTimer timer(out, "train-victim");
    absl::StatusOr<RunData> data = LoadRunData(config, out);
    if (!data.ok()) return data.status();
    const std::vector<LabeledImage> train = Select(data->scenes, data->split.at("victim_in"));
    TrainConfig tc = config.victim.train;
    tc.seed = DeriveSeed(config.seed, "victim");
    if (absl::Status s = TrainAndSave(config, out, "victim", train, config.victim, tc, options);
        !s.ok()) {
      return s;
    }
    for (const DefenseConfig& d : config.defenses) {
      if (!IsDpsgd(d)) continue;
      if (absl::Status s = TrainAndSave(config, out, VictimModelName(d), train, config.victim,
                                        DpsgdTrainConfig(tc, d), options);
          !s.ok()) {
        return s;
      }
    }
    return timer.Finish();
  };
  return InStage("train-victim", run());
}

absl::Status TrainShadowStage(const ExperimentConfig& config, const fs::path& out,
                              const RunOptions& options) {
  auto run = [&]() -> absl::Status {
    if (absl::Status s = CheckSnapshot(config, out); !s.ok()) return s;
    StageTimer timer(out, "train-shadow");
    absl::StatusOr<RunData> data = LoadRunData(config, out);
    if (!data.ok()) return data.status();
    Roles membership;
    if (config.setting == AttackSetting::kDependent) {
      // Query the victim on the shadow pool; the most confident images play
      // members.
      std::vector<int> pool = data->split.at("shadow_in");
      const std::vector<int>& rest = data->split.at("shadow_out");
      pool.insert(pool.end(), rest.begin(), rest.end());
      absl::StatusOr<SegModel> victim = LoadSegModel(ModelDir(out, "victim"));
      if (!victim.ok()) return victim.status();
      absl::StatusOr<std::vector<int>> rank =
          RankByConfidence(*victim, Select(data->scenes, pool));
      if (!rank.ok()) return rank.status();
      for (size_t r = 0; r < rank->size(); ++r) {
        const bool in = static_cast<int>(r) < config.splits.shadow_in;
        membership[in ? "in" : "out"].push_back(pool[(*rank)[r]]);
      }
    } else {
      const int n = static_cast<int>(data->shadow_scenes.size());
      for (int i = 0; i < n; ++i) {
        membership[i < config.splits.shadow_in ? "in" : "out"].push_back(i);
      }
    }
    if (absl::Status s = WriteRoles(DataDir(out) / "shadow_membership.csv", {"in", "out"},
                                    membership);
        !s.ok()) {
      return s;
    }
    const std::vector<LabeledImage> train =
        Select(data->ShadowSource(config), membership.at("in"));
    TrainConfig tc = config.shadow.train;
    tc.seed = DeriveSeed(config.seed, "shadow");
    if (absl::Status s = TrainAndSave(config, out, "shadow", train, config.shadow, tc, options);
        !s.ok()) {
      return s;
    }
    if (config.setting == AttackSetting::kDependent) {
      for (const DefenseConfig& d : config.defenses) {
        if (!IsDpsgd(d)) continue;
        if (absl::Status s = TrainAndSave(config, out, "shadow-" + DefenseTag(d), train,
                                          config.shadow, DpsgdTrainConfig(tc, d), options);
            !s.ok()) {
          return s;
        }
      }
    }
    return timer.Finish();
  };
  return InStage("train-shadow", run());
}

absl::Status TrainAttackerStage(const ExperimentConfig& config, const fs::path& out,
                                const RunOptions& options) {
  auto run = [&]() -> absl::Status {
    if (absl::Status s = CheckSnapshot(config, out); !s.ok()) return s;
    StageTimer timer(out, "train-attacker");
    absl::StatusOr<RunData> data = LoadRunData(config, out);
    if (!data.ok()) return data.status();
    absl::StatusOr<Roles> membership = ReadRoles(DataDir(out) / "shadow_membership.csv");
    if (!membership.ok()) return membership.status();
    // Attackers per view; a view shared by several defenses is trained once.
    std::map<std::string, std::pair<ShadowView, std::vector<NamedAttacker>>> views;
    for (const DefenseConfig& d : EvaluatedDefenses(config)) {
      const ShadowView view = ViewFor(config, d);
      auto& entry = views[view.name];
      entry.first = view;
      for (NamedAttacker& a : AttackersFor(config, d)) {
        const bool seen = std::any_of(entry.second.begin(), entry.second.end(),
                                      [&](const NamedAttacker& b) { return b.name == a.name; });
        if (!seen) entry.second.push_back(std::move(a));
      }
    }
    const uint64_t query_seed = DeriveSeed(config.seed, "shadow-defense");
    for (const auto& [name, entry] : views) {
      const ShadowView& view = entry.first;
      absl::StatusOr<SegModel> shadow = LoadSegModel(ModelDir(out, view.shadow_model));
      if (!shadow.ok()) return shadow.status();
      const std::vector<LabeledImage>& source = data->ShadowSource(config);
      absl::StatusOr<std::vector<LabeledPosterior>> in =
          Posteriors(*shadow, source, membership->at("in"), view.transform, query_seed);
      if (!in.ok()) return in.status();
      absl::StatusOr<std::vector<LabeledPosterior>> out_posteriors =
          Posteriors(*shadow, source, membership->at("out"), view.transform, query_seed);
      if (!out_posteriors.ok()) return out_posteriors.status();
      for (const NamedAttacker& a : entry.second) {
        Log(options, absl::StrCat("training attacker ", name, "/", a.name, " (",
                                  RepresentationName(a.train.representation), ", ",
                                  a.train.patch_size, "x", a.train.patch_size, ")"));
        absl::StatusOr<PatchAttacker> attacker = TrainPatchAttacker(*in, *out_posteriors, a.train);
        if (!attacker.ok()) {
          return absl::Status(attacker.status().code(),
                              absl::StrCat(name, "/", a.name, ": ", attacker.status().message()));
        }
        if (absl::Status s = SavePatchAttacker(AttackerDir(out, name, a.name), *attacker);
            !s.ok()) {
          return s;
        }
      }
    }
    return timer.Finish();
  };
  return InStage("train-attacker", run());
}

absl::Status AttackStage(const ExperimentConfig& config, const fs::path& out,
                         const RunOptions& options) {
  auto run = [&]() -> absl::Status {
    if (absl::Status s = CheckSnapshot(config, out); !s.ok()) return s;
    StageTimer timer(out, "attack");
    absl::StatusOr<RunData> data = LoadRunData(config, out);
    if (!data.ok()) return data.status();
    if (absl::Status s = EvaluateDefense(config, out, *data, DefenseConfig{}, options); !s.ok()) {
      return s;
    }
    return timer.Finish();
  };
  return InStage("attack", run());
}

absl::Status DefendSweepStage(const ExperimentConfig& config, const fs::path& out,
                              const RunOptions& options) {
  auto run = [&]() -> absl::Status {
    if (absl::Status s = CheckSnapshot(config, out); !s.ok()) return s;
    StageTimer timer(out, "defend-sweep");
    absl::StatusOr<RunData> data = LoadRunData(config, out);
    if (!data.ok()) return data.status();
    const std::vector<DefenseConfig> defenses = EvaluatedDefenses(config);
    for (size_t k = 1; k < defenses.size(); ++k) {
      if (absl::Status s = EvaluateDefense(config, out, *data, defenses[k], options); !s.ok()) {
        return absl::Status(s.code(),
                            absl::StrCat(DefenseTag(defenses[k]), ": ", s.message()));
      }
    }
    return timer.Finish();
  };
  return InStage("defend-sweep", run());
}

absl::StatusOr<RunReport> ReportStage(const ExperimentConfig& config, const fs::path& out,
                                      const RunOptions& options) {
  auto run = [&]() -> absl::StatusOr<RunReport> {
    if (absl::Status s = CheckSnapshot(config, out); !s.ok()) return s;
    Log(options, "writing reports");
    RunReport report;
    report.random_guess_f = RandomGuessF(config.splits.victim_in, config.splits.victim_out);
    const fs::path reports = ReportDir(out);
    std::string pu = "defense,param,auc,max_f,miou\n";
    std::string attacks =
        "defense,param,attacker,auc,max_f,patch_auc,member_mean,non_member_mean,fallbacks\n";
    nlohmann::ordered_json ledger;
    ledger["schema_version"] = config.schema_version;
    ledger["seed"] = config.seed;
    ledger["setting"] = AttackSettingName(config.setting);
    ledger["config"] = FormatExperimentConfig(config);
    nlohmann::ordered_json defense_json = nlohmann::ordered_json::array();

    for (const DefenseConfig& d : EvaluatedDefenses(config)) {
      DefenseReport dr;
      dr.defense = d;
      dr.tag = DefenseTag(d);
      const fs::path dir = VerdictDir(out, dr.tag);
      absl::StatusOr<std::map<std::string, std::vector<double>>> utility =
          ReadNumericCsv(dir / "utility.csv");
      if (!utility.ok()) return utility.status();
      const std::vector<double>& mious = (*utility)["miou"];
      if (mious.empty()) return absl::DataLossError(absl::StrCat(dr.tag, ": empty utility.csv"));
      IouCounts pooled(config.scene.num_classes);
      for (int c = 0; c < config.scene.num_classes; ++c) {
        const std::vector<double>& inter = (*utility)[absl::StrCat("intersection_", c)];
        const std::vector<double>& uni = (*utility)[absl::StrCat("union_", c)];
        if (inter.size() != mious.size() || uni.size() != mious.size()) {
          return absl::DataLossError(absl::StrCat(dr.tag, ": utility.csv lacks class ", c));
        }
        for (size_t i = 0; i < mious.size(); ++i) {
          pooled.intersection[c] += static_cast<int64_t>(inter[i]);
          pooled.union_size[c] += static_cast<int64_t>(uni[i]);
        }
      }
      dr.miou = pooled.Miou();
      for (double m : mious) dr.image_miou += m;
      dr.image_miou /= static_cast<double>(mious.size());

      auto add = [&](AttackMetrics m, const Curve& roc, const Curve& pr) -> absl::Status {
        const fs::path curves = reports / "curves" / dr.tag;
        if (absl::Status s = WriteStringToFile(curves / (m.attacker + "_roc.csv"), CurveToCsv(roc));
            !s.ok()) {
          return s;
        }
        if (absl::Status s = WriteStringToFile(curves / (m.attacker + "_pr.csv"), CurveToCsv(pr));
            !s.ok()) {
          return s;
        }
        absl::StrAppend(&attacks, dr.tag, ",", Num(d.param), ",", m.attacker, ",", Num(m.auc),
                        ",", Num(m.max_f), ",", CsvNum(m.patch_auc), ",", Num(m.member_mean),
                        ",", Num(m.non_member_mean), ",", m.fallbacks, "\n");
        dr.attacks.push_back(std::move(m));
        return absl::OkStatus();
      };
      for (const NamedAttacker& a : AttackersFor(config, d)) {
        absl::StatusOr<std::vector<VerdictRow>> rows = ReadVerdicts(dir / (a.name + ".csv"));
        if (!rows.ok()) return rows.status();
        std::vector<double> scores;
        std::vector<bool> member;
        std::vector<std::vector<double>> patches;
        int fallbacks = 0;
        for (const VerdictRow& v : *rows) {
          scores.push_back(v.score);
          member.push_back(v.member);
          patches.push_back(v.patch_scores);
          fallbacks += v.fell_back;
        }
        Curve roc, pr;
        absl::StatusOr<AttackMetrics> m = MetricsOf(a.name, scores, member,
                                                    a.record_patches ? &patches : nullptr,
                                                    fallbacks, &roc, &pr);
        if (!m.ok()) return m.status();
        if (absl::Status s = add(*std::move(m), roc, pr); !s.ok()) return s;
      }
      if (config.baselines) {
        absl::StatusOr<std::map<std::string, std::vector<double>>> base =
            ReadNumericCsv(dir / "baselines.csv");
        if (!base.ok()) return base.status();
        std::vector<bool> member;
        for (double v : (*base)["member"]) member.push_back(v != 0.0);
        for (const auto& [name, column] :
             {std::pair<const char*, const char*>{kMeanConfidence, "mean_confidence"},
              {kMeanLoss, "mean_loss"}}) {
          Curve roc, pr;
          absl::StatusOr<AttackMetrics> m =
              MetricsOf(name, (*base)[column], member, nullptr, 0, &roc, &pr);
          if (!m.ok()) return m.status();
          if (absl::Status s = add(*std::move(m), roc, pr); !s.ok()) return s;
        }
      }
      const AttackMetrics* main = dr.Find(kMain);
      absl::StrAppend(&pu, DefenseName(d.kind), ",", Num(d.param), ",", Num(main->auc), ",",
                      Num(main->max_f), ",", Num(dr.miou), "\n");

      const ShadowView view = ViewFor(config, d);
      nlohmann::ordered_json dj;
      dj["defense"] = dr.tag;
      dj["kind"] = DefenseName(d.kind);
      dj["param"] = d.param;
      dj["victim_model"] = VictimModelName(d);
      dj["shadow_model"] = view.shadow_model;
      dj["shadow_view"] = view.name;
      dj["shadow_transform"] = DefenseTag(view.transform);
      dj["miou"] = dr.miou;
      dj["image_miou"] = dr.image_miou;
      nlohmann::ordered_json aj = nlohmann::ordered_json::array();
      for (const AttackMetrics& m : dr.attacks) aj.push_back(MetricsJson(m));
      dj["attacks"] = aj;
      defense_json.push_back(dj);
      report.defenses.push_back(std::move(dr));
    }

    std::string structure = "patch_size,patch_auc,image_auc\n";
    for (int p : config.structure_patch_sizes) {
      const AttackMetrics* m = report.defenses[0].Find(StructureName(p));
      report.structure.push_back({p, m->patch_auc, m->auc});
      absl::StrAppend(&structure, p, ",", Num(m->patch_auc), ",", Num(m->auc), "\n");
    }

    nlohmann::ordered_json audit = nlohmann::ordered_json::object();
    for (const DefenseConfig& d : config.defenses) {
      if (!IsDpsgd(d)) continue;
      std::vector<std::string> names = {VictimModelName(d)};
      if (config.setting == AttackSetting::kDependent) names.push_back("shadow-" + DefenseTag(d));
      for (const std::string& name : names) {
        absl::StatusOr<SegModel> model = LoadSegModel(ModelDir(out, name));
        if (!model.ok()) return model.status();
        report.clip_audit.emplace_back(name, model->max_clip_ratio);
        audit[name] = model->max_clip_ratio;
      }
    }

    if (absl::Status s = WriteStringToFile(reports / "privacy_utility.csv", pu); !s.ok()) return s;
    if (absl::Status s = WriteStringToFile(reports / "attacks.csv", attacks); !s.ok()) return s;
    if (absl::Status s = WriteStringToFile(reports / "structure.csv", structure); !s.ok()) {
      return s;
    }

    std::string summary = absl::StrFormat(
        "setting %s, seed %d, %d members / %d non-members (random-guess F %.4f)\n\n",
        AttackSettingName(config.setting), config.seed, config.splits.victim_in,
        config.splits.victim_out, report.random_guess_f);
    absl::StrAppend(&summary, absl::StrFormat("%-18s %-16s %8s %8s %10s %8s %10s\n", "defense",
                                              "attacker", "AUC", "max-F", "patch-AUC", "mIoU",
                                              "image-mIoU"));
    for (const DefenseReport& dr : report.defenses) {
      for (const AttackMetrics& m : dr.attacks) {
        absl::StrAppend(&summary,
                        absl::StrFormat("%-18s %-16s %8.4f %8.4f %10s %8.4f %10.4f\n", dr.tag,
                                        m.attacker, m.auc, m.max_f,
                                        std::isnan(m.patch_auc)
                                            ? std::string("-")
                                            : absl::StrFormat("%.4f", m.patch_auc),
                                        dr.miou, dr.image_miou));
      }
    }
    if (!report.structure.empty()) {
      absl::StrAppend(&summary, "\npatch size  patch-AUC  image-AUC\n");
      for (const StructurePoint& p : report.structure) {
        absl::StrAppend(&summary, absl::StrFormat("%10d  %9.4f  %9.4f\n", p.patch_size,
                                                  p.patch_auc, p.image_auc));
      }
    }
    for (const auto& [name, ratio] : report.clip_audit) {
      absl::StrAppend(&summary,
                      absl::StrFormat("\n%s: max clipped norm / clip = %.9f", name, ratio));
    }
    absl::StrAppend(&summary, "\n");
    if (absl::Status s = WriteStringToFile(reports / "summary.txt", summary); !s.ok()) return s;

    nlohmann::ordered_json timings = nlohmann::ordered_json::object();
    for (const char* stage : {"gen-data", "train-victim", "train-shadow", "train-attacker",
                              "attack", "defend-sweep"}) {
      absl::StatusOr<std::string> t =
          ReadFileToString(reports / "timings" / (std::string(stage) + ".txt"));
      double seconds;
      if (t.ok() && absl::SimpleAtod(absl::StripAsciiWhitespace(*t), &seconds)) {
        timings[stage] = seconds;
      }
    }
    nlohmann::ordered_json hashes = nlohmann::ordered_json::object();
    if (absl::StatusOr<std::string> h = HashArtifacts(out, &hashes); !h.ok()) return h.status();
    ledger["random_guess_f"] = report.random_guess_f;
    ledger["defenses"] = defense_json;
    nlohmann::ordered_json sj = nlohmann::ordered_json::array();
    for (const StructurePoint& p : report.structure) {
      sj.push_back({{"patch_size", p.patch_size},
                    {"patch_auc", p.patch_auc},
                    {"image_auc", p.image_auc}});
    }
    ledger["structure"] = sj;
    ledger["clip_audit"] = audit;
    ledger["artifacts"] = hashes;
    ledger["timings_seconds"] = timings;
    if (absl::Status s = WriteStringToFile(reports / "ledger.json", ledger.dump(2) + "\n");
        !s.ok()) {
      return s;
    }
    return report;
  };
  absl::StatusOr<RunReport> report = run();
  if (!report.ok()) return InStage("report", report.status());
  return report;
}

absl::StatusOr<RunReport> RunExperiment(const ExperimentConfig& config, const fs::path& out,
                                        const RunOptions& options) {
  using Stage = absl::Status (*)(const ExperimentConfig&, const fs::path&, const RunOptions&);
  for (Stage stage : {GenerateDataStage, TrainVictimStage, TrainShadowStage, TrainAttackerStage,
                      AttackStage, DefendSweepStage}) {
    if (absl::Status s = stage(config, out, options); !s.ok()) return s;
  }
  return ReportStage(config, out, options);
}

}  // namespace segleak
