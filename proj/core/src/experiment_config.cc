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


#include "segleak/experiment_config.h"

#include <cctype>
#include <set>
#include <utility>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "segleak/tensor_io.h"
#include "yaml-cpp/yaml.h"

namespace segleak {
namespace {

absl::string_view View(std::string_view s) { return absl::string_view(s.data(), s.size()); }

// Strict reader of one YAML mapping: every key must be consumed by a Read*
// call before Finish(), otherwise Finish() reports the first unknown key.
class MapReader {
 public:
  MapReader(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {}

  absl::Status status() const { return status_; }

  bool Has(const char* key) const { return node_[key].IsDefined(); }

  template <typename T>
  void Read(const char* key, T* out) {
    const YAML::Node value = Take(key);
    if (!value.IsDefined() || !status_.ok()) return;
    if (!value.IsScalar()) {
      Fail(key, "expected a scalar");
      return;
    }
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      const std::string& text = value.Scalar();
      if (text.empty() || !std::isdigit(static_cast<unsigned char>(text[0]))) {
        Fail(key, absl::StrCat("expected a non-negative integer, got '", text, "'"));
        return;
      }
    }
    try {
      *out = value.as<T>();
    } catch (const YAML::Exception&) {
      Fail(key, absl::StrCat("cannot parse '", value.Scalar(), "'"));
    }
  }

  template <typename T>
  void ReadList(const char* key, std::vector<T>* out) {
    const YAML::Node value = Take(key);
    if (!value.IsDefined() || !status_.ok()) return;
    if (!value.IsSequence()) {
      Fail(key, "expected a list");
      return;
    }
    out->clear();
    try {
      for (const YAML::Node& item : value) out->push_back(item.as<T>());
    } catch (const YAML::Exception&) {
      Fail(key, "list entries have the wrong type");
    }
  }

  // Child mapping, or an undefined node when absent.
  YAML::Node Map(const char* key) {
    const YAML::Node value = Take(key);
    if (value.IsDefined() && !value.IsMap() && status_.ok()) Fail(key, "expected a mapping");
    return status_.ok() ? value : YAML::Node(YAML::NodeType::Undefined);
  }

  YAML::Node Sequence(const char* key) {
    const YAML::Node value = Take(key);
    if (value.IsDefined() && !value.IsSequence() && status_.ok()) Fail(key, "expected a list");
    return status_.ok() ? value : YAML::Node(YAML::NodeType::Undefined);
  }

  std::string Path(const char* key) const {
    return path_.empty() ? std::string(key) : absl::StrCat(path_, ".", key);
  }

  void Merge(const absl::Status& status) {
    if (status_.ok() && !status.ok()) status_ = status;
  }

  void Fail(const char* key, absl::string_view why) {
    if (status_.ok()) {
      status_ = absl::InvalidArgumentError(absl::StrCat("config key '", Path(key), "': ", why));
    }
  }

  absl::Status Finish() {
    if (!status_.ok()) return status_;
    for (const auto& entry : node_) {
      const std::string key = entry.first.as<std::string>();
      if (!consumed_.contains(key)) {
        return absl::InvalidArgumentError(
            absl::StrCat("unknown config key '", Path(key.c_str()), "'"));
      }
    }
    return absl::OkStatus();
  }

 private:
  YAML::Node Take(const char* key) {
    consumed_.insert(key);
    return node_[key];
  }

  YAML::Node node_;
  std::string path_;
  std::set<std::string> consumed_;
  absl::Status status_;
};

template <typename Enum, typename Parser>
void ReadEnum(MapReader& r, const char* key, Parser parse, Enum* out) {
  std::string name;
  r.Read(key, &name);
  if (name.empty() || !r.status().ok()) return;
  absl::StatusOr<Enum> value = parse(name);
  if (!value.ok()) {
    r.Fail(key, value.status().message());
    return;
  }
  *out = *value;
}

absl::Status ReadSelector(const YAML::Node& node, const std::string& path, PatchSelector* s) {
  if (!node.IsDefined()) return absl::OkStatus();
  MapReader r(node, path);
  ReadEnum(r, "kind", ParseSelector, &s->kind);
  r.Read("step", &s->step);
  r.Read("count", &s->count);
  r.Read("tau", &s->tau);
  r.Read("max_attempts", &s->max_attempts);
  return r.Finish();
}

// Model keys live directly in the victim / shadow mappings.
void ReadModel(MapReader& r, ModelConfig* m) {
  r.ReadList("hidden_widths", &m->architecture.hidden_widths);
  r.Read("epochs", &m->train.epochs);
  r.Read("batch_size", &m->train.batch_size);
  r.Read("learning_rate", &m->train.learning_rate);
  r.Read("momentum", &m->train.momentum);
  r.Read("dropout_ratio", &m->train.dropout_ratio);
  ReadEnum(r, "optimizer", ParseOptimizer, &m->train.optimizer);
  r.Read("noise_variance", &m->train.noise_variance);
  r.Read("clip_quantile", &m->train.clip_quantile);
  m->architecture.dropout_ratio = m->train.dropout_ratio;
}

std::string FormatFloat(double v) { return absl::StrFormat("%.17g", v); }
std::string FormatFloat(float v) { return absl::StrFormat("%.9g", v); }

void EmitSelector(YAML::Emitter& out, const PatchSelector& s) {
  out << YAML::Key << "selector" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << SelectorName(s.kind);
  out << YAML::Key << "step" << YAML::Value << s.step;
  out << YAML::Key << "count" << YAML::Value << s.count;
  out << YAML::Key << "tau" << YAML::Value << FormatFloat(s.tau);
  out << YAML::Key << "max_attempts" << YAML::Value << s.max_attempts;
  out << YAML::EndMap;
}

void EmitModel(YAML::Emitter& out, const ModelConfig& m) {
  out << YAML::Key << "hidden_widths" << YAML::Value << YAML::Flow
      << m.architecture.hidden_widths;
  out << YAML::Key << "epochs" << YAML::Value << m.train.epochs;
  out << YAML::Key << "batch_size" << YAML::Value << m.train.batch_size;
  out << YAML::Key << "learning_rate" << YAML::Value << FormatFloat(m.train.learning_rate);
  out << YAML::Key << "momentum" << YAML::Value << FormatFloat(m.train.momentum);
  out << YAML::Key << "dropout_ratio" << YAML::Value << FormatFloat(m.train.dropout_ratio);
  out << YAML::Key << "optimizer" << YAML::Value << OptimizerName(m.train.optimizer);
  out << YAML::Key << "noise_variance" << YAML::Value << FormatFloat(m.train.noise_variance);
  out << YAML::Key << "clip_quantile" << YAML::Value << FormatFloat(m.train.clip_quantile);
}

// Name of the first field in which two model configs differ.
std::string FirstDifference(const ModelConfig& a, const ModelConfig& b) {
  if (a.architecture.hidden_widths != b.architecture.hidden_widths) return "hidden_widths";
  if (a.architecture.dropout_ratio != b.architecture.dropout_ratio) return "dropout_ratio";
  const TrainConfig& x = a.train;
  const TrainConfig& y = b.train;
  if (x.epochs != y.epochs) return "epochs";
  if (x.batch_size != y.batch_size) return "batch_size";
  if (x.learning_rate != y.learning_rate) return "learning_rate";
  if (x.momentum != y.momentum) return "momentum";
  if (x.dropout_ratio != y.dropout_ratio) return "dropout_ratio";
  if (x.optimizer != y.optimizer) return "optimizer";
  if (x.noise_variance != y.noise_variance) return "noise_variance";
  if (x.clip_quantile != y.clip_quantile) return "clip_quantile";
  return "";
}

bool SameProtocol(const ModelConfig& a, const ModelConfig& b) {
  return FirstDifference(a, b).empty();
}

absl::Status Prefix(absl::string_view where, const absl::Status& s) {
  if (s.ok()) return s;
  return absl::Status(s.code(), absl::StrCat(where, ": ", s.message()));
}

}  // namespace

std::string AttackSettingName(AttackSetting setting) {
  return setting == AttackSetting::kDependent ? "dependent" : "independent";
}

absl::StatusOr<AttackSetting> ParseAttackSetting(std::string_view name) {
  if (name == "dependent") return AttackSetting::kDependent;
  if (name == "independent") return AttackSetting::kIndependent;
  return absl::InvalidArgumentError(absl::StrCat(
      "unknown setting '", View(name), "' (expected dependent or independent)"));
}

ExperimentConfig DefaultExperimentConfig() {
  ExperimentConfig c;
  c.shadow = c.victim;
  return c;
}

ModelConfig IndependentShadowConfig() {
  ModelConfig m;
  m.architecture = IndependentShadowArchitecture();
  m.train.epochs = 60;
  m.architecture.dropout_ratio = m.train.dropout_ratio;
  return m;
}

std::string DefenseTag(const DefenseConfig& d) {
  switch (d.kind) {
    case DefenseKind::kNone:
    case DefenseKind::kArgmax:
      return DefenseName(d.kind);
    case DefenseKind::kDpsgd:
      if (d.clip_quantile != DefenseConfig{}.clip_quantile) {
        return absl::StrFormat("dpsgd-%g-q%g", d.param, d.clip_quantile);
      }
      [[fallthrough]];
    default:
      return absl::StrFormat("%s-%g", DefenseName(d.kind), d.param);
  }
}

absl::Status ValidateExperimentConfig(const ExperimentConfig& c) {
  if (c.schema_version != kExperimentSchemaVersion) {
    return absl::InvalidArgumentError(absl::StrCat("unsupported schema_version ",
                                                   c.schema_version, " (this build reads ",
                                                   kExperimentSchemaVersion, ")"));
  }
  if (absl::Status s = ValidateSceneConfig(c.scene); !s.ok()) return Prefix("scene", s);
  const SplitSizes& z = c.splits;
  if (z.victim_in < 1 || z.victim_out < 1 || z.shadow_in < 1 || z.shadow_out < 1) {
    return absl::InvalidArgumentError("splits: every split needs at least one image");
  }
  for (const auto& [name, m] : {std::pair<const char*, const ModelConfig&>{"victim", c.victim},
                                {"shadow", c.shadow}}) {
    if (absl::Status s = ValidateTrainConfig(m.train); !s.ok()) return Prefix(name, s);
    if (m.architecture.dropout_ratio != m.train.dropout_ratio) {
      return absl::InvalidArgumentError(
          absl::StrCat(name, ": architecture and training dropout ratios differ"));
    }
    absl::StatusOr<NetworkSpec> spec = SegmenterSpec(m.architecture, c.scene.height,
                                                     c.scene.width, c.scene.num_classes);
    if (!spec.ok()) return Prefix(name, spec.status());
  }
  if (c.setting == AttackSetting::kDependent && !SameProtocol(c.victim, c.shadow)) {
    return absl::InvalidArgumentError(absl::StrCat(
        "dependent setting requires the shadow to follow the victim's learning protocol, "
        "but victim and shadow differ in '",
        FirstDifference(c.victim, c.shadow), "'"));
  }
  if (c.victim.train.optimizer == OptimizerKind::kDpsgd) {
    for (const DefenseConfig& d : c.defenses) {
      if (d.kind == DefenseKind::kDpsgd) {
        return absl::InvalidArgumentError(
            "victim.optimizer must be sgd when a dpsgd defense is listed");
      }
    }
  }
  const int side = std::min(c.scene.height, c.scene.width);
  auto check_attack = [&](absl::string_view where, int patch, const PatchSelector& sel) {
    if (patch < 1 || patch > side) {
      return absl::InvalidArgumentError(
          absl::StrCat(where, ": patch_size ", patch, " must lie in [1, ", side, "]"));
    }
    if (absl::Status s = ValidateSelector(sel); !s.ok()) return Prefix(where, s);
    if (sel.kind == SelectorKind::kSliding && sel.step > patch) {
      return absl::InvalidArgumentError(absl::StrCat(
          where, ": sliding step ", sel.step, " exceeds patch_size ", patch,
          " and would leave pixels uncovered"));
    }
    return absl::OkStatus();
  };
  if (absl::Status s = ValidateAttackerConfig(c.attacker); !s.ok()) return Prefix("attacker", s);
  if (absl::Status s = check_attack("attacker", c.attacker.patch_size, c.selector); !s.ok()) {
    return s;
  }
  std::set<std::string> names = {"main", "pixel", "mean-confidence", "mean-loss"};
  for (const AttackVariant& v : c.variants) {
    if (v.name.empty()) return absl::InvalidArgumentError("attacker.variants: empty name");
    for (char ch : v.name) {
      if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_')) {
        return absl::InvalidArgumentError(absl::StrCat(
            "attacker.variants: name '", v.name, "' may only use letters, digits, - and _"));
      }
    }
    if (!names.insert(v.name).second) {
      return absl::InvalidArgumentError(
          absl::StrCat("attacker.variants: duplicate or reserved name '", v.name, "'"));
    }
    if (absl::Status s = check_attack(absl::StrCat("attacker.variants.", v.name),
                                      v.patch_size, v.selector);
        !s.ok()) {
      return s;
    }
  }
  std::set<int> sizes;
  for (int p : c.structure_patch_sizes) {
    if (absl::Status s = check_attack("attacker.structure_patch_sizes", p, c.selector);
        !s.ok()) {
      return s;
    }
    if (!sizes.insert(p).second) {
      return absl::InvalidArgumentError("attacker.structure_patch_sizes: duplicate size");
    }
  }
  if (c.defenses.empty()) return absl::InvalidArgumentError("defenses: list is empty");
  std::set<std::string> tags;
  for (const DefenseConfig& d : c.defenses) {
    if (absl::Status s = ValidateDefense(d); !s.ok()) return Prefix("defenses", s);
    if (!tags.insert(DefenseTag(d)).second) {
      return absl::InvalidArgumentError(
          absl::StrCat("defenses: '", DefenseTag(d), "' listed twice"));
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<ExperimentConfig> ParseExperimentConfig(std::string_view yaml) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml));
  } catch (const YAML::Exception& e) {
    return absl::InvalidArgumentError(absl::StrCat("config is not valid YAML: ", e.what()));
  }
  if (!root.IsMap()) return absl::InvalidArgumentError("config must be a YAML mapping");
  ExperimentConfig c = DefaultExperimentConfig();
  MapReader top(root, "");
  if (!top.Has("schema_version")) {
    return absl::InvalidArgumentError("config key 'schema_version' is required");
  }
  top.Read("schema_version", &c.schema_version);
  if (top.status().ok() && c.schema_version != kExperimentSchemaVersion) {
    return absl::InvalidArgumentError(absl::StrCat("unsupported schema_version ",
                                                   c.schema_version, " (this build reads ",
                                                   kExperimentSchemaVersion, ")"));
  }
  top.Read("seed", &c.seed);

  if (YAML::Node n = top.Map("scene"); n.IsDefined()) {
    MapReader r(n, "scene");
    r.Read("height", &c.scene.height);
    r.Read("width", &c.scene.width);
    r.Read("num_classes", &c.scene.num_classes);
    r.Read("min_objects", &c.scene.min_objects);
    r.Read("max_objects", &c.scene.max_objects);
    r.Read("texture_noise_sigma", &c.scene.texture_noise_sigma);
    top.Merge(r.Finish());
  }
  if (YAML::Node n = top.Map("splits"); n.IsDefined()) {
    MapReader r(n, "splits");
    r.Read("victim_in", &c.splits.victim_in);
    r.Read("victim_out", &c.splits.victim_out);
    r.Read("shadow_in", &c.splits.shadow_in);
    r.Read("shadow_out", &c.splits.shadow_out);
    top.Merge(r.Finish());
  }
  if (YAML::Node n = top.Map("victim"); n.IsDefined()) {
    MapReader r(n, "victim");
    ReadModel(r, &c.victim);
    top.Merge(r.Finish());
  }
  {
    YAML::Node n = top.Map("shadow");
    MapReader r(n.IsDefined() ? n : YAML::Node(YAML::NodeType::Map), "shadow");
    ReadEnum(r, "setting", ParseAttackSetting, &c.setting);
    r.Read("shifted_scene", &c.shadow_shifted_scene);
    c.shadow = c.setting == AttackSetting::kDependent ? c.victim : IndependentShadowConfig();
    ReadModel(r, &c.shadow);
    top.Merge(r.Finish());
  }
  if (YAML::Node n = top.Map("attacker"); n.IsDefined()) {
    MapReader r(n, "attacker");
    ReadEnum(r, "representation", ParseRepresentation, &c.attacker.representation);
    r.Read("patch_size", &c.attacker.patch_size);
    r.Read("epochs", &c.attacker.epochs);
    r.Read("learning_rate", &c.attacker.learning_rate);
    r.Read("momentum", &c.attacker.momentum);
    r.Read("patches_per_image", &c.attacker.patches_per_image);
    top.Merge(ReadSelector(r.Map("selector"), "attacker.selector", &c.selector));
    r.ReadList("structure_patch_sizes", &c.structure_patch_sizes);
    r.Read("baselines", &c.baselines);
    if (YAML::Node list = r.Sequence("variants"); list.IsDefined()) {
      c.variants.clear();
      for (size_t i = 0; i < list.size(); ++i) {
        const std::string path = absl::StrCat("attacker.variants[", i, "]");
        if (!list[i].IsMap()) {
          top.Merge(absl::InvalidArgumentError(absl::StrCat(path, ": expected a mapping")));
          break;
        }
        AttackVariant v;
        v.representation = c.attacker.representation;
        v.patch_size = c.attacker.patch_size;
        v.selector = c.selector;
        MapReader vr(list[i], path);
        vr.Read("name", &v.name);
        ReadEnum(vr, "representation", ParseRepresentation, &v.representation);
        vr.Read("patch_size", &v.patch_size);
        top.Merge(ReadSelector(vr.Map("selector"), path + ".selector", &v.selector));
        top.Merge(vr.Finish());
        c.variants.push_back(std::move(v));
      }
    }
    top.Merge(r.Finish());
  }
  if (YAML::Node list = top.Sequence("defenses"); list.IsDefined()) {
    c.defenses.clear();
    for (size_t i = 0; i < list.size(); ++i) {
      const std::string path = absl::StrCat("defenses[", i, "]");
      if (!list[i].IsMap()) {
        top.Merge(absl::InvalidArgumentError(absl::StrCat(path, ": expected a mapping")));
        break;
      }
      DefenseConfig d;
      MapReader dr(list[i], path);
      if (!dr.Has("kind")) dr.Fail("kind", "is required");
      ReadEnum(dr, "kind", ParseDefense, &d.kind);
      dr.Read("param", &d.param);
      dr.Read("clip_quantile", &d.clip_quantile);
      top.Merge(dr.Finish());
      c.defenses.push_back(d);
    }
  }
  if (absl::Status s = top.Finish(); !s.ok()) return s;
  if (absl::Status s = ValidateExperimentConfig(c); !s.ok()) return s;
  return c;
}

absl::StatusOr<ExperimentConfig> LoadExperimentConfig(const std::filesystem::path& path) {
  absl::StatusOr<std::string> text = ReadFileToString(path);
  if (!text.ok()) return text.status();
  absl::StatusOr<ExperimentConfig> config = ParseExperimentConfig(*text);
  if (!config.ok()) return Prefix(path.string(), config.status());
  return config;
}

std::string FormatExperimentConfig(const ExperimentConfig& c) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "schema_version" << YAML::Value << c.schema_version;
  out << YAML::Key << "seed" << YAML::Value << c.seed;
  out << YAML::Key << "scene" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "height" << YAML::Value << c.scene.height;
  out << YAML::Key << "width" << YAML::Value << c.scene.width;
  out << YAML::Key << "num_classes" << YAML::Value << c.scene.num_classes;
  out << YAML::Key << "min_objects" << YAML::Value << c.scene.min_objects;
  out << YAML::Key << "max_objects" << YAML::Value << c.scene.max_objects;
  out << YAML::Key << "texture_noise_sigma" << YAML::Value
      << FormatFloat(c.scene.texture_noise_sigma);
  out << YAML::EndMap;
  out << YAML::Key << "splits" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "victim_in" << YAML::Value << c.splits.victim_in;
  out << YAML::Key << "victim_out" << YAML::Value << c.splits.victim_out;
  out << YAML::Key << "shadow_in" << YAML::Value << c.splits.shadow_in;
  out << YAML::Key << "shadow_out" << YAML::Value << c.splits.shadow_out;
  out << YAML::EndMap;
  out << YAML::Key << "victim" << YAML::Value << YAML::BeginMap;
  EmitModel(out, c.victim);
  out << YAML::EndMap;
  out << YAML::Key << "shadow" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "setting" << YAML::Value << AttackSettingName(c.setting);
  out << YAML::Key << "shifted_scene" << YAML::Value << c.shadow_shifted_scene;
  EmitModel(out, c.shadow);
  out << YAML::EndMap;
  out << YAML::Key << "attacker" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "representation" << YAML::Value
      << RepresentationName(c.attacker.representation);
  out << YAML::Key << "patch_size" << YAML::Value << c.attacker.patch_size;
  out << YAML::Key << "epochs" << YAML::Value << c.attacker.epochs;
  out << YAML::Key << "learning_rate" << YAML::Value << FormatFloat(c.attacker.learning_rate);
  out << YAML::Key << "momentum" << YAML::Value << FormatFloat(c.attacker.momentum);
  out << YAML::Key << "patches_per_image" << YAML::Value << c.attacker.patches_per_image;
  EmitSelector(out, c.selector);
  out << YAML::Key << "variants" << YAML::Value << YAML::BeginSeq;
  for (const AttackVariant& v : c.variants) {
    out << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << v.name;
    out << YAML::Key << "representation" << YAML::Value << RepresentationName(v.representation);
    out << YAML::Key << "patch_size" << YAML::Value << v.patch_size;
    EmitSelector(out, v.selector);
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "structure_patch_sizes" << YAML::Value << YAML::Flow
      << c.structure_patch_sizes;
  out << YAML::Key << "baselines" << YAML::Value << c.baselines;
  out << YAML::EndMap;
  out << YAML::Key << "defenses" << YAML::Value << YAML::BeginSeq;
  for (const DefenseConfig& d : c.defenses) {
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "kind" << YAML::Value << DefenseName(d.kind);
    out << YAML::Key << "param" << YAML::Value << FormatFloat(d.param);
    out << YAML::Key << "clip_quantile" << YAML::Value << FormatFloat(d.clip_quantile);
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace segleak
