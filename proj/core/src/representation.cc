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


#include "segleak/representation.h"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "absl/strings/str_cat.h"
#include "segleak/loss.h"

namespace segleak {
namespace {

absl::Status CheckPair(const Tensor& p, const Tensor& y) {
  if (p.rank() != 3 || p.shape() != y.shape()) {
    return absl::InvalidArgumentError(
        absl::StrCat("posterior ", ShapeToString(p.shape()), " and ground truth ",
                     ShapeToString(y.shape()), " must be matching {C,H,W} maps"));
  }
  return absl::OkStatus();
}

}  // namespace

std::string RepresentationName(RepresentationKind kind) {
  return kind == RepresentationKind::kConcat ? "concat" : "slm";
}

absl::StatusOr<RepresentationKind> ParseRepresentation(std::string_view name) {
  if (name == "concat") return RepresentationKind::kConcat;
  if (name == "slm") return RepresentationKind::kSlm;
  return absl::InvalidArgumentError(
      absl::StrCat("unknown representation '", absl::string_view(name.data(), name.size()),
                   "' (expected concat or slm)"));
}

int RepresentationChannels(RepresentationKind kind, int num_classes) {
  return kind == RepresentationKind::kConcat ? 2 * num_classes : 1;
}

absl::Status CheckRect(const PatchRect& rect, int height, int width) {
  if (rect.height < 1 || rect.width < 1 || rect.top < 0 || rect.left < 0 ||
      rect.top + rect.height > height || rect.left + rect.width > width) {
    return absl::OutOfRangeError(absl::StrCat(
        "patch (top=", rect.top, ", left=", rect.left, ", ", rect.height, "x",
        rect.width, ") is not inside the ", height, "x", width, " image"));
  }
  return absl::OkStatus();
}

absl::StatusOr<Tensor> ConcatRepresentation(const Tensor& p, const Tensor& y) {
  if (absl::Status s = CheckPair(p, y); !s.ok()) return s;
  Tensor out({2 * p.dim(0), p.dim(1), p.dim(2)});
  std::memcpy(out.raw(), p.raw(), sizeof(float) * p.size());
  std::memcpy(out.raw() + p.size(), y.raw(), sizeof(float) * y.size());
  return out;
}

double MaxStructuredLoss() { return -std::log(static_cast<double>(kLogEpsilon)); }

absl::StatusOr<Tensor> StructuredLossMap(const Tensor& p, const Tensor& y) {
  if (absl::Status s = CheckPair(p, y); !s.ok()) return s;
  const int c = p.dim(0);
  const int64_t plane = static_cast<int64_t>(p.dim(1)) * p.dim(2);
  const double eps = kLogEpsilon;
  Tensor out({1, p.dim(1), p.dim(2)});
  for (int64_t j = 0; j < plane; ++j) {
    double loss = 0.0;
    for (int k = 0; k < c; ++k) {
      const float t = y[k * plane + j];
      if (t != 0.0f) loss -= t * std::log(std::max(static_cast<double>(p[k * plane + j]), eps));
    }
    out[j] = static_cast<float>(loss);
  }
  return out;
}

absl::StatusOr<Tensor> BuildRepresentation(RepresentationKind kind, const Tensor& p,
                                           const Tensor& y) {
  if (kind == RepresentationKind::kConcat) return ConcatRepresentation(p, y);
  absl::StatusOr<Tensor> slm = StructuredLossMap(p, y);
  if (!slm.ok()) return slm.status();
  const double scale = 1.0 / MaxStructuredLoss();
  for (float& v : slm->data()) v = static_cast<float>(std::min(1.0, v * scale));
  return slm;
}

absl::StatusOr<Tensor> Crop(const Tensor& t, const PatchRect& rect) {
  if (t.rank() != 3) {
    return absl::InvalidArgumentError(
        absl::StrCat("crop expects a {C,H,W} map, got ", ShapeToString(t.shape())));
  }
  if (absl::Status s = CheckRect(rect, t.dim(1), t.dim(2)); !s.ok()) return s;
  Tensor out({t.dim(0), rect.height, rect.width});
  for (int c = 0; c < t.dim(0); ++c) {
    for (int y = 0; y < rect.height; ++y) {
      const float* src =
          t.raw() + (static_cast<int64_t>(c) * t.dim(1) + rect.top + y) * t.dim(2) + rect.left;
      std::memcpy(&out.at(c, y, 0), src, sizeof(float) * rect.width);
    }
  }
  return out;
}

absl::StatusOr<double> MeanTrueConfidence(const Tensor& p, const Tensor& y,
                                          const PatchRect& rect) {
  if (absl::Status s = CheckPair(p, y); !s.ok()) return s;
  if (absl::Status s = CheckRect(rect, p.dim(1), p.dim(2)); !s.ok()) return s;
  double sum = 0.0;
  for (int k = 0; k < p.dim(0); ++k) {
    for (int i = rect.top; i < rect.top + rect.height; ++i) {
      for (int j = rect.left; j < rect.left + rect.width; ++j) {
        sum += static_cast<double>(p.at(k, i, j)) * y.at(k, i, j);
      }
    }
  }
  return sum / (static_cast<double>(rect.height) * rect.width);
}

}  // namespace segleak
