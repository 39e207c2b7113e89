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

#include "segleak/tensor.h"

#include <algorithm>
#include <cmath>
#include <utility>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"

namespace segleak {

int64_t ShapeSize(const Shape& shape) {
  int64_t n = 1;
  for (int extent : shape) n *= extent;
  return n;
}

std::string ShapeToString(const Shape& shape) {
  return absl::StrCat("(", absl::StrJoin(shape, ","), ")");
}

Tensor::Tensor(Shape shape, float fill)
    : shape_(std::move(shape)), data_(ShapeSize(shape_), fill) {}

absl::StatusOr<Tensor> Tensor::Create(Shape shape, std::vector<float> data) {
  for (int extent : shape) {
    if (extent <= 0) {
      return absl::InvalidArgumentError(
          absl::StrCat("non-positive extent in shape ", ShapeToString(shape)));
    }
  }
  if (ShapeSize(shape) != static_cast<int64_t>(data.size())) {
    return absl::InvalidArgumentError(
        absl::StrCat("shape ", ShapeToString(shape), " holds ",
                     ShapeSize(shape), " values but ", data.size(),
                     " were given"));
  }
  for (size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      return absl::InvalidArgumentError(
          absl::StrCat("non-finite value ", data[i], " at index ", i));
    }
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

void Tensor::Fill(float value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return std::isfinite(v); });
}

double Tensor::SquaredNorm() const {
  double sum = 0.0;
  for (float v : data_) sum += static_cast<double>(v) * v;
  return sum;
}

absl::StatusOr<Tensor> SliceChannels(const Tensor& t, int begin, int end) {
  if (t.rank() != 3 || begin < 0 || end > t.dim(0) || begin >= end) {
    return absl::InvalidArgumentError(
        absl::StrCat("cannot slice channels [", begin, ",", end, ") of ",
                     ShapeToString(t.shape())));
  }
  const int64_t plane = static_cast<int64_t>(t.dim(1)) * t.dim(2);
  Tensor out({end - begin, t.dim(1), t.dim(2)});
  std::copy(t.raw() + begin * plane, t.raw() + end * plane, out.raw());
  return out;
}

}  // namespace segleak
