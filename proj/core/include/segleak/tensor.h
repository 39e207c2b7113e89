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

#ifndef SEGLEAK_TENSOR_H_
#define SEGLEAK_TENSOR_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "absl/status/statusor.h"

namespace segleak {

// Ordered list of positive extents. Spatial maps are stored channel-major:
// {channels, height, width}.
using Shape = std::vector<int>;

int64_t ShapeSize(const Shape& shape);
std::string ShapeToString(const Shape& shape);

// Dense row-major array of 32-bit reals.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);

  // Fails when the payload length does not match the shape or an extent is
  // not positive.
  static absl::StatusOr<Tensor> Create(Shape shape, std::vector<float> data);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_[axis]; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  float* raw() { return data_.data(); }
  const float* raw() const { return data_.data(); }

  float& operator[](int64_t i) { return data_[i]; }
  float operator[](int64_t i) const { return data_[i]; }

  // Rank-3 accessors for {C, H, W} maps.
  float& at(int c, int y, int x) {
    return data_[(static_cast<int64_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  float at(int c, int y, int x) const {
    return data_[(static_cast<int64_t>(c) * shape_[1] + y) * shape_[2] + x];
  }

  void Fill(float value);
  bool AllFinite() const;
  double SquaredNorm() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Copies channels [begin, end) of a rank-3 tensor.
absl::StatusOr<Tensor> SliceChannels(const Tensor& t, int begin, int end);

}  // namespace segleak

#endif  // SEGLEAK_TENSOR_H_
