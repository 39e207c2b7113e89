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

// A fixed menu of differentiable layers composed into feed-forward networks.
//
// Spatial tensors are {channels, height, width}. A network is a NetworkSpec
// (declared input shape plus an ordered layer list) together with one weight
// and one bias tensor per parameterized layer (convolution, dense). Forward
// returns every intermediate activation so that Backward can run without
// recomputation; gradients are produced for a single example at a time.

#ifndef SEGLEAK_NETWORK_H_
#define SEGLEAK_NETWORK_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "absl/status/statusor.h"
#include "segleak/tensor.h"

namespace segleak {

struct ConvLayer {
  int kernel = 3;
  int in_channels = 1;
  int out_channels = 1;
  int stride = 1;
  int padding = 0;
  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};
struct ReluLayer {
  friend bool operator==(const ReluLayer&, const ReluLayer&) = default;
};
// Non-overlapping window x window pooling; trailing rows/columns that do not
// fill a window are dropped.
struct MaxPoolLayer {
  int window = 2;
  friend bool operator==(const MaxPoolLayer&, const MaxPoolLayer&) = default;
};
// {C, H, W} -> {C}.
struct GlobalAvgPoolLayer {
  friend bool operator==(const GlobalAvgPoolLayer&,
                         const GlobalAvgPoolLayer&) = default;
};
// On a {in} vector: affine map to {out}. On a {in, H, W} map: the same affine
// map applied independently at every location, giving {out, H, W}.
struct DenseLayer {
  int in_features = 1;
  int out_features = 1;
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};
// Inverted dropout: surviving units are scaled by 1 / (1 - ratio). Identity
// unless the forward pass is stochastic.
struct DropoutLayer {
  float ratio = 0.0f;
  friend bool operator==(const DropoutLayer&, const DropoutLayer&) = default;
};
// Softmax over the channel axis at every location (or over a plain vector).
struct ChannelSoftmaxLayer {
  friend bool operator==(const ChannelSoftmaxLayer&,
                         const ChannelSoftmaxLayer&) = default;
};
struct SigmoidLayer {
  friend bool operator==(const SigmoidLayer&, const SigmoidLayer&) = default;
};

using LayerSpec =
    std::variant<ConvLayer, ReluLayer, MaxPoolLayer, GlobalAvgPoolLayer,
                 DenseLayer, DropoutLayer, ChannelSoftmaxLayer, SigmoidLayer>;

struct NetworkSpec {
  Shape input_shape;
  std::vector<LayerSpec> layers;
  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

// Human-readable descriptor, e.g. "conv(k=3,in=3,out=16,s=1,p=1)".
std::string DescribeLayer(const LayerSpec& layer);
bool HasParameters(const LayerSpec& layer);

// Shapes of the input and of every layer output (size layers + 1). Errors
// name the first layer whose input does not compose.
absl::StatusOr<std::vector<Shape>> InferShapes(const NetworkSpec& spec);

struct ForwardOptions {
  // Enables dropout layers.
  bool stochastic = false;
  uint64_t seed = 0;
  // Replaces every dropout layer's ratio during a stochastic pass.
  std::optional<float> dropout_ratio = std::nullopt;
};

struct Activations {
  // values[0] is the input; values[i + 1] is the output of layer i.
  std::vector<Tensor> values;
  // Per-layer auxiliary state: dropout keep-scales, max-pool argmax indices.
  std::vector<std::vector<float>> dropout_scales;
  std::vector<std::vector<int32_t>> pool_indices;

  const Tensor& output() const { return values.back(); }
};

// One gradient tensor per parameter tensor, shape-identical.
struct GradientSet {
  std::vector<Tensor> tensors;
};

class Network {
 public:
  Network() = default;

  // He-initialized weights, zero biases.
  static absl::StatusOr<Network> Create(NetworkSpec spec, uint64_t init_seed);
  static absl::StatusOr<Network> FromParameters(NetworkSpec spec,
                                                std::vector<Tensor> params);

  const NetworkSpec& spec() const { return spec_; }
  const Shape& output_shape() const { return shapes_.back(); }

  // Parameter tensors in layer order: weight then bias of each
  // parameterized layer. Convolution weights are {out, in, k, k}; dense
  // weights are {out, in}.
  const std::vector<Tensor>& parameters() const { return params_; }
  std::vector<Tensor>& mutable_parameters() { return params_; }

  // Parameterized layers are the clipping groups of DPSGD.
  int num_param_groups() const { return static_cast<int>(param_layers_.size()); }
  // Group index of each parameter tensor.
  std::span<const int> group_of_tensor() const { return group_of_tensor_; }

  absl::StatusOr<Activations> Forward(const Tensor& input,
                                      const ForwardOptions& options = {}) const;
  absl::StatusOr<GradientSet> Backward(const Activations& activations,
                                       const Tensor& output_gradient) const;

  GradientSet ZeroGradients() const;

 private:
  NetworkSpec spec_;
  std::vector<Shape> shapes_;
  std::vector<Tensor> params_;
  std::vector<int> param_layers_;      // layer index of each group
  std::vector<int> first_param_of_layer_;  // -1 when the layer has none
  std::vector<int> group_of_tensor_;
};

}  // namespace segleak

#endif  // SEGLEAK_NETWORK_H_
