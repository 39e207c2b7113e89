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

#include "segleak/network.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <utility>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "conv_kernels.h"
#include "segleak/rng.h"

namespace segleak {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

absl::Status LayerError(int index, const LayerSpec& layer,
                        const std::string& what) {
  return absl::InvalidArgumentError(absl::StrCat(
      "layer ", index, " ", DescribeLayer(layer), ": ", what));
}

absl::StatusOr<Shape> OutputShape(int index, const LayerSpec& layer,
                                  const Shape& in) {
  const std::string got = absl::StrCat("got input ", ShapeToString(in));
  return std::visit(
      Overloaded{
          [&](const ConvLayer& c) -> absl::StatusOr<Shape> {
            if (c.kernel < 1 || c.stride < 1 || c.padding < 0 ||
                c.in_channels < 1 || c.out_channels < 1) {
              return LayerError(index, layer, "invalid hyperparameters");
            }
            if (in.size() != 3 || in[0] != c.in_channels) {
              return LayerError(index, layer,
                                absl::StrCat("expects {", c.in_channels,
                                             ",H,W}; ", got));
            }
            const int h = (in[1] + 2 * c.padding - c.kernel) / c.stride + 1;
            const int w = (in[2] + 2 * c.padding - c.kernel) / c.stride + 1;
            if (in[1] + 2 * c.padding < c.kernel ||
                in[2] + 2 * c.padding < c.kernel) {
              return LayerError(index, layer,
                                absl::StrCat("kernel larger than padded ", got));
            }
            return Shape{c.out_channels, h, w};
          },
          [&](const ReluLayer&) -> absl::StatusOr<Shape> { return in; },
          [&](const MaxPoolLayer& p) -> absl::StatusOr<Shape> {
            if (p.window < 1) return LayerError(index, layer, "window < 1");
            if (in.size() != 3 || in[1] < p.window || in[2] < p.window) {
              return LayerError(index, layer,
                                absl::StrCat("needs {C,H,W} with H,W >= ",
                                             p.window, "; ", got));
            }
            return Shape{in[0], in[1] / p.window, in[2] / p.window};
          },
          [&](const GlobalAvgPoolLayer&) -> absl::StatusOr<Shape> {
            if (in.size() != 3) {
              return LayerError(index, layer, absl::StrCat("needs {C,H,W}; ", got));
            }
            return Shape{in[0]};
          },
          [&](const DenseLayer& d) -> absl::StatusOr<Shape> {
            if (d.in_features < 1 || d.out_features < 1) {
              return LayerError(index, layer, "invalid feature counts");
            }
            if (in.size() == 1 && in[0] == d.in_features) {
              return Shape{d.out_features};
            }
            if (in.size() == 3 && in[0] == d.in_features) {
              return Shape{d.out_features, in[1], in[2]};
            }
            return LayerError(index, layer,
                              absl::StrCat("expects {", d.in_features,
                                           "} or {", d.in_features,
                                           ",H,W}; ", got));
          },
          [&](const DropoutLayer& d) -> absl::StatusOr<Shape> {
            if (!(d.ratio >= 0.0f && d.ratio < 1.0f)) {
              return LayerError(index, layer, "ratio must lie in [0,1)");
            }
            return in;
          },
          [&](const ChannelSoftmaxLayer&) -> absl::StatusOr<Shape> {
            if (in.size() != 1 && in.size() != 3) {
              return LayerError(index, layer,
                                absl::StrCat("needs {C} or {C,H,W}; ", got));
            }
            return in;
          },
          [&](const SigmoidLayer&) -> absl::StatusOr<Shape> { return in; },
      },
      layer);
}

// --- Forward kernels -------------------------------------------------------

void DenseForward(const DenseLayer& d, const Tensor& in, const Tensor& weight,
                  const Tensor& bias, Tensor& out) {
  const int64_t locations = in.size() / d.in_features;
  for (int o = 0; o < d.out_features; ++o) {
    float* dst = out.raw() + o * locations;
    std::fill(dst, dst + locations, bias[o]);
    for (int i = 0; i < d.in_features; ++i) {
      const float wv = weight[static_cast<int64_t>(o) * d.in_features + i];
      const float* src = in.raw() + i * locations;
      for (int64_t j = 0; j < locations; ++j) dst[j] += wv * src[j];
    }
  }
}

// Evaluated in double so every probability carries a single final rounding.
void SoftmaxForward(const Tensor& in, Tensor& out) {
  const int channels = in.dim(0);
  const int64_t locations = in.size() / channels;
  std::vector<double> e(channels);
  for (int64_t j = 0; j < locations; ++j) {
    float peak = -std::numeric_limits<float>::infinity();
    for (int c = 0; c < channels; ++c) peak = std::max(peak, in[c * locations + j]);
    double sum = 0.0;
    for (int c = 0; c < channels; ++c) {
      e[c] = std::exp(static_cast<double>(in[c * locations + j]) - peak);
      sum += e[c];
    }
    for (int c = 0; c < channels; ++c) {
      out[c * locations + j] = static_cast<float>(e[c] / sum);
    }
  }
}

float StableSigmoid(float v) {
  if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
  const float e = std::exp(v);
  return e / (1.0f + e);
}

}  // namespace

std::string DescribeLayer(const LayerSpec& layer) {
  return std::visit(
      Overloaded{
          [](const ConvLayer& c) {
            return absl::StrCat("conv(k=", c.kernel, ",in=", c.in_channels,
                                ",out=", c.out_channels, ",s=", c.stride,
                                ",p=", c.padding, ")");
          },
          [](const ReluLayer&) { return std::string("relu"); },
          [](const MaxPoolLayer& p) {
            return absl::StrCat("maxpool(", p.window, ")");
          },
          [](const GlobalAvgPoolLayer&) { return std::string("global_avg_pool"); },
          [](const DenseLayer& d) {
            return absl::StrCat("dense(", d.in_features, "->", d.out_features, ")");
          },
          [](const DropoutLayer& d) { return absl::StrCat("dropout(", d.ratio, ")"); },
          [](const ChannelSoftmaxLayer&) { return std::string("channel_softmax"); },
          [](const SigmoidLayer&) { return std::string("sigmoid"); },
      },
      layer);
}

bool HasParameters(const LayerSpec& layer) {
  return std::holds_alternative<ConvLayer>(layer) ||
         std::holds_alternative<DenseLayer>(layer);
}

absl::StatusOr<std::vector<Shape>> InferShapes(const NetworkSpec& spec) {
  if (spec.input_shape.empty()) {
    return absl::InvalidArgumentError("network input shape is empty");
  }
  for (int extent : spec.input_shape) {
    if (extent <= 0) {
      return absl::InvalidArgumentError(absl::StrCat(
          "network input shape ", ShapeToString(spec.input_shape),
          " has a non-positive extent"));
    }
  }
  std::vector<Shape> shapes = {spec.input_shape};
  for (int i = 0; i < static_cast<int>(spec.layers.size()); ++i) {
    absl::StatusOr<Shape> next = OutputShape(i, spec.layers[i], shapes.back());
    if (!next.ok()) return next.status();
    shapes.push_back(*std::move(next));
  }
  return shapes;
}

absl::StatusOr<Network> Network::Create(NetworkSpec spec, uint64_t init_seed) {
  absl::StatusOr<std::vector<Shape>> shapes = InferShapes(spec);
  if (!shapes.ok()) return shapes.status();
  Rng rng(init_seed);
  std::vector<Tensor> params;
  for (const LayerSpec& layer : spec.layers) {
    int fan_in = 0, out = 0;
    Shape weight_shape;
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      fan_in = c->in_channels * c->kernel * c->kernel;
      out = c->out_channels;
      weight_shape = {c->out_channels, c->in_channels, c->kernel, c->kernel};
    } else if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      fan_in = d->in_features;
      out = d->out_features;
      weight_shape = {d->out_features, d->in_features};
    } else {
      continue;
    }
    std::normal_distribution<float> normal(
        0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
    Tensor weight(weight_shape);
    for (float& v : weight.data()) v = normal(rng);
    params.push_back(std::move(weight));
    params.emplace_back(Shape{out}, 0.0f);
  }
  return FromParameters(std::move(spec), std::move(params));
}

absl::StatusOr<Network> Network::FromParameters(NetworkSpec spec,
                                                std::vector<Tensor> params) {
  absl::StatusOr<std::vector<Shape>> shapes = InferShapes(spec);
  if (!shapes.ok()) return shapes.status();
  Network net;
  net.spec_ = std::move(spec);
  net.shapes_ = *std::move(shapes);
  size_t next = 0;
  for (int i = 0; i < static_cast<int>(net.spec_.layers.size()); ++i) {
    const LayerSpec& layer = net.spec_.layers[i];
    Shape weight_shape, bias_shape;
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      weight_shape = {c->out_channels, c->in_channels, c->kernel, c->kernel};
      bias_shape = {c->out_channels};
    } else if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      weight_shape = {d->out_features, d->in_features};
      bias_shape = {d->out_features};
    } else {
      net.first_param_of_layer_.push_back(-1);
      continue;
    }
    if (next + 2 > params.size() || params[next].shape() != weight_shape ||
        params[next + 1].shape() != bias_shape) {
      return LayerError(i, layer,
                        absl::StrCat("parameter tensors do not match; expected ",
                                     ShapeToString(weight_shape), " and ",
                                     ShapeToString(bias_shape)));
    }
    const int group = static_cast<int>(net.param_layers_.size());
    net.param_layers_.push_back(i);
    net.first_param_of_layer_.push_back(static_cast<int>(next));
    net.group_of_tensor_.push_back(group);
    net.group_of_tensor_.push_back(group);
    next += 2;
  }
  if (next != params.size()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "network declares ", next, " parameter tensors but ", params.size(),
        " were given"));
  }
  for (size_t t = 0; t < params.size(); ++t) {
    if (!params[t].AllFinite()) {
      return absl::InvalidArgumentError(
          absl::StrCat("parameter tensor ", t, " has non-finite entries"));
    }
  }
  net.params_ = std::move(params);
  return net;
}

GradientSet Network::ZeroGradients() const {
  GradientSet grads;
  grads.tensors.reserve(params_.size());
  for (const Tensor& p : params_) grads.tensors.emplace_back(p.shape(), 0.0f);
  return grads;
}

absl::StatusOr<Activations> Network::Forward(const Tensor& input,
                                             const ForwardOptions& options) const {
  if (input.shape() != spec_.input_shape) {
    return absl::InvalidArgumentError(absl::StrCat(
        "network input: expected ", ShapeToString(spec_.input_shape), ", got ",
        ShapeToString(input.shape())));
  }
  if (options.dropout_ratio.has_value() &&
      !(*options.dropout_ratio >= 0.0f && *options.dropout_ratio < 1.0f)) {
    return absl::InvalidArgumentError("dropout ratio override must lie in [0,1)");
  }
  const int n = static_cast<int>(spec_.layers.size());
  Activations act;
  act.values.reserve(n + 1);
  act.values.push_back(input);
  act.dropout_scales.resize(n);
  act.pool_indices.resize(n);
  for (int i = 0; i < n; ++i) {
    const Tensor& in = act.values.back();
    Tensor out(shapes_[i + 1]);
    const LayerSpec& layer = spec_.layers[i];
    const int p = first_param_of_layer_[i];
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      internal::ConvForward(*c, in, params_[p], params_[p + 1], out);
    } else if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      DenseForward(*d, in, params_[p], params_[p + 1], out);
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      for (int64_t j = 0; j < in.size(); ++j) out[j] = std::max(in[j], 0.0f);
    } else if (const auto* mp = std::get_if<MaxPoolLayer>(&layer)) {
      std::vector<int32_t>& idx = act.pool_indices[i];
      idx.resize(out.size());
      const int w = in.dim(2), oh = out.dim(1), ow = out.dim(2);
      for (int c = 0; c < out.dim(0); ++c) {
        for (int y = 0; y < oh; ++y) {
          for (int x = 0; x < ow; ++x) {
            int32_t best = -1;
            float best_v = -std::numeric_limits<float>::infinity();
            for (int dy = 0; dy < mp->window; ++dy) {
              for (int dx = 0; dx < mp->window; ++dx) {
                const int32_t flat = (c * in.dim(1) + y * mp->window + dy) * w +
                                     x * mp->window + dx;
                if (best < 0 || in[flat] > best_v) {
                  best = flat;
                  best_v = in[flat];
                }
              }
            }
            const int64_t o = (static_cast<int64_t>(c) * oh + y) * ow + x;
            out[o] = best_v;
            idx[o] = best;
          }
        }
      }
    } else if (std::holds_alternative<GlobalAvgPoolLayer>(layer)) {
      const int64_t plane = static_cast<int64_t>(in.dim(1)) * in.dim(2);
      for (int c = 0; c < in.dim(0); ++c) {
        double sum = 0.0;
        for (int64_t j = 0; j < plane; ++j) sum += in[c * plane + j];
        out[c] = static_cast<float>(sum / static_cast<double>(plane));
      }
    } else if (const auto* dr = std::get_if<DropoutLayer>(&layer)) {
      const float ratio = options.dropout_ratio.value_or(dr->ratio);
      if (!options.stochastic || ratio == 0.0f) {
        out = in;
      } else {
        Rng rng(DeriveSeed(options.seed, static_cast<uint64_t>(i)));
        std::uniform_real_distribution<float> uniform(0.0f, 1.0f);
        const float keep_scale = 1.0f / (1.0f - ratio);
        std::vector<float>& scales = act.dropout_scales[i];
        scales.resize(in.size());
        for (int64_t j = 0; j < in.size(); ++j) {
          scales[j] = uniform(rng) < ratio ? 0.0f : keep_scale;
          out[j] = in[j] * scales[j];
        }
      }
    } else if (std::holds_alternative<ChannelSoftmaxLayer>(layer)) {
      SoftmaxForward(in, out);
    } else if (std::holds_alternative<SigmoidLayer>(layer)) {
      for (int64_t j = 0; j < in.size(); ++j) out[j] = StableSigmoid(in[j]);
    }
    if (!out.AllFinite()) {
      return absl::InternalError(absl::StrCat(
          "layer ", i, " ", DescribeLayer(layer), " produced non-finite output"));
    }
    act.values.push_back(std::move(out));
  }
  return act;
}

absl::StatusOr<GradientSet> Network::Backward(const Activations& activations,
                                              const Tensor& output_gradient) const {
  const int n = static_cast<int>(spec_.layers.size());
  if (static_cast<int>(activations.values.size()) != n + 1 ||
      static_cast<int>(activations.dropout_scales.size()) != n ||
      static_cast<int>(activations.pool_indices.size()) != n) {
    return absl::FailedPreconditionError(
        "activations are missing or were produced by a different network");
  }
  for (int i = 0; i <= n; ++i) {
    if (activations.values[i].shape() != shapes_[i]) {
      return absl::FailedPreconditionError(absl::StrCat(
          "activation ", i, " has shape ",
          ShapeToString(activations.values[i].shape()), ", expected ",
          ShapeToString(shapes_[i])));
    }
  }
  if (output_gradient.shape() != shapes_.back()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "output gradient shape ", ShapeToString(output_gradient.shape()),
        " does not match network output ", ShapeToString(shapes_.back())));
  }

  GradientSet grads = ZeroGradients();
  Tensor grad = output_gradient;
  for (int i = n - 1; i >= 0; --i) {
    const LayerSpec& layer = spec_.layers[i];
    const Tensor& in = activations.values[i];
    const Tensor& out = activations.values[i + 1];
    const bool need_input_grad = i > 0;
    Tensor grad_in(in.shape());
    const int p = first_param_of_layer_[i];
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      internal::ConvBackward(*c, in, params_[p], grad,
                             need_input_grad ? &grad_in : nullptr,
                             grads.tensors[p], grads.tensors[p + 1]);
    } else if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      const int64_t locations = in.size() / d->in_features;
      const Tensor& weight = params_[p];
      Tensor& gw = grads.tensors[p];
      Tensor& gb = grads.tensors[p + 1];
      for (int o = 0; o < d->out_features; ++o) {
        const float* g = grad.raw() + o * locations;
        double bsum = 0.0;
        for (int64_t j = 0; j < locations; ++j) bsum += g[j];
        gb[o] = static_cast<float>(bsum);
        for (int k = 0; k < d->in_features; ++k) {
          const float* x = in.raw() + k * locations;
          double wsum = 0.0;
          for (int64_t j = 0; j < locations; ++j) wsum += g[j] * x[j];
          gw[static_cast<int64_t>(o) * d->in_features + k] = static_cast<float>(wsum);
        }
      }
      if (need_input_grad) {
        for (int k = 0; k < d->in_features; ++k) {
          float* dst = grad_in.raw() + k * locations;
          for (int o = 0; o < d->out_features; ++o) {
            const float wv = weight[static_cast<int64_t>(o) * d->in_features + k];
            const float* g = grad.raw() + o * locations;
            for (int64_t j = 0; j < locations; ++j) dst[j] += wv * g[j];
          }
        }
      }
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      for (int64_t j = 0; j < in.size(); ++j) {
        grad_in[j] = out[j] > 0.0f ? grad[j] : 0.0f;
      }
    } else if (std::holds_alternative<MaxPoolLayer>(layer)) {
      const std::vector<int32_t>& idx = activations.pool_indices[i];
      if (static_cast<int64_t>(idx.size()) != out.size()) {
        return absl::FailedPreconditionError(
            absl::StrCat("layer ", i, " max-pool indices missing"));
      }
      for (int64_t j = 0; j < out.size(); ++j) grad_in[idx[j]] += grad[j];
    } else if (std::holds_alternative<GlobalAvgPoolLayer>(layer)) {
      const int64_t plane = static_cast<int64_t>(in.dim(1)) * in.dim(2);
      const float inv = 1.0f / static_cast<float>(plane);
      for (int c = 0; c < in.dim(0); ++c) {
        for (int64_t j = 0; j < plane; ++j) grad_in[c * plane + j] = grad[c] * inv;
      }
    } else if (std::holds_alternative<DropoutLayer>(layer)) {
      const std::vector<float>& scales = activations.dropout_scales[i];
      if (scales.empty()) {
        grad_in = grad;
      } else {
        for (int64_t j = 0; j < in.size(); ++j) grad_in[j] = grad[j] * scales[j];
      }
    } else if (std::holds_alternative<ChannelSoftmaxLayer>(layer)) {
      const int channels = out.dim(0);
      const int64_t locations = out.size() / channels;
      for (int64_t j = 0; j < locations; ++j) {
        float dot = 0.0f;
        for (int c = 0; c < channels; ++c) {
          dot += out[c * locations + j] * grad[c * locations + j];
        }
        for (int c = 0; c < channels; ++c) {
          grad_in[c * locations + j] =
              out[c * locations + j] * (grad[c * locations + j] - dot);
        }
      }
    } else if (std::holds_alternative<SigmoidLayer>(layer)) {
      for (int64_t j = 0; j < in.size(); ++j) {
        grad_in[j] = grad[j] * out[j] * (1.0f - out[j]);
      }
    }
    grad = std::move(grad_in);
  }
  for (const Tensor& g : grads.tensors) {
    if (!g.AllFinite()) {
      return absl::InternalError("backward produced non-finite gradients");
    }
  }
  return grads;
}

}  // namespace segleak
