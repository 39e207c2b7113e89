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

#include "oracles.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace segleak {

void PrintTo(const Tensor& t, std::ostream* os) {
  *os << "Tensor" << ShapeToString(t.shape()) << " {";
  for (int64_t i = 0; i < std::min<int64_t>(t.size(), 6); ++i) *os << (i ? ", " : "") << t[i];
  if (t.size() > 6) *os << ", ...";
  *os << "}";
}

}  // namespace segleak

namespace segleak::testing {
namespace {

// Value of the functional given its weights r (the linear coefficients, or
// the one-hot targets of the log-likelihood).
double Evaluate(Functional kind, const Tensor& out, const Tensor& r) {
  double j = 0.0;
  for (int64_t i = 0; i < out.size(); ++i) {
    if (kind == Functional::kLinear) {
      j += static_cast<double>(out[i]) * static_cast<double>(r[i]);
    } else if (r[i] != 0.0f) {
      j += std::log(static_cast<double>(out[i]));
    }
  }
  return j;
}

// True when the perturbed pass took a different branch at some ReLU or
// max-pool than the reference pass, which invalidates the finite difference.
bool CrossedSwitch(const NetworkSpec& spec, const Activations& a,
                   const Activations& b) {
  for (size_t l = 0; l < spec.layers.size(); ++l) {
    if (std::holds_alternative<ReluLayer>(spec.layers[l])) {
      const Tensor& x = a.values[l];
      const Tensor& y = b.values[l];
      for (int64_t i = 0; i < x.size(); ++i) {
        if ((x[i] > 0.0f) != (y[i] > 0.0f)) return true;
      }
    }
    if (std::holds_alternative<MaxPoolLayer>(spec.layers[l]) &&
        a.pool_indices[l] != b.pool_indices[l]) {
      return true;
    }
  }
  return false;
}

}  // namespace

Tensor RandomTensor(const Shape& shape, std::mt19937_64& rng, float lo,
                    float hi) {
  std::uniform_real_distribution<float> u(lo, hi);
  Tensor t(shape);
  for (float& v : t.data()) v = u(rng);
  return t;
}

Tensor RandomPosterior(int c, int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({c, h, w});
  std::vector<double> raw(c);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (double& v : raw) v = -std::log(1.0 - u(rng));  // Dirichlet(1,...,1)
      const double sum = std::accumulate(raw.begin(), raw.end(), 0.0);
      for (int k = 0; k < c; ++k) t.at(k, y, x) = static_cast<float>(raw[k] / sum);
    }
  }
  return t;
}

Tensor RandomOneHot(int c, int h, int w, std::mt19937_64& rng,
                    std::vector<int>* labels) {
  std::uniform_int_distribution<int> pick(0, c - 1);
  Tensor t({c, h, w});
  if (labels != nullptr) labels->assign(static_cast<size_t>(h) * w, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int k = pick(rng);
      t.at(k, y, x) = 1.0f;
      if (labels != nullptr) (*labels)[static_cast<size_t>(y) * w + x] = k;
    }
  }
  return t;
}

std::vector<double> ConvolutionOracle(const ConvLayer& layer, const Tensor& in,
                                      const Tensor& weight, const Tensor& bias,
                                      std::vector<double>* magnitude) {
  const int k = layer.kernel, s = layer.stride, p = layer.padding;
  const int ic = in.dim(0), h = in.dim(1), w = in.dim(2);
  const int oh = (h + 2 * p - k) / s + 1;
  const int ow = (w + 2 * p - k) / s + 1;
  std::vector<double> out(static_cast<size_t>(layer.out_channels) * oh * ow);
  if (magnitude != nullptr) magnitude->assign(out.size(), 0.0);
  for (int o = 0; o < layer.out_channels; ++o) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = bias[o];
        double mag = std::abs(static_cast<double>(bias[o]));
        for (int i = 0; i < ic; ++i) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int iy = y * s + ky - p;
              const int ix = x * s + kx - p;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              const double term =
                  static_cast<double>(weight[((o * ic + i) * k + ky) * k + kx]) *
                  static_cast<double>(in.at(i, iy, ix));
              acc += term;
              mag += std::abs(term);
            }
          }
        }
        const size_t idx = (static_cast<size_t>(o) * oh + y) * ow + x;
        out[idx] = acc;
        if (magnitude != nullptr) (*magnitude)[idx] = mag;
      }
    }
  }
  return out;
}

std::vector<double> StructuredLossOracle(const Tensor& p, const Tensor& y,
                                         double eps) {
  const int c = p.dim(0), h = p.dim(1), w = p.dim(2);
  std::vector<double> out(static_cast<size_t>(h) * w, 0.0);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double sum = 0.0;
      for (int k = 0; k < c; ++k) {
        const double pv = std::max(static_cast<double>(p.at(k, i, j)), eps);
        sum -= static_cast<double>(y.at(k, i, j)) * std::log(pv);
      }
      out[static_cast<size_t>(i) * w + j] = sum;
    }
  }
  return out;
}

double MeanTrueConfidenceOracle(const Tensor& p, const Tensor& y, int top,
                                int left, int height, int width) {
  double sum = 0.0;
  for (int i = top; i < top + height; ++i) {
    for (int j = left; j < left + width; ++j) {
      for (int k = 0; k < p.dim(0); ++k) {
        sum += static_cast<double>(p.at(k, i, j)) * static_cast<double>(y.at(k, i, j));
      }
    }
  }
  return sum / (static_cast<double>(height) * width);
}

double CrossEntropyOracle(const Tensor& p, const Tensor& y, double eps) {
  const std::vector<double> slm = StructuredLossOracle(p, y, eps);
  return std::accumulate(slm.begin(), slm.end(), 0.0) / static_cast<double>(slm.size());
}

double PairwiseAucOracle(const std::vector<double>& scores,
                         const std::vector<bool>& is_member) {
  double wins = 0.0;
  double pairs = 0.0;
  for (size_t a = 0; a < scores.size(); ++a) {
    if (!is_member[a]) continue;
    for (size_t b = 0; b < scores.size(); ++b) {
      if (is_member[b]) continue;
      pairs += 1.0;
      if (scores[a] > scores[b]) {
        wins += 1.0;
      } else if (scores[a] == scores[b]) {
        wins += 0.5;
      }
    }
  }
  return wins / pairs;
}

GradCheckResult CheckGradients(const Network& net, const Tensor& input,
                               const ForwardOptions& options,
                               std::mt19937_64& rng, Functional functional,
                               double step, int max_per_tensor, double floor,
                               Stencil stencil) {
  GradCheckResult result;
  const Activations base = *net.Forward(input, options);
  const Tensor& out = base.output();
  Tensor r;
  Tensor seed_gradient;
  if (functional == Functional::kLinear) {
    r = RandomTensor(out.shape(), rng, 0.5f, 1.5f);
    seed_gradient = r;
  } else {
    // One class for the whole map keeps the gradient coherent across
    // locations, so it grows faster than the rounding noise.
    r = Tensor(out.shape());
    const int target = std::uniform_int_distribution<int>(0, out.dim(0) - 1)(rng);
    const int64_t plane = out.size() / out.dim(0);
    for (int64_t j = 0; j < plane; ++j) r[target * plane + j] = 1.0f;
    seed_gradient = Tensor(out.shape());
    for (int64_t i = 0; i < out.size(); ++i) {
      if (r[i] != 0.0f) seed_gradient[i] = 1.0f / out[i];
    }
  }
  const GradientSet analytic = *net.Backward(base, seed_gradient);

  Network probe = net;
  for (size_t t = 0; t < net.parameters().size(); ++t) {
    const int64_t n = net.parameters()[t].size();
    std::vector<int64_t> coords(n);
    std::iota(coords.begin(), coords.end(), 0);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(std::min<int64_t>(n, max_per_tensor));
    for (int64_t c : coords) {
      const float original = net.parameters()[t][c];
      const std::vector<int> offsets =
          stencil == Stencil::kThreePoint ? std::vector<int>{1, -1} : std::vector<int>{2, 1, -1, -2};
      std::vector<double> values, applied;
      bool crossed = false;
      for (int k : offsets) {
        probe.mutable_parameters()[t][c] = original + static_cast<float>(k * step);
        applied.push_back(static_cast<double>(probe.parameters()[t][c]) -
                          static_cast<double>(original));
        const Activations act = *probe.Forward(input, options);
        crossed = crossed || CrossedSwitch(net.spec(), base, act);
        values.push_back(Evaluate(functional, act.output(), r));
      }
      probe.mutable_parameters()[t][c] = original;
      if (crossed) {
        ++result.skipped;
        continue;
      }
      // The divisors use the offsets actually representable in float; for the
      // five-point rule their residual mismatch is ~1e-6 relative.
      const double numeric =
          stencil == Stencil::kThreePoint
              ? (values[0] - values[1]) / (applied[0] - applied[1])
              : (-values[0] + 8.0 * values[1] - 8.0 * values[2] + values[3]) /
                    (6.0 * (applied[1] - applied[2]));
      const double a = analytic.tensors[t][c];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), floor});
      result.max_relative_error = std::max(result.max_relative_error, rel);
      ++result.checked;
    }
  }
  return result;
}

}  // namespace segleak::testing
