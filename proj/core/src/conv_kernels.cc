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

#include "conv_kernels.h"

#include <algorithm>
#include <cstdint>
#include <vector>

namespace segleak::internal {
namespace {

// Zero-pads every channel plane of a {C, H, W} array by `pad` on each side.
std::vector<float> PadPlanes(const float* src, int channels, int height,
                             int width, int pad) {
  const int hp = height + 2 * pad;
  const int wp = width + 2 * pad;
  std::vector<float> out(static_cast<size_t>(channels) * hp * wp, 0.0f);
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < height; ++y) {
      const float* row = src + (static_cast<int64_t>(c) * height + y) * width;
      std::copy(row, row + width,
                out.data() + (static_cast<int64_t>(c) * hp + y + pad) * wp + pad);
    }
  }
  return out;
}

constexpr int kTile = 16;  // output pixels per full register tile
constexpr int kBlock = 4;  // output channels sharing one input load

// A register tile of L floats (GCC/Clang vector extension; lowered to
// whatever the target offers). Narrow maps such as attacker patches use the
// 8- and 4-lane forms so they stay vectorised.
template <int L>
struct Lanes {
  typedef float Vec __attribute__((vector_size(L * sizeof(float))));
  typedef float Unaligned
      __attribute__((vector_size(L * sizeof(float)), aligned(alignof(float))));
  static Vec Load(const float* p) { return *reinterpret_cast<const Unaligned*>(p); }
  static void Store(float* p, Vec v) { *reinterpret_cast<Unaligned*>(p) = v; }
};

// Accumulates XT adjacent L-lane tiles of one output row for B output
// channels: out[b][x0 + tile] += sum_{i,ky,kx} w[b][i][ky][kx] * src[i][...].
template <int K, int B, int XT, int L>
inline void CorrelateTiles(const float* __restrict src, int64_t src_plane,
                           int src_width, int in_c, const float* __restrict w,
                           int64_t w_stride, float* __restrict dst,
                           int64_t dst_plane, int y, int out_width, int x0) {
  using V = Lanes<L>;
  typename V::Vec acc[B][XT];
  const int64_t row_offset = static_cast<int64_t>(y) * out_width + x0;
  #pragma GCC unroll 16
  for (int b = 0; b < B; ++b) {
    #pragma GCC unroll 16
    for (int t = 0; t < XT; ++t) acc[b][t] = V::Load(dst + b * dst_plane + row_offset + t * L);
  }
  for (int i = 0; i < in_c; ++i) {
    const float* s = src + i * src_plane + static_cast<int64_t>(y) * src_width + x0;
    const float* wi = w + static_cast<int64_t>(i) * K * K;
    for (int ky = 0; ky < K; ++ky) {
      #pragma GCC unroll 16
      for (int kx = 0; kx < K; ++kx) {
        typename V::Vec in[XT];
        #pragma GCC unroll 16
        for (int t = 0; t < XT; ++t) in[t] = V::Load(s + ky * src_width + kx + t * L);
        #pragma GCC unroll 16
        for (int b = 0; b < B; ++b) {
          const float wv = wi[b * w_stride + ky * K + kx];
          #pragma GCC unroll 16
          for (int t = 0; t < XT; ++t) acc[b][t] += wv * in[t];
        }
      }
    }
  }
  #pragma GCC unroll 16
  for (int b = 0; b < B; ++b) {
    #pragma GCC unroll 16
    for (int t = 0; t < XT; ++t) V::Store(dst + b * dst_plane + row_offset + t * L, acc[b][t]);
  }
}

// Accumulates a stride-1 correlation into `dst` ({out_c, out_h, out_w}) from
// the padded planes `src` ({in_c, *, src_width}). `w` is {out_c, in_c, K, K}.
// Each loaded input vector feeds B output channels and each broadcast weight
// feeds several tiles.
template <int K, int B>
void CorrelateBlock(const float* __restrict src, int64_t src_plane,
                    int src_width, int in_c, const float* __restrict w,
                    float* __restrict dst, int64_t dst_plane, int out_height,
                    int out_width) {
  constexpr int kWide = 4;
  const int64_t w_stride = static_cast<int64_t>(in_c) * K * K;
  for (int y = 0; y < out_height; ++y) {
    int x0 = 0;
    for (; x0 + kWide * kTile <= out_width; x0 += kWide * kTile) {
      CorrelateTiles<K, B, kWide, kTile>(src, src_plane, src_width, in_c, w, w_stride,
                                         dst, dst_plane, y, out_width, x0);
    }
    for (; x0 + kTile <= out_width; x0 += kTile) {
      CorrelateTiles<K, B, 1, kTile>(src, src_plane, src_width, in_c, w, w_stride,
                                     dst, dst_plane, y, out_width, x0);
    }
    if (x0 + 8 <= out_width) {
      CorrelateTiles<K, B, 1, 8>(src, src_plane, src_width, in_c, w, w_stride, dst,
                                 dst_plane, y, out_width, x0);
      x0 += 8;
    }
    if (x0 + 4 <= out_width) {
      CorrelateTiles<K, B, 1, 4>(src, src_plane, src_width, in_c, w, w_stride, dst,
                                 dst_plane, y, out_width, x0);
      x0 += 4;
    }
    for (int x = x0; x < out_width; ++x) {
      #pragma GCC unroll 16
      for (int b = 0; b < B; ++b) {
        float acc = dst[b * dst_plane + static_cast<int64_t>(y) * out_width + x];
        for (int i = 0; i < in_c; ++i) {
          const float* s = src + i * src_plane + static_cast<int64_t>(y) * src_width + x;
          const float* wi = w + b * w_stride + static_cast<int64_t>(i) * K * K;
          for (int ky = 0; ky < K; ++ky) {
            #pragma GCC unroll 16
            for (int kx = 0; kx < K; ++kx) acc += wi[ky * K + kx] * s[ky * src_width + kx];
          }
        }
        dst[b * dst_plane + static_cast<int64_t>(y) * out_width + x] = acc;
      }
    }
  }
}

void CorrelateAnyK(int k, const float* src, int64_t src_plane, int src_width,
                   int in_c, const float* w, float* dst, int out_height,
                   int out_width) {
  for (int i = 0; i < in_c; ++i) {
    const float* plane = src + i * src_plane;
    const float* wi = w + static_cast<int64_t>(i) * k * k;
    for (int y = 0; y < out_height; ++y) {
      float* d = dst + static_cast<int64_t>(y) * out_width;
      for (int ky = 0; ky < k; ++ky) {
        const float* row = plane + static_cast<int64_t>(y + ky) * src_width;
        for (int kx = 0; kx < k; ++kx) {
          const float wv = wi[ky * k + kx];
          for (int x = 0; x < out_width; ++x) d[x] += wv * row[x + kx];
        }
      }
    }
  }
}

template <int K>
void CorrelateAllBlocked(const float* src, int64_t src_plane, int src_width,
                         int in_c, const float* w, float* dst, int out_c,
                         int out_height, int out_width) {
  const int64_t dst_plane = static_cast<int64_t>(out_height) * out_width;
  const int64_t w_stride = static_cast<int64_t>(in_c) * K * K;
  int o = 0;
  for (; o + kBlock <= out_c; o += kBlock) {
    CorrelateBlock<K, kBlock>(src, src_plane, src_width, in_c, w + o * w_stride,
                              dst + o * dst_plane, dst_plane, out_height, out_width);
  }
  for (; o < out_c; ++o) {
    CorrelateBlock<K, 1>(src, src_plane, src_width, in_c, w + o * w_stride,
                         dst + o * dst_plane, dst_plane, out_height, out_width);
  }
}

// dst[o] += sum_i correlate(src[i], w[o][i]) for every output channel.
void CorrelateAll(int k, const float* src, int64_t src_plane, int src_width,
                  int in_c, const float* w, float* dst, int out_c,
                  int out_height, int out_width) {
  switch (k) {
    case 1:
      CorrelateAllBlocked<1>(src, src_plane, src_width, in_c, w, dst, out_c,
                             out_height, out_width);
      return;
    case 3:
      CorrelateAllBlocked<3>(src, src_plane, src_width, in_c, w, dst, out_c,
                             out_height, out_width);
      return;
    default:
      break;
  }
  const int64_t dst_plane = static_cast<int64_t>(out_height) * out_width;
  for (int o = 0; o < out_c; ++o) {
    CorrelateAnyK(k, src, src_plane, src_width, in_c,
                  w + static_cast<int64_t>(o) * in_c * k * k, dst + o * dst_plane,
                  out_height, out_width);
  }
}

// Adds to `sum` ({B, K*K}) the weight-gradient contribution of the L-wide
// column strip starting at x0, over every output row; lane-wise float partial
// sums, reduced in double.
template <int K, int B, int L>
inline void WeightGradientStrip(const float* __restrict plane, int src_width,
                                const float* __restrict g, int64_t g_plane,
                                int out_height, int out_width, int x0,
                                double (&sum)[B][K * K]) {
  using V = Lanes<L>;
  typename V::Vec acc[B][K * K] = {};
  for (int y = 0; y < out_height; ++y) {
    const float* gy = g + static_cast<int64_t>(y) * out_width + x0;
    typename V::Vec gv[B];
    #pragma GCC unroll 16
    for (int b = 0; b < B; ++b) gv[b] = V::Load(gy + b * g_plane);
    #pragma GCC unroll 16
    for (int ky = 0; ky < K; ++ky) {
      const float* row = plane + static_cast<int64_t>(y + ky) * src_width + x0;
      #pragma GCC unroll 16
      for (int kx = 0; kx < K; ++kx) {
        const typename V::Vec in = V::Load(row + kx);
        #pragma GCC unroll 16
        for (int b = 0; b < B; ++b) acc[b][ky * K + kx] += gv[b] * in;
      }
    }
  }
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < K * K; ++t) {
      for (int l = 0; l < L; ++l) sum[b][t] += acc[b][t][l];
    }
  }
}

// grad_w[o][i][ky][kx] = sum_{y,x} g[o][y][x] * src[i][y + ky][x + kx] for a
// block of B output channels; all K*K taps accumulate in registers at once.
template <int K, int B>
void WeightGradientBlock(const float* __restrict src, int64_t src_plane,
                         int src_width, int in_c, const float* __restrict g,
                         int64_t g_plane, int out_height, int out_width,
                         float* __restrict grad_w) {
  const int64_t w_stride = static_cast<int64_t>(in_c) * K * K;
  for (int i = 0; i < in_c; ++i) {
    const float* plane = src + i * src_plane;
    double sum[B][K * K] = {};
    int x0 = 0;
    for (; x0 + kTile <= out_width; x0 += kTile) {
      WeightGradientStrip<K, B, kTile>(plane, src_width, g, g_plane, out_height,
                                       out_width, x0, sum);
    }
    if (x0 + 8 <= out_width) {
      WeightGradientStrip<K, B, 8>(plane, src_width, g, g_plane, out_height, out_width,
                                   x0, sum);
      x0 += 8;
    }
    if (x0 + 4 <= out_width) {
      WeightGradientStrip<K, B, 4>(plane, src_width, g, g_plane, out_height, out_width,
                                   x0, sum);
      x0 += 4;
    }
    for (int y = 0; y < out_height; ++y) {
      const float* gy = g + static_cast<int64_t>(y) * out_width;
      for (int x = x0; x < out_width; ++x) {
        for (int ky = 0; ky < K; ++ky) {
          const float* row = plane + static_cast<int64_t>(y + ky) * src_width + x;
          for (int kx = 0; kx < K; ++kx) {
            for (int b = 0; b < B; ++b) sum[b][ky * K + kx] += gy[b * g_plane + x] * row[kx];
          }
        }
      }
    }
    for (int b = 0; b < B; ++b) {
      for (int t = 0; t < K * K; ++t) {
        grad_w[b * w_stride + static_cast<int64_t>(i) * K * K + t] =
            static_cast<float>(sum[b][t]);
      }
    }
  }
}

void WeightGradientAnyK(int k, const float* src, int64_t src_plane,
                        int src_width, int in_c, const float* g, int64_t g_plane,
                        int out_c, int out_height, int out_width,
                        float* grad_w) {
  for (int o = 0; o < out_c; ++o) {
    for (int i = 0; i < in_c; ++i) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          double sum = 0.0;
          for (int y = 0; y < out_height; ++y) {
            const float* gr = g + o * g_plane + static_cast<int64_t>(y) * out_width;
            const float* row = src + i * src_plane + static_cast<int64_t>(y + ky) * src_width;
            for (int x = 0; x < out_width; ++x) sum += gr[x] * row[x + kx];
          }
          grad_w[((static_cast<int64_t>(o) * in_c + i) * k + ky) * k + kx] =
              static_cast<float>(sum);
        }
      }
    }
  }
}

template <int K>
void WeightGradientAllBlocked(const float* src, int64_t src_plane,
                              int src_width, int in_c, const float* g,
                              int out_c, int out_height, int out_width,
                              float* grad_w) {
  const int64_t g_plane = static_cast<int64_t>(out_height) * out_width;
  const int64_t w_stride = static_cast<int64_t>(in_c) * K * K;
  constexpr int kGradBlock = K == 1 ? 8 : 2;
  int o = 0;
  for (; o + kGradBlock <= out_c; o += kGradBlock) {
    WeightGradientBlock<K, kGradBlock>(src, src_plane, src_width, in_c,
                                   g + o * g_plane, g_plane, out_height,
                                   out_width, grad_w + o * w_stride);
  }
  for (; o < out_c; ++o) {
    WeightGradientBlock<K, 1>(src, src_plane, src_width, in_c, g + o * g_plane,
                              g_plane, out_height, out_width, grad_w + o * w_stride);
  }
}

void WeightGradientAll(int k, const float* src, int64_t src_plane,
                       int src_width, int in_c, const float* g, int out_c,
                       int out_height, int out_width, float* grad_w) {
  switch (k) {
    case 1:
      WeightGradientAllBlocked<1>(src, src_plane, src_width, in_c, g, out_c,
                                  out_height, out_width, grad_w);
      return;
    case 3:
      WeightGradientAllBlocked<3>(src, src_plane, src_width, in_c, g, out_c,
                                  out_height, out_width, grad_w);
      return;
    default:
      WeightGradientAnyK(k, src, src_plane, src_width, in_c, g,
                         static_cast<int64_t>(out_height) * out_width, out_c,
                         out_height, out_width, grad_w);
  }
}

bool UseFastPath(const ConvLayer& layer) {
  return layer.stride == 1 && layer.padding <= layer.kernel - 1;
}

void ConvForwardStrided(const ConvLayer& layer, const Tensor& in,
                        const Tensor& weight, const Tensor& bias, Tensor& out) {
  const int k = layer.kernel, s = layer.stride, p = layer.padding;
  const int in_c = in.dim(0), h = in.dim(1), w = in.dim(2);
  const int out_h = out.dim(1), out_w = out.dim(2);
  for (int o = 0; o < layer.out_channels; ++o) {
    for (int y = 0; y < out_h; ++y) {
      for (int x = 0; x < out_w; ++x) {
        float acc = bias[o];
        for (int i = 0; i < in_c; ++i) {
          for (int ky = 0; ky < k; ++ky) {
            const int iy = y * s + ky - p;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = x * s + kx - p;
              if (ix < 0 || ix >= w) continue;
              acc += weight[((static_cast<int64_t>(o) * in_c + i) * k + ky) * k + kx] *
                     in.at(i, iy, ix);
            }
          }
        }
        out.at(o, y, x) = acc;
      }
    }
  }
}

void ConvBackwardStrided(const ConvLayer& layer, const Tensor& in,
                         const Tensor& weight, const Tensor& grad_out,
                         Tensor* grad_in, Tensor& grad_weight,
                         Tensor& grad_bias) {
  const int k = layer.kernel, s = layer.stride, p = layer.padding;
  const int in_c = in.dim(0), h = in.dim(1), w = in.dim(2);
  const int out_h = grad_out.dim(1), out_w = grad_out.dim(2);
  grad_weight.Fill(0.0f);
  grad_bias.Fill(0.0f);
  if (grad_in != nullptr) grad_in->Fill(0.0f);
  for (int o = 0; o < layer.out_channels; ++o) {
    for (int y = 0; y < out_h; ++y) {
      for (int x = 0; x < out_w; ++x) {
        const float g = grad_out.at(o, y, x);
        grad_bias[o] += g;
        for (int i = 0; i < in_c; ++i) {
          for (int ky = 0; ky < k; ++ky) {
            const int iy = y * s + ky - p;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = x * s + kx - p;
              if (ix < 0 || ix >= w) continue;
              const int64_t wi = ((static_cast<int64_t>(o) * in_c + i) * k + ky) * k + kx;
              grad_weight[wi] += g * in.at(i, iy, ix);
              if (grad_in != nullptr) grad_in->at(i, iy, ix) += g * weight[wi];
            }
          }
        }
      }
    }
  }
}

}  // namespace

void ConvForward(const ConvLayer& layer, const Tensor& in, const Tensor& weight,
                 const Tensor& bias, Tensor& out) {
  if (!UseFastPath(layer)) {
    ConvForwardStrided(layer, in, weight, bias, out);
    return;
  }
  const int k = layer.kernel, p = layer.padding;
  const int in_c = in.dim(0), h = in.dim(1), w = in.dim(2);
  const int out_h = out.dim(1), out_w = out.dim(2);
  const int wp = w + 2 * p;
  const std::vector<float> padded = PadPlanes(in.raw(), in_c, h, w, p);
  const int64_t padded_plane = static_cast<int64_t>(h + 2 * p) * wp;
  const int64_t out_plane = static_cast<int64_t>(out_h) * out_w;
  for (int o = 0; o < layer.out_channels; ++o) {
    float* dst = out.raw() + o * out_plane;
    std::fill(dst, dst + out_plane, bias[o]);
  }
  CorrelateAll(k, padded.data(), padded_plane, wp, in_c, weight.raw(),
               out.raw(), layer.out_channels, out_h, out_w);
}

void ConvBackward(const ConvLayer& layer, const Tensor& in,
                  const Tensor& weight, const Tensor& grad_out,
                  Tensor* grad_in, Tensor& grad_weight, Tensor& grad_bias) {
  if (!UseFastPath(layer)) {
    ConvBackwardStrided(layer, in, weight, grad_out, grad_in, grad_weight,
                        grad_bias);
    return;
  }
  const int k = layer.kernel, p = layer.padding;
  const int in_c = in.dim(0), h = in.dim(1), w = in.dim(2);
  const int out_c = layer.out_channels;
  const int out_h = grad_out.dim(1), out_w = grad_out.dim(2);
  const int64_t out_plane = static_cast<int64_t>(out_h) * out_w;

  for (int o = 0; o < out_c; ++o) {
    double sum = 0.0;
    const float* g = grad_out.raw() + o * out_plane;
    for (int64_t j = 0; j < out_plane; ++j) sum += g[j];
    grad_bias[o] = static_cast<float>(sum);
  }

  const int wp = w + 2 * p;
  const std::vector<float> padded = PadPlanes(in.raw(), in_c, h, w, p);
  const int64_t padded_plane = static_cast<int64_t>(h + 2 * p) * wp;
  WeightGradientAll(k, padded.data(), padded_plane, wp, in_c, grad_out.raw(),
                    out_c, out_h, out_w, grad_weight.raw());

  if (grad_in == nullptr) return;
  // Input gradient: correlate the (k-1-p)-padded output gradient with the
  // spatially flipped, channel-transposed kernel.
  const int q = k - 1 - p;
  const int gw = out_w + 2 * q;
  const std::vector<float> grad_padded =
      PadPlanes(grad_out.raw(), out_c, out_h, out_w, q);
  const int64_t grad_plane = static_cast<int64_t>(out_h + 2 * q) * gw;
  const int kk = k * k;
  std::vector<float> flipped(static_cast<size_t>(in_c) * out_c * kk);
  for (int o = 0; o < out_c; ++o) {
    for (int i = 0; i < in_c; ++i) {
      const float* wk = weight.raw() + (static_cast<int64_t>(o) * in_c + i) * kk;
      float* fk = flipped.data() + (static_cast<int64_t>(i) * out_c + o) * kk;
      for (int t = 0; t < kk; ++t) fk[t] = wk[kk - 1 - t];
    }
  }
  grad_in->Fill(0.0f);
  CorrelateAll(k, grad_padded.data(), grad_plane, gw, out_c, flipped.data(),
               grad_in->raw(), in_c, h, w);
}

}  // namespace segleak::internal
