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

#include <random>

#include "benchmark/benchmark.h"
#include "segleak/loss.h"
#include "segleak/network.h"

namespace segleak {
namespace {

NetworkSpec Segmenter(int size, int w1, int w2, int classes) {
  return NetworkSpec{{3, size, size},
                     {ConvLayer{3, 3, w1, 1, 1}, ReluLayer{},
                      ConvLayer{3, w1, w2, 1, 1}, ReluLayer{},
                      ConvLayer{3, w2, w2, 1, 1}, ReluLayer{},
                      DropoutLayer{0.1f},
                      ConvLayer{3, w2, classes, 1, 1}, ChannelSoftmaxLayer{}}};
}

Tensor RandomInput(const Shape& shape) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor t(shape);
  for (float& v : t.data()) v = u(rng);
  return t;
}

void BM_SegmenterForward(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  Network net = *Network::Create(Segmenter(size, 16, 32, 5), 1);
  const Tensor x = RandomInput({3, size, size});
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.Forward(x));
  }
}
BENCHMARK(BM_SegmenterForward)->Arg(16)->Arg(64);

void BM_SegmenterForwardBackward(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  Network net = *Network::Create(Segmenter(size, 16, 32, 5), 1);
  const Tensor x = RandomInput({3, size, size});
  Tensor target({5, size, size});
  for (int y = 0; y < size; ++y) {
    for (int x0 = 0; x0 < size; ++x0) target.at((x0 + y) % 5, y, x0) = 1.0f;
  }
  ForwardOptions opts{.stochastic = true, .seed = 3};
  for (auto _ : state) {
    Activations act = *net.Forward(x, opts);
    LossResult loss = *CrossEntropyLoss(act.output(), target);
    benchmark::DoNotOptimize(net.Backward(act, loss.gradient));
  }
}
BENCHMARK(BM_SegmenterForwardBackward)->Arg(64);

// One 3x3 "same" convolution on a 64x64 map; args are in/out channels.
void BM_ConvForwardBackward(benchmark::State& state) {
  const int in = static_cast<int>(state.range(0));
  const int out = static_cast<int>(state.range(1));
  Network net = *Network::Create({{in, 64, 64}, {ConvLayer{3, in, out, 1, 1}}}, 1);
  const Tensor x = RandomInput({in, 64, 64});
  const Tensor grad({out, 64, 64}, 0.01f);
  for (auto _ : state) {
    Activations act = *net.Forward(x);
    benchmark::DoNotOptimize(net.Backward(act, grad));
  }
  state.counters["MAC/s"] = benchmark::Counter(
      3.0 * 64 * 64 * 9 * in * out, benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_ConvForwardBackward)->Args({3, 16})->Args({16, 32})->Args({32, 32})->Args({32, 5});

void BM_ConvForward(benchmark::State& state) {
  const int in = static_cast<int>(state.range(0));
  const int out = static_cast<int>(state.range(1));
  Network net = *Network::Create({{in, 64, 64}, {ConvLayer{3, in, out, 1, 1}}}, 1);
  const Tensor x = RandomInput({in, 64, 64});
  for (auto _ : state) benchmark::DoNotOptimize(net.Forward(x));
  state.counters["MAC/s"] = benchmark::Counter(
      64.0 * 64 * 9 * in * out, benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_ConvForward)->Args({32, 32});

void BM_SoftmaxForward(benchmark::State& state) {
  Network net = *Network::Create({{5, 64, 64}, {ChannelSoftmaxLayer{}}}, 1);
  const Tensor x = RandomInput({5, 64, 64});
  for (auto _ : state) benchmark::DoNotOptimize(net.Forward(x));
}
BENCHMARK(BM_SoftmaxForward);

void BM_PatchAttackerForwardBackward(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const NetworkSpec spec{{1, size, size},
                         {ConvLayer{3, 1, 8, 1, 1}, ReluLayer{},
                          ConvLayer{3, 8, 16, 1, 1}, ReluLayer{},
                          ConvLayer{3, 16, 16, 1, 1}, ReluLayer{},
                          GlobalAvgPoolLayer{}, DenseLayer{16, 1},
                          SigmoidLayer{}}};
  Network net = *Network::Create(spec, 1);
  const Tensor x = RandomInput({1, size, size});
  const Tensor target({1}, 1.0f);
  for (auto _ : state) {
    Activations act = *net.Forward(x);
    LossResult loss = *BinaryCrossEntropyLoss(act.output(), target);
    benchmark::DoNotOptimize(net.Backward(act, loss.gradient));
  }
}
BENCHMARK(BM_PatchAttackerForwardBackward)->Arg(4)->Arg(8)->Arg(16);

}  // namespace
}  // namespace segleak

BENCHMARK_MAIN();
