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

#ifndef SEGLEAK_CORE_SRC_CONV_KERNELS_H_
#define SEGLEAK_CORE_SRC_CONV_KERNELS_H_

#include "segleak/network.h"
#include "segleak/tensor.h"

namespace segleak::internal {

// Direct convolution. `in` is {I, H, W}, `weight` {O, I, k, k}, `bias` {O};
// `out` must already have the output shape.
void ConvForward(const ConvLayer& layer, const Tensor& in, const Tensor& weight,
                 const Tensor& bias, Tensor& out);

// Accumulates nothing: all outputs are overwritten. `grad_in` may be null
// when the input gradient is not needed.
void ConvBackward(const ConvLayer& layer, const Tensor& in,
                  const Tensor& weight, const Tensor& grad_out,
                  Tensor* grad_in, Tensor& grad_weight, Tensor& grad_bias);

}  // namespace segleak::internal

#endif  // SEGLEAK_CORE_SRC_CONV_KERNELS_H_
