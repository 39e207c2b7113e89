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


#ifndef SEGLEAK_HASH_H_
#define SEGLEAK_HASH_H_

#include <string>
#include <string_view>

#include "segleak/scene.h"
#include "segleak/tensor.h"

namespace segleak {

// Lower-case hex SHA-256 digest.
std::string Sha256Hex(std::string_view bytes);

// Digest of a tensor's container encoding.
std::string HashTensor(const Tensor& tensor);

// Digest of a scene's image payload and label map.
std::string HashScene(const LabeledImage& scene);

}  // namespace segleak

#endif  // SEGLEAK_HASH_H_
