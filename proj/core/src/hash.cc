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


#include "segleak/hash.h"

#include <openssl/evp.h>

#include <cstdint>
#include <cstring>

#include "absl/strings/escaping.h"
#include "segleak/tensor_io.h"

namespace segleak {

std::string Sha256Hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr);
  return absl::BytesToHexString(
      absl::string_view(reinterpret_cast<const char*>(digest), length));
}

std::string HashTensor(const Tensor& tensor) { return Sha256Hex(EncodeTensor(tensor)); }

std::string HashScene(const LabeledImage& scene) {
  std::string bytes = EncodeTensor(scene.image);
  for (int label : scene.labels) {
    const auto v = static_cast<uint32_t>(label);
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
  }
  return Sha256Hex(bytes);
}

}  // namespace segleak
