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

// Binary tensor container:
//
//   offset 0   4 bytes   magic "SLKT"
//   offset 4   1 byte    format version (kTensorFormatVersion)
//   offset 5   1 byte    rank r
//   offset 6   4*r       extents, little-endian uint32
//   then       4*n       row-major payload, little-endian IEEE-754 float32
//
// A checkpoint is a directory holding `manifest.txt` (the network's layer
// descriptors in declaration order) and `param_NNN.slkt` per parameter tensor.

#ifndef SEGLEAK_TENSOR_IO_H_
#define SEGLEAK_TENSOR_IO_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "segleak/network.h"
#include "segleak/tensor.h"

namespace segleak {

inline constexpr char kTensorMagic[4] = {'S', 'L', 'K', 'T'};
inline constexpr uint8_t kTensorFormatVersion = 1;

std::string EncodeTensor(const Tensor& tensor);
absl::StatusOr<Tensor> DecodeTensor(std::string_view bytes);

absl::Status WriteTensorFile(const std::filesystem::path& path,
                             const Tensor& tensor);
absl::StatusOr<Tensor> ReadTensorFile(const std::filesystem::path& path);

// One layer per line, e.g. "conv 3 3 16 1 1" (kernel in out stride padding).
std::string FormatNetworkManifest(const NetworkSpec& spec);
absl::StatusOr<NetworkSpec> ParseNetworkManifest(std::string_view text);

absl::Status SaveCheckpoint(const std::filesystem::path& dir,
                            const Network& net);
absl::StatusOr<Network> LoadCheckpoint(const std::filesystem::path& dir);

// Whole-file helpers shared by the persistence code.
absl::StatusOr<std::string> ReadFileToString(const std::filesystem::path& path);
absl::Status WriteStringToFile(const std::filesystem::path& path,
                               std::string_view contents);

}  // namespace segleak

#endif  // SEGLEAK_TENSOR_IO_H_
