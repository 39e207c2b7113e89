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

#include "segleak/tensor_io.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <utility>
#include <vector>

#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_split.h"
#include "absl/strings/strip.h"

namespace segleak {
namespace {

constexpr absl::string_view kManifestHeader = "segleak-network 1";

uint32_t ToLittle(uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) |
           (v >> 24);
  }
  return v;
}

void AppendU32(std::string& out, uint32_t v) {
  v = ToLittle(v);
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

uint32_t LoadU32(const char* p) {
  uint32_t v;
  std::memcpy(&v, p, 4);
  return ToLittle(v);
}

template <typename T>
absl::StatusOr<T> ParseNumber(absl::string_view token, absl::string_view line) {
  T value{};
  bool ok;
  if constexpr (std::is_same_v<T, float>) {
    ok = absl::SimpleAtof(token, &value);
  } else {
    ok = absl::SimpleAtoi(token, &value);
  }
  if (!ok) {
    return absl::InvalidArgumentError(
        absl::StrCat("bad number '", token, "' in manifest line '", line, "'"));
  }
  return value;
}

}  // namespace

std::string EncodeTensor(const Tensor& tensor) {
  std::string out(kTensorMagic, 4);
  out.push_back(static_cast<char>(kTensorFormatVersion));
  out.push_back(static_cast<char>(tensor.rank()));
  for (int extent : tensor.shape()) AppendU32(out, static_cast<uint32_t>(extent));
  out.reserve(out.size() + 4 * tensor.size());
  for (float v : tensor.data()) AppendU32(out, std::bit_cast<uint32_t>(v));
  return out;
}

absl::StatusOr<Tensor> DecodeTensor(std::string_view bytes) {
  if (bytes.size() < 6 || std::memcmp(bytes.data(), kTensorMagic, 4) != 0) {
    return absl::DataLossError("not a tensor container (bad magic)");
  }
  const uint8_t version = static_cast<uint8_t>(bytes[4]);
  if (version != kTensorFormatVersion) {
    return absl::DataLossError(
        absl::StrCat("unsupported tensor container version ", version));
  }
  const int rank = static_cast<uint8_t>(bytes[5]);
  size_t offset = 6;
  if (bytes.size() < offset + 4 * static_cast<size_t>(rank)) {
    return absl::DataLossError("truncated tensor header");
  }
  Shape shape(rank);
  for (int i = 0; i < rank; ++i, offset += 4) {
    const uint32_t extent = LoadU32(bytes.data() + offset);
    if (extent == 0 || extent > (1u << 30)) {
      return absl::DataLossError(absl::StrCat("invalid extent ", extent));
    }
    shape[i] = static_cast<int>(extent);
  }
  const int64_t n = ShapeSize(shape);
  if (bytes.size() != offset + 4 * static_cast<size_t>(n)) {
    return absl::DataLossError(absl::StrCat(
        "tensor payload has ", bytes.size() - offset, " bytes, expected ", 4 * n));
  }
  std::vector<float> data(n);
  for (int64_t j = 0; j < n; ++j, offset += 4) {
    data[j] = std::bit_cast<float>(LoadU32(bytes.data() + offset));
  }
  return Tensor::Create(std::move(shape), std::move(data));
}

absl::StatusOr<std::string> ReadFileToString(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

absl::Status WriteStringToFile(const std::filesystem::path& path,
                               std::string_view contents) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return absl::PermissionDeniedError(absl::StrCat("cannot write ", path.string()));
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) return absl::DataLossError(absl::StrCat("short write to ", path.string()));
  return absl::OkStatus();
}

absl::Status WriteTensorFile(const std::filesystem::path& path,
                             const Tensor& tensor) {
  return WriteStringToFile(path, EncodeTensor(tensor));
}

absl::StatusOr<Tensor> ReadTensorFile(const std::filesystem::path& path) {
  absl::StatusOr<std::string> bytes = ReadFileToString(path);
  if (!bytes.ok()) return bytes.status();
  absl::StatusOr<Tensor> t = DecodeTensor(*bytes);
  if (!t.ok()) {
    return absl::Status(t.status().code(),
                        absl::StrCat(path.string(), ": ", t.status().message()));
  }
  return t;
}

std::string FormatNetworkManifest(const NetworkSpec& spec) {
  std::string out = absl::StrCat(kManifestHeader, "\ninput");
  for (int extent : spec.input_shape) absl::StrAppend(&out, " ", extent);
  out.push_back('\n');
  for (const LayerSpec& layer : spec.layers) {
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      absl::StrAppend(&out, "conv ", c->kernel, " ", c->in_channels, " ",
                      c->out_channels, " ", c->stride, " ", c->padding, "\n");
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      out += "relu\n";
    } else if (const auto* p = std::get_if<MaxPoolLayer>(&layer)) {
      absl::StrAppend(&out, "maxpool ", p->window, "\n");
    } else if (std::holds_alternative<GlobalAvgPoolLayer>(layer)) {
      out += "gap\n";
    } else if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      absl::StrAppend(&out, "dense ", d->in_features, " ", d->out_features, "\n");
    } else if (const auto* dr = std::get_if<DropoutLayer>(&layer)) {
      absl::StrAppend(&out, absl::StrFormat("dropout %.9g\n", dr->ratio));
    } else if (std::holds_alternative<ChannelSoftmaxLayer>(layer)) {
      out += "softmax\n";
    } else if (std::holds_alternative<SigmoidLayer>(layer)) {
      out += "sigmoid\n";
    }
  }
  return out;
}

absl::StatusOr<NetworkSpec> ParseNetworkManifest(std::string_view std_text) {
  const absl::string_view text(std_text.data(), std_text.size());
  std::vector<absl::string_view> lines =
      absl::StrSplit(text, '\n', absl::SkipWhitespace());
  if (lines.empty() || absl::StripAsciiWhitespace(lines[0]) != kManifestHeader) {
    return absl::InvalidArgumentError("manifest header missing");
  }
  NetworkSpec spec;
  bool have_input = false;
  for (size_t i = 1; i < lines.size(); ++i) {
    const absl::string_view line = absl::StripAsciiWhitespace(lines[i]);
    std::vector<absl::string_view> tok = absl::StrSplit(line, ' ', absl::SkipEmpty());
    const absl::string_view kind = tok[0];
    auto arity = [&](size_t n) -> absl::Status {
      if (tok.size() != n + 1) {
        return absl::InvalidArgumentError(
            absl::StrCat("manifest line '", line, "' expects ", n, " values"));
      }
      return absl::OkStatus();
    };
    auto ints = [&](size_t n) -> absl::StatusOr<std::vector<int>> {
      if (absl::Status s = arity(n); !s.ok()) return s;
      std::vector<int> v;
      for (size_t k = 1; k <= n; ++k) {
        absl::StatusOr<int> x = ParseNumber<int>(tok[k], line);
        if (!x.ok()) return x.status();
        v.push_back(*x);
      }
      return v;
    };
    if (kind == "input") {
      if (tok.size() < 2) return absl::InvalidArgumentError("input line needs extents");
      absl::StatusOr<std::vector<int>> v = ints(tok.size() - 1);
      if (!v.ok()) return v.status();
      spec.input_shape = *v;
      have_input = true;
    } else if (kind == "conv") {
      absl::StatusOr<std::vector<int>> v = ints(5);
      if (!v.ok()) return v.status();
      spec.layers.push_back(ConvLayer{(*v)[0], (*v)[1], (*v)[2], (*v)[3], (*v)[4]});
    } else if (kind == "relu") {
      if (absl::Status s = arity(0); !s.ok()) return s;
      spec.layers.push_back(ReluLayer{});
    } else if (kind == "maxpool") {
      absl::StatusOr<std::vector<int>> v = ints(1);
      if (!v.ok()) return v.status();
      spec.layers.push_back(MaxPoolLayer{(*v)[0]});
    } else if (kind == "gap") {
      if (absl::Status s = arity(0); !s.ok()) return s;
      spec.layers.push_back(GlobalAvgPoolLayer{});
    } else if (kind == "dense") {
      absl::StatusOr<std::vector<int>> v = ints(2);
      if (!v.ok()) return v.status();
      spec.layers.push_back(DenseLayer{(*v)[0], (*v)[1]});
    } else if (kind == "dropout") {
      if (absl::Status s = arity(1); !s.ok()) return s;
      absl::StatusOr<float> r = ParseNumber<float>(tok[1], line);
      if (!r.ok()) return r.status();
      spec.layers.push_back(DropoutLayer{*r});
    } else if (kind == "softmax") {
      if (absl::Status s = arity(0); !s.ok()) return s;
      spec.layers.push_back(ChannelSoftmaxLayer{});
    } else if (kind == "sigmoid") {
      if (absl::Status s = arity(0); !s.ok()) return s;
      spec.layers.push_back(SigmoidLayer{});
    } else {
      return absl::InvalidArgumentError(
          absl::StrCat("unknown layer kind '", kind, "' in manifest"));
    }
  }
  if (!have_input) return absl::InvalidArgumentError("manifest lacks an input line");
  return spec;
}

absl::Status SaveCheckpoint(const std::filesystem::path& dir,
                            const Network& net) {
  if (absl::Status s = WriteStringToFile(dir / "manifest.txt",
                                         FormatNetworkManifest(net.spec()));
      !s.ok()) {
    return s;
  }
  for (size_t i = 0; i < net.parameters().size(); ++i) {
    if (absl::Status s = WriteTensorFile(
            dir / absl::StrFormat("param_%03d.slkt", i), net.parameters()[i]);
        !s.ok()) {
      return s;
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<Network> LoadCheckpoint(const std::filesystem::path& dir) {
  absl::StatusOr<std::string> text = ReadFileToString(dir / "manifest.txt");
  if (!text.ok()) return text.status();
  absl::StatusOr<NetworkSpec> spec = ParseNetworkManifest(*text);
  if (!spec.ok()) return spec.status();
  int expected = 0;
  for (const LayerSpec& layer : spec->layers) expected += HasParameters(layer) ? 2 : 0;
  std::vector<Tensor> params;
  for (int i = 0; i < expected; ++i) {
    absl::StatusOr<Tensor> t =
        ReadTensorFile(dir / absl::StrFormat("param_%03d.slkt", i));
    if (!t.ok()) return t.status();
    params.push_back(*std::move(t));
  }
  return Network::FromParameters(*std::move(spec), std::move(params));
}

}  // namespace segleak
