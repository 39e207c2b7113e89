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

#include <filesystem>
#include <random>
#include <string>

#include "gtest/gtest.h"
#include "oracles.h"

namespace segleak {
namespace {

namespace fs = std::filesystem;

fs::path TempDir(const std::string& name) {
  fs::path p = fs::path(::testing::TempDir()) / name;
  fs::remove_all(p);
  return p;
}

TEST(TensorIoTest, HeaderLayout) {
  const Tensor t = *Tensor::Create({2, 1}, {1.0f, -2.5f});
  const std::string bytes = EncodeTensor(t);
  ASSERT_EQ(bytes.size(), 4u + 1 + 1 + 2 * 4 + 2 * 4);
  EXPECT_EQ(bytes.substr(0, 4), "SLKT");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 2);
  // Extent 2, little-endian.
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 2);
  EXPECT_EQ(bytes[7], 0);
  // 1.0f == 0x3f800000, little-endian.
  EXPECT_EQ(static_cast<unsigned char>(bytes[14]), 0x00);
  EXPECT_EQ(static_cast<unsigned char>(bytes[17]), 0x3f);
}

TEST(TensorIoTest, RoundTripIsBitExact) {
  std::mt19937_64 rng(1);
  const Tensor t = testing::RandomTensor({3, 5, 7}, rng, -1e6f, 1e6f);
  EXPECT_EQ(*DecodeTensor(EncodeTensor(t)), t);
}

TEST(TensorIoTest, RejectsCorruptContainers) {
  const std::string good = EncodeTensor(Tensor({2, 2}, 1.0f));
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_FALSE(DecodeTensor(bad_magic).ok());
  std::string bad_version = good;
  bad_version[4] = 9;
  EXPECT_FALSE(DecodeTensor(bad_version).ok());
  EXPECT_FALSE(DecodeTensor(good.substr(0, good.size() - 1)).ok());
  EXPECT_FALSE(DecodeTensor(good + "x").ok());
  EXPECT_FALSE(DecodeTensor("SL").ok());
}

TEST(TensorIoTest, FileRoundTrip) {
  const fs::path dir = TempDir("tensor_io_file");
  const Tensor t({4}, 0.25f);
  ASSERT_TRUE(WriteTensorFile(dir / "t.slkt", t).ok());
  EXPECT_EQ(*ReadTensorFile(dir / "t.slkt"), t);
  EXPECT_FALSE(ReadTensorFile(dir / "missing.slkt").ok());
}

TEST(TensorIoTest, ManifestRoundTripsEveryLayerKind) {
  const NetworkSpec spec{{3, 16, 16},
                         {ConvLayer{3, 3, 8, 2, 1}, ReluLayer{}, MaxPoolLayer{2},
                          DropoutLayer{0.1f}, ConvLayer{1, 8, 4, 1, 0},
                          ChannelSoftmaxLayer{}, GlobalAvgPoolLayer{},
                          DenseLayer{4, 1}, SigmoidLayer{}}};
  EXPECT_EQ(*ParseNetworkManifest(FormatNetworkManifest(spec)), spec);
}

TEST(TensorIoTest, ManifestErrors) {
  EXPECT_FALSE(ParseNetworkManifest("").ok());
  EXPECT_FALSE(ParseNetworkManifest("segleak-network 1\nrelu\n").ok());
  EXPECT_FALSE(ParseNetworkManifest("segleak-network 1\ninput 3\nwarp 2\n").ok());
  EXPECT_FALSE(ParseNetworkManifest("segleak-network 1\ninput 3\nconv 3 3\n").ok());
  EXPECT_FALSE(ParseNetworkManifest("segleak-network 1\ninput x\n").ok());
}

TEST(TensorIoTest, CheckpointRoundTrip) {
  const fs::path dir = TempDir("tensor_io_ckpt");
  const NetworkSpec spec{{3, 8, 8},
                         {ConvLayer{3, 3, 4, 1, 1}, ReluLayer{},
                          ConvLayer{3, 4, 2, 1, 1}, ChannelSoftmaxLayer{}}};
  const Network net = *Network::Create(spec, 5);
  ASSERT_TRUE(SaveCheckpoint(dir, net).ok());
  const Network loaded = *LoadCheckpoint(dir);
  EXPECT_EQ(loaded.spec(), spec);
  EXPECT_EQ(loaded.parameters(), net.parameters());
}

TEST(TensorIoTest, CheckpointMissingParameterIsError) {
  const fs::path dir = TempDir("tensor_io_ckpt_missing");
  const Network net = *Network::Create({{2}, {DenseLayer{2, 2}}}, 5);
  ASSERT_TRUE(SaveCheckpoint(dir, net).ok());
  fs::remove(dir / "param_001.slkt");
  EXPECT_FALSE(LoadCheckpoint(dir).ok());
}

}  // namespace
}  // namespace segleak
