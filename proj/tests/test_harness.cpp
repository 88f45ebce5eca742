#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <vector>

#include "jensenkv/tensor_io.hpp"
#include "jensenkv/workload.hpp"

using namespace jensenkv;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST(TensorIo, RoundTripArbitraryShapes) {
  Rng rng(1);
  for (const auto& dims : std::vector<std::vector<std::uint64_t>>{
           {1}, {7}, {3, 5}, {2, 3, 4}, {1, 1, 1, 6}}) {
    Tensor t;
    t.dims = dims;
    t.data.resize(t.elem_count());
    for (auto& v : t.data) v = static_cast<float>(rng.normal());
    const auto path = temp_file("jensenkv_io_test.jkvt");
    write_tensor(path, t);
    const Tensor back = read_tensor(path);
    EXPECT_EQ(back.dims, t.dims);
    EXPECT_EQ(back.data, t.data);
    std::filesystem::remove(path);
  }
}

TEST(TensorIo, HeaderIsBitExact) {
  Tensor t;
  t.dims = {2, 3};
  t.data = {0, 1, 2, 3, 4, 5};
  const auto path = temp_file("jensenkv_io_hdr.jkvt");
  write_tensor(path, t);
  std::ifstream in(path, std::ios::binary);
  std::vector<unsigned char> head(8);
  in.read(reinterpret_cast<char*>(head.data()), 8);
  EXPECT_EQ(head[0], 'J');
  EXPECT_EQ(head[1], 'K');
  EXPECT_EQ(head[2], 'V');
  EXPECT_EQ(head[3], 'T');
  EXPECT_EQ(head[4], 1);  // version
  EXPECT_EQ(head[5], 0);  // dtype f32
  EXPECT_EQ(head[6], 2);  // ndim
  EXPECT_EQ(head[7], 0);  // reserved
  std::filesystem::remove(path);
}

TEST(TensorIo, RejectsCorruptFiles) {
  const auto path = temp_file("jensenkv_io_bad.jkvt");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE";
  }
  EXPECT_THROW(read_tensor(path), TensorIoError);
  {
    Tensor t;
    t.dims = {2};
    t.data = {1.0f, 2.0f};
    write_tensor(path, t);
    // Flip the version byte.
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(4);
    char v = 9;
    f.write(&v, 1);
  }
  EXPECT_THROW(read_tensor(path), TensorIoError);
  std::filesystem::remove(path);
}

TEST(TensorIo, HeadStackRoundTrip) {
  Rng rng(2);
  std::vector<MatrixF> heads;
  for (int h = 0; h < 3; ++h) {
    MatrixF m(4, 5);
    for (auto& v : m.data) v = static_cast<float>(rng.normal());
    heads.push_back(std::move(m));
  }
  const auto t = tensor_from_heads(heads);
  EXPECT_EQ(t.dims, (std::vector<std::uint64_t>{3, 4, 5}));
  const auto back = heads_from_tensor(t);
  ASSERT_EQ(back.size(), 3u);
  for (int h = 0; h < 3; ++h) EXPECT_EQ(back[static_cast<std::size_t>(h)].data, heads[static_cast<std::size_t>(h)].data);
}

TEST(Config, JsonRoundTripIsLossless) {
  WorkloadConfig c;
  c.queries = 12;
  c.cached_tokens = 34;
  c.current_tokens = 56;
  c.head_dim = 64;
  c.value_dim = 32;
  c.heads = 2;
  c.score_scale = 0.75;
  c.outlier_channels = 3;
  c.outlier_magnitude = 12.5;
  c.full_precision_values = true;
  c.seed = 0xDEADBEEFCAFEull;
  c.spec.bits = 4;
  c.spec.group_size = 16;
  c.spec.granularity = Granularity::kPerChannel;
  c.spec.scale_format = ScaleFormat::kFullPrecision;
  c.spec.zeropoint_format = ZeroPointFormat::kBf16;
  c.spec.rotation = true;
  c.spec.seed = 321;
  c.mode = CorrectionMode::kExact;

  const json j = to_json(c);
  const WorkloadConfig back = workload_config_from_json(j);
  EXPECT_EQ(to_json(back).dump(), j.dump());
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(back.spec.granularity, Granularity::kPerChannel);
  EXPECT_EQ(back.mode, CorrectionMode::kExact);
}

TEST(Workload, DeterministicPerSeed) {
  WorkloadConfig c;
  c.queries = 4;
  c.cached_tokens = 8;
  c.current_tokens = 4;
  c.head_dim = 16;
  c.value_dim = 16;
  c.heads = 2;
  const auto a = generate_workload(c);
  const auto b = generate_workload(c);
  ASSERT_EQ(a.heads.size(), b.heads.size());
  for (std::size_t h = 0; h < a.heads.size(); ++h) {
    EXPECT_EQ(a.heads[h].queries.data, b.heads[h].queries.data);
    EXPECT_EQ(a.heads[h].cached_keys.data, b.heads[h].cached_keys.data);
  }
  c.seed = 2;
  const auto other = generate_workload(c);
  EXPECT_NE(a.heads[0].queries.data, other.heads[0].queries.data);
}

TEST(Workload, ScoreScaleZeroGivesUniformAttention) {
  WorkloadConfig c;
  c.queries = 3;
  c.cached_tokens = 0;
  c.current_tokens = 6;
  c.head_dim = 8;
  c.value_dim = 8;
  c.heads = 1;
  c.score_scale = 0.0;
  const auto w = generate_workload(c);
  const auto& h = w.heads[0];
  KvCache cache(c.spec, c.head_dim, c.value_dim);
  const auto res = attend({h.queries, &cache, h.current_keys, h.current_values},
                          CorrectionMode::kNone);
  for (int m = 0; m < 3; ++m)
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(res.weights.at(m, i), 1.0 / 6.0, 1e-12);
}

TEST(Workload, OutlierChannelsAreInjectedAndRotationFlattensThem) {
  WorkloadConfig c;
  c.queries = 2;
  c.cached_tokens = 64;
  c.current_tokens = 2;
  c.head_dim = 64;
  c.value_dim = 64;
  c.heads = 1;
  c.outlier_channels = 1;
  c.outlier_magnitude = 10.0;
  const auto w = generate_workload(c);
  const auto& keys = w.heads[0].cached_keys;

  // Channel 0 carries clearly larger energy than the rest.
  double e0 = 0.0, rest = 0.0;
  for (int i = 0; i < keys.rows; ++i) {
    e0 += static_cast<double>(keys.at(i, 0)) * keys.at(i, 0);
    for (int col = 1; col < keys.cols; ++col)
      rest += static_cast<double>(keys.at(i, col)) * keys.at(i, col);
  }
  rest /= (keys.cols - 1);
  EXPECT_GT(e0, 10.0 * rest);

  // After rotation, the per-channel max drops for most rows.
  HadamardRotation rot(64, 5);
  int flattened = 0;
  for (int i = 0; i < keys.rows; ++i) {
    std::vector<float> row(keys.row(i).begin(), keys.row(i).end());
    float before = 0.0f;
    for (float v : row) before = std::max(before, std::fabs(v));
    const auto rotated = rot.rotate(std::span<const float>(row));
    float after = 0.0f;
    for (float v : rotated) after = std::max(after, std::fabs(v));
    if (after < before) ++flattened;
  }
  EXPECT_GT(flattened, keys.rows / 2);
}

TEST(Workload, BuildCacheHonorsValuePrecisionSwitch) {
  WorkloadConfig c;
  c.queries = 2;
  c.cached_tokens = 8;
  c.current_tokens = 2;
  c.head_dim = 32;
  c.value_dim = 32;
  c.heads = 1;
  c.spec.bits = 2;
  c.spec.group_size = 32;
  const auto w = generate_workload(c);

  const KvCache quantized = build_cache(w.heads[0], c);
  EXPECT_TRUE(quantized.values_quantized());

  WorkloadConfig fp = c;
  fp.full_precision_values = true;
  const KvCache full = build_cache(w.heads[0], fp);
  EXPECT_FALSE(full.values_quantized());
  EXPECT_EQ(full.values_hat().data, w.heads[0].cached_values.data);
  EXPECT_NE(quantized.values_hat().data, w.heads[0].cached_values.data);
}
