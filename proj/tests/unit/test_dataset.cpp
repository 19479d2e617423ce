#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "pixelstack/dataset.hpp"
#include "pixelstack/error.hpp"
#include "pixelstack/rng.hpp"

using namespace pixelstack;

namespace {

ImageDataset small_dataset() {
  ImageDataset ds;
  ds.bits = 4;
  ds.class_count = 3;
  ds.data = IntMap(2, 3, 2, 2);
  for (std::size_t i = 0; i < ds.data.values.size(); ++i) ds.data.values[i] = static_cast<std::int32_t>(i % 16);
  ds.labels = {2, 0};
  return ds;
}

FormatError::Kind parse_kind(const std::vector<std::uint8_t>& bytes) {
  try {
    (void)parse_dataset(bytes);
  } catch (const FormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "parse succeeded";
  return FormatError::Kind::io;
}

}  // namespace

TEST(Idt1, RoundTripAndLayout) {
  const auto ds = small_dataset();
  const auto bytes = serialize_dataset(ds);
  // header 4 + 4 + 16 + 1 + 2, labels 4, payload 24 bytes of u8
  ASSERT_EQ(bytes.size(), 27u + 4u + 24u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "IDT1");
  EXPECT_EQ(bytes[4], 1u);
  EXPECT_EQ(bytes[24], 4u);                  // bits
  EXPECT_EQ(bytes[27], 2u);                  // first label, little-endian
  // payload is (n, h, w, g): second value is group 1 of pixel (0, 0)
  EXPECT_EQ(bytes[31], static_cast<std::uint8_t>(ds.data.at(0, 0, 0, 0)));
  EXPECT_EQ(bytes[32], static_cast<std::uint8_t>(ds.data.at(0, 1, 0, 0)));
  const auto back = parse_dataset(bytes);
  EXPECT_EQ(back.data, ds.data);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.bits, 4u);
  EXPECT_EQ(back.class_count, 3u);
}

TEST(Idt1, SixteenBitPayload) {
  ImageDataset ds;
  ds.bits = 12;
  ds.data = IntMap(1, 1, 1, 2);
  ds.data.values = {4095, 258};
  ds.labels = {0};
  const auto bytes = serialize_dataset(ds);
  EXPECT_EQ(bytes.size(), 27u + 2u + 4u);
  EXPECT_EQ(parse_dataset(bytes).data, ds.data);
}

TEST(Idt1, ErrorKinds) {
  auto bytes = serialize_dataset(small_dataset());
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(parse_kind(bad), FormatError::Kind::bad_magic);
  bad = bytes;
  bad[4] = 9;
  EXPECT_EQ(parse_kind(bad), FormatError::Kind::bad_version);
  bad.assign(bytes.begin(), bytes.end() - 1);
  EXPECT_EQ(parse_kind(bad), FormatError::Kind::truncated);
  bad.assign(bytes.begin(), bytes.begin() + 10);
  EXPECT_EQ(parse_kind(bad), FormatError::Kind::truncated);
  bad = bytes;
  bad.push_back(0);
  EXPECT_EQ(parse_kind(bad), FormatError::Kind::invariant_violation);
  bad = bytes;
  bad[31] = 16;  // exceeds 4 bits
  EXPECT_EQ(parse_kind(bad), FormatError::Kind::invariant_violation);
  bad = bytes;
  bad[27] = 3;  // label >= class_count
  EXPECT_EQ(parse_kind(bad), FormatError::Kind::invariant_violation);
}

TEST(Idt1, ValidateNamesTheOffendingItem) {
  auto ds = small_dataset();
  ds.data.at(1, 2, 1, 0) = 99;
  try {
    ds.validate();
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("99"), std::string::npos) << e.what();
  }
}

TEST(Idt1, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "pixelstack_test.idt";
  const auto ds = synth_textures(5, 8, 8, 2, 1);
  save_dataset(ds, path);
  const auto back = load_dataset(path);
  EXPECT_EQ(back.data, ds.data);
  EXPECT_EQ(back.labels, ds.labels);
  std::filesystem::remove(path);
  EXPECT_THROW((void)load_dataset(path), FormatError);
}

TEST(Synth, DeterministicAndInRange) {
  const auto a = synth_textures(12, 16, 16, 3, 42);
  const auto b = synth_textures(12, 16, 16, 3, 42);
  const auto c = synth_textures(12, 16, 16, 3, 43);
  EXPECT_EQ(a.data, b.data);
  EXPECT_NE(a.data, c.data);
  EXPECT_NO_THROW(a.validate());
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(a.labels[i], i % 3);
  const auto empty = synth_textures(0, 16, 16, 2, 1);
  EXPECT_EQ(empty.size(), 0u);
  EXPECT_EQ(parse_dataset(serialize_dataset(empty)).size(), 0u);
  EXPECT_THROW((void)synth_textures(4, 8, 8, 0, 1), ValueError);
}

TEST(Synth, ClassesAreSeparableByNearestCentroid) {
  const std::size_t classes = 6, side = 16;
  const auto train = synth_textures(120, side, side, classes, 1);
  const auto test = synth_textures(60, side, side, classes, 2);
  const std::size_t P = side * side;
  std::vector<std::vector<double>> centroid(classes, std::vector<double>(P, 0.0));
  std::vector<double> count(classes, 0.0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    count[train.labels[i]] += 1.0;
    for (std::size_t p = 0; p < P; ++p) centroid[train.labels[i]][p] += train.data.values[i * P + p];
  }
  for (std::size_t c = 0; c < classes; ++c)
    for (auto& v : centroid[c]) v /= count[c];
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    std::size_t best = 0;
    double bd = 1e300;
    for (std::size_t c = 0; c < classes; ++c) {
      double d = 0.0;
      for (std::size_t p = 0; p < P; ++p) {
        const double diff = test.data.values[i * P + p] - centroid[c][p];
        d += diff * diff;
      }
      if (d < bd) {
        bd = d;
        best = c;
      }
    }
    correct += best == test.labels[i];
  }
  EXPECT_GE(static_cast<double>(correct) / test.size(), 0.8);
}

TEST(BitDepth, FloorDivision) {
  IntMap x(1, 1, 1, 4);
  x.values = {0, 31, 32, 255};
  const auto y = bit_depth_reduce(x, 8, 3);
  EXPECT_EQ(y.values, (std::vector<std::int32_t>{0, 0, 1, 7}));
  EXPECT_EQ(bit_depth_reduce(x, 8, 8), x);
  EXPECT_THROW((void)bit_depth_reduce(x, 3, 8), ValueError);
  x.values[0] = 256;
  EXPECT_THROW((void)bit_depth_reduce(x, 8, 4), ValueError);
  const auto ds = bit_depth_reduce(synth_textures(3, 4, 4, 1, 1), 2);
  EXPECT_EQ(ds.bits, 2u);
  EXPECT_EQ(ds.bins(), 4u);
  EXPECT_NO_THROW(ds.validate());
}

TEST(Augment, FlipIsInvolutionAndCropIsSubimage) {
  const auto ds = synth_textures(3, 8, 8, 1, 9);
  Rng rng(1);
  const auto flipped = augment(ds.data, rng, {false, true, 0});
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) EXPECT_EQ(flipped.at(1, 0, y, x), ds.data.at(1, 0, y, 7 - x));
  EXPECT_EQ(augment(flipped, rng, {false, true, 0}), ds.data);
  EXPECT_EQ(augment(ds.data, rng, {}), ds.data);

  Rng a(5), b(5);
  const auto crop = augment(ds.data, a, {false, false, 5});
  ASSERT_EQ(crop.height, 5u);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto off = draw_crop(8, 8, 5, b);
    for (std::size_t y = 0; y < 5; ++y)
      for (std::size_t x = 0; x < 5; ++x) EXPECT_EQ(crop.at(i, 0, y, x), ds.data.at(i, 0, off.top + y, off.left + x));
  }
  EXPECT_THROW((void)augment(ds.data, rng, {false, false, 9}), ValueError);
}

TEST(Augment, CropOffsetsAreUniform) {
  Rng rng(3);
  std::map<std::pair<std::size_t, std::size_t>, int> hist;
  const int n = 16000;
  for (int i = 0; i < n; ++i) {
    const auto o = draw_crop(6, 6, 3, rng);
    ASSERT_LE(o.top, 3u);
    ASSERT_LE(o.left, 3u);
    hist[{o.top, o.left}]++;
  }
  ASSERT_EQ(hist.size(), 16u);
  double chi2 = 0.0;
  for (auto& [k, c] : hist) chi2 += (c - n / 16.0) * (c - n / 16.0) / (n / 16.0);
  EXPECT_LT(chi2, 37.7);  // 15 dof, p = 0.001
}

TEST(Augment, RandomFlipHitsBothOutcomes) {
  IntMap x(200, 1, 1, 2);
  for (std::size_t i = 0; i < 200; ++i) x.at(i, 0, 0, 1) = 1;
  Rng rng(4);
  const auto y = augment(x, rng, {true, false, 0});
  int flipped = 0;
  for (std::size_t i = 0; i < 200; ++i) flipped += y.at(i, 0, 0, 0);
  EXPECT_GT(flipped, 70);
  EXPECT_LT(flipped, 130);
}

TEST(SplitHash, RoughlyTenPercent) {
  int val = 0;
  for (std::size_t i = 0; i < 10000; ++i) val += is_validation_index(i);
  EXPECT_NEAR(val / 10000.0, 0.1, 0.01);
  EXPECT_EQ(is_validation_index(17), is_validation_index(17));
}

TEST(Augment, PreservesRangeAndDepth) {
  auto ds = bit_depth_reduce(synth_textures(10, 12, 12, 3, 4), 3);
  Rng rng(6);
  ImageDataset out = ds;
  out.data = augment(ds.data, rng, {true, false, 7});
  EXPECT_NO_THROW(out.validate());
  EXPECT_EQ(out.bits, 3u);
  EXPECT_EQ(out.data.height, 7u);
}

TEST(Synth, PinnedChecksum) {
  // FNV-1a over the serialized bytes; any change to the generator or the
  // container shows up here.
  const auto bytes = serialize_dataset(synth_textures(16, 16, 16, 6, 2024));
  std::uint64_t h = 1469598103934665603ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  EXPECT_EQ(h, 0x1bb17bf3a08746f9ULL);
}

TEST(Rng, PinnedXoshiroStream) {
  Rng rng(0);
  // splitmix64-seeded xoshiro256**: first outputs for seed 0
  const std::uint64_t a = rng.next(), b = rng.next();
  EXPECT_EQ(a, 0x99ec5f36cb75f2b4ULL);
  EXPECT_EQ(b, 0xbf6e1f784956452aULL);
}
