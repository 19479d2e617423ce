#include <gtest/gtest.h>

#include <filesystem>

#include "pixelstack/error.hpp"
#include "pixelstack/image_io.hpp"

using namespace pixelstack;

TEST(Pgm, ExactBytesForTwoByTwo) {
  IntMap img(1, 1, 2, 2);
  img.values = {0, 255, 128, 7};
  const auto bytes = encode_pgm_grid(img, 1, 8);
  std::vector<std::uint8_t> expect;
  const std::string header = "P5\n2 2\n255\n";
  expect.insert(expect.end(), header.begin(), header.end());
  for (int v : {0, 255, 128, 7}) expect.push_back(static_cast<std::uint8_t>(v));
  EXPECT_EQ(bytes, expect);
}

TEST(Pgm, CommentAndMaxvalFromBits) {
  IntMap img(1, 1, 1, 1, 3);
  const auto bytes = encode_pgm_grid(img, 1, 2, "seed 4");
  const std::string text(bytes.begin(), bytes.end() - 1);
  EXPECT_EQ(text, "P5\n# seed 4\n1 1\n3\n");
  const auto back = decode_pnm(bytes);
  EXPECT_EQ(back.comment, "seed 4");
  EXPECT_EQ(back.maxval, 3u);
  EXPECT_EQ(back.pixels, (std::vector<std::uint16_t>{3}));
  EXPECT_THROW((void)encode_pgm_grid(img, 1, 2, "two\nlines"), ValueError);
  IntMap big(1, 1, 1, 1, 4);
  EXPECT_THROW((void)encode_pgm_grid(big, 1, 2), ValueError);
}

TEST(Pgm, GridLayoutWithSeparators) {
  IntMap imgs(3, 1, 2, 2);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t p = 0; p < 4; ++p) imgs.values[i * 4 + p] = static_cast<std::int32_t>(10 * (i + 1) + p);
  const auto pnm = decode_pnm(encode_pgm_grid(imgs, 2, 8));
  // 2 columns, 2 rows: width 2*2+1, height 2*2+1
  ASSERT_EQ(pnm.width, 5u);
  ASSERT_EQ(pnm.height, 5u);
  auto px = [&](std::size_t y, std::size_t x) { return pnm.pixels[y * 5 + x]; };
  EXPECT_EQ(px(0, 0), 10);
  EXPECT_EQ(px(1, 1), 13);
  EXPECT_EQ(px(0, 2), 0);  // separator column
  EXPECT_EQ(px(0, 3), 20);
  EXPECT_EQ(px(2, 0), 0);  // separator row
  EXPECT_EQ(px(3, 0), 30);
  EXPECT_EQ(px(3, 3), 0);  // empty cell
}

TEST(Pgm, ColourAndSixteenBit) {
  IntMap rgb(1, 3, 1, 2);
  rgb.values = {1, 2, 3, 4, 5, 6};  // R plane, G plane, B plane
  const auto p6 = decode_pnm(encode_pgm_grid(rgb, 1, 3));
  EXPECT_EQ(p6.channels, 3u);
  EXPECT_EQ(p6.pixels, (std::vector<std::uint16_t>{1, 3, 5, 2, 4, 6}));
  IntMap deep(1, 1, 1, 1, 1000);
  const auto bytes = encode_pgm_grid(deep, 1, 10);
  EXPECT_EQ(bytes[bytes.size() - 2], 1000 >> 8);  // big-endian
  EXPECT_EQ(bytes.back(), 1000 & 0xFF);
  EXPECT_EQ(decode_pnm(bytes).pixels[0], 1000);
}

TEST(Pgm, DecodeErrors) {
  const std::string junk = "P2\n1 1\n255\n0";
  EXPECT_THROW((void)decode_pnm({junk.begin(), junk.end()}), FormatError);
  const std::string cut = "P5\n2 2\n255\n\x01";
  try {
    (void)decode_pnm({cut.begin(), cut.end()});
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::truncated);
  }
}

TEST(Csv, QuotingAndRoundTrip) {
  const std::vector<CsvRow> rows = {{"a", "b,c", "say \"hi\""}, {"multi\nline", "", "x"}};
  const auto text = encode_csv(rows);
  EXPECT_EQ(text, "a,\"b,c\",\"say \"\"hi\"\"\"\r\n\"multi\nline\",,x\r\n");
  EXPECT_EQ(parse_csv(text), rows);
  EXPECT_EQ(parse_csv("a,b\nc,d\n"), (std::vector<CsvRow>{{"a", "b"}, {"c", "d"}}));
  EXPECT_THROW((void)parse_csv("\"open"), FormatError);
}

TEST(Csv, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "pixelstack_test.csv";
  const std::vector<CsvRow> rows = {{"h1", "h2"}, {"1", "2.5"}};
  write_csv(rows, path);
  EXPECT_EQ(read_csv(path), rows);
  std::filesystem::remove(path);
}

TEST(Csv, DoublesRoundTripExactly) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 12345.678, -0.0}) EXPECT_EQ(std::stod(format_double(v)), v);
  EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(Csv, MetricsTableUnionAndWallClock) {
  std::vector<MetricRow> rows = {{1, 0.25, {{"loss", 2.0}}}, {2, 0.5, {{"bits", 1.5}, {"loss", 1.0}}}};
  const auto with = metrics_table(rows, true);
  EXPECT_EQ(with[0], (CsvRow{"step", "wall_seconds", "loss", "bits"}));
  EXPECT_EQ(with[1], (CsvRow{"1", "0.25", "2", ""}));
  const auto without = metrics_table(rows, false);
  EXPECT_EQ(without[0], (CsvRow{"step", "loss", "bits"}));
  EXPECT_EQ(without[2], (CsvRow{"2", "1", "1.5"}));
}
