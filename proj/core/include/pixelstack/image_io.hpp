#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pixelstack/metrics.hpp"
#include "pixelstack/nn.hpp"

namespace pixelstack {

/// Decoded binary PNM (P5 or P6).
struct PnmImage {
  std::size_t width = 0, height = 0, channels = 1;
  unsigned maxval = 255;
  std::string comment;            // first '#' line, without the marker
  std::vector<std::uint16_t> pixels;  // row-major, channels interleaved
};

/// Tiles `images` [N, G, H, W] into a grid with `cols` columns and a 1px
/// separator of value 0 between cells. G == 1 gives P5, G == 3 gives P6.
/// maxval is 2^bits - 1; a non-empty comment is written as one '#' line.
[[nodiscard]] std::vector<std::uint8_t> encode_pgm_grid(const IntMap& images, std::size_t cols, unsigned bits,
                                                        const std::string& comment = {});
void write_pgm_grid(const IntMap& images, std::size_t cols, unsigned bits, const std::filesystem::path& path,
                    const std::string& comment = {});

[[nodiscard]] PnmImage decode_pnm(const std::vector<std::uint8_t>& bytes);
[[nodiscard]] PnmImage read_pnm(const std::filesystem::path& path);

using CsvRow = std::vector<std::string>;

/// RFC-4180: fields with comma, quote, CR or LF are quoted, quotes doubled;
/// records end with CRLF.
[[nodiscard]] std::string encode_csv(const std::vector<CsvRow>& rows);
[[nodiscard]] std::vector<CsvRow> parse_csv(const std::string& text);

void write_csv(const std::vector<CsvRow>& rows, const std::filesystem::path& path);
[[nodiscard]] std::vector<CsvRow> read_csv(const std::filesystem::path& path);

/// Shortest round-tripping decimal form of a double.
[[nodiscard]] std::string format_double(double v);

/// Metric rows as a CSV table: step, wall_seconds, then the union of metric
/// names in first-seen order. Missing values are empty fields. With
/// `include_wall_clock` false the timing column is dropped, so the output
/// depends only on the seed.
[[nodiscard]] std::vector<CsvRow> metrics_table(const std::vector<MetricRow>& rows, bool include_wall_clock = true);

}  // namespace pixelstack
