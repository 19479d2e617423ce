#include "pixelstack/image_io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>

#include "pixelstack/error.hpp"

namespace pixelstack {

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const char* data, std::size_t size) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(FormatError::Kind::io, "cannot open " + path.string() + " for writing");
  f.write(data, static_cast<std::streamsize>(size));
  if (!f) throw FormatError(FormatError::Kind::io, "write failed: " + path.string());
}

}  // namespace

std::vector<std::uint8_t> encode_pgm_grid(const IntMap& images, std::size_t cols, unsigned bits,
                                          const std::string& comment) {
  if (images.channels != 1 && images.channels != 3) {
    throw ShapeError("PNM output needs 1 or 3 channel groups, got " + std::to_string(images.channels));
  }
  if (images.n == 0) throw ShapeError("PNM grid needs at least one image");
  if (cols == 0) throw ValueError("PNM grid needs at least one column");
  if (bits == 0 || bits > 16) throw ValueError("PNM bit depth must be in [1, 16]");
  if (comment.find_first_of("\r\n") != std::string::npos) throw ValueError("PNM comment must be a single line");
  const unsigned maxval = (1u << bits) - 1;
  const std::size_t rows = (images.n + cols - 1) / cols;
  const std::size_t used_cols = std::min(cols, images.n);
  const std::size_t gw = used_cols * images.width + (used_cols - 1);
  const std::size_t gh = rows * images.height + (rows - 1);
  const std::size_t g = images.channels;

  std::vector<std::uint16_t> canvas(gw * gh * g, 0);
  for (std::size_t i = 0; i < images.n; ++i) {
    const std::size_t oy = (i / cols) * (images.height + 1);
    const std::size_t ox = (i % cols) * (images.width + 1);
    for (std::size_t y = 0; y < images.height; ++y) {
      for (std::size_t x = 0; x < images.width; ++x) {
        for (std::size_t c = 0; c < g; ++c) {
          const auto v = images.at(i, c, y, x);
          if (v < 0 || static_cast<unsigned>(v) > maxval) {
            throw ValueError("pixel value " + std::to_string(v) + " exceeds maxval " + std::to_string(maxval));
          }
          canvas[((oy + y) * gw + ox + x) * g + c] = static_cast<std::uint16_t>(v);
        }
      }
    }
  }

  std::string header = g == 1 ? "P5\n" : "P6\n";
  if (!comment.empty()) header += "# " + comment + "\n";
  header += std::to_string(gw) + " " + std::to_string(gh) + "\n" + std::to_string(maxval) + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const bool wide = maxval > 255;
  out.reserve(out.size() + canvas.size() * (wide ? 2 : 1));
  for (auto v : canvas) {
    if (wide) out.push_back(static_cast<std::uint8_t>(v >> 8));  // PNM is big-endian
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  }
  return out;
}

void write_pgm_grid(const IntMap& images, std::size_t cols, unsigned bits, const std::filesystem::path& path,
                    const std::string& comment) {
  const auto bytes = encode_pgm_grid(images, cols, bits, comment);
  write_bytes(path, reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

PnmImage decode_pnm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto fail = [](const std::string& m) -> void { throw FormatError(FormatError::Kind::invariant_violation, "PNM: " + m); };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError(FormatError::Kind::bad_magic, "PNM: expected P5 or P6");
  }
  PnmImage img;
  img.channels = bytes[1] == '5' ? 1 : 3;
  pos = 2;
  auto skip_space_and_comments = [&] {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        std::size_t end = pos;
        while (end < bytes.size() && bytes[end] != '\n') ++end;
        if (img.comment.empty()) {
          std::size_t start = pos + 1;
          if (start < end && bytes[start] == ' ') ++start;
          img.comment.assign(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                             bytes.begin() + static_cast<std::ptrdiff_t>(end));
        }
        pos = end;
        continue;
      }
      return;
    }
  };
  auto number = [&]() -> std::size_t {
    skip_space_and_comments();
    std::size_t v = 0;
    const auto* first = reinterpret_cast<const char*>(bytes.data()) + pos;
    const auto* last = reinterpret_cast<const char*>(bytes.data()) + bytes.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr == first) {
      throw FormatError(FormatError::Kind::truncated, "PNM: malformed header");
    }
    pos += static_cast<std::size_t>(ptr - first);
    return v;
  };
  img.width = number();
  img.height = number();
  img.maxval = static_cast<unsigned>(number());
  if (img.maxval == 0 || img.maxval > 65535) fail("maxval out of range");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail("missing whitespace after maxval");
  ++pos;
  const bool wide = img.maxval > 255;
  const std::size_t count = img.width * img.height * img.channels;
  if (bytes.size() - pos < count * (wide ? 2 : 1)) {
    throw FormatError(FormatError::Kind::truncated, "PNM: truncated pixel data");
  }
  img.pixels.resize(count);
  for (auto& p : img.pixels) {
    p = wide ? static_cast<std::uint16_t>((bytes[pos] << 8) | bytes[pos + 1]) : bytes[pos];
    pos += wide ? 2 : 1;
    if (p > img.maxval) fail("pixel exceeds maxval");
  }
  return img;
}

PnmImage read_pnm(const std::filesystem::path& path) { return decode_pnm(read_bytes(path)); }

// ---------------------------------------------------------------------------

std::string encode_csv(const std::vector<CsvRow>& rows) {
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      const auto& f = row[i];
      if (f.find_first_of(",\"\r\n") == std::string::npos) {
        out += f;
        continue;
      }
      out += '"';
      for (char ch : f) {
        if (ch == '"') out += '"';
        out += ch;
      }
      out += '"';
    }
    out += "\r\n";
  }
  return out;
}

std::vector<CsvRow> parse_csv(const std::string& text) {
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool quoted = false, field_started = false;
  std::size_t i = 0;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
  };
  while (i < text.size()) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          i += 2;
          continue;
        }
        quoted = false;
      } else {
        field += ch;
      }
      ++i;
      continue;
    }
    if (ch == '"' && !field_started && field.empty()) {
      quoted = true;
      field_started = true;
    } else if (ch == ',') {
      end_field();
    } else if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      end_record();
      ++i;
    } else if (ch == '\n') {
      end_record();
    } else {
      field += ch;
      field_started = true;
    }
    ++i;
  }
  if (quoted) throw FormatError(FormatError::Kind::truncated, "CSV: unterminated quoted field");
  if (field_started || !field.empty() || !row.empty()) end_record();
  return rows;
}

void write_csv(const std::vector<CsvRow>& rows, const std::filesystem::path& path) {
  const auto text = encode_csv(rows);
  write_bytes(path, text.data(), text.size());
}

std::vector<CsvRow> read_csv(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  return parse_csv(std::string(bytes.begin(), bytes.end()));
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw ValueError("format_double failed");
  return {buf.data(), ptr};
}

std::vector<CsvRow> metrics_table(const std::vector<MetricRow>& rows, bool include_wall_clock) {
  std::vector<std::string> names;
  for (const auto& r : rows) {
    for (const auto& [k, v] : r.values) {
      if (std::find(names.begin(), names.end(), k) == names.end()) names.push_back(k);
    }
  }
  std::vector<CsvRow> out;
  CsvRow header{"step"};
  if (include_wall_clock) header.emplace_back("wall_seconds");
  header.insert(header.end(), names.begin(), names.end());
  out.push_back(std::move(header));
  for (const auto& r : rows) {
    CsvRow line{std::to_string(r.step)};
    if (include_wall_clock) line.push_back(format_double(r.wall_seconds));
    for (const auto& name : names) {
      std::string cell;
      for (const auto& [k, v] : r.values) {
        if (k == name) {
          cell = format_double(v);
          break;
        }
      }
      line.push_back(std::move(cell));
    }
    out.push_back(std::move(line));
  }
  return out;
}

}  // namespace pixelstack
