// Copyright 2026 The dhog Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.


#include "dhog/io.hpp"

#include "dhog/error.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <system_error>

namespace dhog {

namespace fs = std::filesystem;

namespace {

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::vector<std::uint8_t> quantize(const Image& img) {
  if (!img.data.allFinite()) throw NumericError("cannot save an image with non-finite samples");
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(img.data.size()));
  for (Index i = 0; i < img.data.size(); ++i) bytes[static_cast<std::size_t>(i)] = quantize(img.data[i]);
  return bytes;
}

Image dequantize(const std::uint8_t* bytes, Index w, Index h, Index c) {
  Image img(w, h, c);
  for (Index i = 0; i < img.data.size(); ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

// libpng's simplified reader silently converts what we want refused, so the
// header is vetted by hand first.
void check_png_header(const std::vector<std::uint8_t>& b) {
  static constexpr std::array<std::uint8_t, 8> kSignature{137, 80, 78, 71, 13, 10, 26, 10};
  if (b.size() < 33 || !std::equal(kSignature.begin(), kSignature.end(), b.begin())) {
    throw FormatError("not a PNG file");
  }
  if (std::memcmp(b.data() + 12, "IHDR", 4) != 0 || read_be32(b.data() + 8) != 13) {
    throw FormatError("corrupt PNG header");
  }
  const int depth = b[24], color = b[25], interlace = b[28];
  if (depth != 8) throw FormatError("unsupported PNG bit depth " + std::to_string(depth));
  if (color != 0 && color != 2) throw FormatError("unsupported PNG color type " + std::to_string(color));
  if (interlace != 0) throw FormatError("interlaced PNG is not supported");
}

bool has_extension(const fs::path& p, std::initializer_list<const char*> exts) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return std::any_of(exts.begin(), exts.end(), [&](const char* x) { return e == x; });
}

}  // namespace

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file_atomic(const fs::path& path, const void* data, std::size_t size) {
  std::random_device rd;
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(rd());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("write failed: " + path.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot replace " + path.string());
  }
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  std::vector<std::uint8_t> pixels = quantize(img);
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(img.width);
  pi.height = static_cast<png_uint_32>(img.height);
  pi.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&pi, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + pi.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&pi, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + pi.message);
  }
  out.resize(size);
  return out;
}

Image decode_png(const std::vector<std::uint8_t>& bytes) {
  check_png_header(bytes);
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&pi, bytes.data(), bytes.size())) {
    throw FormatError(std::string("corrupt PNG: ") + pi.message);
  }
  const Index channels = (pi.format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1;
  pi.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(pi));
  if (!png_image_finish_read(&pi, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&pi);
    throw FormatError(std::string("corrupt PNG: ") + pi.message);
  }
  return dequantize(pixels.data(), pi.width, pi.height, channels);
}

std::vector<std::uint8_t> encode_pnm(const Image& img) {
  const std::string header = std::string(img.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(img.width) +
                             " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const std::vector<std::uint8_t> pixels = quantize(img);
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

Image decode_pnm(const std::vector<std::uint8_t>& b) {
  if (b.size() < 2 || b[0] != 'P' || (b[1] != '5' && b[1] != '6')) throw FormatError("not a binary PGM/PPM file");
  const Index channels = b[1] == '6' ? 3 : 1;
  std::size_t pos = 2;
  auto next_field = [&]() -> long {
    for (;;) {
      while (pos < b.size() && std::isspace(b[pos])) ++pos;
      if (pos < b.size() && b[pos] == '#') {
        while (pos < b.size() && b[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    if (pos >= b.size() || !std::isdigit(b[pos])) throw FormatError("corrupt PNM header");
    long v = 0;
    while (pos < b.size() && std::isdigit(b[pos])) {
      v = v * 10 + (b[pos++] - '0');
      if (v > std::numeric_limits<int>::max()) throw FormatError("corrupt PNM header");
    }
    return v;
  };
  const long w = next_field(), h = next_field(), maxval = next_field();
  // Exactly one whitespace byte separates the header from the raster.
  if (pos >= b.size() || !std::isspace(b[pos])) throw FormatError("corrupt PNM header");
  ++pos;
  if (w < 1 || h < 1) throw FormatError("corrupt PNM header");
  if (maxval != 255) throw FormatError("unsupported PNM maxval " + std::to_string(maxval));
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * channels;
  if (b.size() - pos < need) throw FormatError("truncated PNM raster");
  return dequantize(b.data() + pos, w, h, channels);
}

Image load_image(const fs::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 'P') return decode_pnm(bytes);
  return decode_png(bytes);
}

void save_image(const Image& img, const fs::path& path) {
  const std::vector<std::uint8_t> bytes =
      has_extension(path, {".pgm", ".ppm", ".pnm"}) ? encode_pnm(img) : encode_png(img);
  write_file_atomic(path, bytes.data(), bytes.size());
}

void save_image_gray(const Image& img, const fs::path& path) {
  save_image(img.channels == 3 ? to_gray(img) : img, path);
}

namespace {

void put_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_le32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
}

}  // namespace

std::vector<std::uint8_t> encode_descriptor(const HogDescriptor& d) {
  if (d.grid.rank() != 3) throw ShapeError("descriptor grid must be (cells_y, cells_x, bins)");
  std::vector<std::uint8_t> out{'G', 'H', 'O', 'G'};
  out.reserve(kDescriptorHeaderBytes + 4 * static_cast<std::size_t>(d.grid.size()));
  put_le32(out, kDescriptorVersion);
  put_le32(out, d.config.orientation == Orientation::kSigned ? 1 : 0);
  put_le32(out, static_cast<std::uint32_t>(d.config.cell));
  put_le32(out, static_cast<std::uint32_t>(d.cells_y()));
  put_le32(out, static_cast<std::uint32_t>(d.cells_x()));
  put_le32(out, static_cast<std::uint32_t>(d.bins()));
  for (Index i = 0; i < d.grid.size(); ++i) {
    put_le32(out, std::bit_cast<std::uint32_t>(static_cast<float>(d.grid[i])));
  }
  return out;
}

HogDescriptor decode_descriptor(const std::vector<std::uint8_t>& b) {
  if (b.size() < 4 || std::memcmp(b.data(), "GHOG", 4) != 0) throw FormatError("bad descriptor magic");
  if (b.size() < kDescriptorHeaderBytes) throw FormatError("truncated descriptor header");
  const std::uint32_t version = get_le32(b.data() + 4);
  if (version != kDescriptorVersion) {
    throw FormatError("descriptor version " + std::to_string(version) + " is not supported");
  }
  const std::uint32_t mode = get_le32(b.data() + 8);
  if (mode > 1) throw FormatError("descriptor mode must be 0 or 1");
  const std::uint64_t cell = get_le32(b.data() + 12);
  const std::uint64_t ny = get_le32(b.data() + 16), nx = get_le32(b.data() + 20), nb = get_le32(b.data() + 24);
  if (ny == 0 || nx == 0 || nb == 0 || cell == 0) throw FormatError("descriptor has an empty grid");
  const std::uint64_t count = ny * nx * nb;
  const std::uint64_t payload = b.size() - kDescriptorHeaderBytes;
  if (count > payload / 4) throw FormatError("truncated descriptor payload");
  if (payload != 4 * count) throw FormatError("trailing bytes after descriptor payload");

  HogDescriptor d;
  d.config.orientation = mode == 1 ? Orientation::kSigned : Orientation::kUnsigned;
  d.config.cell = static_cast<int>(cell);
  d.config.bins = static_cast<int>(nb);
  d.grid = Tensor(Shape{static_cast<Index>(ny), static_cast<Index>(nx), static_cast<Index>(nb)});
  const std::uint8_t* p = b.data() + kDescriptorHeaderBytes;
  for (Index i = 0; i < d.grid.size(); ++i, p += 4) d.grid[i] = std::bit_cast<float>(get_le32(p));
  return d;
}

void write_descriptor(const HogDescriptor& d, const fs::path& path) {
  const std::vector<std::uint8_t> bytes = encode_descriptor(d);
  write_file_atomic(path, bytes.data(), bytes.size());
}

HogDescriptor read_descriptor(const fs::path& path) { return decode_descriptor(read_file(path)); }

}  // namespace dhog
