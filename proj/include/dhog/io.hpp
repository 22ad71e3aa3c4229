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


#pragma once

#include "dhog/hog.hpp"
#include "dhog/image.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dhog {

/// Reads 8-bit gray/RGB PNG (non-interlaced) or binary PGM/PPM with maxval
/// 255. Samples are divided by 255.
Image load_image(const std::filesystem::path& path);

/// Clamps to [0, 1] and quantizes with round(v * 255). Writes PNM when the
/// extension is .pgm or .ppm, PNG otherwise.
void save_image(const Image& img, const std::filesystem::path& path);

/// Like save_image but collapses RGB through to_gray first.
void save_image_gray(const Image& img, const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Image& img);
Image decode_png(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_pnm(const Image& img);
Image decode_pnm(const std::vector<std::uint8_t>& bytes);

inline constexpr std::uint32_t kDescriptorVersion = 1;
inline constexpr std::size_t kDescriptorHeaderBytes = 28;

/// GHOG layout, all little-endian: "GHOG", version, mode (0 unsigned,
/// 1 signed), cell, cells_y, cells_x, bins, then float32 payload with bins
/// fastest.
std::vector<std::uint8_t> encode_descriptor(const HogDescriptor& d);
HogDescriptor decode_descriptor(const std::vector<std::uint8_t>& bytes);

void write_descriptor(const HogDescriptor& d, const std::filesystem::path& path);
HogDescriptor read_descriptor(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes a sibling temporary and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const void* data, std::size_t size);

}  // namespace dhog
