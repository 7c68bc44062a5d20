#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dlava/image.hpp"

namespace dlava::png {

// Encoding is deterministic: identical rasters give identical bytes.
std::vector<std::uint8_t> encode(const Raster& raster);
Raster decode(const std::vector<std::uint8_t>& bytes);

void write_file(const std::filesystem::path& path, const Raster& raster);
Raster read_file(const std::filesystem::path& path);

// Reads only the header.
std::pair<std::int32_t, std::int32_t> dimensions(const std::filesystem::path& path);

}  // namespace dlava::png
