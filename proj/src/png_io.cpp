#include "dlava/png_io.hpp"

#include <png.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "dlava/error.hpp"

namespace dlava::png {

namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kValidation, "cannot open image " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<std::uint8_t> encode(const Raster& raster) {
  if (raster.empty()) fail(ErrorKind::kUsage, "cannot encode an empty raster");
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(raster.width());
  image.height = static_cast<png_uint_32>(raster.height());
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  const auto* pixels = raster.bytes().data();
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels, 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    fail(ErrorKind::kValidation, "PNG encode failed: " + message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels, 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    fail(ErrorKind::kValidation, "PNG encode failed: " + message);
  }
  out.resize(size);
  return out;
}

Raster decode(const std::vector<std::uint8_t>& bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    const std::string message = image.message;
    png_image_free(&image);
    fail(ErrorKind::kValidation, "PNG decode failed: " + message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  png_color white{255, 255, 255};
  if (!png_image_finish_read(&image, &white, pixels.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    fail(ErrorKind::kValidation, "PNG decode failed: " + message);
  }
  return Raster(static_cast<std::int32_t>(image.width), static_cast<std::int32_t>(image.height), std::move(pixels));
}

void write_file(const std::filesystem::path& path, const Raster& raster) {
  const auto bytes = encode(raster);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kValidation, "cannot write image " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Raster read_file(const std::filesystem::path& path) {
  try {
    return decode(slurp(path));
  } catch (const Error& e) {
    fail(ErrorKind::kValidation, path.string() + ": " + e.what());
  }
}

std::pair<std::int32_t, std::int32_t> dimensions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kValidation, "cannot open image " + path.string());
  std::vector<std::uint8_t> head(24);
  in.read(reinterpret_cast<char*>(head.data()), 24);
  if (in.gcount() != 24 || png_sig_cmp(head.data(), 0, 8) != 0) {
    fail(ErrorKind::kValidation, path.string() + ": not a PNG file");
  }
  auto be32 = [&](std::size_t at) {
    return static_cast<std::int32_t>((static_cast<std::uint32_t>(head[at]) << 24) | (head[at + 1] << 16) |
                                     (head[at + 2] << 8) | head[at + 3]);
  };
  return {be32(16), be32(20)};
}

}  // namespace dlava::png
