#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace pvst::detail {

struct Raster8 {
  int height = 0;
  int width = 0;
  int channels = 0;  // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> bytes;
};

// PNG decode. When `keep_gray` is false, gray and palette inputs are expanded
// to RGB and alpha is dropped. When true, the native channel count is kept
// (1 for gray, 3 for RGB/palette, 4 stays an error).
Raster8 read_png(const std::filesystem::path& path, bool keep_gray);
void write_png(const std::filesystem::path& path, const Raster8& raster);

Raster8 read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Raster8& raster);

bool has_extension(const std::filesystem::path& path, const char* ext);

}  // namespace pvst::detail
