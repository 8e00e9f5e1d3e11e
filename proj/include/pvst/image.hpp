#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace pvst {

// Generic real-valued raster: row-major, channels interleaved per pixel.
// Used for gradients and intermediate buffers.
class PixelGrid {
 public:
  PixelGrid() = default;
  PixelGrid(int height, int width, int channels, double fill = 0.0);
  PixelGrid(int height, int width, int channels, std::vector<double> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool same_shape(const PixelGrid& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  double& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  PixelGrid& operator+=(const PixelGrid& other);
  PixelGrid& operator*=(double s);

  // Throws ErrorKind::kNonFinite if any value is NaN or infinite.
  void check_finite(const char* what) const;

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// RGB raster with every value in [0,1]. Immutable through its public surface
// except via `set`, which clamps.
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  // Constant image. Throws on non-positive dimensions.
  Image(int height, int width, double fill = 0.0);
  // Values are clamped into [0,1]; NaN is rejected.
  Image(int height, int width, std::vector<double> data);

  // Projects an arbitrary 3-channel grid into [0,1].
  static Image clamped(const PixelGrid& grid);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int pixels() const noexcept { return height_ * width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool same_shape(const Image& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  double at(int y, int x, int c) const { return data_[index(y, x, c)]; }
  void set(int y, int x, int c, double v);

  std::span<const double> values() const noexcept { return data_; }
  PixelGrid to_grid() const;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

// 8-bit RGB PNG or binary PPM (P6), chosen by extension. Each byte b maps to b/255.
Image load_image(const std::filesystem::path& path);
// Quantizes with round-half-up of v*255 clamped to [0,255].
void save_image(const Image& img, const std::filesystem::path& path);

std::uint8_t quantize(double v) noexcept;

// Bilinear resampling with half-pixel-centered coordinates.
Image resize_bilinear(const Image& img, int new_height, int new_width);

// Bilinear sample of one channel at a continuous pixel-index position; the
// caller guarantees 0 <= x <= width-1 and 0 <= y <= height-1.
double sample_bilinear(std::span<const double> data, int height, int width, int channels, int c,
                       double y, double x) noexcept;

}  // namespace pvst
