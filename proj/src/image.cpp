#include "pvst/image.hpp"

#include <algorithm>
#include <cmath>

#include "pvst/error.hpp"

namespace pvst {

PixelGrid::PixelGrid(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 0) {
    throw Error(ErrorKind::kInvalidArgument, "negative grid dimension");
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

PixelGrid::PixelGrid(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw Error(ErrorKind::kShapeMismatch, "grid data length does not match dimensions");
  }
}

PixelGrid& PixelGrid::operator+=(const PixelGrid& other) {
  if (!same_shape(other)) throw Error(ErrorKind::kShapeMismatch, "grid sum");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

PixelGrid& PixelGrid::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

void PixelGrid::check_finite(const char* what) const {
  for (double v : data_) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kNonFinite, what);
  }
}

namespace {

void require_positive(int height, int width) {
  if (height < 1 || width < 1) {
    throw Error(ErrorKind::kInvalidArgument, "image dimensions must be at least 1x1");
  }
}

double clamp_unit(double v) {
  if (std::isnan(v)) throw Error(ErrorKind::kNonFinite, "NaN pixel value");
  return std::clamp(v, 0.0, 1.0);
}

}  // namespace

Image::Image(int height, int width, double fill) : height_(height), width_(width) {
  require_positive(height, width);
  data_.assign(static_cast<std::size_t>(height) * width * kChannels, clamp_unit(fill));
}

Image::Image(int height, int width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
  require_positive(height, width);
  if (data_.size() != static_cast<std::size_t>(height) * width * kChannels) {
    throw Error(ErrorKind::kShapeMismatch, "image data length does not match dimensions");
  }
  for (double& v : data_) v = clamp_unit(v);
}

Image Image::clamped(const PixelGrid& grid) {
  if (grid.channels() != kChannels) {
    throw Error(ErrorKind::kShapeMismatch, "image requires 3 channels");
  }
  auto src = grid.values();
  return Image(grid.height(), grid.width(), std::vector<double>(src.begin(), src.end()));
}

void Image::set(int y, int x, int c, double v) { data_[index(y, x, c)] = clamp_unit(v); }

PixelGrid Image::to_grid() const { return PixelGrid(height_, width_, kChannels, data_); }

std::uint8_t quantize(double v) noexcept {
  // round half up
  const double scaled = std::floor(v * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

double sample_bilinear(std::span<const double> data, int height, int width, int channels, int c,
                       double y, double x) noexcept {
  const int x0 = std::min(static_cast<int>(std::floor(x)), width - 1);
  const int y0 = std::min(static_cast<int>(std::floor(y)), height - 1);
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  auto px = [&](int yy, int xx) {
    return data[(static_cast<std::size_t>(yy) * width + xx) * channels + c];
  };
  const double top = px(y0, x0) + fx * (px(y0, x1) - px(y0, x0));
  const double bottom = px(y1, x0) + fx * (px(y1, x1) - px(y1, x0));
  return top + fy * (bottom - top);
}

Image resize_bilinear(const Image& img, int new_height, int new_width) {
  require_positive(new_height, new_width);
  if (new_height == img.height() && new_width == img.width()) return img;
  const double sy = static_cast<double>(img.height()) / new_height;
  const double sx = static_cast<double>(img.width()) / new_width;
  std::vector<double> out(static_cast<std::size_t>(new_height) * new_width * Image::kChannels);
  auto src = img.values();
  for (int y = 0; y < new_height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    for (int x = 0; x < new_width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      for (int c = 0; c < Image::kChannels; ++c) {
        out[(static_cast<std::size_t>(y) * new_width + x) * Image::kChannels + c] =
            sample_bilinear(src, img.height(), img.width(), Image::kChannels, c, fy, fx);
      }
    }
  }
  return Image(new_height, new_width, std::move(out));
}

}  // namespace pvst
