#include "pvst/flow.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include "pvst/error.hpp"

namespace pvst {

namespace {

constexpr float kFloMagic = 202021.25f;
constexpr int kMaxFloSide = 1 << 20;

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<char>((v >> s) & 0xFF));
}

}  // namespace

FlowField read_flo(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kMissingFile, "cannot open", name);
  const std::string bytes(std::istreambuf_iterator<char>(in), {});
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 4 || std::bit_cast<float>(read_u32(p)) != kFloMagic) {
    throw Error(ErrorKind::kBadMagic, "expected .flo tag 202021.25", name);
  }
  if (bytes.size() < 12) throw Error(ErrorKind::kTruncated, "header", name);
  const auto width = static_cast<std::int32_t>(read_u32(p + 4));
  const auto height = static_cast<std::int32_t>(read_u32(p + 8));
  if (width < 1 || height < 1 || width > kMaxFloSide || height > kMaxFloSide) {
    throw Error(ErrorKind::kMalformedHeader,
                "size overflow: " + std::to_string(width) + "x" + std::to_string(height), name);
  }
  const std::size_t count = static_cast<std::size_t>(width) * height * 2;
  if (bytes.size() - 12 < count * 4) throw Error(ErrorKind::kTruncated, "flow data", name);
  FlowField f(height, width);
  for (std::size_t i = 0; i < count; ++i) f.uv[i] = std::bit_cast<float>(read_u32(p + 12 + 4 * i));
  return f;
}

void write_flo(const FlowField& f, const std::filesystem::path& path) {
  std::string out;
  out.reserve(12 + f.uv.size() * 4);
  put_u32(out, std::bit_cast<std::uint32_t>(kFloMagic));
  put_u32(out, static_cast<std::uint32_t>(f.width));
  put_u32(out, static_cast<std::uint32_t>(f.height));
  for (float v : f.uv) put_u32(out, std::bit_cast<std::uint32_t>(v));
  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorKind::kIo, "cannot open for writing", path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error(ErrorKind::kIo, "write failed", path.string());
}

FlowField synth_translation_flow(int height, int width, double dx, double dy) {
  if (height < 1 || width < 1) throw Error(ErrorKind::kInvalidArgument, "flow size must be positive");
  FlowField f(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) f.set(y, x, static_cast<float>(dx), static_cast<float>(dy));
  }
  return f;
}

PixelGrid backward_warp(const PixelGrid& grid, const FlowField& f, PixelWeights* valid) {
  if (grid.height() != f.height || grid.width() != f.width) {
    throw Error(ErrorKind::kShapeMismatch, "flow and image sizes differ");
  }
  const int h = grid.height();
  const int w = grid.width();
  const int ch = grid.channels();
  PixelGrid out(h, w, ch);
  if (valid) *valid = PixelWeights(h, w, 0.0);
  auto src = grid.values();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double sx = x + static_cast<double>(f.u(y, x));
      const double sy = y + static_cast<double>(f.v(y, x));
      if (!(sx >= 0.0 && sx <= w - 1.0 && sy >= 0.0 && sy <= h - 1.0)) continue;
      for (int c = 0; c < ch; ++c) out.at(y, x, c) = sample_bilinear(src, h, w, ch, c, sy, sx);
      if (valid) valid->at(y, x) = 1.0;
    }
  }
  return out;
}

WarpResult backward_warp(const Image& img, const FlowField& f) {
  WarpResult r;
  r.warped = Image::clamped(backward_warp(img.to_grid(), f, &r.valid));
  return r;
}

namespace {

// Central difference along one axis; one-sided at the borders, 0 for size 1.
double central(const FlowField& f, int y, int x, int comp, bool along_x) {
  auto val = [&](int yy, int xx) { return comp == 0 ? f.u(yy, xx) : f.v(yy, xx); };
  const int n = along_x ? f.width : f.height;
  const int i = along_x ? x : y;
  if (n < 2) return 0.0;
  const int lo = std::max(i - 1, 0);
  const int hi = std::min(i + 1, n - 1);
  const double a = along_x ? val(y, lo) : val(lo, x);
  const double b = along_x ? val(y, hi) : val(hi, x);
  return (b - a) / (hi - lo);
}

}  // namespace

PixelWeights consistency_weights(const FlowField& forward, const FlowField& backward,
                                 const ConsistencyParams& params) {
  if (forward.height != backward.height || forward.width != backward.width) {
    throw Error(ErrorKind::kShapeMismatch, "forward and backward flow sizes differ");
  }
  const int h = backward.height;
  const int w = backward.width;
  PixelWeights out(h, w, 0.0);
  const std::span<const float> fw(forward.uv);
  std::vector<double> fwd(fw.begin(), fw.end());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double bu = backward.u(y, x);
      const double bv = backward.v(y, x);
      const double sx = x + bu;
      const double sy = y + bv;
      if (!(sx >= 0.0 && sx <= w - 1.0 && sy >= 0.0 && sy <= h - 1.0)) continue;
      const double tu = sample_bilinear(fwd, h, w, 2, 0, sy, sx);
      const double tv = sample_bilinear(fwd, h, w, 2, 1, sy, sx);
      const double su = tu + bu;
      const double sv = tv + bv;
      const double b2 = bu * bu + bv * bv;
      const double round_trip = su * su + sv * sv;
      if (round_trip > params.occlusion_ratio * ((tu * tu + tv * tv) + b2) + params.occlusion_bias) {
        continue;
      }
      const double ux = central(backward, y, x, 0, true);
      const double uy = central(backward, y, x, 0, false);
      const double vx = central(backward, y, x, 1, true);
      const double vy = central(backward, y, x, 1, false);
      const double grad2 = (ux * ux + uy * uy) + (vx * vx + vy * vy);
      if (grad2 > params.boundary_ratio * b2 + params.boundary_bias) continue;
      out.at(y, x) = 1.0;
    }
  }
  return out;
}

}  // namespace pvst
