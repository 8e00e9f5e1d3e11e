#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "pvst/image.hpp"

namespace pvst {

// Per-pixel displacement (u, v) in pixels. A backward flow for frame i maps a
// position p in frame i to p + (u, v) in the earlier frame.
struct FlowField {
  int height = 0;
  int width = 0;
  std::vector<float> uv;  // row-major interleaved (u, v)

  FlowField() = default;
  FlowField(int h, int w) : height(h), width(w), uv(static_cast<std::size_t>(h) * w * 2, 0.0f) {}

  float u(int y, int x) const { return uv[(static_cast<std::size_t>(y) * width + x) * 2]; }
  float v(int y, int x) const { return uv[(static_cast<std::size_t>(y) * width + x) * 2 + 1]; }
  void set(int y, int x, float du, float dv) {
    uv[(static_cast<std::size_t>(y) * width + x) * 2] = du;
    uv[(static_cast<std::size_t>(y) * width + x) * 2 + 1] = dv;
  }

  friend bool operator==(const FlowField&, const FlowField&) = default;
};

// Per-pixel weights in [0,1].
struct PixelWeights {
  int height = 0;
  int width = 0;
  std::vector<double> w;

  PixelWeights() = default;
  PixelWeights(int h, int wd, double fill)
      : height(h), width(wd), w(static_cast<std::size_t>(h) * wd, fill) {}

  double at(int y, int x) const { return w[static_cast<std::size_t>(y) * width + x]; }
  double& at(int y, int x) { return w[static_cast<std::size_t>(y) * width + x]; }
  bool same_shape(const PixelWeights& o) const noexcept {
    return height == o.height && width == o.width;
  }

  friend bool operator==(const PixelWeights&, const PixelWeights&) = default;
};

// Middlebury .flo: f32 202021.25, i32 width, i32 height, row-major f32 (u,v); little-endian.
FlowField read_flo(const std::filesystem::path& path);
void write_flo(const FlowField& f, const std::filesystem::path& path);

FlowField synth_translation_flow(int height, int width, double dx, double dy);

struct WarpResult {
  Image warped;
  PixelWeights valid;
};

// warped(p) = bilinear sample of img at p + f(p). Samples outside the image
// give 0 and valid = 0.
WarpResult backward_warp(const Image& img, const FlowField& f);
// Same for an arbitrary channel count; returns the validity map through `valid`.
PixelGrid backward_warp(const PixelGrid& grid, const FlowField& f, PixelWeights* valid);

struct ConsistencyParams {
  double occlusion_ratio = 0.01;
  double occlusion_bias = 0.5;
  double boundary_ratio = 0.01;
  double boundary_bias = 0.002;
};

// Binary reliability of the backward flow: 0 where the round trip through
// the forward flow is inconsistent (disocclusion), where the backward flow has
// a strong gradient (motion boundary), or where the sample leaves the image.
// `forward` lives on the earlier frame's grid, `backward` on the current one.
PixelWeights consistency_weights(const FlowField& forward, const FlowField& backward,
                                 const ConsistencyParams& params = {});

}  // namespace pvst
