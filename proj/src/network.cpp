#include "pvst/network.hpp"

#include <algorithm>
#include <cmath>

#include "pvst/error.hpp"
#include "pvst/rng.hpp"
#include "pvst/simd/kernels.hpp"

namespace pvst {

int layer_index(std::string_view name) {
  for (std::size_t i = 0; i < kLayerNames.size(); ++i) {
    if (kLayerNames[i] == name) return static_cast<int>(i);
  }
  throw Error(ErrorKind::kUnknownLayer, "not a layer of the extractor", std::string(name));
}

std::pair<int, int> layer_extent(std::string_view layer, int height, int width) {
  const int idx = layer_index(layer);
  const int pools = idx >= 4 ? 2 : (idx >= 2 ? 1 : 0);
  for (int i = 0; i < pools; ++i) {
    height /= 2;
    width /= 2;
  }
  return {height, width};
}

void validate(const NetworkWeights& w) {
  if (w.layers.size() != kConvNames.size()) {
    throw Error(ErrorKind::kShapeChain,
                "expected " + std::to_string(kConvNames.size()) + " conv layers, got " +
                    std::to_string(w.layers.size()));
  }
  std::uint32_t expected_in = 3;
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    const ConvLayer& l = w.layers[i];
    if (l.name != kConvNames[i]) {
      throw Error(ErrorKind::kShapeChain, "expected layer " + std::string(kConvNames[i]), l.name);
    }
    if (l.in_channels != expected_in) {
      throw Error(ErrorKind::kShapeChain,
                  "input channels " + std::to_string(l.in_channels) + " do not match previous " +
                      std::to_string(expected_in),
                  l.name);
    }
    if (l.out_channels == 0 || l.kernel_h % 2 == 0 || l.kernel_w % 2 == 0) {
      throw Error(ErrorKind::kShapeChain, "kernel sizes must be odd and outC positive", l.name);
    }
    const std::size_t n = static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel_h *
                          l.kernel_w;
    if (l.kernel.size() != n || l.bias.size() != l.out_channels) {
      throw Error(ErrorKind::kShapeMismatch, "tensor length does not match dims", l.name);
    }
    auto finite = [](float v) { return std::isfinite(v); };
    if (!std::all_of(l.kernel.begin(), l.kernel.end(), finite) ||
        !std::all_of(l.bias.begin(), l.bias.end(), finite)) {
      throw Error(ErrorKind::kNonFinite, "weights must be finite", l.name);
    }
    expected_in = l.out_channels;
  }
}

NetworkWeights seeded_weights(std::uint64_t seed) {
  constexpr std::uint32_t kPlan[] = {3, 16, 16, 32, 32, 64};
  Rng rng(seed);
  NetworkWeights w;
  for (std::size_t i = 0; i < kConvNames.size(); ++i) {
    ConvLayer l;
    l.name = std::string(kConvNames[i]);
    l.in_channels = kPlan[i];
    l.out_channels = kPlan[i + 1];
    const double stddev = std::sqrt(2.0 / (l.in_channels * l.kernel_h * l.kernel_w));
    l.kernel.resize(static_cast<std::size_t>(l.out_channels) * l.in_channels * 9);
    for (float& v : l.kernel) v = static_cast<float>(stddev * rng.normal());
    l.bias.assign(l.out_channels, 0.0f);
    w.layers.push_back(std::move(l));
  }
  return w;
}

namespace {

int reflect(int i, int n) noexcept {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

FeatureMap to_planar(const Image& img) {
  FeatureMap out(3, img.height(), img.width());
  auto src = img.values();
  const std::size_t plane = out.plane();
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < 3; ++c) out.data[c * plane + p] = src[p * 3 + c];
  }
  return out;
}

// Copies `in` into a buffer with `ph`/`pw` rows/columns of reflection padding.
FeatureMap reflect_pad(const FeatureMap& in, int ph, int pw) {
  const int hp = in.height + 2 * ph;
  const int wp = in.width + 2 * pw;
  FeatureMap out(in.channels, hp, wp);
  for (int c = 0; c < in.channels; ++c) {
    const double* src = in.channel(c);
    double* dst = out.channel(c);
    for (int y = 0; y < hp; ++y) {
      const int sy = reflect(y - ph, in.height);
      for (int x = 0; x < wp; ++x) {
        dst[y * wp + x] = src[sy * in.width + reflect(x - pw, in.width)];
      }
    }
  }
  return out;
}

std::vector<double> widen(const std::vector<float>& v) { return {v.begin(), v.end()}; }

void check_pad(const ConvLayer& l, int height, int width) {
  if (height <= static_cast<int>(l.kernel_h / 2) || width <= static_cast<int>(l.kernel_w / 2) ||
      height < 1 || width < 1) {
    throw Error(ErrorKind::kInvalidArgument,
                "image too small: " + std::to_string(height) + "x" + std::to_string(width) +
                    " input to " + l.name);
  }
}

FeatureMap conv_forward(const ConvLayer& l, const FeatureMap& in) {
  check_pad(l, in.height, in.width);
  const int ph = static_cast<int>(l.kernel_h / 2);
  const int pw = static_cast<int>(l.kernel_w / 2);
  const FeatureMap padded = reflect_pad(in, ph, pw);
  const std::vector<double> k = widen(l.kernel);
  const int kh = static_cast<int>(l.kernel_h);
  const int kw = static_cast<int>(l.kernel_w);
  const auto& ops = simd::active();

  FeatureMap out(static_cast<int>(l.out_channels), in.height, in.width);
  for (int oc = 0; oc < out.channels; ++oc) {
    double* dst = out.channel(oc);
    std::fill(dst, dst + out.plane(), static_cast<double>(l.bias[oc]));
    for (int ic = 0; ic < in.channels; ++ic) {
      const double* src = padded.channel(ic);
      const double* kern = k.data() + (static_cast<std::size_t>(oc) * in.channels + ic) * kh * kw;
      for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
          const double wv = kern[ky * kw + kx];
          if (wv == 0.0) continue;
          for (int y = 0; y < in.height; ++y) {
            ops.axpy(wv, src + (y + ky) * padded.width + kx, dst + y * in.width, in.width);
          }
        }
      }
    }
  }
  return out;
}

// Adjoint of conv_forward with respect to its input.
FeatureMap conv_backward(const ConvLayer& l, const FeatureMap& grad_out) {
  const int ph = static_cast<int>(l.kernel_h / 2);
  const int pw = static_cast<int>(l.kernel_w / 2);
  const int kh = static_cast<int>(l.kernel_h);
  const int kw = static_cast<int>(l.kernel_w);
  const int h = grad_out.height;
  const int w = grad_out.width;
  const std::vector<double> k = widen(l.kernel);
  const auto& ops = simd::active();
  const int in_c = static_cast<int>(l.in_channels);

  FeatureMap gpad(in_c, h + 2 * ph, w + 2 * pw);
  for (int oc = 0; oc < grad_out.channels; ++oc) {
    const double* g = grad_out.channel(oc);
    for (int ic = 0; ic < in_c; ++ic) {
      double* dst = gpad.channel(ic);
      const double* kern = k.data() + (static_cast<std::size_t>(oc) * in_c + ic) * kh * kw;
      for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
          const double wv = kern[ky * kw + kx];
          if (wv == 0.0) continue;
          for (int y = 0; y < h; ++y) {
            ops.axpy(wv, g + y * w, dst + (y + ky) * gpad.width + kx, w);
          }
        }
      }
    }
  }

  FeatureMap gin(in_c, h, w);
  for (int c = 0; c < in_c; ++c) {
    const double* src = gpad.channel(c);
    double* dst = gin.channel(c);
    for (int y = 0; y < gpad.height; ++y) {
      const int sy = reflect(y - ph, h);
      for (int x = 0; x < gpad.width; ++x) {
        dst[sy * w + reflect(x - pw, w)] += src[y * gpad.width + x];
      }
    }
  }
  return gin;
}

void relu_inplace(FeatureMap& m) {
  for (double& v : m.data) v = v > 0.0 ? v : 0.0;
}

void relu_backward_inplace(FeatureMap& grad, const FeatureMap& out) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    if (!(out.data[i] > 0.0)) grad.data[i] = 0.0;
  }
}

FeatureMap avgpool_forward(const FeatureMap& in) {
  if (in.height < 2 || in.width < 2) {
    throw Error(ErrorKind::kInvalidArgument, "image too small for pooling");
  }
  FeatureMap out(in.channels, in.height / 2, in.width / 2);
  for (int c = 0; c < in.channels; ++c) {
    const double* src = in.channel(c);
    double* dst = out.channel(c);
    for (int y = 0; y < out.height; ++y) {
      const double* r0 = src + (2 * y) * in.width;
      const double* r1 = r0 + in.width;
      for (int x = 0; x < out.width; ++x) {
        dst[y * out.width + x] = 0.25 * ((r0[2 * x] + r0[2 * x + 1]) + (r1[2 * x] + r1[2 * x + 1]));
      }
    }
  }
  return out;
}

FeatureMap avgpool_backward(const FeatureMap& grad_out, int in_height, int in_width) {
  FeatureMap gin(grad_out.channels, in_height, in_width);
  for (int c = 0; c < grad_out.channels; ++c) {
    const double* g = grad_out.channel(c);
    double* dst = gin.channel(c);
    for (int y = 0; y < grad_out.height; ++y) {
      for (int x = 0; x < grad_out.width; ++x) {
        const double v = 0.25 * g[y * grad_out.width + x];
        dst[(2 * y) * in_width + 2 * x] += v;
        dst[(2 * y) * in_width + 2 * x + 1] += v;
        dst[(2 * y + 1) * in_width + 2 * x] += v;
        dst[(2 * y + 1) * in_width + 2 * x + 1] += v;
      }
    }
  }
  return gin;
}

// Layers 1 and 3 (relu1_2, relu2_2) are followed by a pool.
constexpr bool pooled_after(int layer) noexcept { return layer == 1 || layer == 3; }

}  // namespace

const FeatureMap& ActivationSet::at(std::string_view layer) const {
  const int idx = layer_index(layer);
  if (!wanted_.contains(std::string(layer)) || idx >= static_cast<int>(relu_.size())) {
    throw Error(ErrorKind::kUnknownLayer, "layer was not requested in forward", std::string(layer));
  }
  return relu_[idx];
}

bool ActivationSet::contains(std::string_view layer) const {
  return wanted_.contains(std::string(layer));
}

std::vector<std::string> ActivationSet::layers() const { return {wanted_.begin(), wanted_.end()}; }

ActivationSet forward(const NetworkWeights& w, const Image& img,
                      const std::set<std::string>& wanted) {
  validate(w);
  int deepest = -1;
  for (const auto& name : wanted) deepest = std::max(deepest, layer_index(name));

  ActivationSet acts;
  acts.input_height_ = img.height();
  acts.input_width_ = img.width();
  acts.wanted_ = wanted;
  FeatureMap x = to_planar(img);
  for (int i = 0; i <= deepest; ++i) {
    FeatureMap y = conv_forward(w.layers[i], x);
    relu_inplace(y);
    acts.relu_.push_back(y);
    if (pooled_after(i) && i < deepest) {
      x = avgpool_forward(y);
    } else {
      x = std::move(y);
    }
  }
  return acts;
}

PixelGrid backward(const NetworkWeights& w, const ActivationSet& acts,
                   const std::map<std::string, FeatureMap>& upstream) {
  int deepest = -1;
  for (const auto& [name, grad] : upstream) {
    const int idx = layer_index(name);
    if (idx >= static_cast<int>(acts.relu_.size())) {
      throw Error(ErrorKind::kUnknownLayer, "no retained activation for upstream gradient", name);
    }
    if (!grad.same_shape(acts.relu_[idx])) {
      throw Error(ErrorKind::kShapeMismatch, "upstream gradient shape", name);
    }
    deepest = std::max(deepest, idx);
  }

  PixelGrid out(acts.input_height_, acts.input_width_, 3);
  if (deepest < 0) return out;

  FeatureMap g;  // gradient w.r.t. the current layer's ReLU output
  for (int i = deepest; i >= 0; --i) {
    const FeatureMap& act = acts.relu_[i];
    if (g.data.empty()) g = FeatureMap(act.channels, act.height, act.width);
    if (auto it = upstream.find(std::string(kLayerNames[i])); it != upstream.end()) {
      simd::axpy(1.0, it->second.data.data(), g.data.data(), g.data.size());
    }
    relu_backward_inplace(g, act);
    FeatureMap gin = conv_backward(w.layers[i], g);
    if (i > 0 && pooled_after(i - 1)) {
      const FeatureMap& prev = acts.relu_[i - 1];
      g = avgpool_backward(gin, prev.height, prev.width);
    } else {
      g = std::move(gin);
    }
  }

  auto dst = out.values();
  const std::size_t plane = g.plane();
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < 3; ++c) dst[p * 3 + c] = g.data[c * plane + p];
  }
  return out;
}

}  // namespace pvst
