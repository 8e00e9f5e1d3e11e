#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pvst/image.hpp"

namespace pvst {

// Planar C x H x W tensor; each channel plane is contiguous and row-major.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }
  double* channel(int c) noexcept { return data.data() + c * plane(); }
  const double* channel(int c) const noexcept { return data.data() + c * plane(); }
  bool same_shape(const FeatureMap& o) const noexcept {
    return channels == o.channels && height == o.height && width == o.width;
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

struct ConvLayer {
  std::string name;
  std::uint32_t out_channels = 0;
  std::uint32_t in_channels = 0;
  std::uint32_t kernel_h = 3;
  std::uint32_t kernel_w = 3;
  std::vector<float> kernel;  // outC x inC x kH x kW, row-major
  std::vector<float> bias;    // outC

  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

// Five convolutions of the fixed extractor:
//   conv1_1 relu conv1_2 relu avgpool | conv2_1 relu conv2_2 relu avgpool | conv3_1 relu
// Reflection padding, stride 1, 2x2/2 average pooling. Channel counts are free
// as long as they chain; kernel sizes must be odd.
struct NetworkWeights {
  std::string architecture = "pvst-small-v1";
  std::vector<ConvLayer> layers;

  friend bool operator==(const NetworkWeights&, const NetworkWeights&) = default;
};

inline constexpr std::array<std::string_view, 5> kConvNames = {"conv1_1", "conv1_2", "conv2_1",
                                                               "conv2_2", "conv3_1"};
inline constexpr std::array<std::string_view, 5> kLayerNames = {"relu1_1", "relu1_2", "relu2_1",
                                                                "relu2_2", "relu3_1"};

// Index into kLayerNames; throws ErrorKind::kUnknownLayer.
int layer_index(std::string_view name);

// Spatial size {height, width} of a layer's output for an input of the given size.
std::pair<int, int> layer_extent(std::string_view layer, int height, int width);

// Checks names, shape chain, kernel oddness, bias lengths and finiteness.
void validate(const NetworkWeights& w);

NetworkWeights load_weights(const std::filesystem::path& path);
void save_weights(const NetworkWeights& w, const std::filesystem::path& path);

// He-normal kernels (std sqrt(2 / (inC*kH*kW))) and zero biases, channel plan
// 3-16-16-32-32-64, drawn from Rng(seed) layer by layer in declaration order.
NetworkWeights seeded_weights(std::uint64_t seed);

class ActivationSet {
 public:
  const FeatureMap& at(std::string_view layer) const;
  bool contains(std::string_view layer) const;
  std::vector<std::string> layers() const;

  int input_height() const noexcept { return input_height_; }
  int input_width() const noexcept { return input_width_; }

 private:
  friend ActivationSet forward(const NetworkWeights&, const Image&, const std::set<std::string>&);
  friend PixelGrid backward(const NetworkWeights&, const ActivationSet&,
                            const std::map<std::string, FeatureMap>&);

  int input_height_ = 0;
  int input_width_ = 0;
  std::set<std::string> wanted_;
  // ReLU outputs for every layer up to the deepest wanted one; the ReLU mask
  // (output > 0) is all backward needs besides the weights.
  std::vector<FeatureMap> relu_;
};

ActivationSet forward(const NetworkWeights& w, const Image& img, const std::set<std::string>& wanted);

// Vector-Jacobian product: sum over named layers of J_layer^T * upstream, as a
// H x W x 3 pixel gradient.
PixelGrid backward(const NetworkWeights& w, const ActivationSet& acts,
                   const std::map<std::string, FeatureMap>& upstream);

}  // namespace pvst
