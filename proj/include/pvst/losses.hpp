#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pvst/flow.hpp"
#include "pvst/image.hpp"
#include "pvst/loss_breakdown.hpp"
#include "pvst/matting.hpp"
#include "pvst/network.hpp"
#include "pvst/segmentation.hpp"

namespace pvst {

// C x C, row-major.
struct GramMatrix {
  int size = 0;
  std::vector<double> data;

  double at(int i, int j) const { return data[static_cast<std::size_t>(i) * size + j]; }
};

using LayerGrads = std::map<std::string, FeatureMap>;

struct FeatureLoss {
  double value = 0.0;
  LayerGrads grads;
};

struct PixelLoss {
  double value = 0.0;
  PixelGrid grad;
};

// How N_{l,c} in the segmented style loss is formed.
enum class StyleNorm {
  kMaskMass,  // N = C_l * (mask mass of channel c at layer l)
  kChannels,  // N = C_l
};

struct LossWeights {
  std::map<std::string, double> content{{"relu2_2", 1.0}};  // alpha_l
  std::map<std::string, double> style{{"relu1_1", 1.0}, {"relu2_1", 1.0}, {"relu3_1", 1.0}};  // beta_l
  double tau = 10.0;
  double gamma = 200.0;
  double lambda = 100.0;
  std::vector<int> long_term{1, 2, 4};  // J
  StyleNorm style_norm = StyleNorm::kMaskMass;
};

// Throws on negative weights or a malformed J.
void validate(const LossWeights& w);

// G = Ft Ft^T where Ft is `features` with every spatial position scaled by `mask`.
GramMatrix masked_gram(const FeatureMap& features, std::span<const double> mask);

// sum_l alpha_l / (2 C_l H_l W_l) * ||F_l[O] - F_l[f]||^2
FeatureLoss content_loss(const ActivationSet& output, const ActivationSet& content,
                         const std::map<std::string, double>& alpha);

struct StyleTargets {
  Vocabulary vocab;
  std::map<std::pair<std::string, int>, GramMatrix> grams;  // (layer, channel)
};

// Masks must already be at each layer's resolution. Channels with zero style
// mass, or flagged unusable, are left out.
StyleTargets style_targets(const ActivationSet& style, const std::map<std::string, MaskStack>& masks,
                           const std::vector<bool>& usable = {});

// tau * sum_l beta_l * sum_c ||G_{l,c}[O] - G_{l,c}[S]||_F^2 / (2 N_{l,c}^2)
FeatureLoss segmented_style_loss(const ActivationSet& output,
                                 const std::map<std::string, MaskStack>& masks,
                                 const StyleTargets& targets,
                                 const std::map<std::string, double>& beta, double tau,
                                 StyleNorm norm = StyleNorm::kMaskMass);

// (1/D) sum_k c_k ||x_k - warped_k||^2 with D = 3 H W.
PixelLoss temporal_loss(const Image& x, const Image& warped, const PixelWeights& c);

// c_long^{(i-j,i)} = max(c^{(i-j,i)} - sum_{k in J, k < j} c^{(i-k,i)}, 0), inputs
// ordered by ascending j.
std::vector<PixelWeights> long_term_weights(const std::vector<PixelWeights>& cs);

struct TemporalTerm {
  int gap = 1;          // j
  Image warped;         // previous stylized frame warped onto this frame
  PixelWeights weights; // c or c_long
};

// Everything the total loss needs besides the output image. Pointers are
// non-owning and must outlive the evaluation.
struct LossContext {
  const NetworkWeights* net = nullptr;
  const ActivationSet* content = nullptr;
  const StyleTargets* style = nullptr;
  const std::map<std::string, MaskStack>* masks = nullptr;  // output-side masks per style layer
  const SparseSymmetric* laplacian = nullptr;
  std::vector<TemporalTerm> temporal;
};

struct TotalLoss {
  double value = 0.0;
  PixelGrid grad;
  LossBreakdown breakdown;
};

// content + style + lambda * photorealism + gamma * sum_j temporal_j, with the
// pixel gradient of the whole.
TotalLoss total_loss(const Image& output, const LossContext& ctx, const LossWeights& w);

}  // namespace pvst
