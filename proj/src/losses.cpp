#include "pvst/losses.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "pvst/error.hpp"
#include "pvst/simd/kernels.hpp"

namespace pvst {

void validate(const LossWeights& w) {
  auto check = [](double v, const std::string& what) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorKind::kConfig, "weight must be finite and non-negative", what);
    }
  };
  for (const auto& [layer, a] : w.content) {
    layer_index(layer);
    check(a, "alpha:" + layer);
  }
  for (const auto& [layer, b] : w.style) {
    layer_index(layer);
    check(b, "beta:" + layer);
  }
  check(w.tau, "tau");
  check(w.gamma, "gamma");
  check(w.lambda, "lambda");
  for (std::size_t i = 0; i < w.long_term.size(); ++i) {
    if (w.long_term[i] < 1 || (i > 0 && w.long_term[i] <= w.long_term[i - 1])) {
      throw Error(ErrorKind::kConfig, "J must be ascending, distinct and >= 1", "long_term");
    }
  }
}

GramMatrix masked_gram(const FeatureMap& f, std::span<const double> mask) {
  if (mask.size() != f.plane()) {
    throw Error(ErrorKind::kShapeMismatch, "mask size does not match feature map");
  }
  const auto& ops = simd::active();
  const std::size_t plane = f.plane();
  std::vector<double> masked(f.data.size());
  for (int c = 0; c < f.channels; ++c) ops.mul(f.channel(c), mask.data(), masked.data() + c * plane, plane);
  GramMatrix g{f.channels, std::vector<double>(static_cast<std::size_t>(f.channels) * f.channels)};
  for (int i = 0; i < f.channels; ++i) {
    for (int j = i; j < f.channels; ++j) {
      const double v = ops.dot(masked.data() + i * plane, masked.data() + j * plane, plane);
      g.data[static_cast<std::size_t>(i) * f.channels + j] = v;
      g.data[static_cast<std::size_t>(j) * f.channels + i] = v;
    }
  }
  return g;
}

FeatureLoss content_loss(const ActivationSet& output, const ActivationSet& content,
                         const std::map<std::string, double>& alpha) {
  FeatureLoss loss;
  for (const auto& [layer, a] : alpha) {
    const FeatureMap& fo = output.at(layer);
    const FeatureMap& ff = content.at(layer);
    if (!fo.same_shape(ff)) throw Error(ErrorKind::kShapeMismatch, "content activations", layer);
    const double size = static_cast<double>(fo.data.size());
    FeatureMap grad(fo.channels, fo.height, fo.width);
    double sum = 0.0;
    for (std::size_t k = 0; k < fo.data.size(); ++k) {
      const double d = fo.data[k] - ff.data[k];
      sum += d * d;
      grad.data[k] = a * d / size;
    }
    loss.value += a * sum / (2.0 * size);
    loss.grads.emplace(layer, std::move(grad));
  }
  return loss;
}

StyleTargets style_targets(const ActivationSet& style, const std::map<std::string, MaskStack>& masks,
                           const std::vector<bool>& usable) {
  StyleTargets t;
  bool first = true;
  for (const auto& layer : style.layers()) {
    auto it = masks.find(layer);
    if (it == masks.end()) throw Error(ErrorKind::kShapeMismatch, "missing style mask", layer);
    const MaskStack& m = it->second;
    const FeatureMap& f = style.at(layer);
    if (m.height != f.height || m.width != f.width) {
      throw Error(ErrorKind::kShapeMismatch, "style mask resolution", layer);
    }
    if (first) {
      t.vocab = m.vocab;
      first = false;
    } else if (m.vocab.ids != t.vocab.ids) {
      throw Error(ErrorKind::kShapeMismatch, "style masks disagree on vocabulary", layer);
    }
    if (!usable.empty() && usable.size() != m.vocab.size()) {
      throw Error(ErrorKind::kShapeMismatch, "usable flags do not match vocabulary", layer);
    }
    for (int c = 0; c < m.channels(); ++c) {
      if (!usable.empty() && !usable[c]) continue;
      if (!(m.mass(c) > 0.0)) continue;
      t.grams.emplace(std::make_pair(layer, c),
                      masked_gram(f, std::span<const double>(m.channel(c), m.plane())));
    }
  }
  return t;
}

FeatureLoss segmented_style_loss(const ActivationSet& output,
                                 const std::map<std::string, MaskStack>& masks,
                                 const StyleTargets& targets,
                                 const std::map<std::string, double>& beta, double tau,
                                 StyleNorm norm) {
  const auto& ops = simd::active();
  FeatureLoss loss;
  for (const auto& [layer, b] : beta) {
    const FeatureMap& f = output.at(layer);
    auto mit = masks.find(layer);
    if (mit == masks.end()) throw Error(ErrorKind::kShapeMismatch, "missing output mask", layer);
    const MaskStack& m = mit->second;
    if (m.height != f.height || m.width != f.width) {
      throw Error(ErrorKind::kShapeMismatch, "output mask resolution", layer);
    }
    if (m.vocab.ids != targets.vocab.ids) {
      throw Error(ErrorKind::kShapeMismatch, "output masks and style targets disagree on channels",
                  layer);
    }
    const std::size_t plane = f.plane();
    const int cl = f.channels;
    FeatureMap grad(cl, f.height, f.width);
    std::vector<double> masked(f.data.size());
    std::vector<double> gmasked(f.data.size());
    for (int c = 0; c < m.channels(); ++c) {
      auto tit = targets.grams.find({layer, c});
      if (tit == targets.grams.end()) continue;
      const double mass = m.mass(c);
      if (!(mass > 0.0)) continue;
      const double n = norm == StyleNorm::kMaskMass ? cl * mass : static_cast<double>(cl);
      const double* mk = m.channel(c);
      for (int i = 0; i < cl; ++i) ops.mul(f.channel(i), mk, masked.data() + i * plane, plane);
      const GramMatrix& target = tit->second;
      std::vector<double> delta(static_cast<std::size_t>(cl) * cl);
      double frob = 0.0;
      for (int i = 0; i < cl; ++i) {
        for (int j = i; j < cl; ++j) {
          const double g = ops.dot(masked.data() + i * plane, masked.data() + j * plane, plane);
          const double d = g - target.at(i, j);
          delta[static_cast<std::size_t>(i) * cl + j] = d;
          delta[static_cast<std::size_t>(j) * cl + i] = d;
          frob += (i == j ? 1.0 : 2.0) * d * d;
        }
      }
      const double scale = tau * b / (2.0 * n * n);
      loss.value += scale * frob;
      // d/dFt of scale*||Ft Ft^T - T||^2 is 4*scale*(dG Ft); unmask by the same mask.
      std::fill(gmasked.begin(), gmasked.end(), 0.0);
      for (int i = 0; i < cl; ++i) {
        double* gi = gmasked.data() + i * plane;
        for (int j = 0; j < cl; ++j) {
          const double d = delta[static_cast<std::size_t>(i) * cl + j];
          if (d != 0.0) ops.axpy(4.0 * scale * d, masked.data() + j * plane, gi, plane);
        }
      }
      for (int i = 0; i < cl; ++i) {
        const double* gi = gmasked.data() + i * plane;
        double* dst = grad.channel(i);
        for (std::size_t p = 0; p < plane; ++p) dst[p] += gi[p] * mk[p];
      }
    }
    loss.grads.emplace(layer, std::move(grad));
  }
  return loss;
}

PixelLoss temporal_loss(const Image& x, const Image& warped, const PixelWeights& c) {
  if (!x.same_shape(warped) || c.height != x.height() || c.width != x.width()) {
    throw Error(ErrorKind::kShapeMismatch, "temporal loss operands differ in size");
  }
  const std::size_t n = x.size();
  const double d = static_cast<double>(n);
  auto xv = x.values();
  auto wv = warped.values();
  std::vector<double> weight(n);
  for (std::size_t p = 0; p < c.w.size(); ++p) {
    weight[3 * p] = weight[3 * p + 1] = weight[3 * p + 2] = c.w[p];
  }
  PixelLoss out{simd::active().weighted_sq_diff(xv.data(), wv.data(), weight.data(), n) / d,
                PixelGrid(x.height(), x.width(), 3)};
  auto g = out.grad.values();
  for (std::size_t k = 0; k < n; ++k) g[k] = 2.0 / d * weight[k] * (xv[k] - wv[k]);
  return out;
}

std::vector<PixelWeights> long_term_weights(const std::vector<PixelWeights>& cs) {
  std::vector<PixelWeights> out;
  out.reserve(cs.size());
  for (std::size_t j = 0; j < cs.size(); ++j) {
    if (!cs[j].same_shape(cs.front())) {
      throw Error(ErrorKind::kShapeMismatch, "temporal weight maps differ in size");
    }
    PixelWeights w = cs[j];
    for (std::size_t p = 0; p < w.w.size(); ++p) {
      double claimed = 0.0;
      for (std::size_t k = 0; k < j; ++k) claimed += cs[k].w[p];
      w.w[p] = std::max(cs[j].w[p] - claimed, 0.0);
    }
    out.push_back(std::move(w));
  }
  return out;
}

TotalLoss total_loss(const Image& output, const LossContext& ctx, const LossWeights& w) {
  TotalLoss result;
  result.grad = PixelGrid(output.height(), output.width(), 3);

  std::map<std::string, double> alpha;
  std::map<std::string, double> beta;
  for (const auto& [l, a] : w.content) {
    if (a != 0.0) alpha.emplace(l, a);
  }
  if (w.tau != 0.0) {
    for (const auto& [l, b] : w.style) {
      if (b != 0.0) beta.emplace(l, b);
    }
  }

  if (!alpha.empty() || !beta.empty()) {
    if (!ctx.net) throw Error(ErrorKind::kInvalidArgument, "loss context lacks network weights");
    std::set<std::string> wanted;
    for (const auto& [l, a] : alpha) wanted.insert(l);
    for (const auto& [l, b] : beta) wanted.insert(l);
    const ActivationSet acts = forward(*ctx.net, output, wanted);
    LayerGrads upstream;
    if (!alpha.empty()) {
      if (!ctx.content) throw Error(ErrorKind::kInvalidArgument, "loss context lacks content features");
      FeatureLoss c = content_loss(acts, *ctx.content, alpha);
      result.breakdown.content = c.value;
      upstream = std::move(c.grads);
    }
    if (!beta.empty()) {
      if (!ctx.style || !ctx.masks) {
        throw Error(ErrorKind::kInvalidArgument, "loss context lacks style targets or masks");
      }
      FeatureLoss s = segmented_style_loss(acts, *ctx.masks, *ctx.style, beta, w.tau, w.style_norm);
      result.breakdown.style = s.value;
      for (auto& [layer, g] : s.grads) {
        auto [it, inserted] = upstream.try_emplace(layer, std::move(g));
        if (!inserted) simd::axpy(1.0, g.data.data(), it->second.data.data(), g.data.size());
      }
    }
    result.grad += backward(*ctx.net, acts, upstream);
  }

  if (w.lambda != 0.0) {
    if (!ctx.laplacian) throw Error(ErrorKind::kInvalidArgument, "loss context lacks a Laplacian");
    PhotorealismResult p = photorealism_loss(*ctx.laplacian, output);
    result.breakdown.photorealism = w.lambda * p.value;
    p.grad *= w.lambda;
    result.grad += p.grad;
  }

  if (w.gamma != 0.0) {
    for (const TemporalTerm& term : ctx.temporal) {
      PixelLoss t = temporal_loss(output, term.warped, term.weights);
      result.breakdown.temporal += w.gamma * t.value;
      t.grad *= w.gamma;
      result.grad += t.grad;
      result.breakdown.temporal_gaps.push_back(term.gap);
    }
    result.breakdown.temporal_terms = static_cast<int>(ctx.temporal.size());
  }

  result.breakdown.total = result.breakdown.content + result.breakdown.style +
                           result.breakdown.photorealism + result.breakdown.temporal;
  result.value = result.breakdown.total;
  return result;
}

}  // namespace pvst
