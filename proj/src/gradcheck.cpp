#include "pvst/gradcheck.hpp"

#include <set>

#include "pvst/rng.hpp"

namespace pvst {

namespace {

Image random_image(int size, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(size) * size * 3);
  for (double& x : v) x = rng.uniform(0.1, 0.9);
  return Image(size, size, std::move(v));
}

// Left/right split with a random jagged boundary: labels 0 and 1 both present.
LabelMap random_split(int size, Rng& rng) {
  LabelMap m{size, size, std::vector<int>(static_cast<std::size_t>(size) * size)};
  for (int y = 0; y < size; ++y) {
    const int cut = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(size - 3)));
    for (int x = 0; x < size; ++x) m.labels[static_cast<std::size_t>(y) * size + x] = x < cut ? 0 : 1;
  }
  return m;
}

std::map<std::string, MaskStack> per_layer(const MaskStack& full, const LossWeights& w) {
  std::map<std::string, MaskStack> out;
  for (const auto& [l, b] : w.style) {
    const auto [h, wd] = layer_extent(l, full.height, full.width);
    out.emplace(l, downsample_masks(full, h, wd));
  }
  return out;
}

}  // namespace

GradcheckFixture::GradcheckFixture(int size, std::uint64_t seed) : net(seeded_weights(seed)) {
  Rng rng(seed * 7919 + 1);
  content = random_image(size, rng);
  style = random_image(size, rng);
  output = random_image(size, rng);
  weights = LossWeights{};

  const Vocabulary vocab{{0, 1}, {"a", "b"}};
  const MaskStack style_masks = masks_from_labels(random_split(size, rng), vocab);
  const MaskStack out_masks = masks_from_labels(random_split(size, rng), vocab);
  std::set<std::string> style_layers;
  for (const auto& [l, b] : weights.style) style_layers.insert(l);
  std::set<std::string> content_layers;
  for (const auto& [l, a] : weights.content) content_layers.insert(l);

  targets = style_targets(forward(net, style, style_layers), per_layer(style_masks, weights));
  masks = per_layer(out_masks, weights);
  content_acts = forward(net, content, content_layers);
  laplacian = build_matting_laplacian(content, MattingParams{});

  context.net = &net;
  context.content = &content_acts;
  context.style = &targets;
  context.masks = &masks;
  context.laplacian = &laplacian;
  for (int gap : {1, 2}) {
    TemporalTerm t{gap, random_image(size, rng), PixelWeights(size, size, 0.0)};
    for (double& c : t.weights.w) c = rng.uniform() < 0.7 ? 1.0 : 0.0;
    context.temporal.push_back(std::move(t));
  }
}

Objective GradcheckFixture::objective(const std::string& term) const {
  LossWeights w = weights;
  if (term != "total") {
    if (term != "content") w.content.clear();
    if (term != "style") w.tau = 0.0;
    if (term != "photorealism") w.lambda = 0.0;
    if (term != "temporal") w.gamma = 0.0;
  }
  return [this, w](const Image& x) {
    TotalLoss t = total_loss(x, context, w);
    return Evaluation{t.value, std::move(t.grad), std::move(t.breakdown)};
  };
}

std::vector<GradcheckReport> run_gradcheck(int size, std::uint64_t seed) {
  const GradcheckFixture fx(size, seed);
  std::vector<GradcheckReport> out;
  for (const char* term : {"content", "style", "photorealism", "temporal", "total"}) {
    out.push_back({term, finite_diff_check(fx.objective(term), fx.output, kGradcheckStep)});
  }
  return out;
}

}  // namespace pvst
