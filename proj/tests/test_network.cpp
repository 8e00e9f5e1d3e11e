#include <bit>
#include <cmath>
#include <fstream>

#include "doctest.h"
#include "oracles.hpp"
#include "pvst/error.hpp"
#include "pvst/network.hpp"
#include "tempdir.hpp"

using namespace pvst;
using pvst::testing::TempDir;

namespace {

const std::set<std::string> kAll(kLayerNames.begin(), kLayerNames.end());

double sum_relu3(const NetworkWeights& net, const Image& img) {
  const ActivationSet a = forward(net, img, {"relu3_1"});
  double s = 0.0;
  for (double v : a.at("relu3_1").data) s += v;
  return s;
}

}  // namespace

TEST_CASE("seeded weights are deterministic and seed-dependent") {
  CHECK(seeded_weights(42) == seeded_weights(42));
  CHECK_FALSE(seeded_weights(42) == seeded_weights(43));
  CHECK_NOTHROW(validate(seeded_weights(42)));
}

TEST_CASE("seeded weights follow the He standard deviation") {
  for (const ConvLayer& l : seeded_weights(42).layers) {
    double mean = 0.0;
    for (float k : l.kernel) mean += k;
    mean /= static_cast<double>(l.kernel.size());
    double var = 0.0;
    for (float k : l.kernel) var += (k - mean) * (k - mean);
    const double sd = std::sqrt(var / static_cast<double>(l.kernel.size() - 1));
    const double expected = std::sqrt(2.0 / (9.0 * l.in_channels));
    CAPTURE(l.name);
    CHECK(std::abs(sd - expected) < 0.2 * expected);
    for (float b : l.bias) CHECK(b == 0.0f);
  }
}

TEST_CASE("weights file round trip is bit exact") {
  TempDir dir;
  const NetworkWeights w = seeded_weights(7);
  save_weights(w, dir / "w.pvst");
  CHECK(load_weights(dir / "w.pvst") == w);
  save_weights(oracle::identity_network(), dir / "id.pvst");
  CHECK(load_weights(dir / "id.pvst") == oracle::identity_network());
}

TEST_CASE("weights file errors") {
  TempDir dir;
  save_weights(seeded_weights(7), dir / "w.pvst");
  std::string bytes;
  {
    std::ifstream f(dir / "w.pvst", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(f), {});
  }
  SUBCASE("bad magic") {
    std::string bad = bytes;
    bad.replace(0, 4, "XXXX");
    std::ofstream(dir / "bad.pvst", std::ios::binary) << bad;
    try {
      load_weights(dir / "bad.pvst");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kBadMagic);
    }
  }
  SUBCASE("truncated") {
    std::ofstream(dir / "short.pvst", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    try {
      load_weights(dir / "short.pvst");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kTruncated);
    }
  }
  SUBCASE("shape chain") {
    NetworkWeights w = seeded_weights(7);
    w.layers[1].in_channels = 8;
    w.layers[1].kernel.resize(static_cast<std::size_t>(w.layers[1].out_channels) * 8 * 9);
    CHECK_THROWS_AS(validate(w), Error);
    // Encode the inconsistent network by hand; save_weights refuses to.
    std::string out = "PVST";
    const auto u32 = [&](std::uint32_t v) {
      for (int s = 0; s < 32; s += 8) out.push_back(static_cast<char>((v >> s) & 0xFF));
    };
    u32(1);
    u32(static_cast<std::uint32_t>(w.layers.size()));
    for (const ConvLayer& l : w.layers) {
      out.push_back(static_cast<char>(l.name.size()));
      out.push_back('\0');
      out += l.name;
      for (std::uint32_t d : {l.out_channels, l.in_channels, l.kernel_h, l.kernel_w}) u32(d);
      for (float k : l.kernel) u32(std::bit_cast<std::uint32_t>(k));
      u32(static_cast<std::uint32_t>(l.bias.size()));
      for (float b : l.bias) u32(std::bit_cast<std::uint32_t>(b));
    }
    std::ofstream(dir / "chain.pvst", std::ios::binary) << out;
    try {
      load_weights(dir / "chain.pvst");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kShapeChain);
    }
  }
}

TEST_CASE("forward shapes on a 16x16 input") {
  const ActivationSet a = forward(seeded_weights(42), Image(16, 16, 0.5), kAll);
  const auto shape = [&](const char* l) {
    const FeatureMap& f = a.at(l);
    return std::array<int, 3>{f.height, f.width, f.channels};
  };
  CHECK(shape("relu1_1") == std::array<int, 3>{16, 16, 16});
  CHECK(shape("relu1_2") == std::array<int, 3>{16, 16, 16});
  CHECK(shape("relu2_1") == std::array<int, 3>{8, 8, 32});
  CHECK(shape("relu2_2") == std::array<int, 3>{8, 8, 32});
  CHECK(shape("relu3_1") == std::array<int, 3>{4, 4, 64});
  CHECK(layer_extent("relu3_1", 17, 23) == std::pair{4, 5});
}

TEST_CASE("forward matches a direct nested-loop network") {
  Rng rng(8);
  const NetworkWeights net = seeded_weights(5);
  const Image img = oracle::random_image(11, 9, rng);
  const ActivationSet a = forward(net, img, kAll);
  const auto ref = oracle::naive_forward(net, img);
  for (auto layer : kLayerNames) {
    const FeatureMap& f = a.at(layer);
    const oracle::Tensor& t = ref.at(std::string(layer));
    REQUIRE(f.data.size() == t.v.size());
    double worst = 0.0;
    for (std::size_t k = 0; k < t.v.size(); ++k) worst = std::max(worst, std::abs(f.data[k] - t.v[k]));
    CAPTURE(layer);
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("forward properties") {
  const NetworkWeights net = seeded_weights(42);
  SUBCASE("zero image gives zero activations") {
    const ActivationSet a = forward(net, Image(8, 8, 0.0), kAll);
    for (auto l : kLayerNames) {
      for (double v : a.at(l).data) CHECK(v == 0.0);
    }
  }
  SUBCASE("ReLU outputs are non-negative and forward is deterministic") {
    Rng rng(1);
    const Image img = oracle::random_image(12, 12, rng);
    const ActivationSet a = forward(net, img, kAll);
    const ActivationSet b = forward(net, img, kAll);
    for (auto l : kLayerNames) {
      for (double v : a.at(l).data) CHECK(v >= 0.0);
      CHECK(a.at(l) == b.at(l));
    }
  }
  SUBCASE("unknown layer") {
    try {
      forward(net, Image(8, 8), {"relu9_9"});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kUnknownLayer);
    }
  }
  SUBCASE("image too small") { CHECK_THROWS_AS(forward(net, Image(3, 3), {"relu3_1"}), Error); }
}

TEST_CASE("identity network reproduces the input channel") {
  Rng rng(2);
  const Image img = oracle::random_image(8, 8, rng);
  const ActivationSet a = forward(oracle::identity_network(), img, kAll);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) CHECK(a.at("relu1_1").data[y * 8 + x] == img.at(y, x, 0));
  }
  const FeatureMap& deep = a.at("relu3_1");
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 2; ++x) {
      double s = 0.0;
      for (int dy = 0; dy < 4; ++dy) {
        for (int dx = 0; dx < 4; ++dx) s += img.at(4 * y + dy, 4 * x + dx, 0);
      }
      CHECK(std::abs(deep.data[y * 2 + x] - s / 16.0) < 1e-15);
    }
  }
}

TEST_CASE("backward is linear in the upstream gradient") {
  Rng rng(3);
  const NetworkWeights net = seeded_weights(42);
  const Image img = oracle::random_image(8, 8, rng);
  const ActivationSet acts = forward(net, img, {"relu1_1", "relu2_2", "relu3_1"});
  std::map<std::string, FeatureMap> g1, g2, g12, zero;
  for (const char* l : {"relu1_1", "relu2_2", "relu3_1"}) {
    FeatureMap a = acts.at(l), b = acts.at(l), ab = acts.at(l), z = acts.at(l);
    for (std::size_t k = 0; k < a.data.size(); ++k) {
      a.data[k] = rng.uniform(-1, 1);
      b.data[k] = rng.uniform(-1, 1);
      ab.data[k] = a.data[k] + b.data[k];
      z.data[k] = 0.0;
    }
    g1[l] = a;
    g2[l] = b;
    g12[l] = ab;
    zero[l] = z;
  }
  PixelGrid sum = backward(net, acts, g1);
  sum += backward(net, acts, g2);
  const PixelGrid joint = backward(net, acts, g12);
  for (std::size_t k = 0; k < sum.size(); ++k) CHECK(std::abs(sum.values()[k] - joint.values()[k]) < 1e-10);
  const PixelGrid none = backward(net, acts, zero);
  for (double v : none.values()) CHECK(v == 0.0);
}

TEST_CASE("backward of sum(relu3_1) matches central differences") {
  Rng rng(11);
  const NetworkWeights net = seeded_weights(42);
  const Image img = oracle::random_image(8, 8, rng, 0.1, 0.9);
  const ActivationSet acts = forward(net, img, {"relu3_1"});
  FeatureMap ones = acts.at("relu3_1");
  std::fill(ones.data.begin(), ones.data.end(), 1.0);
  const PixelGrid g = backward(net, acts, {{"relu3_1", ones}});
  const double h = 1e-4;
  double worst = 0.0;
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      for (int c = 0; c < 3; ++c) {
        Image plus = img, minus = img;
        plus.set(y, x, c, img.at(y, x, c) + h);
        minus.set(y, x, c, img.at(y, x, c) - h);
        const double numeric = (sum_relu3(net, plus) - sum_relu3(net, minus)) / (2 * h);
        const double analytic = g.at(y, x, c);
        worst = std::max(worst, std::abs(analytic - numeric) /
                                    std::max({std::abs(analytic), std::abs(numeric), 1e-8}));
      }
    }
  }
  CHECK(worst < 1e-5);
}
