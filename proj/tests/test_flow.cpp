#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "doctest.h"
#include "oracles.hpp"
#include "pvst/error.hpp"
#include "pvst/flow.hpp"
#include "tempdir.hpp"

using namespace pvst;
using pvst::testing::TempDir;

namespace {

void put_le(std::string& out, std::uint32_t bits) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xFF));
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST_CASE("flo byte layout") {
  TempDir dir;
  FlowField f(1, 1);
  f.set(0, 0, 1.5f, -2.0f);
  write_flo(f, dir / "a.flo");
  std::string expected;
  put_le(expected, std::bit_cast<std::uint32_t>(202021.25f));
  put_le(expected, 1);
  put_le(expected, 1);
  put_le(expected, std::bit_cast<std::uint32_t>(1.5f));
  put_le(expected, std::bit_cast<std::uint32_t>(-2.0f));
  CHECK(read_bytes(dir / "a.flo") == expected);
}

TEST_CASE("flo round trip and errors") {
  TempDir dir;
  Rng rng(1);
  FlowField f(2, 3);
  for (float& v : f.uv) v = static_cast<float>(rng.uniform(-20, 20));
  write_flo(f, dir / "r.flo");
  const FlowField back = read_flo(dir / "r.flo");
  CHECK(back.height == 2);
  CHECK(back.width == 3);
  CHECK(std::memcmp(back.uv.data(), f.uv.data(), f.uv.size() * sizeof(float)) == 0);

  std::string bytes = read_bytes(dir / "r.flo");
  SUBCASE("magic 0.0") {
    std::string bad = bytes;
    bad.replace(0, 4, std::string(4, '\0'));
    std::ofstream(dir / "m.flo", std::ios::binary) << bad;
    try {
      read_flo(dir / "m.flo");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kBadMagic);
    }
  }
  SUBCASE("truncated payload") {
    std::ofstream(dir / "t.flo", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
    try {
      read_flo(dir / "t.flo");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kTruncated);
    }
  }
  SUBCASE("absurd size") {
    std::string bad = bytes.substr(0, 4);
    put_le(bad, 0x7FFFFFFF);
    put_le(bad, 0x7FFFFFFF);
    std::ofstream(dir / "s.flo", std::ios::binary) << bad;
    try {
      read_flo(dir / "s.flo");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kMalformedHeader);
    }
  }
}

TEST_CASE("synthetic translation flow") {
  for (float v : synth_translation_flow(2, 2, 0, 0).uv) CHECK(v == 0.0f);
  const FlowField f = synth_translation_flow(2, 2, 1, 0);
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 2; ++x) {
      CHECK(f.u(y, x) == 1.0f);
      CHECK(f.v(y, x) == 0.0f);
    }
  }
}

TEST_CASE("backward warp examples") {
  Rng rng(2);
  SUBCASE("zero flow is identity") {
    const Image img = oracle::random_image(4, 5, rng);
    const WarpResult w = backward_warp(img, FlowField(4, 5));
    CHECK(w.warped == img);
    for (double v : w.valid.w) CHECK(v == 1.0);
  }
  SUBCASE("integer shift on a row") {
    const Image row(1, 4, std::vector<double>{0.1, 0.1, 0.1, 0.2, 0.2, 0.2, 0.3, 0.3, 0.3, 0.4, 0.4, 0.4});
    const WarpResult w = backward_warp(row, synth_translation_flow(1, 4, 1, 0));
    const double expected[4] = {0.2, 0.3, 0.4, 0.0};
    for (int x = 0; x < 4; ++x) CHECK(w.warped.at(0, x, 0) == expected[x]);
    CHECK(w.valid.w == std::vector<double>{1, 1, 1, 0});
  }
  SUBCASE("half-pixel shift interpolates") {
    const Image row(1, 2, std::vector<double>{0, 0, 0, 1, 1, 1});
    const WarpResult w = backward_warp(row, synth_translation_flow(1, 2, 0.5, 0));
    CHECK(w.warped.at(0, 0, 0) == 0.5);
    CHECK(w.valid.at(0, 0) == 1.0);
    CHECK(w.valid.at(0, 1) == 0.0);
  }
}

TEST_CASE("backward warp is linear and preserves constants") {
  Rng rng(3);
  FlowField f(6, 6);
  for (float& v : f.uv) v = static_cast<float>(rng.uniform(-3, 3));
  const PixelGrid a = oracle::random_image(6, 6, rng).to_grid();
  const PixelGrid b = oracle::random_image(6, 6, rng).to_grid();
  PixelGrid combo = a;
  combo *= 0.3;
  PixelGrid scaled_b = b;
  scaled_b *= -1.7;
  combo += scaled_b;
  PixelWeights valid;
  PixelGrid lhs = backward_warp(combo, f, &valid);
  PixelGrid rhs = backward_warp(a, f, nullptr);
  rhs *= 0.3;
  PixelGrid wb = backward_warp(b, f, nullptr);
  wb *= -1.7;
  rhs += wb;
  for (std::size_t k = 0; k < lhs.size(); ++k) CHECK(std::abs(lhs.values()[k] - rhs.values()[k]) < 1e-12);

  const WarpResult c = backward_warp(Image(6, 6, 0.37), f);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 6; ++x) {
      if (c.valid.at(y, x) == 1.0) CHECK(std::abs(c.warped.at(y, x, 1) - 0.37) < 1e-12);
    }
  }
}

TEST_CASE("consistency weights") {
  SUBCASE("zero fields give all ones") {
    for (double v : consistency_weights(FlowField(5, 5), FlowField(5, 5)).w) CHECK(v == 1.0);
  }
  SUBCASE("single inconsistent pixel") {
    FlowField bwd(7, 7);
    bwd.set(3, 1, 5.0f, 0.0f);
    const PixelWeights w = consistency_weights(FlowField(7, 7), bwd);
    CHECK(w.at(3, 1) == 0.0);
  }
  SUBCASE("opposite translations are consistent") {
    const PixelWeights w = consistency_weights(synth_translation_flow(8, 8, -2, 0), synth_translation_flow(8, 8, 2, 0));
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 6; ++x) CHECK(w.at(y, x) == 1.0);
    }
  }
  SUBCASE("translations +d and -d") {
    const PixelWeights w = consistency_weights(synth_translation_flow(9, 9, 1, -1), synth_translation_flow(9, 9, -1, 1));
    for (int y = 0; y < 8; ++y) {
      for (int x = 1; x < 9; ++x) CHECK(w.at(y, x) == 1.0);
    }
  }
  SUBCASE("output is binary") {
    Rng rng(4);
    FlowField a(6, 6), b(6, 6);
    for (float& v : a.uv) v = static_cast<float>(rng.uniform(-2, 2));
    for (float& v : b.uv) v = static_cast<float>(rng.uniform(-2, 2));
    for (double v : consistency_weights(a, b).w) CHECK((v == 0.0 || v == 1.0));
  }
}
