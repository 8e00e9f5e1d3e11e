#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pvst/losses.hpp"
#include "pvst/optimizer.hpp"

namespace pvst {

// A small, fully populated loss problem: seeded extractor, random content,
// style and output images, two-label segmentation on both sides, the content
// frame's Laplacian and two temporal references.
struct GradcheckFixture {
  NetworkWeights net;
  Image content;
  Image style;
  Image output;
  ActivationSet content_acts;
  StyleTargets targets;
  std::map<std::string, MaskStack> masks;
  SparseSymmetric laplacian;
  LossWeights weights;
  LossContext context;  // points into this fixture; do not copy or move it

  GradcheckFixture(int size, std::uint64_t seed);
  GradcheckFixture(const GradcheckFixture&) = delete;
  GradcheckFixture& operator=(const GradcheckFixture&) = delete;

  // Total loss with every weight zeroed except the named term's
  // ("content", "style", "photorealism", "temporal", or "total" for all).
  Objective objective(const std::string& term) const;
};

struct GradcheckReport {
  std::string term;
  double max_rel_error = 0.0;
};

inline constexpr double kGradcheckStep = 1e-4;
inline constexpr double kGradcheckTolerance = 1e-4;

std::vector<GradcheckReport> run_gradcheck(int size = 8, std::uint64_t seed = 7);

}  // namespace pvst
