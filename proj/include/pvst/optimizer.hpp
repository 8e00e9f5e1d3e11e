#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pvst/image.hpp"
#include "pvst/loss_breakdown.hpp"

namespace pvst {

struct Evaluation {
  double value = 0.0;
  PixelGrid grad;
  LossBreakdown breakdown;  // optional detail; `total` may be left at 0
};

using Objective = std::function<Evaluation(const Image&)>;

enum class Method { kAdam, kLbfgs };

struct OptimizerParams {
  Method method = Method::kLbfgs;
  double step_size = 0.02;
  int iterations = 500;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double tolerance = 1e-6;  // relative loss change
  int patience = 10;        // consecutive iterations below tolerance before stopping
  int history = 10;         // L-BFGS memory
  int log_every = 10;       // breakdown sampling interval; first and last always kept
};

void validate(const OptimizerParams& p);

enum class StopReason { kIterationBudget, kConverged };

struct OptimizationTrace {
  std::vector<double> values;                           // one per iteration
  std::vector<std::pair<int, LossBreakdown>> breakdowns;  // (iteration, detail)
  int iterations = 0;
  StopReason stop = StopReason::kIterationBudget;
};

struct MinimizeResult {
  Image image;  // the last evaluated iterate, whose loss ends `trace.values`
  OptimizationTrace trace;
};

// Projected first-order minimisation over [0,1]^N. Throws ErrorKind::kNonFinite
// naming the iteration if the objective returns a NaN or infinity.
MinimizeResult minimize(const Objective& objective, const Image& init, const OptimizerParams& p);

// Central-difference check on a deterministic sample of coordinates (all of
// them when there are fewer than `samples`). Coordinates whose +/- step would
// leave [0,1] are not sampled. Returns the maximum over sampled coordinates of
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
double finite_diff_check(const Objective& objective, const Image& point, double step,
                         int samples = 64, std::uint64_t seed = 0x5eed);

void write_trace_csv(const OptimizationTrace& trace, const std::string& path);

}  // namespace pvst
