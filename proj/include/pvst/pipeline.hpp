#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pvst/config.hpp"
#include "pvst/flow.hpp"
#include "pvst/losses.hpp"
#include "pvst/network.hpp"
#include "pvst/optimizer.hpp"
#include "pvst/segmentation.hpp"

namespace pvst {

// Backward flow from frame i to frame i-j and its per-pixel reliability.
struct TemporalLink {
  FlowField backward;
  PixelWeights weights;
};

// A whole job's inputs, held in memory. Frames are addressed by position
// 0..n-1; `frame_numbers` carries the on-disk numbering.
struct SequenceInputs {
  Image style;
  std::vector<Image> frames;
  std::vector<int> frame_numbers;
  std::optional<LabelMap> style_labels;
  std::vector<LabelMap> frame_labels;  // empty, or one per frame
  std::optional<Vocabulary> vocab;     // fixed channel order; otherwise the label union
  std::map<std::pair<int, int>, TemporalLink> links;  // keyed (i, j)
};

// Gaps whose flows a frame needs: J plus 1 (used for initialisation).
std::vector<int> required_gaps(const JobConfig& cfg);

// Reads frames, label maps and flows named per the on-disk conventions and
// derives temporal weights from forward/backward consistency. Every missing
// or malformed file is reported before anything is written.
SequenceInputs load_sequence_inputs(const JobConfig& cfg);

NetworkWeights load_network(const JobConfig& cfg);

// Style-side state shared by every frame.
struct StyleContext {
  const NetworkWeights* net = nullptr;
  LossWeights weights;
  Vocabulary vocab;
  bool segmented = false;
  StyleTargets targets;
};

StyleContext prepare_style(const JobConfig& cfg, const NetworkWeights& net,
                           const SequenceInputs& inputs);

// Builds each frame's Laplacian, optionally through an on-disk cache keyed by
// (frame contents, eps, radius).
class LaplacianCache {
 public:
  explicit LaplacianCache(std::filesystem::path dir = {}) : dir_(std::move(dir)) {}
  std::shared_ptr<const SparseSymmetric> get(const Image& frame, MattingParams params) const;

 private:
  std::filesystem::path dir_;
};

struct FrameContext {
  int index = 0;
  Image content;
  ActivationSet content_acts;
  std::shared_ptr<const SparseSymmetric> laplacian;
  std::map<std::string, MaskStack> masks;  // per style layer
  std::vector<TemporalTerm> temporal;      // one per j in J with i - j >= 0
};

// `outputs` holds the stylized frames 0..index-1.
FrameContext build_frame_context(int index, const SequenceInputs& inputs, const StyleContext& style,
                                 const JobConfig& cfg, const std::vector<Image>& outputs,
                                 const LaplacianCache& cache);

// Frame 0 starts from its content; later frames from valid * warp(x^{i-1}) +
// (1 - valid) * f^{(i)}.
Image initial_guess(int index, const SequenceInputs& inputs, const std::vector<Image>& outputs);

struct FrameResult {
  Image image;
  OptimizationTrace trace;
  LossBreakdown final_loss;
};

FrameResult stylize_frame(const FrameContext& ctx, const StyleContext& style, const JobConfig& cfg,
                          const Image& init);

struct TemporalError {
  double value = 0.0;
  bool vacuous = false;  // every pair had zero total weight
};

// Mean over consecutive pairs of the weight-averaged ||x_i - warp(x_{i-1})||^2.
// flows[k] and weights[k] belong to the pair (k, k+1).
TemporalError temporal_error(const std::vector<Image>& frames, const std::vector<FlowField>& flows,
                             const std::vector<PixelWeights>& weights);

struct SequenceResult {
  std::vector<Image> outputs;
  std::vector<FrameResult> frames;  // only for frames run in this call
  TemporalError temporal_error;
};

using FrameCallback = std::function<void(int index, const FrameResult&)>;

// Causal single pass. `completed` are outputs of already finished frames
// (for resuming); frames after them are optimised in ascending order.
SequenceResult stylize_sequence(const JobConfig& cfg, const NetworkWeights& net,
                                const SequenceInputs& inputs, const FrameCallback& on_frame = {},
                                std::vector<Image> completed = {},
                                const LaplacianCache& cache = LaplacianCache{});

// File-level job: writes styled_%05d.png and run.json into cfg.output_dir,
// updating the manifest after every frame so a failed run can resume.
std::vector<std::filesystem::path> run_video_job(const JobConfig& cfg, const NetworkWeights& net,
                                                 const SequenceInputs& inputs, bool resume);

// Configuration recorded in a manifest.
JobConfig config_from_manifest(const std::filesystem::path& path);

std::string frame_name(const char* pattern, int a, int b = 0);

}  // namespace pvst
