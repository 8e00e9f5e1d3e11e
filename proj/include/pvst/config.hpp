#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pvst/flow.hpp"
#include "pvst/losses.hpp"
#include "pvst/matting.hpp"
#include "pvst/optimizer.hpp"

namespace pvst {

// Flat job description. Every field has a `key = value` spelling; see
// `config_keys()` for the list and `to_lines()` for the canonical text.
struct JobConfig {
  std::string content_dir;
  std::string style;
  std::string style_seg;
  std::string seg_dir;
  std::string flow_dir;
  std::string weights;      // empty: seeded_weights(seed)
  std::string output_dir;
  std::string vocab;
  std::string laplacian_cache;  // empty: no on-disk cache
  std::string trace_dir;        // empty: no per-frame CSV traces
  int first_frame = 0;
  int last_frame = -1;          // -1: through the last frame found on disk
  std::uint64_t seed = 42;

  std::vector<std::string> content_layers{"relu2_2"};
  std::vector<double> alpha{1.0};
  std::vector<std::string> style_layers{"relu1_1", "relu2_1", "relu3_1"};
  std::vector<double> beta{1.0};
  double tau = 10.0;
  double gamma = 200.0;
  double lambda = 100.0;
  std::vector<int> long_term{1, 2, 4};
  StyleNorm style_norm = StyleNorm::kMaskMass;

  OptimizerParams optimizer;
  int iterations_first = 500;
  int iterations = 300;

  MattingParams matting;
  ConsistencyParams consistency;

  // Throws Error(kConfig) naming the key on unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  // Applies a `key = value` file; '#' starts a comment.
  void load_file(const std::filesystem::path& path);

  LossWeights loss_weights() const;
  // Parameter checks only; paths are checked when inputs are loaded.
  void validate() const;

  std::vector<std::pair<std::string, std::string>> entries() const;
  std::string to_lines() const;
  std::string hash() const;  // FNV-1a of to_lines(), hex
};

const std::vector<std::string>& config_keys();

// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace pvst
