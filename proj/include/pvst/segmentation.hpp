#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace pvst {

struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<int> labels;  // row-major class indices

  int at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

// Ordered label ids; channel c of a MaskStack is label `ids[c]`.
struct Vocabulary {
  std::vector<int> ids;
  std::vector<std::string> names;  // parallel to ids; may be empty

  int channel_of(int label) const;  // -1 when absent
  std::size_t size() const noexcept { return ids.size(); }
};

// Soft per-label masks, planar C x H x W; per-pixel channel sums are 1.
struct MaskStack {
  int height = 0;
  int width = 0;
  Vocabulary vocab;
  std::vector<double> data;

  int channels() const noexcept { return static_cast<int>(vocab.size()); }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }
  const double* channel(int c) const noexcept { return data.data() + c * plane(); }
  double* channel(int c) noexcept { return data.data() + c * plane(); }
  double mass(int c) const;
};

// Result of aligning content and style label sets.
struct VocabularyAlignment {
  Vocabulary vocab;                 // sorted union of labels
  std::vector<bool> content_present;
  std::vector<bool> style_present;
  std::vector<bool> usable;         // present on both sides
};

LabelMap load_label_map(const std::filesystem::path& path);
void save_label_map(const LabelMap& m, const std::filesystem::path& path);

// Plain text, one `index name` pair per line; '#' starts a comment.
Vocabulary load_vocabulary(const std::filesystem::path& path);

MaskStack masks_from_labels(const LabelMap& m, const Vocabulary& vocab);
// Single channel of ones: the unsegmented case.
MaskStack uniform_mask(int height, int width);
// Exact area-overlap averaging onto a coarser grid.
MaskStack downsample_masks(const MaskStack& s, int target_height, int target_width);

VocabularyAlignment common_vocabulary(const LabelMap& content, const LabelMap& style);

}  // namespace pvst
