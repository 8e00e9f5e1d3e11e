#include "pvst/segmentation.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "pvst/error.hpp"
#include "raster_io.hpp"

namespace pvst {

int Vocabulary::channel_of(int label) const {
  auto it = std::find(ids.begin(), ids.end(), label);
  return it == ids.end() ? -1 : static_cast<int>(it - ids.begin());
}

double MaskStack::mass(int c) const {
  const double* p = channel(c);
  double s = 0.0;
  for (std::size_t i = 0; i < plane(); ++i) s += p[i];
  return s;
}

LabelMap load_label_map(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorKind::kMissingFile, "no such file", path.string());
  }
  const detail::Raster8 raster = detail::read_png(path, true);
  if (raster.channels != 1) {
    throw Error(ErrorKind::kUnsupportedFormat, "label map must be single-channel", path.string());
  }
  LabelMap m{raster.height, raster.width, {}};
  m.labels.assign(raster.bytes.begin(), raster.bytes.end());
  return m;
}

void save_label_map(const LabelMap& m, const std::filesystem::path& path) {
  detail::Raster8 raster{m.height, m.width, 1, {}};
  raster.bytes.reserve(m.labels.size());
  for (int v : m.labels) {
    if (v < 0 || v > 255) {
      throw Error(ErrorKind::kInvalidArgument, "label outside 0..255", path.string());
    }
    raster.bytes.push_back(static_cast<std::uint8_t>(v));
  }
  detail::write_png(path, raster);
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kMissingFile, "cannot open", path.string());
  Vocabulary v;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    int id;
    if (!(ls >> id)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      throw Error(ErrorKind::kMalformedHeader, "line " + std::to_string(lineno), path.string());
    }
    std::string name;
    std::getline(ls >> std::ws, name);
    name.erase(name.find_last_not_of(" \t\r") + 1);
    if (id < 0 || v.channel_of(id) >= 0) {
      throw Error(ErrorKind::kMalformedHeader,
                  "negative or duplicate index on line " + std::to_string(lineno), path.string());
    }
    v.ids.push_back(id);
    v.names.push_back(name);
  }
  return v;
}

MaskStack masks_from_labels(const LabelMap& m, const Vocabulary& vocab) {
  if (vocab.size() == 0) throw Error(ErrorKind::kInvalidArgument, "empty vocabulary");
  MaskStack s{m.height, m.width, vocab, {}};
  s.data.assign(vocab.size() * s.plane(), 0.0);
  for (std::size_t p = 0; p < m.labels.size(); ++p) {
    const int c = vocab.channel_of(m.labels[p]);
    if (c < 0) {
      throw Error(ErrorKind::kInvalidArgument,
                  "label " + std::to_string(m.labels[p]) + " is not in the vocabulary");
    }
    s.data[c * s.plane() + p] = 1.0;
  }
  return s;
}

MaskStack uniform_mask(int height, int width) {
  MaskStack s{height, width, Vocabulary{{0}, {"all"}}, {}};
  s.data.assign(s.plane(), 1.0);
  return s;
}

namespace {

struct Tap {
  int src;
  double weight;
};

// For each target cell, the source cells it overlaps and the overlap length
// divided by the cell width (weights per target sum to 1).
std::vector<std::vector<Tap>> area_taps(int source, int target) {
  std::vector<std::vector<Tap>> taps(target);
  const double scale = static_cast<double>(source) / target;
  for (int t = 0; t < target; ++t) {
    const double lo = t * scale;
    const double hi = (t + 1) * scale;
    for (int s = static_cast<int>(lo); s < source && s < hi; ++s) {
      const double overlap = std::min<double>(s + 1, hi) - std::max<double>(s, lo);
      if (overlap > 0.0) taps[t].push_back({s, overlap / scale});
    }
  }
  return taps;
}

}  // namespace

MaskStack downsample_masks(const MaskStack& s, int target_height, int target_width) {
  if (target_height < 1 || target_width < 1) {
    throw Error(ErrorKind::kInvalidArgument, "target size must be positive");
  }
  if (target_height > s.height || target_width > s.width) {
    throw Error(ErrorKind::kInvalidArgument, "mask downsampling cannot upscale");
  }
  if (target_height == s.height && target_width == s.width) return s;
  const auto rows = area_taps(s.height, target_height);
  const auto cols = area_taps(s.width, target_width);
  MaskStack out{target_height, target_width, s.vocab, {}};
  out.data.assign(s.vocab.size() * out.plane(), 0.0);
  for (int c = 0; c < s.channels(); ++c) {
    const double* src = s.channel(c);
    double* dst = out.channel(c);
    for (int y = 0; y < target_height; ++y) {
      for (int x = 0; x < target_width; ++x) {
        double acc = 0.0;
        for (const Tap& ty : rows[y]) {
          for (const Tap& tx : cols[x]) acc += ty.weight * tx.weight * src[ty.src * s.width + tx.src];
        }
        dst[y * target_width + x] = std::clamp(acc, 0.0, 1.0);
      }
    }
  }
  return out;
}

VocabularyAlignment common_vocabulary(const LabelMap& content, const LabelMap& style) {
  const std::set<int> in_content(content.labels.begin(), content.labels.end());
  const std::set<int> in_style(style.labels.begin(), style.labels.end());
  std::set<int> all = in_content;
  all.insert(in_style.begin(), in_style.end());

  VocabularyAlignment a;
  for (int id : all) {
    a.vocab.ids.push_back(id);
    a.vocab.names.push_back(std::to_string(id));
    const bool c = in_content.contains(id);
    const bool s = in_style.contains(id);
    a.content_present.push_back(c);
    a.style_present.push_back(s);
    a.usable.push_back(c && s);
  }
  return a;
}

}  // namespace pvst
