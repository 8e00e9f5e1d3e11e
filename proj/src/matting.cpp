#include "pvst/matting.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "pvst/error.hpp"

namespace pvst {

SparseSymmetric::SparseSymmetric(std::size_t dimension, std::vector<std::size_t> row_offsets,
                                 std::vector<std::uint32_t> columns, std::vector<double> values)
    : dimension_(dimension),
      row_offsets_(std::move(row_offsets)),
      columns_(std::move(columns)),
      values_(std::move(values)) {
  if (row_offsets_.size() != dimension_ + 1 || row_offsets_.back() != columns_.size() ||
      columns_.size() != values_.size()) {
    throw Error(ErrorKind::kShapeMismatch, "inconsistent CSR arrays");
  }
}

double SparseSymmetric::at(std::size_t i, std::size_t j) const {
  const auto begin = columns_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[i]);
  const auto end = columns_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[i + 1]);
  const auto it = std::lower_bound(begin, end, static_cast<std::uint32_t>(j));
  return (it != end && *it == j) ? values_[static_cast<std::size_t>(it - columns_.begin())] : 0.0;
}

namespace {

using Mat3 = std::array<double, 9>;

// Inverse of a symmetric positive-definite 3x3 via the adjugate.
Mat3 inverse_symmetric(const Mat3& m) {
  const double a = m[0], b = m[1], c = m[2], e = m[4], f = m[5], i = m[8];
  const double c00 = e * i - f * f;
  const double c01 = c * f - b * i;
  const double c02 = b * f - c * e;
  const double c11 = a * i - c * c;
  const double c12 = b * c - a * f;
  const double c22 = a * e - b * b;
  const double det = a * c00 + b * c01 + c * c02;
  const double s = 1.0 / det;
  return {c00 * s, c01 * s, c02 * s, c01 * s, c11 * s, c12 * s, c02 * s, c12 * s, c22 * s};
}

}  // namespace

SparseSymmetric build_matting_laplacian(const Image& input, MattingParams params) {
  const int r = params.radius;
  if (!(params.eps > 0.0)) throw Error(ErrorKind::kInvalidArgument, "eps must be positive");
  if (r < 1) throw Error(ErrorKind::kInvalidArgument, "radius must be at least 1");
  const int h = input.height();
  const int w = input.width();
  const int side = 2 * r + 1;
  if (h < side || w < side) {
    throw Error(ErrorKind::kInvalidArgument, "image smaller than one matting window");
  }

  // Dense band of (4r+1)^2 neighbour slots per pixel, compressed at the end.
  const int span = 4 * r + 1;
  const std::size_t band = static_cast<std::size_t>(span) * span;
  const std::size_t n_pix = static_cast<std::size_t>(h) * w;
  std::vector<double> acc(n_pix * band, 0.0);
  std::vector<char> present(n_pix * band, 0);
  auto slot = [&](int ya, int xa, int yb, int xb) {
    return (static_cast<std::size_t>(ya) * w + xa) * band +
           static_cast<std::size_t>(yb - ya + 2 * r) * span + (xb - xa + 2 * r);
  };

  const int n = side * side;
  const double inv_n = 1.0 / n;
  auto pix = input.values();
  std::vector<std::array<double, 3>> dev(n);
  std::vector<std::array<double, 3>> proj(n);
  std::vector<std::array<int, 2>> pos(n);

  for (int cy = r; cy < h - r; ++cy) {
    for (int cx = r; cx < w - r; ++cx) {
      std::array<double, 3> mu{0.0, 0.0, 0.0};
      int k = 0;
      for (int y = cy - r; y <= cy + r; ++y) {
        for (int x = cx - r; x <= cx + r; ++x, ++k) {
          pos[k] = {y, x};
          const double* p = &pix[(static_cast<std::size_t>(y) * w + x) * 3];
          for (int c = 0; c < 3; ++c) {
            dev[k][c] = p[c];
            mu[c] += p[c];
          }
        }
      }
      for (double& m : mu) m *= inv_n;
      Mat3 cov{};
      for (int a = 0; a < n; ++a) {
        for (int c = 0; c < 3; ++c) dev[a][c] -= mu[c];
        for (int i = 0; i < 3; ++i) {
          for (int j = 0; j < 3; ++j) cov[i * 3 + j] += dev[a][i] * dev[a][j];
        }
      }
      for (int i = 0; i < 9; ++i) cov[i] *= inv_n;
      for (int i = 0; i < 3; ++i) cov[i * 4] += params.eps * inv_n;
      const Mat3 inv = inverse_symmetric(cov);
      for (int a = 0; a < n; ++a) {
        for (int i = 0; i < 3; ++i) {
          proj[a][i] = inv[i * 3] * dev[a][0] + inv[i * 3 + 1] * dev[a][1] + inv[i * 3 + 2] * dev[a][2];
        }
      }
      for (int a = 0; a < n; ++a) {
        for (int b = a; b < n; ++b) {
          const double q = proj[a][0] * dev[b][0] + proj[a][1] * dev[b][1] + proj[a][2] * dev[b][2];
          const double v = (a == b ? 1.0 : 0.0) - inv_n * (1.0 + q);
          const std::size_t ab = slot(pos[a][0], pos[a][1], pos[b][0], pos[b][1]);
          acc[ab] += v;
          present[ab] = 1;
          if (a != b) {
            const std::size_t ba = slot(pos[b][0], pos[b][1], pos[a][0], pos[a][1]);
            acc[ba] += v;
            present[ba] = 1;
          }
        }
      }
    }
  }

  std::vector<std::size_t> offsets;
  offsets.reserve(n_pix + 1);
  offsets.push_back(0);
  std::vector<std::uint32_t> cols;
  std::vector<double> vals;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t base = (static_cast<std::size_t>(y) * w + x) * band;
      for (int dy = -2 * r; dy <= 2 * r; ++dy) {
        for (int dx = -2 * r; dx <= 2 * r; ++dx) {
          const std::size_t s = base + static_cast<std::size_t>(dy + 2 * r) * span + (dx + 2 * r);
          if (!present[s]) continue;
          cols.push_back(static_cast<std::uint32_t>((y + dy) * w + (x + dx)));
          vals.push_back(acc[s]);
        }
      }
      offsets.push_back(cols.size());
    }
  }
  return SparseSymmetric(n_pix, std::move(offsets), std::move(cols), std::move(vals));
}

std::vector<double> apply(const SparseSymmetric& L, std::span<const double> v) {
  if (v.size() != L.dimension()) {
    throw Error(ErrorKind::kShapeMismatch, "vector length does not match Laplacian dimension");
  }
  const auto offsets = L.row_offsets();
  const auto cols = L.columns();
  const auto vals = L.values();
  std::vector<double> out(L.dimension(), 0.0);
  for (std::size_t i = 0; i < L.dimension(); ++i) {
    double s = 0.0;
    for (std::size_t k = offsets[i]; k < offsets[i + 1]; ++k) s += vals[k] * v[cols[k]];
    out[i] = s;
  }
  return out;
}

PhotorealismResult photorealism_loss(const SparseSymmetric& L, const Image& output) {
  if (static_cast<std::size_t>(output.pixels()) != L.dimension()) {
    throw Error(ErrorKind::kShapeMismatch, "image pixel count does not match Laplacian dimension");
  }
  PhotorealismResult result{0.0, PixelGrid(output.height(), output.width(), 3)};
  const std::size_t n = L.dimension();
  auto px = output.values();
  auto grad = result.grad.values();
  std::vector<double> channel(n);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t p = 0; p < n; ++p) channel[p] = px[p * 3 + c];
    const std::vector<double> lv = pvst::apply(L, channel);
    double q = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      q += channel[p] * lv[p];
      grad[p * 3 + c] = 2.0 * lv[p];
    }
    result.value += q;
  }
  return result;
}

void write_triplets(const SparseSymmetric& L, std::ostream& out) {
  const auto offsets = L.row_offsets();
  const auto cols = L.columns();
  const auto vals = L.values();
  char buf[64];
  for (std::size_t i = 0; i < L.dimension(); ++i) {
    for (std::size_t k = offsets[i]; k < offsets[i + 1]; ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", vals[k]);
      out << i << ' ' << cols[k] << ' ' << buf << '\n';
    }
  }
}

namespace {
constexpr char kCacheMagic[8] = {'P', 'V', 'L', 'A', 'P', '0', '0', '1'};

template <typename T>
void write_array(std::ofstream& out, const std::vector<T>& v) {
  const std::uint64_t n = v.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
}

template <typename T>
std::vector<T> read_array(std::ifstream& in, const std::string& name) {
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || n > (std::uint64_t{1} << 36)) throw Error(ErrorKind::kTruncated, "cache array", name);
  std::vector<T> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!in) throw Error(ErrorKind::kTruncated, "cache array", name);
  return v;
}
}  // namespace

void save_laplacian(const SparseSymmetric& L, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot open for writing", path.string());
  out.write(kCacheMagic, sizeof kCacheMagic);
  const auto offsets = L.row_offsets();
  const auto cols = L.columns();
  const auto vals = L.values();
  write_array(out, std::vector<std::size_t>(offsets.begin(), offsets.end()));
  write_array(out, std::vector<std::uint32_t>(cols.begin(), cols.end()));
  write_array(out, std::vector<double>(vals.begin(), vals.end()));
  if (!out) throw Error(ErrorKind::kIo, "write failed", path.string());
}

SparseSymmetric load_laplacian(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kMissingFile, "cannot open", name);
  char magic[sizeof kCacheMagic] = {};
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + sizeof magic, kCacheMagic)) {
    throw Error(ErrorKind::kBadMagic, "not a Laplacian cache file", name);
  }
  auto offsets = read_array<std::size_t>(in, name);
  auto cols = read_array<std::uint32_t>(in, name);
  auto vals = read_array<double>(in, name);
  if (offsets.empty()) throw Error(ErrorKind::kMalformedHeader, "empty offsets", name);
  const std::size_t dim = offsets.size() - 1;
  return SparseSymmetric(dim, std::move(offsets), std::move(cols), std::move(vals));
}

}  // namespace pvst
