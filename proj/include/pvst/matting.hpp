#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "pvst/image.hpp"

namespace pvst {

// N x N sparse symmetric matrix in compressed-row form with both triangles
// stored and column indices ascending within each row.
class SparseSymmetric {
 public:
  SparseSymmetric() = default;
  SparseSymmetric(std::size_t dimension, std::vector<std::size_t> row_offsets,
                  std::vector<std::uint32_t> columns, std::vector<double> values);

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t nonzeros() const noexcept { return values_.size(); }
  std::span<const std::size_t> row_offsets() const noexcept { return row_offsets_; }
  std::span<const std::uint32_t> columns() const noexcept { return columns_; }
  std::span<const double> values() const noexcept { return values_; }

  // Entry (i, j), zero when structurally absent.
  double at(std::size_t i, std::size_t j) const;

  friend bool operator==(const SparseSymmetric&, const SparseSymmetric&) = default;

 private:
  std::size_t dimension_ = 0;
  std::vector<std::size_t> row_offsets_{0};
  std::vector<std::uint32_t> columns_;
  std::vector<double> values_;
};

struct MattingParams {
  double eps = 1e-5;
  int radius = 1;
};

// Closed-form matting Laplacian over every (2r+1)^2 window lying fully inside
// the image:
//   L_ij = sum_k [ delta_ij - (1 + (I_i - mu_k)^T (Sigma_k + eps/|w| I3)^-1 (I_j - mu_k)) / |w| ]
SparseSymmetric build_matting_laplacian(const Image& input, MattingParams params);

// y = L v
std::vector<double> apply(const SparseSymmetric& L, std::span<const double> v);

struct PhotorealismResult {
  double value = 0.0;
  PixelGrid grad;
};

// sum over the three colour channels of V_c^T L V_c, gradient 2 L V_c.
PhotorealismResult photorealism_loss(const SparseSymmetric& L, const Image& output);

// `i j value` per line, sorted by (i, j).
void write_triplets(const SparseSymmetric& L, std::ostream& out);

// Binary cache format used by the pipeline; host byte order.
void save_laplacian(const SparseSymmetric& L, const std::filesystem::path& path);
SparseSymmetric load_laplacian(const std::filesystem::path& path);

}  // namespace pvst
