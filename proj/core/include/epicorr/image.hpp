// Copyright 2026 The epicorr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "epicorr/error.hpp"

namespace epicorr {

/// Row-major dense matrix. Rows run along the frequency-encode (FE) axis,
/// columns along the phase-encode (PE) axis.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// A 2D grid of doubles with a tag that keeps images and displacement
/// fields from being mixed up at call sites.
template <class Tag>
class Grid2D {
 public:
  Grid2D() = default;
  Grid2D(Index rows, Index cols, double fill = 0.0) : values_(Matrix::Constant(rows, cols, fill)) {}
  explicit Grid2D(Matrix values) : values_(std::move(values)) {}

  Index rows() const { return values_.rows(); }
  Index cols() const { return values_.cols(); }
  Index size() const { return values_.size(); }

  double& operator()(Index i, Index j) { return values_(i, j); }
  double operator()(Index i, Index j) const { return values_(i, j); }

  const Matrix& matrix() const { return values_; }
  Matrix& matrix() { return values_; }

  std::span<const double> row(Index i) const {
    return {values_.data() + i * values_.cols(), static_cast<std::size_t>(values_.cols())};
  }
  std::span<double> row(Index i) {
    return {values_.data() + i * values_.cols(), static_cast<std::size_t>(values_.cols())};
  }

  bool all_finite() const { return values_.allFinite(); }

  template <class Other>
  bool same_shape(const Other& other) const {
    return rows() == other.rows() && cols() == other.cols();
  }

  friend bool operator==(const Grid2D& a, const Grid2D& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a.values_ == b.values_;
  }

 private:
  Matrix values_;
};

struct ImageTag {};
struct FieldTag {};

/// Real-valued magnitude image, n_FE rows by n_PE columns.
using ImageSlice = Grid2D<ImageTag>;
/// Per-pixel displacement along PE, in pixels of the grid it lives on.
using DisplacementField = Grid2D<FieldTag>;

enum class PePolarity { BlipUp, BlipDown };

/// The measured blip-up / blip-down acquisitions of one slice.
struct ReversedPePair {
  ImageSlice blip_up;
  ImageSlice blip_down;

  Index rows() const { return blip_up.rows(); }
  Index cols() const { return blip_up.cols(); }
};

/// Boolean pixel mask stored as bytes.
class Mask {
 public:
  Mask() = default;
  Mask(Index rows, Index cols, bool fill = false)
      : rows_(rows), cols_(cols), bits_(static_cast<std::size_t>(rows * cols), fill ? 1 : 0) {}

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  bool operator()(Index i, Index j) const { return bits_[static_cast<std::size_t>(i * cols_ + j)] != 0; }
  void set(Index i, Index j, bool v) { bits_[static_cast<std::size_t>(i * cols_ + j)] = v ? 1 : 0; }
  Index count() const {
    Index n = 0;
    for (auto b : bits_) n += b;
    return n;
  }
  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

inline void require_same_shape(const auto& a, const auto& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidInput(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                       std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                       std::to_string(b.cols()) + ")");
  }
}

inline void require_pair_shape(const ReversedPePair& pair, const char* what) {
  require_same_shape(pair.blip_up, pair.blip_down, what);
}

}  // namespace epicorr
