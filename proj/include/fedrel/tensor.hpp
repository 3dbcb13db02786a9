#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <array>
#include <initializer_list>
#include <map>
#include <string>
#include <vector>

#include "fedrel/error.hpp"
#include "fedrel/rng.hpp"

namespace fedrel {

using Index = Eigen::Index;

/// Dense double matrix with row-major storage; the backing type for every
/// tensor in the project.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Tensor shape of rank 1..3, stored inline (tensors are created in hot
/// loops, so the shape must not heap-allocate).
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<Index> dims) {
    for (Index d : dims) {
      if (rank_ >= 3) throw ShapeError("shape rank exceeds 3");
      d_[rank_++] = d;
    }
  }

  Index rank() const { return rank_; }
  Index operator[](Index i) const { return d_[static_cast<std::size_t>(i)]; }
  const Index* begin() const { return d_.data(); }
  const Index* end() const { return d_.data() + rank_; }
  Index elements() const {
    Index n = 1;
    for (Index i = 0; i < rank_; ++i) n *= d_[static_cast<std::size_t>(i)];
    return rank_ == 0 ? 0 : n;
  }
  bool operator==(const Shape& other) const {
    if (rank_ != other.rank_) return false;
    for (Index i = 0; i < rank_; ++i) {
      if (d_[static_cast<std::size_t>(i)] !=
          other.d_[static_cast<std::size_t>(i)]) {
        return false;
      }
    }
    return true;
  }
  bool operator!=(const Shape& other) const { return !(*this == other); }

 private:
  std::array<Index, 3> d_{0, 0, 0};
  Index rank_ = 0;
};

/// Dense tensor of rank 1..3 over 64-bit floats, row-major.
///
/// Rank-1 tensors are stored as n x 1 columns, rank-3 as a (d0*d1) x d2
/// matrix of stacked slabs; `mat()` exposes the underlying matrix either way.
/// Values are validated to be finite on construction.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Vector v);
  explicit Tensor(Matrix m);
  /// Rank-3 from stacked slabs: `flat` holds d0 blocks of d1 rows each.
  Tensor(Index d0, Index d1, Index d2, Matrix flat);

  static Tensor zeros(const Shape& shape);
  static Tensor zeros_like(const Tensor& other);
  static Tensor identity(Index n);
  /// Rank-1 tensor of length 1. Scalars on a tape use this shape.
  static Tensor scalar(double v);
  static Tensor row(std::initializer_list<double> values);
  static Tensor column(std::initializer_list<double> values);

  Index rank() const { return shape_.rank(); }
  const Shape& shape() const { return shape_; }
  Index dim(int i) const { return shape_[i]; }
  Index size() const { return m_.size(); }
  bool empty() const { return shape_.rank() == 0; }

  /// Matrix view: rank-1 is n x 1, rank-2 is rows x cols, rank-3 is
  /// (d0*d1) x d2.
  const Matrix& mat() const { return m_; }
  Matrix& mat() { return m_; }

  Index rows() const { return m_.rows(); }
  Index cols() const { return m_.cols(); }

  /// Slab t of a rank-3 tensor as a d1 x d2 map.
  Eigen::Map<const Matrix> slab(Index t) const;

  bool is_scalar() const { return size() == 1; }
  double scalar_value() const;

  const double* data() const { return m_.data(); }
  double* data() { return m_.data(); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool bitwise_equal(const Tensor& other) const;

  /// Throws NumericError if any entry is NaN or infinite.
  void ensure_finite(const char* what) const;

  /// Tensor with `like`'s shape wrapped around freshly computed storage.
  static Tensor reshaped_like(const Tensor& like, Matrix m);

 private:
  Shape shape_;
  Matrix m_;
};

std::string shape_string(const Shape& shape);

// ---------------------------------------------------------------------------
// Elementary kernels. These are plain functions of values; the tape ops call
// into them so that recorded and replayed evaluations share one code path.
// ---------------------------------------------------------------------------

/// Row-wise softmax with max subtraction. Rows of equal entries map to
/// exactly uniform rows (exp(0) sums to an integer), which downstream
/// aggregation identities rely on.
Matrix softmax_rows_kernel(const Matrix& m);

/// Normalizes v to zero mean and unit population variance:
/// (v - mean) / sqrt(var + eps). No affine parameters (identity scale/shift).
Vector layer_norm_kernel(const Vector& v, double eps);

/// (mean, 1/sqrt(var + eps)) of row `row`, accumulated in fixed scalar order
/// so equal rows yield bitwise-equal statistics independent of alignment.
std::pair<double, double> layer_norm_row_stats(const Matrix& m, Index row,
                                               double eps);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Row-stochastic softmax of a rank-2 tensor.
Tensor softmax_row(const Tensor& m);

/// Layer normalization of a rank-1 tensor (length >= 2).
Tensor layer_norm(const Tensor& v, double eps = 1e-5);

/// Glorot-uniform initializer: entries i.i.d. uniform in +-sqrt(6/(fan_in +
/// fan_out)). Rank-2 shapes are read as (fan_out, fan_in); a rank-1 shape of
/// length n has fan_in = n, fan_out = 1.
Tensor xavier_init(const Shape& shape, Rng& rng);

/// Named parameter collection; std::map keeps iteration order stable, which
/// aggregation and serialization depend on.
using Params = std::map<std::string, Tensor>;

}  // namespace fedrel
