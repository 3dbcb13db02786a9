#include "fedrel/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace fedrel {

Tensor::Tensor(Vector v) : shape_{v.size()} {
  m_ = std::move(v);
  ensure_finite("tensor construction");
}

Tensor::Tensor(Matrix m) : shape_{m.rows(), m.cols()}, m_(std::move(m)) {
  ensure_finite("tensor construction");
}

Tensor::Tensor(Index d0, Index d1, Index d2, Matrix flat)
    : shape_{d0, d1, d2}, m_(std::move(flat)) {
  if (m_.rows() != d0 * d1 || m_.cols() != d2) {
    throw ShapeError("rank-3 tensor: flat storage " + std::to_string(m_.rows()) +
                     "x" + std::to_string(m_.cols()) + " does not match shape " +
                     shape_string(shape_));
  }
  ensure_finite("tensor construction");
}

Tensor Tensor::zeros(const Shape& shape) {
  if (shape.rank() < 1) {
    throw ShapeError("tensor rank must be 1..3");
  }
  for (Index d : shape) {
    if (d <= 0) throw ShapeError("zero-sized dimension in " + shape_string(shape));
  }
  Tensor t;
  t.shape_ = shape;
  switch (shape.rank()) {
    case 1:
      t.m_ = Matrix::Zero(shape[0], 1);
      break;
    case 2:
      t.m_ = Matrix::Zero(shape[0], shape[1]);
      break;
    default:
      t.m_ = Matrix::Zero(shape[0] * shape[1], shape[2]);
      break;
  }
  return t;
}

Tensor Tensor::zeros_like(const Tensor& other) { return zeros(other.shape_); }

Tensor Tensor::identity(Index n) {
  if (n <= 0) throw ShapeError("identity: size must be positive");
  Tensor t;
  t.shape_ = {n, n};
  t.m_ = Matrix::Identity(n, n);
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.shape_ = {1};
  t.m_ = Matrix::Constant(1, 1, v);
  t.ensure_finite("scalar construction");
  return t;
}

Tensor Tensor::row(std::initializer_list<double> values) {
  Matrix m(1, static_cast<Index>(values.size()));
  Index j = 0;
  for (double v : values) m(0, j++) = v;
  return Tensor(std::move(m));
}

Tensor Tensor::column(std::initializer_list<double> values) {
  Vector v(static_cast<Index>(values.size()));
  Index i = 0;
  for (double x : values) v(i++) = x;
  return Tensor(std::move(v));
}

Eigen::Map<const Matrix> Tensor::slab(Index t) const {
  if (rank() != 3) throw ShapeError("slab: tensor is not rank-3");
  if (t < 0 || t >= shape_[0]) throw ShapeError("slab: index out of range");
  const Index d1 = shape_[1], d2 = shape_[2];
  return Eigen::Map<const Matrix>(m_.data() + t * d1 * d2, d1, d2);
}

double Tensor::scalar_value() const {
  if (!is_scalar()) {
    throw ShapeError("expected a scalar tensor, got shape " +
                     shape_string(shape_));
  }
  return m_(0, 0);
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  if (shape_ != other.shape_) return false;
  return std::memcmp(m_.data(), other.m_.data(),
                     sizeof(double) * static_cast<std::size_t>(m_.size())) == 0;
}

void Tensor::ensure_finite(const char* what) const {
  if (!m_.allFinite()) {
    throw NumericError("non-finite values after " + std::string(what));
  }
  if (m_.size() != shape_.elements()) {
    throw ShapeError("tensor storage does not match shape " +
                     shape_string(shape_));
  }
}

Tensor Tensor::reshaped_like(const Tensor& like, Matrix m) {
  if (m.size() != like.size()) {
    throw ShapeError("reshaped_like: element counts differ");
  }
  if (m.rows() != like.m_.rows() || m.cols() != like.m_.cols()) {
    throw ShapeError("reshaped_like: storage layout differs");
  }
  Tensor t;
  t.shape_ = like.shape_;
  t.m_ = std::move(m);
  return t;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (Index i = 0; i < shape.rank(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Matrix softmax_rows_kernel(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) {
    const double mx = m.row(i).maxCoeff();
    double sum = 0.0;
    for (Index j = 0; j < m.cols(); ++j) {
      const double e = std::exp(m(i, j) - mx);
      out(i, j) = e;
      sum += e;
    }
    out.row(i) /= sum;
  }
  return out;
}

Vector layer_norm_kernel(const Vector& v, double eps) {
  double sum = 0.0;
  for (Index i = 0; i < v.size(); ++i) sum += v(i);
  const double mean = sum / static_cast<double>(v.size());
  double var = 0.0;
  for (Index i = 0; i < v.size(); ++i) {
    const double c = v(i) - mean;
    var += c * c;
  }
  var /= static_cast<double>(v.size());
  const double inv = 1.0 / std::sqrt(var + eps);
  Vector out(v.size());
  for (Index i = 0; i < v.size(); ++i) out(i) = (v(i) - mean) * inv;
  return out;
}

std::pair<double, double> layer_norm_row_stats(const Matrix& m, Index row,
                                               double eps) {
  double sum = 0.0;
  for (Index j = 0; j < m.cols(); ++j) sum += m(row, j);
  const double mean = sum / static_cast<double>(m.cols());
  double var = 0.0;
  for (Index j = 0; j < m.cols(); ++j) {
    const double c = m(row, j) - mean;
    var += c * c;
  }
  var /= static_cast<double>(m.cols());
  return {mean, 1.0 / std::sqrt(var + eps)};
}

Tensor softmax_row(const Tensor& m) {
  if (m.rank() != 2) throw ShapeError("softmax_row: expected rank-2 input");
  if (m.cols() == 0 || m.rows() == 0) throw ShapeError("softmax_row: degenerate shape");
  return Tensor(softmax_rows_kernel(m.mat()));
}

Tensor layer_norm(const Tensor& v, double eps) {
  if (v.rank() != 1) throw ShapeError("layer_norm: expected rank-1 input");
  if (v.size() < 2) throw ShapeError("layer_norm: length must be >= 2");
  if (!(eps > 0.0)) throw NumericError("layer_norm: eps must be positive");
  return Tensor(Vector(layer_norm_kernel(v.mat().col(0), eps)));
}

Tensor xavier_init(const Shape& shape, Rng& rng) {
  if (shape.rank() < 1 || shape.rank() > 2) {
    throw ShapeError("xavier_init: rank must be 1 or 2");
  }
  for (Index d : shape) {
    if (d <= 0) throw ShapeError("xavier_init: zero-sized dimension");
  }
  const Index fan_out = shape[0];
  const Index fan_in = shape.rank() == 2 ? shape[1] : shape[0];
  const double bound =
      std::sqrt(6.0 / static_cast<double>(shape.rank() == 2 ? fan_in + fan_out
                                                            : fan_in + 1));
  Tensor t = Tensor::zeros(shape);
  double* p = t.data();
  for (Index i = 0; i < t.size(); ++i) p[i] = rng.uniform(-bound, bound);
  return t;
}

}  // namespace fedrel
