#pragma once

// Dense order-p tensors, Kruskal (CP) factor sets and the unfolding algebra.
//
// Storage is row-major: the last index varies fastest. Mode-q unfoldings use
// the Kolda-Bader column order, where among the remaining modes the FIRST one
// varies fastest. With that order
//
//     unfold(kruskal_compose(F), q) == F[q] * khatri_rao_reverse(F \ {q})^T
//
// holds exactly, where khatri_rao_reverse multiplies the list back to front.
// Modes are zero-based throughout the code.

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kcsc/errors.hpp"

namespace kcsc {

using Shape = std::vector<std::size_t>;
using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXd;
using CMatrix = Eigen::MatrixXcd;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Product of all entries of `shape` except `mode`.
std::size_t off_mode_size(const Shape& shape, std::size_t mode);

class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(Shape shape, double fill = 0.0);
  DenseTensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t order() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t mode) const { return shape_.at(mode); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::span<const std::size_t> index);
  double at(std::span<const std::size_t> index) const;
  std::size_t linear_index(std::span<const std::size_t> index) const;

  DenseTensor& operator+=(const DenseTensor& other);
  DenseTensor& operator-=(const DenseTensor& other);
  DenseTensor& operator*=(double s);

  friend DenseTensor operator+(DenseTensor a, const DenseTensor& b) { return a += b; }
  friend DenseTensor operator-(DenseTensor a, const DenseTensor& b) { return a -= b; }
  friend DenseTensor operator*(DenseTensor a, double s) { return a *= s; }

  bool operator==(const DenseTensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Rank-R activation tensor in factored form: factor q is (n_q x R).
struct KruskalActivation {
  std::vector<Matrix> factors;

  KruskalActivation() = default;
  explicit KruskalActivation(std::vector<Matrix> f);
  /// All-zero factors for a tensor of `shape`.
  KruskalActivation(const Shape& shape, std::size_t rank);

  std::size_t rank() const { return factors.empty() ? 0 : static_cast<std::size_t>(factors.front().cols()); }
  std::size_t order() const { return factors.size(); }
  Shape shape() const;
};

/// K atoms sharing one support shape, each in the unit Frobenius ball.
class Dictionary {
 public:
  Dictionary() = default;
  Dictionary(std::vector<DenseTensor> atoms, Shape signal_shape);

  std::size_t size() const { return atoms_.size(); }
  const Shape& window() const { return window_; }
  const Shape& signal_shape() const { return signal_shape_; }
  const DenseTensor& atom(std::size_t k) const { return atoms_.at(k); }
  const std::vector<DenseTensor>& atoms() const { return atoms_; }

  /// Atom k zero-padded to the signal shape, support anchored at the origin.
  DenseTensor padded(std::size_t k) const;

 private:
  std::vector<DenseTensor> atoms_;
  Shape window_;
  Shape signal_shape_;
};

DenseTensor kruskal_compose(std::span<const Matrix> factors);
inline DenseTensor kruskal_compose(const KruskalActivation& z) { return kruskal_compose(z.factors); }

/// Column r of the result is factors[last](:,r) (x) ... (x) factors[0](:,r).
Matrix khatri_rao_reverse(std::span<const Matrix> factors);
CMatrix khatri_rao_reverse(std::span<const CMatrix> factors);

Matrix unfold(const DenseTensor& t, std::size_t mode);
DenseTensor fold(const Matrix& m, std::size_t mode, const Shape& shape);

double frobenius_norm(const DenseTensor& t);
double frobenius_norm(std::span<const double> values);
DenseTensor project_unit_ball(DenseTensor t);

/// Zero-pad (anchored at the origin) or crop `t` to `shape`.
DenseTensor resize_anchored(const DenseTensor& t, const Shape& shape);

namespace detail {

void check_mode(const Shape& shape, std::size_t mode);

/// Kolda-Bader mode unfolding of a row-major buffer.
template <class T>
Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> unfold_buffer(std::span<const T> data, const Shape& shape,
                                                              std::size_t mode) {
  check_mode(shape, mode);
  const std::size_t p = shape.size();
  const std::size_t cols = off_mode_size(shape, mode);
  // Column stride of every mode in the unfolded layout.
  std::vector<std::size_t> col_stride(p, 0);
  std::size_t acc = 1;
  for (std::size_t m = 0; m < p; ++m) {
    if (m == mode) continue;
    col_stride[m] = acc;
    acc *= shape[m];
  }
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> out(shape[mode], cols);
  std::vector<std::size_t> idx(p, 0);
  for (std::size_t lin = 0; lin < data.size(); ++lin) {
    std::size_t col = 0;
    for (std::size_t m = 0; m < p; ++m) col += idx[m] * col_stride[m];
    out(idx[mode], col) = data[lin];
    for (std::size_t m = p; m-- > 0;) {
      if (++idx[m] < shape[m]) break;
      idx[m] = 0;
    }
  }
  return out;
}

template <class T>
std::vector<T> fold_buffer(const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& m, std::size_t mode,
                           const Shape& shape) {
  check_mode(shape, mode);
  const std::size_t p = shape.size();
  if (static_cast<std::size_t>(m.rows()) != shape[mode] ||
      static_cast<std::size_t>(m.cols()) != off_mode_size(shape, mode)) {
    throw DimensionError("fold: matrix does not match shape " + shape_to_string(shape));
  }
  std::vector<std::size_t> col_stride(p, 0);
  std::size_t acc = 1;
  for (std::size_t k = 0; k < p; ++k) {
    if (k == mode) continue;
    col_stride[k] = acc;
    acc *= shape[k];
  }
  std::vector<T> out(shape_size(shape));
  std::vector<std::size_t> idx(p, 0);
  for (std::size_t lin = 0; lin < out.size(); ++lin) {
    std::size_t col = 0;
    for (std::size_t k = 0; k < p; ++k) col += idx[k] * col_stride[k];
    out[lin] = m(idx[mode], col);
    for (std::size_t k = p; k-- > 0;) {
      if (++idx[k] < shape[k]) break;
      idx[k] = 0;
    }
  }
  return out;
}

}  // namespace detail
}  // namespace kcsc
