#include "kcsc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace kcsc {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t off_mode_size(const Shape& shape, std::size_t mode) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (i != mode) n *= shape[i];
  return n;
}

namespace detail {
void check_mode(const Shape& shape, std::size_t mode) {
  if (mode >= shape.size())
    throw DimensionError("mode " + std::to_string(mode) + " out of range for order " + std::to_string(shape.size()));
}
}  // namespace detail

namespace {
void validate_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor order must be at least 1");
  for (auto n : shape)
    if (n == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_to_string(shape));
}

void require_same_shape(const DenseTensor& a, const DenseTensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(what) + ": shape " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
}
}  // namespace

DenseTensor::DenseTensor(Shape shape, double fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_size(shape_), fill);
}

DenseTensor::DenseTensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != shape_size(shape_))
    throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_to_string(shape_));
}

std::size_t DenseTensor::linear_index(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) throw DimensionError("index order mismatch");
  std::size_t lin = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= shape_[i]) throw DimensionError("index out of range");
    lin = lin * shape_[i] + index[i];
  }
  return lin;
}

double& DenseTensor::at(std::span<const std::size_t> index) { return data_[linear_index(index)]; }
double DenseTensor::at(std::span<const std::size_t> index) const { return data_[linear_index(index)]; }

DenseTensor& DenseTensor::operator+=(const DenseTensor& other) {
  require_same_shape(*this, other, "tensor add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

DenseTensor& DenseTensor::operator-=(const DenseTensor& other) {
  require_same_shape(*this, other, "tensor subtract");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

DenseTensor& DenseTensor::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

KruskalActivation::KruskalActivation(std::vector<Matrix> f) : factors(std::move(f)) {
  if (factors.empty()) throw DimensionError("Kruskal activation needs at least one factor");
  for (const auto& m : factors)
    if (m.cols() != factors.front().cols())
      throw DimensionError("Kruskal factors must share the same column count");
}

KruskalActivation::KruskalActivation(const Shape& shape, std::size_t rank) {
  for (auto n : shape) factors.emplace_back(Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(rank)));
}

Shape KruskalActivation::shape() const {
  Shape s;
  for (const auto& f : factors) s.push_back(static_cast<std::size_t>(f.rows()));
  return s;
}

Dictionary::Dictionary(std::vector<DenseTensor> atoms, Shape signal_shape)
    : atoms_(std::move(atoms)), signal_shape_(std::move(signal_shape)) {
  if (atoms_.empty()) throw DimensionError("dictionary needs at least one atom");
  window_ = atoms_.front().shape();
  if (window_.size() != signal_shape_.size())
    throw DimensionError("atom order " + std::to_string(window_.size()) + " differs from signal order " +
                         std::to_string(signal_shape_.size()));
  for (std::size_t i = 0; i < window_.size(); ++i)
    if (window_[i] > signal_shape_[i])
      throw DimensionError("atom window " + shape_to_string(window_) + " exceeds signal shape " +
                           shape_to_string(signal_shape_));
  for (const auto& a : atoms_) {
    if (a.shape() != window_) throw DimensionError("all atoms must share the same support shape");
    if (frobenius_norm(a) > 1.0 + 1e-12) throw DimensionError("atom outside the unit Frobenius ball");
  }
}

DenseTensor Dictionary::padded(std::size_t k) const { return resize_anchored(atoms_.at(k), signal_shape_); }

namespace {

template <class M>
M khatri_rao_reverse_impl(std::span<const M> factors) {
  if (factors.empty()) throw DimensionError("khatri_rao_reverse needs at least one matrix");
  const auto R = factors.front().cols();
  Eigen::Index rows = 1;
  for (const auto& f : factors) {
    if (f.cols() != R) throw DimensionError("khatri_rao_reverse: matrices must share the column count");
    rows *= f.rows();
  }
  M out(rows, R);
  // Row index: i_0 + n_0 * (i_1 + n_1 * (...)), first factor fastest.
  for (Eigen::Index r = 0; r < R; ++r) {
    Eigen::Index len = 1;
    out(0, r) = typename M::Scalar(1);
    for (const auto& f : factors) {
      const Eigen::Index n = f.rows();
      // Expand in place from the back so earlier entries are still unread.
      for (Eigen::Index b = n; b-- > 0;)
        for (Eigen::Index a = len; a-- > 0;) out(b * len + a, r) = out(a, r) * f(b, r);
      len *= n;
    }
  }
  return out;
}

}  // namespace

Matrix khatri_rao_reverse(std::span<const Matrix> factors) { return khatri_rao_reverse_impl<Matrix>(factors); }
CMatrix khatri_rao_reverse(std::span<const CMatrix> factors) { return khatri_rao_reverse_impl<CMatrix>(factors); }

DenseTensor kruskal_compose(std::span<const Matrix> factors) {
  if (factors.empty()) throw DimensionError("kruskal_compose needs at least one factor");
  Shape shape;
  for (const auto& f : factors) {
    if (f.cols() != factors.front().cols())
      throw DimensionError("kruskal_compose: factors must share the rank");
    shape.push_back(static_cast<std::size_t>(f.rows()));
  }
  // Row-major vectorisation runs the last mode fastest, i.e. the reverse
  // Khatri-Rao product of the reversed factor list.
  std::vector<Matrix> reversed(factors.rbegin(), factors.rend());
  const Matrix kr = khatri_rao_reverse(std::span<const Matrix>(reversed));
  DenseTensor out(shape);
  Eigen::Map<Eigen::VectorXd>(out.data().data(), static_cast<Eigen::Index>(out.size())) = kr.rowwise().sum();
  return out;
}

Matrix unfold(const DenseTensor& t, std::size_t mode) { return detail::unfold_buffer<double>(t.data(), t.shape(), mode); }

DenseTensor fold(const Matrix& m, std::size_t mode, const Shape& shape) {
  return DenseTensor(shape, detail::fold_buffer<double>(m, mode, shape));
}

double frobenius_norm(std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

double frobenius_norm(const DenseTensor& t) { return frobenius_norm(t.data()); }

DenseTensor project_unit_ball(DenseTensor t) {
  const double n = frobenius_norm(t);
  if (n > 1.0) t *= 1.0 / n;
  return t;
}

DenseTensor resize_anchored(const DenseTensor& t, const Shape& shape) {
  if (shape.size() != t.order()) throw DimensionError("resize_anchored: order mismatch");
  DenseTensor out(shape);
  const std::size_t p = shape.size();
  std::vector<std::size_t> idx(p, 0);
  for (std::size_t lin = 0; lin < t.size(); ++lin) {
    bool inside = true;
    for (std::size_t m = 0; m < p; ++m) inside = inside && idx[m] < shape[m];
    if (inside) out.at(idx) = t[lin];
    for (std::size_t m = p; m-- > 0;) {
      if (++idx[m] < t.shape()[m]) break;
      idx[m] = 0;
    }
  }
  return out;
}

}  // namespace kcsc
