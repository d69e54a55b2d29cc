#pragma once

// Straightforward reference implementations for the tests. Nothing here uses
// the library's FFT, unfolding or Khatri-Rao code: everything is spelled out
// by explicit index loops.

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "kcsc/tensor.hpp"

namespace oracle {

using kcsc::Complex;
using kcsc::DenseTensor;
using kcsc::Shape;

inline std::vector<std::size_t> unravel(std::size_t lin, const Shape& shape) {
  std::vector<std::size_t> idx(shape.size());
  for (std::size_t m = shape.size(); m-- > 0;) {
    idx[m] = lin % shape[m];
    lin /= shape[m];
  }
  return idx;
}

inline std::size_t ravel(const std::vector<std::size_t>& idx, const Shape& shape) {
  std::size_t lin = 0;
  for (std::size_t m = 0; m < shape.size(); ++m) lin = lin * shape[m] + idx[m];
  return lin;
}

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto v : s) n *= v;
  return n;
}

/// Direct O(M^2) multidimensional DFT of complex data.
inline std::vector<Complex> dft(const std::vector<Complex>& x, const Shape& shape, bool inverse = false) {
  const std::size_t M = numel(shape);
  std::vector<Complex> out(M);
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t a = 0; a < M; ++a) {
    const auto ka = unravel(a, shape);
    Complex s{};
    for (std::size_t b = 0; b < M; ++b) {
      const auto nb = unravel(b, shape);
      double phase = 0.0;
      for (std::size_t m = 0; m < shape.size(); ++m)
        phase += static_cast<double>(ka[m] * nb[m] % shape[m]) / static_cast<double>(shape[m]);
      s += x[b] * std::polar(1.0, sign * 2.0 * std::numbers::pi * phase);
    }
    out[a] = inverse ? s / static_cast<double>(M) : s;
  }
  return out;
}

inline std::vector<Complex> dft(const DenseTensor& t) {
  std::vector<Complex> x(t.data().begin(), t.data().end());
  return dft(x, t.shape());
}

/// Circular convolution by direct summation.
inline DenseTensor circular_convolve(const DenseTensor& a, const DenseTensor& b) {
  const Shape& s = a.shape();
  DenseTensor out(s);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto ii = unravel(i, s);
    double acc = 0.0;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const auto jj = unravel(j, s);
      std::vector<std::size_t> diff(s.size());
      for (std::size_t m = 0; m < s.size(); ++m) diff[m] = (ii[m] + s[m] - jj[m]) % s[m];
      acc += a[ravel(diff, s)] * b[j];
    }
    out[i] = acc;
  }
  return out;
}

/// Atom zero-padded to `shape`, support at the origin.
inline DenseTensor pad(const DenseTensor& atom, const Shape& shape) {
  DenseTensor out(shape);
  for (std::size_t i = 0; i < atom.size(); ++i) out[ravel(unravel(i, atom.shape()), shape)] = atom[i];
  return out;
}

/// sum_r outer product of factor columns, by explicit loops.
inline DenseTensor compose(const std::vector<Eigen::MatrixXd>& f) {
  Shape shape;
  for (const auto& m : f) shape.push_back(static_cast<std::size_t>(m.rows()));
  DenseTensor out(shape);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto idx = unravel(i, shape);
    double s = 0.0;
    for (Eigen::Index r = 0; r < f.front().cols(); ++r) {
      double p = 1.0;
      for (std::size_t q = 0; q < f.size(); ++q) p *= f[q](static_cast<Eigen::Index>(idx[q]), r);
      s += p;
    }
    out[i] = s;
  }
  return out;
}

/// Column index of entry `idx` in the mode-q unfolding: the first remaining
/// mode varies fastest.
inline std::size_t unfold_column(const std::vector<std::size_t>& idx, const Shape& shape, std::size_t q) {
  std::size_t col = 0, stride = 1;
  for (std::size_t m = 0; m < shape.size(); ++m) {
    if (m == q) continue;
    col += idx[m] * stride;
    stride *= shape[m];
  }
  return col;
}

template <class T>
Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> unfold(const std::vector<T>& data, const Shape& shape, std::size_t q) {
  const std::size_t J = numel(shape) / shape[q];
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> out(shape[q], J);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto idx = unravel(i, shape);
    out(static_cast<Eigen::Index>(idx[q]), static_cast<Eigen::Index>(unfold_column(idx, shape, q))) = data[i];
  }
  return out;
}

/// Column r is the Kronecker product A_last(:,r) (x) ... (x) A_0(:,r).
template <class M>
M khatri_rao_reverse(const std::vector<M>& mats) {
  M out = M::Ones(1, mats.front().cols());
  for (const auto& a : mats) {
    M next(out.rows() * a.rows(), out.cols());
    for (Eigen::Index r = 0; r < out.cols(); ++r)
      for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < out.rows(); ++j) next(i * out.rows() + j, r) = a(i, r) * out(j, r);
    out = next;
  }
  return out;
}

template <class M>
M kron(const M& a, const M& b) {
  M out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// 1/2 || y - sum_k d_k * compose(Z_k) ||^2, all in the time domain.
inline double time_fidelity(const DenseTensor& y, const std::vector<DenseTensor>& atoms,
                            const std::vector<std::vector<Eigen::MatrixXd>>& factors) {
  DenseTensor r = y;
  for (std::size_t k = 0; k < atoms.size(); ++k) r -= circular_convolve(pad(atoms[k], y.shape()), compose(factors[k]));
  double s = 0.0;
  for (double v : r.data()) s += v * v;
  return 0.5 * s;
}

/// Minimiser of a convex 1-D function given its right derivative, found by
/// bisection on the sign change of the (monotone) derivative.
template <class D>
double bisect_min(D right_derivative, double lo, double hi) {
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (right_derivative(mid) >= 0.0)
      hi = mid;
    else
      lo = mid;
  }
  return right_derivative(lo) >= 0.0 ? lo : hi;
}

/// Golden-section minimisation of a unimodal function on [lo, hi].
template <class F>
double golden_min(F f, double lo, double hi, double tol = 1e-13) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
  return m;
}

inline DenseTensor random_tensor(const Shape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  DenseTensor t(shape);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

inline DenseTensor random_atom(const Shape& window, std::mt19937_64& rng) {
  DenseTensor a = random_tensor(window, rng);
  double n = 0.0;
  for (double v : a.data()) n += v * v;
  a *= 1.0 / std::sqrt(n);
  return a;
}

/// Dense Fourier-domain operator of the mode-q subproblem,
///     Phi = [Gamma_1 (B_1 (x) I), ..., Gamma_K (B_K (x) I)],
/// mapping the stacked transformed mode-q factors (column (k*R + r)*n_q + t)
/// to the column-major vectorised mode-q unfolding of the transformed model.
/// Built from the direct DFT and explicit Kronecker products.
struct DenseModeOperator {
  Eigen::MatrixXcd phi;
  Eigen::VectorXcd y;  ///< vectorised unfolding of the transformed signal
  std::size_t nq = 0;
};

inline DenseModeOperator dense_mode_operator(const DenseTensor& y, const std::vector<DenseTensor>& atoms,
                                             const std::vector<std::vector<Eigen::MatrixXd>>& factors, std::size_t q) {
  const Shape& shape = y.shape();
  const std::size_t nq = shape[q];
  const std::size_t J = numel(shape) / nq;
  const std::size_t K = atoms.size();
  const auto R = factors.front().front().cols();
  DenseModeOperator op;
  op.nq = nq;
  op.phi = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(nq * J), static_cast<Eigen::Index>(K * nq) * R);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<Eigen::MatrixXcd> others;
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i == q) continue;
      const Eigen::MatrixXd& f = factors[k][i];
      Eigen::MatrixXcd fh(f.rows(), f.cols());
      for (Eigen::Index r = 0; r < f.cols(); ++r) {
        std::vector<Complex> col(f.col(r).data(), f.col(r).data() + f.rows());
        const auto c = dft(col, {static_cast<std::size_t>(f.rows())});
        for (Eigen::Index j = 0; j < f.rows(); ++j) fh(j, r) = c[static_cast<std::size_t>(j)];
      }
      others.push_back(fh);
    }
    const Eigen::MatrixXcd B = khatri_rao_reverse(others);  // J x R
    const Eigen::MatrixXcd dk = unfold(dft(pad(atoms[k], shape)), shape, q);
    Eigen::VectorXcd gamma(static_cast<Eigen::Index>(nq * J));
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t t = 0; t < nq; ++t)
        gamma(static_cast<Eigen::Index>(j * nq + t)) = dk(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j));
    const Eigen::MatrixXcd BI = kron<Eigen::MatrixXcd>(B, Eigen::MatrixXcd::Identity(static_cast<Eigen::Index>(nq),
                                                                                     static_cast<Eigen::Index>(nq)));
    op.phi.middleCols(static_cast<Eigen::Index>(k * nq) * R, static_cast<Eigen::Index>(nq) * R) = gamma.asDiagonal() * BI;
  }
  const Eigen::MatrixXcd yu = unfold(dft(y), shape, q);
  op.y = Eigen::Map<const Eigen::VectorXcd>(yu.data(), yu.size());
  return op;
}

/// Stacked transformed mode-q factors in the operator's column order.
inline Eigen::VectorXcd stacked_spectrum(const std::vector<std::vector<Eigen::MatrixXd>>& factors, std::size_t q) {
  std::vector<Complex> out;
  for (const auto& fk : factors) {
    const Eigen::MatrixXd& f = fk[q];
    for (Eigen::Index r = 0; r < f.cols(); ++r) {
      std::vector<Complex> col(f.col(r).data(), f.col(r).data() + f.rows());
      const auto c = dft(col, {static_cast<std::size_t>(f.rows())});
      out.insert(out.end(), c.begin(), c.end());
    }
  }
  return Eigen::Map<Eigen::VectorXcd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

}  // namespace oracle
