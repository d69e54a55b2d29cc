#pragma once

// Fourier machinery. Forward transforms are unnormalised; inverse transforms
// carry the 1 / prod(n_i) factor, so idft(dft(t)) == t and
//     ||t||_F^2 == ||dft(t)||_F^2 / prod(n_i).
// Every public spectrum is the full complex spectrum.

#include <span>
#include <vector>

#include "kcsc/tensor.hpp"

namespace kcsc {

class SpectralTensor {
 public:
  SpectralTensor() = default;
  explicit SpectralTensor(Shape shape);
  SpectralTensor(Shape shape, std::vector<Complex> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::span<Complex> data() { return data_; }
  std::span<const Complex> data() const { return data_; }
  Complex& operator[](std::size_t i) { return data_[i]; }
  const Complex& operator[](std::size_t i) const { return data_[i]; }

 private:
  Shape shape_;
  std::vector<Complex> data_;
};

namespace spectral {

enum class Direction { Forward, Inverse };

/// In-place multidimensional FFT of a row-major buffer. Inverse is normalised.
void fft_inplace(std::span<Complex> data, const Shape& shape, Direction dir);

/// In-place 1-D FFT of every column of `m`. Inverse is normalised.
void fft_columns(CMatrix& m, Direction dir);

SpectralTensor dft(const DenseTensor& t);
/// Real part of the inverse transform.
DenseTensor idft(const SpectralTensor& s);
SpectralTensor idft_complex(const SpectralTensor& s);

std::vector<CMatrix> modewise_dft(std::span<const Matrix> factors);

/// Complex-valued Kruskal operator: sum_r x_r^(1) o ... o x_r^(p).
SpectralTensor kruskal_compose(std::span<const CMatrix> factors);

DenseTensor circular_convolve(const DenseTensor& a, const DenseTensor& b);

CMatrix unfold(const SpectralTensor& s, std::size_t mode);

double squared_norm(std::span<const Complex> values);

}  // namespace spectral
}  // namespace kcsc
