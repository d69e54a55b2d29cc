#include "kcsc/spectral.hpp"

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>
#include <tuple>

namespace kcsc {

SpectralTensor::SpectralTensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_)) {}

SpectralTensor::SpectralTensor(Shape shape, std::vector<Complex> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) throw DimensionError("spectral data length does not match shape");
}

namespace spectral {

namespace {

// FFTW planning is not thread-safe; execution with the new-array interface is.
// Plans are in-place, unaligned and created once per geometry.
struct PlanKey {
  std::vector<int> dims;
  int howmany;
  int stride;
  int dist;
  int sign;
  auto operator<=>(const PlanKey&) const = default;
};

class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(const PlanKey& key) {
    std::lock_guard lock(mutex_);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    std::size_t total = 1;
    for (int d : key.dims) total *= static_cast<std::size_t>(d);
    const std::size_t span_len = (total - 1) * static_cast<std::size_t>(key.stride) +
                                 static_cast<std::size_t>(key.howmany - 1) * static_cast<std::size_t>(key.dist) + 1;
    std::unique_ptr<fftw_complex, decltype(&fftw_free)> scratch(
        static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * span_len)), &fftw_free);
    fftw_plan plan = fftw_plan_many_dft(static_cast<int>(key.dims.size()), key.dims.data(), key.howmany, scratch.get(),
                                        nullptr, key.stride, key.dist, scratch.get(), nullptr, key.stride, key.dist,
                                        key.sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!plan) throw std::runtime_error("FFTW planning failed");
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<PlanKey, fftw_plan> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

void execute(const PlanKey& key, Complex* data) {
  auto* p = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(plan_cache().get(key), p, p);
}

}  // namespace

void fft_inplace(std::span<Complex> data, const Shape& shape, Direction dir) {
  if (data.size() != shape_size(shape)) throw DimensionError("fft: buffer does not match shape");
  PlanKey key{{}, 1, 1, 0, dir == Direction::Forward ? FFTW_FORWARD : FFTW_BACKWARD};
  for (auto n : shape) key.dims.push_back(static_cast<int>(n));
  execute(key, data.data());
  if (dir == Direction::Inverse) {
    const double s = 1.0 / static_cast<double>(data.size());
    for (auto& v : data) v *= s;
  }
}

void fft_columns(CMatrix& m, Direction dir) {
  if (m.size() == 0) return;
  // Column-major storage: each column is contiguous.
  PlanKey key{{static_cast<int>(m.rows())}, static_cast<int>(m.cols()), 1, static_cast<int>(m.rows()),
              dir == Direction::Forward ? FFTW_FORWARD : FFTW_BACKWARD};
  execute(key, m.data());
  if (dir == Direction::Inverse) m /= static_cast<double>(m.rows());
}

SpectralTensor dft(const DenseTensor& t) {
  std::vector<Complex> data(t.data().begin(), t.data().end());
  fft_inplace(data, t.shape(), Direction::Forward);
  return SpectralTensor(t.shape(), std::move(data));
}

SpectralTensor idft_complex(const SpectralTensor& s) {
  std::vector<Complex> data(s.data().begin(), s.data().end());
  fft_inplace(data, s.shape(), Direction::Inverse);
  return SpectralTensor(s.shape(), std::move(data));
}

DenseTensor idft(const SpectralTensor& s) {
  const SpectralTensor c = idft_complex(s);
  DenseTensor out(s.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c[i].real();
  return out;
}

std::vector<CMatrix> modewise_dft(std::span<const Matrix> factors) {
  std::vector<CMatrix> out;
  out.reserve(factors.size());
  for (const auto& f : factors) {
    CMatrix c = f.cast<Complex>();
    fft_columns(c, Direction::Forward);
    out.push_back(std::move(c));
  }
  return out;
}

SpectralTensor kruskal_compose(std::span<const CMatrix> factors) {
  if (factors.empty()) throw DimensionError("kruskal_compose needs at least one factor");
  Shape shape;
  for (const auto& f : factors) {
    if (f.cols() != factors.front().cols()) throw DimensionError("kruskal_compose: factors must share the rank");
    shape.push_back(static_cast<std::size_t>(f.rows()));
  }
  std::vector<CMatrix> reversed(factors.rbegin(), factors.rend());
  const CMatrix kr = khatri_rao_reverse(std::span<const CMatrix>(reversed));
  SpectralTensor out(shape);
  Eigen::Map<Eigen::VectorXcd>(out.data().data(), static_cast<Eigen::Index>(out.size())) = kr.rowwise().sum();
  return out;
}

DenseTensor circular_convolve(const DenseTensor& a, const DenseTensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError("circular_convolve: shape " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  SpectralTensor fa = dft(a);
  const SpectralTensor fb = dft(b);
  for (std::size_t i = 0; i < fa.size(); ++i) fa[i] *= fb[i];
  return idft(fa);
}

CMatrix unfold(const SpectralTensor& s, std::size_t mode) {
  return detail::unfold_buffer<Complex>(s.data(), s.shape(), mode);
}

double squared_norm(std::span<const Complex> values) {
  double acc = 0.0;
  for (const auto& v : values) acc += std::norm(v);
  return acc;
}

}  // namespace spectral
}  // namespace kcsc
