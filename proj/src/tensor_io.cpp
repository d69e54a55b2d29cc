#include "kcsc/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace kcsc::io {

namespace {

constexpr std::array<char, 4> kMagic{'K', 'T', 'N', 'S'};

template <class T>
void put_le(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) throw IoError("truncated tensor stream");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace

void write_tensor(std::ostream& os, const DenseTensor& t) {
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint16_t>(os, kTensorFormatVersion);
  put_le<std::uint16_t>(os, static_cast<std::uint16_t>(t.order()));
  for (auto n : t.shape()) put_le<std::uint64_t>(os, n);
  for (double v : t.data()) put_le<double>(os, v);
  if (!os) throw IoError("failed writing tensor stream");
}

DenseTensor read_tensor(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw IoError("not a KTNS tensor (bad magic)");
  const auto version = get_le<std::uint16_t>(is);
  if (version != kTensorFormatVersion) throw IoError("unsupported KTNS version " + std::to_string(version));
  const auto order = get_le<std::uint16_t>(is);
  if (order == 0) throw IoError("KTNS tensor with order 0");
  Shape shape(order);
  for (auto& n : shape) n = static_cast<std::size_t>(get_le<std::uint64_t>(is));
  std::vector<double> data(shape_size(shape));
  for (auto& v : data) v = get_le<double>(is);
  return DenseTensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const DenseTensor& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
}

DenseTensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  try {
    return read_tensor(is);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void save_matrix(const std::filesystem::path& path, const Matrix& m) {
  DenseTensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  save_tensor(path, t);
}

Matrix load_matrix(const std::filesystem::path& path) {
  const DenseTensor t = load_tensor(path);
  if (t.order() != 2) throw IoError(path.string() + ": expected an order-2 tensor");
  Matrix m(t.dim(0), t.dim(1));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = t[static_cast<std::size_t>(i * m.cols() + j)];
  return m;
}

DenseTensor stack_atoms(const Dictionary& d) {
  Shape shape{d.size()};
  shape.insert(shape.end(), d.window().begin(), d.window().end());
  DenseTensor out(shape);
  const std::size_t stride = shape_size(d.window());
  for (std::size_t k = 0; k < d.size(); ++k)
    std::copy(d.atom(k).data().begin(), d.atom(k).data().end(), out.data().begin() + k * stride);
  return out;
}

Dictionary unstack_atoms(const DenseTensor& stack, const Shape& signal_shape) {
  if (stack.order() < 2) throw DimensionError("dictionary stack must have order >= 2");
  const Shape window(stack.shape().begin() + 1, stack.shape().end());
  const std::size_t stride = shape_size(window);
  std::vector<DenseTensor> atoms;
  for (std::size_t k = 0; k < stack.dim(0); ++k) {
    auto first = stack.data().begin() + k * stride;
    atoms.emplace_back(window, std::vector<double>(first, first + stride));
  }
  return Dictionary(std::move(atoms), signal_shape);
}

DenseTensor stack_signals(std::span<const DenseTensor> signals) {
  if (signals.empty()) throw DimensionError("no signals to stack");
  Shape shape{signals.size()};
  const Shape& inner = signals.front().shape();
  shape.insert(shape.end(), inner.begin(), inner.end());
  DenseTensor out(shape);
  const std::size_t stride = shape_size(inner);
  for (std::size_t n = 0; n < signals.size(); ++n) {
    if (signals[n].shape() != inner)
      throw DimensionError("signal " + std::to_string(n) + " has shape " + shape_to_string(signals[n].shape()) +
                           ", expected " + shape_to_string(inner));
    std::copy(signals[n].data().begin(), signals[n].data().end(), out.data().begin() + n * stride);
  }
  return out;
}

std::vector<DenseTensor> unstack_signals(const DenseTensor& stack) {
  if (stack.order() < 2) throw DimensionError("signal stack must have order >= 2");
  const Shape inner(stack.shape().begin() + 1, stack.shape().end());
  const std::size_t stride = shape_size(inner);
  std::vector<DenseTensor> out;
  for (std::size_t n = 0; n < stack.dim(0); ++n) {
    auto first = stack.data().begin() + n * stride;
    out.emplace_back(inner, std::vector<double>(first, first + stride));
  }
  return out;
}

}  // namespace kcsc::io
