#pragma once

// Portable tensor container (.ktns):
//   4 bytes  magic "KTNS"
//   u16      format version (1)
//   u16      order p
//   p x u64  dims
//   f64...   values, row-major
// All integers and floats little-endian.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "kcsc/tensor.hpp"

namespace kcsc::io {

inline constexpr std::uint16_t kTensorFormatVersion = 1;

void write_tensor(std::ostream& os, const DenseTensor& t);
DenseTensor read_tensor(std::istream& is);

void save_tensor(const std::filesystem::path& path, const DenseTensor& t);
DenseTensor load_tensor(const std::filesystem::path& path);

/// Matrices are stored as order-2 tensors (rows x cols).
void save_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix load_matrix(const std::filesystem::path& path);

/// Dictionary stack: order p+1 tensor of shape (K, w_1, ..., w_p).
DenseTensor stack_atoms(const Dictionary& d);
Dictionary unstack_atoms(const DenseTensor& stack, const Shape& signal_shape);

/// Signal sets: order p+1 tensor of shape (N, n_1, ..., n_p).
DenseTensor stack_signals(std::span<const DenseTensor> signals);
std::vector<DenseTensor> unstack_signals(const DenseTensor& stack);

}  // namespace kcsc::io
