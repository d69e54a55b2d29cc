#pragma once

// Multichannel recordings to channels x frequencies x frames spectrogram
// tensors.

#include <filesystem>
#include <optional>

#include "kcsc/tensor.hpp"

namespace kcsc::stf {

struct MultichannelRecording {
  double sample_rate = 0.0;
  Matrix data;  ///< channels x samples

  std::size_t channels() const { return static_cast<std::size_t>(data.rows()); }
  std::size_t samples() const { return static_cast<std::size_t>(data.cols()); }
  void validate() const;
};

enum class SpectrumKind { Magnitude, Power };

struct StftConfig {
  std::size_t window = 1024;
  double overlap = 0.5;
  bool apply_bandpass = true;
  double band_low = 1.0;   ///< Hz
  double band_high = 20.0;
  double crop_low = 0.0;   ///< kept frequency bins, Hz (inclusive)
  double crop_high = 20.0;
  SpectrumKind kind = SpectrumKind::Magnitude;
  /// Pad window/2 zeros on both ends (and the tail up to a whole hop) so every
  /// sample is covered; frames = ceil(T / hop) + 1. Without it frames =
  /// floor((T - window) / hop) + 1.
  bool centered = true;

  std::size_t hop() const;
  void validate(double sample_rate) const;
};

inline constexpr double kTaperWidth = 0.5;  ///< Hz

/// Zero-phase FFT filter: unit gain on [low, high], raised-cosine roll-off of
/// kTaperWidth on each side, zero beyond.
MultichannelRecording bandpass(const MultichannelRecording& rec, double low, double high,
                               double taper = kTaperWidth);

std::size_t frame_count(std::size_t samples, const StftConfig& config);
/// Half-open range [first, end) of the one-sided bins kept by the crop.
std::pair<std::size_t, std::size_t> bin_range(double sample_rate, const StftConfig& config);

/// Hann-windowed STFT of every channel; values scaled by 1 / sum(window).
DenseTensor stft_tensor(const MultichannelRecording& rec, const StftConfig& config);

/// Raw interleaved little-endian f32/f64 samples (frame-major: all channels of
/// sample 0, then sample 1, ...) with a JSON sidecar `<path>.json` holding
/// {"channels", "sample_rate", "dtype": "f32"|"f64"}.
MultichannelRecording read_raw(const std::filesystem::path& path);
void write_raw(const std::filesystem::path& path, const MultichannelRecording& rec, bool single_precision = false);

/// CSV with one row per sample and one column per channel; a non-numeric first
/// row is treated as a header.
MultichannelRecording read_csv(const std::filesystem::path& path, double sample_rate);

/// Dispatches on the extension: .csv needs `sample_rate`, anything else is raw.
MultichannelRecording read_recording(const std::filesystem::path& path, std::optional<double> sample_rate = {});

}  // namespace kcsc::stf
