#include "kcsc/stft.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "kcsc/parallel.hpp"
#include "kcsc/spectral.hpp"

namespace kcsc::stf {

void MultichannelRecording::validate() const {
  if (!(sample_rate > 0.0)) throw std::invalid_argument("sample rate must be positive");
  if (data.rows() == 0 || data.cols() == 0) throw DimensionError("empty recording");
  if (!data.allFinite()) throw std::invalid_argument("recording contains non-finite samples");
}

std::size_t StftConfig::hop() const {
  const auto h = static_cast<std::size_t>(std::llround(static_cast<double>(window) * (1.0 - overlap)));
  return std::max<std::size_t>(h, 1);
}

void StftConfig::validate(double sample_rate) const {
  if (window < 2) throw std::invalid_argument("STFT window must hold at least 2 samples");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw std::invalid_argument("overlap must lie in [0, 1)");
  const double nyquist = sample_rate / 2.0;
  if (apply_bandpass && !(band_low >= 0.0 && band_low < band_high && band_high < nyquist))
    throw std::invalid_argument("band-pass needs 0 <= low < high < Nyquist");
  if (!(crop_low <= crop_high)) throw std::invalid_argument("empty frequency crop");
}

MultichannelRecording bandpass(const MultichannelRecording& rec, double low, double high, double taper) {
  rec.validate();
  const double nyquist = rec.sample_rate / 2.0;
  if (!(low >= 0.0 && low < high && high < nyquist))
    throw std::invalid_argument("band-pass needs 0 <= low < high < Nyquist");
  const std::size_t T = rec.samples();
  auto gain = [&](double f) {
    if (f >= low && f <= high) return 1.0;
    double d = f < low ? low - f : f - high;
    if (taper <= 0.0 || d >= taper) return 0.0;
    return 0.5 * (1.0 + std::cos(std::numbers::pi * d / taper));
  };
  std::vector<double> g(T);
  for (std::size_t m = 0; m < T; ++m) {
    const std::size_t k = std::min(m, T - m);
    g[m] = gain(static_cast<double>(k) * rec.sample_rate / static_cast<double>(T));
  }
  MultichannelRecording out{rec.sample_rate, Matrix(rec.data.rows(), rec.data.cols())};
  parallel_for(rec.channels(), [&](std::size_t c) {
    std::vector<Complex> buf(T);
    for (std::size_t t = 0; t < T; ++t) buf[t] = rec.data(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t));
    spectral::fft_inplace(buf, {T}, spectral::Direction::Forward);
    for (std::size_t m = 0; m < T; ++m) buf[m] *= g[m];
    spectral::fft_inplace(buf, {T}, spectral::Direction::Inverse);
    for (std::size_t t = 0; t < T; ++t) out.data(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) = buf[t].real();
  });
  return out;
}

std::size_t frame_count(std::size_t samples, const StftConfig& config) {
  const std::size_t hop = config.hop();
  if (config.centered) return (samples + hop - 1) / hop + 1;
  if (samples < config.window) throw DimensionError("recording shorter than the STFT window");
  return (samples - config.window) / hop + 1;
}

std::pair<std::size_t, std::size_t> bin_range(double sample_rate, const StftConfig& config) {
  const double width = sample_rate / static_cast<double>(config.window);
  const std::size_t last_bin = config.window / 2;
  std::size_t first = last_bin + 1, end = 0;
  for (std::size_t k = 0; k <= last_bin; ++k) {
    const double f = static_cast<double>(k) * width;
    if (f >= config.crop_low - 1e-9 && f <= config.crop_high + 1e-9) {
      first = std::min(first, k);
      end = k + 1;
    }
  }
  if (end == 0) throw std::invalid_argument("frequency crop keeps no bins");
  return {first, end};
}

DenseTensor stft_tensor(const MultichannelRecording& rec, const StftConfig& config) {
  rec.validate();
  config.validate(rec.sample_rate);
  const MultichannelRecording filtered =
      config.apply_bandpass ? bandpass(rec, config.band_low, config.band_high) : rec;
  const std::size_t W = config.window;
  const std::size_t hop = config.hop();
  const std::size_t T = rec.samples();
  const std::size_t frames = frame_count(T, config);
  const auto [first, end] = bin_range(rec.sample_rate, config);
  const std::size_t bins = end - first;
  const std::size_t offset = config.centered ? W / 2 : 0;  // padding in front

  std::vector<double> hann(W);
  double wsum = 0.0;
  for (std::size_t i = 0; i < W; ++i) {
    // Periodic Hann, as used for spectral analysis.
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(W));
    wsum += hann[i];
  }

  DenseTensor out({rec.channels(), bins, frames});
  parallel_for(rec.channels(), [&](std::size_t c) {
    std::vector<Complex> buf(W);
    const auto row = filtered.data.row(static_cast<Eigen::Index>(c));
    for (std::size_t f = 0; f < frames; ++f) {
      for (std::size_t i = 0; i < W; ++i) {
        const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(f * hop + i) - static_cast<std::ptrdiff_t>(offset);
        const double v = (t >= 0 && static_cast<std::size_t>(t) < T) ? row(t) : 0.0;
        buf[i] = v * hann[i];
      }
      spectral::fft_inplace(buf, {W}, spectral::Direction::Forward);
      for (std::size_t b = 0; b < bins; ++b) {
        const double mag = std::abs(buf[first + b]) / wsum;
        out[(c * bins + b) * frames + f] = config.kind == SpectrumKind::Power ? mag * mag : mag;
      }
    }
  });
  return out;
}

namespace {

std::filesystem::path sidecar(const std::filesystem::path& path) {
  auto s = path;
  s += ".json";
  return s;
}

}  // namespace

MultichannelRecording read_raw(const std::filesystem::path& path) {
  std::ifstream meta(sidecar(path));
  if (!meta) throw IoError("cannot open recording header " + sidecar(path).string());
  nlohmann::json j;
  try {
    meta >> j;
  } catch (const std::exception& e) {
    throw IoError("malformed recording header " + sidecar(path).string() + ": " + e.what());
  }
  const auto channels = j.value("channels", std::size_t{0});
  const double rate = j.value("sample_rate", 0.0);
  const std::string dtype = j.value("dtype", std::string("f64"));
  if (channels == 0) throw IoError("recording header needs a positive channel count");
  if (dtype != "f32" && dtype != "f64") throw IoError("unsupported sample type " + dtype);
  const std::size_t width = dtype == "f32" ? 4 : 8;

  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open recording " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % (width * channels) != 0) throw IoError("recording size is not a whole number of frames");
  const std::size_t T = bytes.size() / (width * channels);
  MultichannelRecording rec{rate, Matrix(static_cast<Eigen::Index>(channels), static_cast<Eigen::Index>(T))};
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < channels; ++c) {
      const char* p = bytes.data() + (t * channels + c) * width;
      double v;
      if (width == 4) {
        float f;
        std::memcpy(&f, p, 4);
        v = f;
      } else {
        std::memcpy(&v, p, 8);
      }
      rec.data(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) = v;
    }
  rec.validate();
  return rec;
}

void write_raw(const std::filesystem::path& path, const MultichannelRecording& rec, bool single_precision) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (Eigen::Index t = 0; t < rec.data.cols(); ++t)
    for (Eigen::Index c = 0; c < rec.data.rows(); ++c) {
      if (single_precision) {
        const float f = static_cast<float>(rec.data(c, t));
        out.write(reinterpret_cast<const char*>(&f), 4);
      } else {
        const double v = rec.data(c, t);
        out.write(reinterpret_cast<const char*>(&v), 8);
      }
    }
  if (!out) throw IoError("failed writing " + path.string());
  nlohmann::json j{{"channels", rec.channels()}, {"sample_rate", rec.sample_rate},
                   {"dtype", single_precision ? "f32" : "f64"}};
  std::ofstream meta(sidecar(path));
  meta << j.dump(2) << '\n';
  if (!meta) throw IoError("failed writing " + sidecar(path).string());
}

MultichannelRecording read_csv(const std::filesystem::path& path, double sample_rate) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open recording " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw IoError("non-numeric value in " + path.string());
    }
    first = false;
    if (!rows.empty() && row.size() != rows.front().size()) throw IoError("ragged CSV rows in " + path.string());
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("no samples in " + path.string());
  MultichannelRecording rec{sample_rate, Matrix(static_cast<Eigen::Index>(rows.front().size()),
                                                static_cast<Eigen::Index>(rows.size()))};
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t c = 0; c < rows[t].size(); ++c)
      rec.data(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) = rows[t][c];
  rec.validate();
  return rec;
}

MultichannelRecording read_recording(const std::filesystem::path& path, std::optional<double> sample_rate) {
  if (!std::filesystem::exists(path)) throw IoError("no such recording: " + path.string());
  if (path.extension() == ".csv") {
    if (!sample_rate) throw std::invalid_argument("CSV recordings need an explicit sample rate");
    return read_csv(path, *sample_rate);
  }
  auto rec = read_raw(path);
  if (sample_rate) rec.sample_rate = *sample_rate;
  return rec;
}

}  // namespace kcsc::stf
