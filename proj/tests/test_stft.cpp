#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "kcsc/spectral.hpp"
#include "kcsc/stft.hpp"

using namespace kcsc;
using stf::MultichannelRecording;

namespace {

MultichannelRecording tones(double rate, std::size_t T, std::vector<std::pair<double, double>> parts,
                            std::size_t channels = 1) {
  MultichannelRecording rec{rate, Matrix::Zero(static_cast<Eigen::Index>(channels), static_cast<Eigen::Index>(T))};
  for (Eigen::Index c = 0; c < rec.data.rows(); ++c)
    for (std::size_t t = 0; t < T; ++t)
      for (auto [f, a] : parts)
        rec.data(c, static_cast<Eigen::Index>(t)) += a * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(t) / rate);
  return rec;
}

double rms(const Eigen::RowVectorXd& v) { return std::sqrt(v.squaredNorm() / static_cast<double>(v.size())); }

}  // namespace

TEST_CASE("band-pass keeps in-band tones and removes out-of-band ones") {
  const auto in = tones(250.0, 10000, {{10.0, 1.0}});
  const auto out = stf::bandpass(in, 1.0, 20.0);
  CHECK(rms(out.data.row(0)) / rms(in.data.row(0)) == doctest::Approx(1.0).epsilon(0.01));

  const auto hi = tones(250.0, 10000, {{50.0, 1.0}});
  CHECK(rms(stf::bandpass(hi, 1.0, 20.0).data.row(0)) <= 1e-3 * rms(hi.data.row(0)));

  const auto mix = tones(250.0, 10000, {{5.0, 1.0}, {40.0, 1.0}});
  const auto low = tones(250.0, 10000, {{5.0, 1.0}});
  const Eigen::RowVectorXd a = stf::bandpass(mix, 1.0, 20.0).data.row(0), b = low.data.row(0);
  const double corr = (a.array() - a.mean()).matrix().dot((b.array() - b.mean()).matrix()) /
                      ((a.array() - a.mean()).matrix().norm() * (b.array() - b.mean()).matrix().norm());
  CHECK(corr > 0.99);

  CHECK_THROWS(stf::bandpass(in, 1.0, 200.0));
  CHECK_THROWS(stf::bandpass(in, 30.0, 20.0));
}

TEST_CASE("band-pass attenuates beyond the taper by 60 dB") {
  std::mt19937_64 rng(61);
  std::normal_distribution<double> g;
  MultichannelRecording rec{250.0, Matrix(1, 5000)};
  for (Eigen::Index t = 0; t < 5000; ++t) rec.data(0, t) = g(rng);
  const auto out = stf::bandpass(rec, 2.0, 10.0);
  std::vector<Complex> spec(out.data.row(0).data(), out.data.row(0).data() + 5000);
  spectral::fft_inplace(spec, {5000}, spectral::Direction::Forward);
  std::vector<Complex> ref(rec.data.row(0).data(), rec.data.row(0).data() + 5000);
  spectral::fft_inplace(ref, {5000}, spectral::Direction::Forward);
  double outside = 0.0, total = 0.0;
  for (std::size_t m = 0; m < 5000; ++m) {
    const double f = static_cast<double>(std::min(m, 5000 - m)) * 250.0 / 5000.0;
    total += std::norm(ref[m]);
    if (f < 1.5 - 1e-9 || f > 10.5 + 1e-9) outside += std::norm(spec[m]);
  }
  CHECK(outside <= 1e-6 * total);
}

TEST_CASE("frame and bin counts") {
  stf::StftConfig cfg;
  CHECK(stf::frame_count(250000, cfg) == 490);
  const auto [first, end] = stf::bin_range(250.0, cfg);
  CHECK(first == 0);
  CHECK(end - first == 82);
  stf::StftConfig plain = cfg;
  plain.centered = false;
  for (std::size_t T : {1024u, 1500u, 250000u, 4096u})
    for (double overlap : {0.0, 0.5, 0.75}) {
      plain.overlap = overlap;
      CHECK(stf::frame_count(T, plain) == (T - 1024) / plain.hop() + 1);
    }
  CHECK_THROWS(stf::frame_count(100, plain));
}

TEST_CASE("tensor shape for a long recording") {
  const auto rec = tones(250.0, 250000, {{6.0, 1.0}}, 2);
  const DenseTensor t = stf::stft_tensor(rec, {});
  CHECK(t.shape() == Shape{2, 82, 490});
  for (double v : t.data()) CHECK(v >= 0.0);
  stf::StftConfig plain;
  plain.centered = false;
  CHECK(stf::stft_tensor(rec, plain).shape() == Shape{2, 82, 487});
}

TEST_CASE("zero signal gives a zero tensor") {
  MultichannelRecording rec{250.0, Matrix::Zero(3, 3000)};
  const DenseTensor t = stf::stft_tensor(rec, {});
  for (double v : t.data()) CHECK(v == 0.0);
}

TEST_CASE("a tone at an exact bin stays in the main lobe") {
  const double rate = 256.0;
  const std::size_t W = 256;
  const std::size_t k = 20;
  const auto rec = tones(rate, 8192, {{static_cast<double>(k) * rate / W, 1.0}});
  stf::StftConfig cfg;
  cfg.window = W;
  cfg.apply_bandpass = false;
  cfg.crop_high = rate / 2;
  cfg.centered = false;
  cfg.kind = stf::SpectrumKind::Power;
  const DenseTensor t = stf::stft_tensor(rec, cfg);
  const std::size_t bins = t.dim(1), frames = t.dim(2);
  std::vector<double> energy(bins, 0.0);
  for (std::size_t b = 0; b < bins; ++b)
    for (std::size_t f = 0; f < frames; ++f) energy[b] += t[b * frames + f];
  const auto peak = static_cast<std::size_t>(std::max_element(energy.begin(), energy.end()) - energy.begin());
  CHECK(peak == k);
  double total = 0.0, lobe = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    total += energy[b];
    if (b + 1 >= k && b <= k + 1) lobe += energy[b];
  }
  CHECK((total - lobe) < 0.01 * total);
  // Magnitude scaling: amplitude 1 sine -> 1/2 at the peak bin.
  cfg.kind = stf::SpectrumKind::Magnitude;
  CHECK(stf::stft_tensor(rec, cfg)[k * frames + 3] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("spectrogram energy matches the windowed signal energy") {
  std::mt19937_64 rng(62);
  std::normal_distribution<double> g;
  const std::size_t W = 128, T = 64000;
  MultichannelRecording rec{100.0, Matrix(1, static_cast<Eigen::Index>(T))};
  for (std::size_t t = 0; t < T; ++t) rec.data(0, static_cast<Eigen::Index>(t)) = g(rng);
  stf::StftConfig cfg;
  cfg.window = W;
  cfg.apply_bandpass = false;
  cfg.crop_high = 50.0;
  cfg.centered = false;
  cfg.kind = stf::SpectrumKind::Power;
  const DenseTensor t = stf::stft_tensor(rec, cfg);
  const std::size_t bins = t.dim(1), frames = t.dim(2);
  CHECK(bins == W / 2 + 1);
  const double wsum = static_cast<double>(W) / 2.0;
  double spec_energy = 0.0;
  for (std::size_t b = 0; b < bins; ++b)
    for (std::size_t f = 0; f < frames; ++f) {
      const double weight = (b == 0 || b == W / 2) ? 1.0 : 2.0;
      spec_energy += weight * t[b * frames + f] * wsum * wsum / static_cast<double>(W);
    }
  double windowed = 0.0;
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t i = 0; i < W; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(W));
      windowed += std::pow(w * rec.data(0, static_cast<Eigen::Index>(f * (W / 2) + i)), 2);
    }
  CHECK(spec_energy == doctest::Approx(windowed).epsilon(1e-9));
  // Hann power constant 3/8 per window, two windows per sample.
  CHECK(spec_energy == doctest::Approx(0.75 * rec.data.squaredNorm()).epsilon(0.02));
}

TEST_CASE("recording readers") {
  const auto dir = std::filesystem::temp_directory_path() / "kcsc_stft_test";
  std::filesystem::create_directories(dir);
  const auto rec = tones(250.0, 300, {{3.0, 1.0}}, 3);
  stf::write_raw(dir / "rec.f64", rec);
  const auto back = stf::read_recording(dir / "rec.f64");
  CHECK(back.sample_rate == 250.0);
  CHECK(back.data == rec.data);
  stf::write_raw(dir / "rec.f32", rec, true);
  CHECK((stf::read_recording(dir / "rec.f32").data - rec.data).cwiseAbs().maxCoeff() < 1e-6);
  {
    std::ofstream csv(dir / "rec.csv");
    csv << "a,b\n1,2\n3,4\n5,6\n";
  }
  const auto c = stf::read_recording(dir / "rec.csv", 100.0);
  CHECK(c.channels() == 2);
  CHECK(c.samples() == 3);
  CHECK(c.data(1, 2) == 6.0);
  CHECK_THROWS(stf::read_recording(dir / "rec.csv"));
  CHECK_THROWS_AS(stf::read_recording(dir / "nope.f64"), IoError);
  std::filesystem::remove_all(dir);
}
