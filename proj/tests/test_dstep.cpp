#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kcsc/dstep.hpp"
#include "kcsc/solver.hpp"
#include "oracles.hpp"

using namespace kcsc;

namespace {

std::vector<SpectralTensor> random_spectra(const Shape& shape, std::size_t K, std::mt19937_64& rng) {
  std::vector<SpectralTensor> out;
  for (std::size_t k = 0; k < K; ++k) out.push_back(spectral::dft(oracle::random_tensor(shape, rng)));
  return out;
}

}  // namespace

TEST_CASE("Sherman-Morrison solves match dense per-frequency solves") {
  std::mt19937_64 rng(21);
  for (const Shape& shape : {Shape{8, 8, 8}, Shape{4, 6, 5}}) {
    for (std::size_t K : {1u, 2u, 3u})
      for (std::size_t N : {1u, 2u}) {
        std::vector<std::vector<SpectralTensor>> acts;
        for (std::size_t n = 0; n < N; ++n) acts.push_back(random_spectra(shape, K, rng));
        const double rho = 0.7;
        const dstep::ShermanMorrisonSolver solver(acts, rho);
        std::uniform_int_distribution<std::size_t> pick(0, shape_size(shape) - 1);
        double worst = 0.0;
        for (int probe = 0; probe < 40; ++probe) {
          const std::size_t m = pick(rng);
          Eigen::MatrixXcd A = rho * Eigen::MatrixXcd::Identity(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K));
          for (std::size_t n = 0; n < N; ++n) {
            Eigen::VectorXcd a(static_cast<Eigen::Index>(K));
            for (std::size_t k = 0; k < K; ++k) a(static_cast<Eigen::Index>(k)) = acts[n][k][m];
            A += a.conjugate() * a.transpose();
          }
          const Eigen::VectorXcd b = Eigen::VectorXcd::Random(static_cast<Eigen::Index>(K));
          const Eigen::VectorXcd want = A.fullPivLu().solve(b);
          const Eigen::VectorXcd got = solver.solve_at(m, b);
          worst = std::max(worst, (got - want).cwiseAbs().maxCoeff() / std::max(1.0, want.cwiseAbs().maxCoeff()));
        }
        CHECK(worst < 1e-8);
      }
  }
}

TEST_CASE("activation spectra equal the transform of the composed tensors") {
  std::mt19937_64 rng(22);
  const std::vector<Matrix> f{oracle::random_matrix(3, 2, rng), oracle::random_matrix(4, 2, rng),
                              oracle::random_matrix(3, 2, rng)};
  const std::vector<KruskalActivation> acts{KruskalActivation(f), KruskalActivation(Shape{3, 4, 3}, 2)};
  const auto spectra = dstep::compose_activation_spectra(acts);
  const auto want = oracle::dft(oracle::compose(f));
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(spectra[0][i] - want[i]) < 1e-10);
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(spectra[1][i]) == 0.0);
}

TEST_CASE("delta activation: the D-step crops the signal and projects") {
  std::mt19937_64 rng(23);
  const Shape shape{6, 6, 6}, window{3, 3, 3};
  DenseTensor y = oracle::random_tensor(shape, rng);
  y *= 0.1;
  std::vector<Matrix> f;
  for (auto n : shape) {
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(n), 1);
    m(0, 0) = 1.0;
    f.push_back(m);
  }
  const std::vector<KruskalActivation> acts{KruskalActivation(f)};
  const Dictionary init({oracle::random_atom(window, rng)}, shape);
  const std::vector<DenseTensor> ys{y};
  dstep::DStepOptions opt;
  opt.tolerance = 1e-10;
  opt.max_iters = 2000;
  const Dictionary d = dstep::dstep_solve(ys, {dstep::compose_activation_spectra(acts)}, init, opt);
  const DenseTensor want = project_unit_ball(resize_anchored(y, window));
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(d.atom(0)[i] == doctest::Approx(want[i]).epsilon(1e-6));
}

TEST_CASE("noiseless atoms are recovered with the true activations") {
  std::mt19937_64 rng(24);
  const Shape shape{16, 16, 16}, window{3, 3, 3};
  const Dictionary truth({oracle::random_atom(window, rng), oracle::random_atom(window, rng)}, shape);
  std::vector<KruskalActivation> acts;
  for (int k = 0; k < 2; ++k) acts.push_back(random_activation(shape, 2, false, rng));
  const std::vector<DenseTensor> ys{reconstruct(truth, acts)};
  const Dictionary init({oracle::random_atom(window, rng), oracle::random_atom(window, rng)}, shape);
  dstep::DStepOptions opt;
  opt.tolerance = 1e-9;
  opt.max_iters = 3000;
  dstep::DStepReport rep;
  const Dictionary d = dstep::dstep_solve(ys, {dstep::compose_activation_spectra(acts)}, init, opt, &rep);
  for (std::size_t k = 0; k < 2; ++k) {
    double plus = 0.0, minus = 0.0;
    for (std::size_t i = 0; i < d.atom(k).size(); ++i) {
      plus += std::pow(d.atom(k)[i] - truth.atom(k)[i], 2);
      minus += std::pow(d.atom(k)[i] + truth.atom(k)[i], 2);
    }
    CHECK(std::sqrt(std::min(plus, minus) / 27.0) < 1e-3);
  }
}

TEST_CASE("D-step output is feasible and does not increase the fidelity") {
  std::mt19937_64 rng(25);
  const Shape shape{6, 5, 4}, window{2, 3, 2};
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<DenseTensor> ys;
    ActivationSet acts(2);
    for (int n = 0; n < 2; ++n) {
      ys.push_back(oracle::random_tensor(shape, rng));
      for (int k = 0; k < 3; ++k) acts[n].push_back(random_activation(shape, 2, false, rng));
    }
    const Dictionary init = random_dictionary(3, window, shape, rng);
    std::vector<std::vector<SpectralTensor>> spectra;
    for (const auto& a : acts) spectra.push_back(dstep::compose_activation_spectra(a));
    const Dictionary d = dstep::dstep_solve(ys, spectra, init);
    for (const auto& a : d.atoms()) CHECK(frobenius_norm(a) <= 1.0 + 1e-12);
    CHECK(d.window() == window);
    CHECK(fidelity(ys, d, acts) <= fidelity(ys, init, acts) * (1.0 + 1e-9));
  }
}

TEST_CASE("D-step reaches the constrained minimum on non-negative activations") {
  // Non-negative activations concentrate their energy at frequency zero, the
  // badly conditioned case. Oracle: accelerated projected gradient on the
  // windowed atoms with the convolution written out as a dense matrix.
  std::mt19937_64 rng(29);
  const Shape shape{6, 6, 6}, window{2, 2, 2};
  const std::size_t K = 2, w = 8, M = 216;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 3; ++trial) {
    DenseTensor y(shape);
    for (auto& v : y.values()) v = unit(rng);
    std::vector<KruskalActivation> acts;
    for (std::size_t k = 0; k < K; ++k) acts.push_back(random_activation(shape, 2, true, rng));

    Eigen::MatrixXd T(M, K * w);
    for (std::size_t k = 0; k < K; ++k) {
      const DenseTensor z = oracle::compose(std::vector<Eigen::MatrixXd>(acts[k].factors.begin(), acts[k].factors.end()));
      for (std::size_t j = 0; j < w; ++j) {
        DenseTensor e(window);
        e[j] = 1.0;
        const DenseTensor col = oracle::circular_convolve(oracle::pad(e, shape), z);
        for (std::size_t i = 0; i < M; ++i) T(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k * w + j)) = col[i];
      }
    }
    Eigen::VectorXd yv(M);
    for (std::size_t i = 0; i < M; ++i) yv(static_cast<Eigen::Index>(i)) = y[i];
    const Eigen::MatrixXd H = T.transpose() * T;
    const Eigen::VectorXd b = T.transpose() * yv;
    const double L = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H).eigenvalues().maxCoeff();
    const auto project = [&](Eigen::VectorXd v) {
      for (std::size_t k = 0; k < K; ++k) {
        auto seg = v.segment(static_cast<Eigen::Index>(k * w), static_cast<Eigen::Index>(w));
        const double n = seg.norm();
        if (n > 1.0) seg /= n;
      }
      return v;
    };
    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K * w)), v = x;
    double t = 1.0;
    for (int it = 0; it < 200000; ++it) {
      const Eigen::VectorXd next = project(v - (H * v - b) / L);
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      v = next + ((t - 1.0) / t_next) * (next - x);
      x = next;
      t = t_next;
    }
    const double best = 0.5 * (yv - T * x).squaredNorm();

    const Dictionary init = random_dictionary(K, window, shape, rng);
    dstep::DStepOptions opts;
    opts.max_iters = 3000;
    opts.tolerance = 1e-10;
    const std::vector<DenseTensor> ys{y};
    const Dictionary d = dstep::dstep_solve(ys, {dstep::compose_activation_spectra(acts)}, init, opts);
    const double got = fidelity(ys, d, ActivationSet{acts});
    CHECK(got >= best * (1.0 - 1e-9));
    CHECK(got <= best * (1.0 + 1e-6));
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t j = 0; j < w; ++j)
        CHECK(d.atom(k)[j] == doctest::Approx(x(static_cast<Eigen::Index>(k * w + j))).epsilon(0).scale(0).epsilon(1e-3));
  }
}

TEST_CASE("zero activations leave a feasible dictionary") {
  std::mt19937_64 rng(26);
  const Shape shape{4, 4};
  const std::vector<DenseTensor> ys{oracle::random_tensor(shape, rng)};
  const std::vector<KruskalActivation> acts{KruskalActivation(shape, 1)};
  DenseTensor big({2, 2}, 0.5);
  const Dictionary init({big}, shape);
  const Dictionary d = dstep::dstep_solve(ys, {dstep::compose_activation_spectra(acts)}, init);
  CHECK(frobenius_norm(d.atom(0)) <= 1.0 + 1e-12);
}

TEST_CASE("projection crops then normalises") {
  DenseTensor t({4, 4}, 1.0);
  const DenseTensor p = dstep::project_atom(t, {2, 2});
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[5] == doctest::Approx(0.5));
  CHECK(p[2] == 0.0);
  CHECK(p[15] == 0.0);
}

TEST_CASE("D-step argument checks") {
  std::mt19937_64 rng(27);
  const Shape shape{4, 4};
  const Dictionary init = random_dictionary(2, {2, 2}, shape, rng);
  const std::vector<DenseTensor> ys{DenseTensor({5, 4})};
  const std::vector<KruskalActivation> acts{KruskalActivation(shape, 1), KruskalActivation(shape, 1)};
  CHECK_THROWS_AS(dstep::dstep_solve(ys, {dstep::compose_activation_spectra(acts)}, init), DimensionError);
  CHECK_THROWS(dstep::ShermanMorrisonSolver({dstep::compose_activation_spectra(acts)}, 0.0));
}
