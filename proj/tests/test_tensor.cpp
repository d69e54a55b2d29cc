#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "kcsc/tensor.hpp"
#include "kcsc/tensor_io.hpp"
#include "oracles.hpp"

using namespace kcsc;

TEST_CASE("khatri_rao_reverse multiplies back to front") {
  Matrix a(2, 1), b(2, 1);
  a << 1, 2;
  b << 3, 4;
  const std::vector<Matrix> f{a, b};
  const Matrix kr = khatri_rao_reverse(std::span<const Matrix>(f));
  // b (x) a with a varying fastest.
  CHECK(kr(0, 0) == 3);
  CHECK(kr(1, 0) == 6);
  CHECK(kr(2, 0) == 4);
  CHECK(kr(3, 0) == 8);
}

TEST_CASE("khatri_rao_reverse agrees with the loop oracle") {
  std::mt19937_64 rng(1);
  const std::vector<Matrix> f{oracle::random_matrix(3, 2, rng), oracle::random_matrix(4, 2, rng),
                              oracle::random_matrix(2, 2, rng)};
  const Matrix got = khatri_rao_reverse(std::span<const Matrix>(f));
  CHECK((got - oracle::khatri_rao_reverse(f)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("khatri_rao_reverse rejects mismatched ranks") {
  const std::vector<Matrix> f{Matrix::Ones(2, 2), Matrix::Ones(2, 3)};
  CHECK_THROWS_AS(khatri_rao_reverse(std::span<const Matrix>(f)), DimensionError);
}

TEST_CASE("kruskal_compose matches the outer-product loop") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const std::vector<Matrix> f{oracle::random_matrix(3, 2, rng), oracle::random_matrix(4, 2, rng),
                                oracle::random_matrix(5, 2, rng)};
    const DenseTensor got = kruskal_compose(std::span<const Matrix>(f));
    const DenseTensor want = oracle::compose(f);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-13));
  }
}

TEST_CASE("rank-one compose is the outer product") {
  Matrix a(2, 1), b(3, 1);
  a << 1, 2;
  b << 1, 10, 100;
  const DenseTensor t = kruskal_compose(std::vector<Matrix>{a, b});
  CHECK(t.shape() == Shape{2, 3});
  CHECK(t[5] == 200);
  CHECK(t[1] == 10);
}

TEST_CASE("unfold follows the first-remaining-mode-fastest order") {
  std::mt19937_64 rng(3);
  const DenseTensor t = oracle::random_tensor({3, 4, 2, 3}, rng);
  for (std::size_t q = 0; q < 4; ++q) {
    const Matrix got = unfold(t, q);
    const Matrix want = oracle::unfold(t.values(), t.shape(), q);
    CHECK((got - want).cwiseAbs().maxCoeff() == 0.0);
    CHECK(fold(got, q, t.shape()) == t);
  }
}

TEST_CASE("matricization identity holds for every mode") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<Matrix> f{oracle::random_matrix(3, 3, rng), oracle::random_matrix(2, 3, rng),
                                oracle::random_matrix(4, 3, rng)};
    const DenseTensor t = kruskal_compose(std::span<const Matrix>(f));
    for (std::size_t q = 0; q < f.size(); ++q) {
      std::vector<Matrix> others;
      for (std::size_t i = 0; i < f.size(); ++i)
        if (i != q) others.push_back(f[i]);
      const Matrix rhs = f[q] * khatri_rao_reverse(std::span<const Matrix>(others)).transpose();
      CHECK((unfold(t, q) - rhs).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("mode checks") {
  DenseTensor t({2, 2});
  CHECK_THROWS_AS(unfold(t, 2), DimensionError);
  CHECK_THROWS_AS(fold(Matrix::Zero(3, 2), 0, {2, 2}), DimensionError);
  CHECK_THROWS_AS(DenseTensor({2, 0}), DimensionError);
  CHECK_THROWS_AS(DenseTensor({2, 2}, std::vector<double>(3)), DimensionError);
}

TEST_CASE("dictionary validation") {
  DenseTensor big({2, 2}, 1.0);
  CHECK_THROWS_AS(Dictionary({big}, {4, 4}), DimensionError);
  DenseTensor ok({2, 2}, 0.5);
  CHECK_NOTHROW(Dictionary({ok}, {4, 4}));
  CHECK_THROWS_AS(Dictionary({ok}, {1, 4}), DimensionError);
  CHECK_THROWS_AS(Dictionary({ok, DenseTensor({3, 1})}, {4, 4}), DimensionError);
  const Dictionary d({ok}, {3, 3});
  const DenseTensor p = d.padded(0);
  CHECK(p[0] == 0.5);
  CHECK(p[4] == 0.5);
  CHECK(p[2] == 0.0);
  CHECK(p[8] == 0.0);
}

TEST_CASE("projection and anchored resize") {
  DenseTensor t({2, 2}, 1.0);
  CHECK(frobenius_norm(project_unit_ball(t)) == doctest::Approx(1.0));
  DenseTensor small({2, 2}, 0.1);
  CHECK(project_unit_ball(small) == small);
  std::mt19937_64 rng(5);
  const DenseTensor a = oracle::random_tensor({2, 3}, rng);
  CHECK(resize_anchored(resize_anchored(a, {4, 5}), {2, 3}) == a);
}

TEST_CASE("tensor container round trip") {
  std::mt19937_64 rng(6);
  const DenseTensor t = oracle::random_tensor({3, 1, 4}, rng);
  std::stringstream ss;
  io::write_tensor(ss, t);
  CHECK(io::read_tensor(ss) == t);

  std::stringstream bad("NOPE");
  CHECK_THROWS_AS(io::read_tensor(bad), IoError);

  const auto dir = std::filesystem::temp_directory_path() / "kcsc_tensor_test";
  std::filesystem::create_directories(dir);
  io::save_tensor(dir / "t.ktns", t);
  CHECK(io::load_tensor(dir / "t.ktns") == t);
  CHECK_THROWS_AS(io::load_tensor(dir / "missing.ktns"), IoError);

  const Matrix m = oracle::random_matrix(3, 2, rng);
  io::save_matrix(dir / "m.ktns", m);
  CHECK(io::load_matrix(dir / "m.ktns") == m);

  const Dictionary d({oracle::random_atom({2, 2}, rng), oracle::random_atom({2, 2}, rng)}, {5, 5});
  const Dictionary back = io::unstack_atoms(io::stack_atoms(d), {5, 5});
  CHECK(back.size() == 2);
  CHECK(back.atom(1) == d.atom(1));
  std::filesystem::remove_all(dir);
}
