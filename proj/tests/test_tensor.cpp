#include <doctest.h>

#include <cstdio>
#include <random>

#include "vistr/tensor.hpp"

using namespace vistr;

namespace {

DenseTensor random_tensor(std::vector<std::size_t> dims, std::uint64_t seed) {
  DenseTensor x(dims);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, 1);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = n(rng);
  return x;
}

}  // namespace

TEST_CASE("dense tensor layout and invariants") {
  DenseTensor x({2, 3, 4});
  CHECK(x.order() == 3);
  CHECK(x.size() == 24);
  // Row-major: last index fastest.
  CHECK(x.offset({0, 0, 1}) == 1);
  CHECK(x.offset({0, 1, 0}) == 4);
  CHECK(x.offset({1, 0, 0}) == 12);
  CHECK_THROWS_AS(DenseTensor({2, 0, 3}), DataError);
  CHECK_THROWS_AS(DenseTensor(std::vector<std::size_t>{}), DataError);
  CHECK_THROWS_AS(DenseTensor({2, 2}, {1.0, 2.0}), DataError);
}

TEST_CASE("mode_unfold: matrix identity and derived 2x2x2 case") {
  Matrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  DenseTensor x = DenseTensor::from_matrix(m);
  CHECK(mode_unfold(x, 0) == m);

  DenseTensor t({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  // Mode-2 (0-based mode 1): columns ordered with the lowest remaining mode
  // (mode 0) varying fastest: (i1,i3) = (0,0),(1,0),(0,1),(1,1).
  Matrix expect(2, 4);
  expect << 1, 5, 2, 6, 3, 7, 4, 8;
  CHECK(mode_unfold(t, 1) == expect);
  CHECK_THROWS_AS(mode_unfold(t, 3), DataError);
}

TEST_CASE("fold(unfold) round-trips bit-exactly on every mode") {
  DenseTensor x = random_tensor({3, 4, 2, 5}, 11);
  for (std::size_t n = 0; n < 4; ++n) {
    DenseTensor back = mode_fold(mode_unfold(x, n), n, x.dims());
    CHECK(back == x);
  }
}

TEST_CASE("mode_mul: identity, derived case, distinct modes commute") {
  DenseTensor x = random_tensor({3, 4, 2}, 5);
  DenseTensor same = mode_mul(x, Matrix::Identity(4, 4), 1);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(same[i] == doctest::Approx(x[i]).epsilon(1e-14));

  DenseTensor small({2, 2}, {1, 2, 3, 4});
  Matrix u(1, 2);
  u << 1, 1;
  DenseTensor res = mode_mul(small, u, 0);
  REQUIRE(res.dims() == std::vector<std::size_t>{1, 2});
  CHECK(res[0] == 4);
  CHECK(res[1] == 6);

  Matrix a = Matrix::Random(5, 3), b = Matrix::Random(6, 4);
  DenseTensor ab = mode_mul(mode_mul(x, a, 0), b, 1);
  DenseTensor ba = mode_mul(mode_mul(x, b, 1), a, 0);
  REQUIRE(ab.dims() == ba.dims());
  double rel = 0, norm = 0;
  for (std::size_t i = 0; i < ab.size(); ++i) {
    rel += (ab[i] - ba[i]) * (ab[i] - ba[i]);
    norm += ab[i] * ab[i];
  }
  CHECK(std::sqrt(rel) <= 1e-12 * std::sqrt(norm));

  CHECK_THROWS_AS(mode_mul(x, Matrix::Identity(3, 3), 1), DataError);
}

TEST_CASE("vec_mul: slice selection, zero vector, derived row sums") {
  DenseTensor x = random_tensor({3, 4, 2}, 9);
  Vector e2 = Vector::Zero(4);
  e2(2) = 1;
  DenseTensor slice = vec_mul(x, e2, 1);
  REQUIRE(slice.dims() == std::vector<std::size_t>{3, 2});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 2; ++k)
      CHECK(slice.at({i, k}) == doctest::Approx(x.at({i, 2, k})).epsilon(1e-14));

  DenseTensor z = vec_mul(x, Vector::Zero(2), 2);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == 0);

  DenseTensor small({2, 2}, {1, 2, 3, 4});
  DenseTensor sums = vec_mul(small, Vector::Ones(2), 1);
  REQUIRE(sums.dims() == std::vector<std::size_t>{2});
  CHECK(sums[0] == 3);
  CHECK(sums[1] == 7);

  CHECK_THROWS_AS(vec_mul(x, Vector::Ones(5), 1), DataError);
}

TEST_CASE("inner and frobenius") {
  DenseTensor x({2, 2}, {1, 2, 3, 4});
  CHECK(frobenius(x) == doctest::Approx(std::sqrt(30.0)).epsilon(1e-14));
  CHECK(inner(x, x) == doctest::Approx(frobenius(x) * frobenius(x)).epsilon(1e-14));
  DenseTensor zero({2, 2});
  CHECK(inner(x, zero) == 0);
  CHECK_THROWS_AS(inner(x, DenseTensor({2, 3})), DataError);

  // Symmetry and bilinearity on random tensors.
  DenseTensor a = random_tensor({3, 3, 3}, 1), b = random_tensor({3, 3, 3}, 2),
              c = random_tensor({3, 3, 3}, 3);
  CHECK(inner(a, b) == doctest::Approx(inner(b, a)).epsilon(1e-12));
  DenseTensor combo = b;
  for (std::size_t i = 0; i < combo.size(); ++i) combo[i] = 2.5 * b[i] - 0.5 * c[i];
  CHECK(inner(a, combo) ==
        doctest::Approx(2.5 * inner(a, b) - 0.5 * inner(a, c)).epsilon(1e-12));
}

TEST_CASE("orthonormal mode product preserves the Frobenius norm") {
  DenseTensor x = random_tensor({4, 5, 3}, 21);
  Eigen::HouseholderQR<Matrix> qr(Matrix::Random(5, 5));
  Matrix q = qr.householderQ();
  DenseTensor y = mode_mul(x, q, 1);
  CHECK(frobenius(y) == doctest::Approx(frobenius(x)).epsilon(1e-12));
}

TEST_CASE(".ten round-trip and error handling") {
  DenseTensor x = random_tensor({2, 3, 4}, 77);
  const std::string path = "test_roundtrip.ten";
  write_ten(path, x);
  DenseTensor back = read_ten(path);
  CHECK(back == x);

  Matrix m = Matrix::Random(3, 5);
  write_ten_matrix(path, m);
  CHECK(read_ten_matrix(path) == m);
  Vector v = Vector::Random(7);
  write_ten_vector(path, v);
  CHECK(read_ten_vector(path) == v);

  std::FILE* f = std::fopen(path.c_str(), "wb");
  std::fputs("NOPE", f);
  std::fclose(f);
  CHECK_THROWS_AS(read_ten(path), DataError);
  CHECK_THROWS_AS(read_ten("does_not_exist.ten"), DataError);
  std::remove(path.c_str());
}
