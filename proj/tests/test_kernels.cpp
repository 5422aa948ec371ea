#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "copydst/kernels.hpp"

using namespace copydst;

namespace {

Mat random_mat(int r, int c, std::mt19937_64& rng) {
  Mat m(r, c);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  for (auto& v : m.a) v = dist(rng);
  return m;
}

bool bitwise_equal(const Mat& a, const Mat& b) {
  if (a.rows != b.rows || a.cols != b.cols) return false;
  for (size_t i = 0; i < a.a.size(); ++i)
    if (a.a[i] != b.a[i]) return false;
  return true;
}

}  // namespace

// The OpenMP kernels distribute rows but keep the per-element operation
// order of the serial reference, so results must match bitwise.
TEST_CASE("parallel kernels match the serial reference bitwise") {
  std::mt19937_64 rng(123);
  for (auto [m, k, n] : {std::tuple{3, 4, 5}, {64, 64, 64}, {181, 64, 128}, {200, 200, 64}}) {
    const Mat a = random_mat(m, k, rng);
    const Mat b_nn = random_mat(k, n, rng);
    const Mat b_nt = random_mat(n, k, rng);
    const Mat b_tn = random_mat(m, n, rng);  // matmul_tn: (m x k)^T * (m x n) -> k x n

    Mat c1(m, n), c2(m, n);
    kern::matmul_nn(a, b_nn, c1);
    kern::ref::matmul_nn(a, b_nn, c2);
    CHECK(bitwise_equal(c1, c2));

    kern::matmul_nt(a, b_nt, c1);
    kern::ref::matmul_nt(a, b_nt, c2);
    CHECK(bitwise_equal(c1, c2));

    Mat t1(k, n), t2(k, n);
    kern::matmul_tn(a, b_tn, t1);
    kern::ref::matmul_tn(a, b_tn, t2);
    CHECK(bitwise_equal(t1, t2));
  }
}

TEST_CASE("accumulate adds on top of existing values") {
  std::mt19937_64 rng(5);
  const Mat a = random_mat(8, 6, rng);
  const Mat b = random_mat(6, 7, rng);
  Mat c(8, 7, 1.5), ref_c(8, 7, 1.5), plain(8, 7);
  kern::matmul_nn(a, b, c, /*accumulate=*/true);
  kern::ref::matmul_nn(a, b, ref_c, /*accumulate=*/true);
  CHECK(bitwise_equal(c, ref_c));
  kern::matmul_nn(a, b, plain);
  for (int i = 0; i < c.rows; ++i)
    for (int j = 0; j < c.cols; ++j)
      CHECK(c(i, j) == doctest::Approx(plain(i, j) + 1.5).epsilon(1e-12));
}

TEST_CASE("softmax rows normalize and match reference") {
  std::mt19937_64 rng(9);
  Mat a = random_mat(50, 37, rng);
  Mat b = a;
  kern::softmax_rows(a);
  kern::ref::softmax_rows(b);
  CHECK(bitwise_equal(a, b));
  for (int i = 0; i < a.rows; ++i) {
    double sum = 0.0;
    for (int j = 0; j < a.cols; ++j) {
      CHECK(a(i, j) >= 0.0);
      sum += a(i, j);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("softmax backward matches reference and the jacobian identity") {
  std::mt19937_64 rng(17);
  Mat z = random_mat(4, 6, rng);
  Mat p = z;
  kern::softmax_rows(p);
  const Mat dp = random_mat(4, 6, rng);
  Mat dz1(4, 6), dz2(4, 6);
  kern::softmax_rows_backward(p, dp, dz1);
  kern::ref::softmax_rows_backward(p, dp, dz2);
  CHECK(bitwise_equal(dz1, dz2));
  // Rows of the softmax jacobian sum to zero.
  for (int i = 0; i < dz1.rows; ++i) {
    double sum = 0.0;
    for (int j = 0; j < dz1.cols; ++j) sum += dz1(i, j);
    CHECK(sum == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("col_sum and add_row match reference") {
  std::mt19937_64 rng(21);
  const Mat m = random_mat(40, 30, rng);
  Mat s1(1, 30), s2(1, 30);
  kern::col_sum(m, s1);
  kern::ref::col_sum(m, s2);
  CHECK(bitwise_equal(s1, s2));

  Mat a = random_mat(40, 30, rng);
  Mat b = a;
  const Mat v = random_mat(1, 30, rng);
  kern::add_row(a, v);
  kern::ref::add_row(b, v);
  CHECK(bitwise_equal(a, b));
}
