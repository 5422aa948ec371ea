#include "copydst/kernels.hpp"

#include <cassert>
#include <cmath>

#include <omp.h>

namespace copydst::kern {

// OpenMP is only engaged for matrices above this many multiply-adds and
// when not already inside a parallel region (the trainer parallelizes
// over turns; nested parallelism would oversubscribe).
static constexpr long kParallelCutoff = 32768;

static bool go_parallel(long work) {
  return work >= kParallelCutoff && !omp_in_parallel();
}

void matmul_nn(const Mat& A, const Mat& B, Mat& C, bool accumulate) {
  assert(A.cols == B.rows && A.rows == C.rows && B.cols == C.cols);
  const long work = static_cast<long>(A.rows) * B.cols * A.cols;
#pragma omp parallel for schedule(static) if (go_parallel(work))
  for (int i = 0; i < A.rows; ++i) {
    const double* ai = A.row(i);
    double* ci = C.row(i);
    for (int j = 0; j < B.cols; ++j) {
      double acc = accumulate ? ci[j] : 0.0;
      for (int r = 0; r < A.cols; ++r) acc += ai[r] * B(r, j);
      ci[j] = acc;
    }
  }
}

void matmul_nt(const Mat& A, const Mat& B, Mat& C, bool accumulate) {
  assert(A.cols == B.cols && A.rows == C.rows && B.rows == C.cols);
  const long work = static_cast<long>(A.rows) * B.rows * A.cols;
#pragma omp parallel for schedule(static) if (go_parallel(work))
  for (int i = 0; i < A.rows; ++i) {
    const double* ai = A.row(i);
    double* ci = C.row(i);
    for (int j = 0; j < B.rows; ++j) {
      const double* bj = B.row(j);
      double acc = accumulate ? ci[j] : 0.0;
      for (int r = 0; r < A.cols; ++r) acc += ai[r] * bj[r];
      ci[j] = acc;
    }
  }
}

void matmul_tn(const Mat& A, const Mat& B, Mat& C, bool accumulate) {
  assert(A.rows == B.rows && A.cols == C.rows && B.cols == C.cols);
  const long work = static_cast<long>(A.cols) * B.cols * A.rows;
#pragma omp parallel for schedule(static) if (go_parallel(work))
  for (int i = 0; i < A.cols; ++i) {
    double* ci = C.row(i);
    for (int j = 0; j < B.cols; ++j) {
      double acc = accumulate ? ci[j] : 0.0;
      for (int r = 0; r < A.rows; ++r) acc += A(r, i) * B(r, j);
      ci[j] = acc;
    }
  }
}

void add_row(Mat& M, const Mat& v) {
  assert(v.rows == 1 && v.cols == M.cols);
  const long work = static_cast<long>(M.rows) * M.cols;
#pragma omp parallel for schedule(static) if (go_parallel(work))
  for (int i = 0; i < M.rows; ++i) {
    double* mi = M.row(i);
    for (int j = 0; j < M.cols; ++j) mi[j] += v.a[j];
  }
}

void col_sum(const Mat& M, Mat& out) {
  assert(out.rows == 1 && out.cols == M.cols);
  // Column sums accumulate in row order regardless of threading: each
  // output column is owned by one thread.
  const long work = static_cast<long>(M.rows) * M.cols;
#pragma omp parallel for schedule(static) if (go_parallel(work))
  for (int j = 0; j < M.cols; ++j) {
    double acc = out.a[j];
    for (int i = 0; i < M.rows; ++i) acc += M(i, j);
    out.a[j] = acc;
  }
}

void softmax_rows(Mat& M) {
  const long work = static_cast<long>(M.rows) * M.cols * 8;
#pragma omp parallel for schedule(static) if (go_parallel(work))
  for (int i = 0; i < M.rows; ++i) {
    double* mi = M.row(i);
    double mx = mi[0];
    for (int j = 1; j < M.cols; ++j) mx = std::max(mx, mi[j]);
    double sum = 0.0;
    for (int j = 0; j < M.cols; ++j) {
      mi[j] = std::exp(mi[j] - mx);
      sum += mi[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < M.cols; ++j) mi[j] *= inv;
  }
}

void softmax_rows_backward(const Mat& P, const Mat& dP, Mat& dZ) {
  assert(P.rows == dP.rows && P.cols == dP.cols && P.rows == dZ.rows && P.cols == dZ.cols);
  const long work = static_cast<long>(P.rows) * P.cols * 4;
#pragma omp parallel for schedule(static) if (go_parallel(work))
  for (int i = 0; i < P.rows; ++i) {
    const double* pi = P.row(i);
    const double* di = dP.row(i);
    double* zi = dZ.row(i);
    double dot = 0.0;
    for (int j = 0; j < P.cols; ++j) dot += di[j] * pi[j];
    for (int j = 0; j < P.cols; ++j) zi[j] = (di[j] - dot) * pi[j];
  }
}

namespace ref {

void matmul_nn(const Mat& A, const Mat& B, Mat& C, bool accumulate) {
  for (int i = 0; i < A.rows; ++i) {
    for (int j = 0; j < B.cols; ++j) {
      double acc = accumulate ? C(i, j) : 0.0;
      for (int r = 0; r < A.cols; ++r) acc += A(i, r) * B(r, j);
      C(i, j) = acc;
    }
  }
}

void matmul_nt(const Mat& A, const Mat& B, Mat& C, bool accumulate) {
  for (int i = 0; i < A.rows; ++i) {
    for (int j = 0; j < B.rows; ++j) {
      double acc = accumulate ? C(i, j) : 0.0;
      for (int r = 0; r < A.cols; ++r) acc += A(i, r) * B(j, r);
      C(i, j) = acc;
    }
  }
}

void matmul_tn(const Mat& A, const Mat& B, Mat& C, bool accumulate) {
  for (int i = 0; i < A.cols; ++i) {
    for (int j = 0; j < B.cols; ++j) {
      double acc = accumulate ? C(i, j) : 0.0;
      for (int r = 0; r < A.rows; ++r) acc += A(r, i) * B(r, j);
      C(i, j) = acc;
    }
  }
}

void add_row(Mat& M, const Mat& v) {
  for (int i = 0; i < M.rows; ++i)
    for (int j = 0; j < M.cols; ++j) M(i, j) += v.a[j];
}

void col_sum(const Mat& M, Mat& out) {
  for (int j = 0; j < M.cols; ++j) {
    double acc = out.a[j];
    for (int i = 0; i < M.rows; ++i) acc += M(i, j);
    out.a[j] = acc;
  }
}

void softmax_rows(Mat& M) {
  for (int i = 0; i < M.rows; ++i) {
    double* mi = M.row(i);
    double mx = mi[0];
    for (int j = 1; j < M.cols; ++j) mx = std::max(mx, mi[j]);
    double sum = 0.0;
    for (int j = 0; j < M.cols; ++j) {
      mi[j] = std::exp(mi[j] - mx);
      sum += mi[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < M.cols; ++j) mi[j] *= inv;
  }
}

void softmax_rows_backward(const Mat& P, const Mat& dP, Mat& dZ) {
  for (int i = 0; i < P.rows; ++i) {
    double dot = 0.0;
    for (int j = 0; j < P.cols; ++j) dot += dP(i, j) * P(i, j);
    for (int j = 0; j < P.cols; ++j) dZ(i, j) = (dP(i, j) - dot) * P(i, j);
  }
}

}  // namespace ref

}  // namespace copydst::kern
