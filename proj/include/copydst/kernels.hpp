#pragma once

#include "copydst/mat.hpp"

// Dense kernels used by the encoder and the classification heads. The
// OpenMP versions split work over output rows; each output element is
// still computed by exactly one thread with the same inner-loop order as
// the serial reference, so results are bitwise identical and independent
// of the schedule. kern::ref holds the serial twins the tests compare
// against; the bench tool times both.

namespace copydst::kern {

// C = A * B        (m x k) * (k x n), accumulate adds into C
void matmul_nn(const Mat& A, const Mat& B, Mat& C, bool accumulate = false);
// C = A * B^T      (m x k) * (n x k)
void matmul_nt(const Mat& A, const Mat& B, Mat& C, bool accumulate = false);
// C = A^T * B      (k x m) * (k x n)
void matmul_tn(const Mat& A, const Mat& B, Mat& C, bool accumulate = false);

// M[r] += v for every row r (v.cols == M.cols, v.rows == 1)
void add_row(Mat& M, const Mat& v);
// out[c] += sum_r M(r, c)
void col_sum(const Mat& M, Mat& out);
// in-place softmax over each row
void softmax_rows(Mat& M);
// dZ = (dP - rowdot(dP, P)) * P, for P = softmax_rows(Z) row-wise
void softmax_rows_backward(const Mat& P, const Mat& dP, Mat& dZ);

namespace ref {

void matmul_nn(const Mat& A, const Mat& B, Mat& C, bool accumulate = false);
void matmul_nt(const Mat& A, const Mat& B, Mat& C, bool accumulate = false);
void matmul_tn(const Mat& A, const Mat& B, Mat& C, bool accumulate = false);
void add_row(Mat& M, const Mat& v);
void col_sum(const Mat& M, Mat& out);
void softmax_rows(Mat& M);
void softmax_rows_backward(const Mat& P, const Mat& dP, Mat& dZ);

}  // namespace ref

}  // namespace copydst::kern
