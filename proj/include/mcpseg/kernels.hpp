#pragma once

#include <cstddef>

#include "mcpseg/common.hpp"

// Dense per-point layer kernels shared by the network forward and backward
// passes. Each kernel has a serial and an OpenMP path selected by Exec; the
// two are bit-identical because parallel loops partition output elements and
// every reduction runs in a fixed index order.
namespace mcpseg::kernels {

/// y (rows x out) = x (rows x in) * w + b, with w row-major [in][out].
/// The [in][out] layout keeps the inner accumulation loop unit-stride.
void affine_forward(const double* x, int rows, int in_dim, const double* w,
                    const double* b, double* y, int out_dim, Exec exec);

/// dx (rows x in) = dy (rows x out) * w^T.
void affine_backward_input(const double* dy, int rows, int in_dim,
                           const double* w, double* dx, int out_dim, Exec exec);

/// dw[d][o] += sum_r x[r][d] * dy[r][o];  db[o] += sum_r dy[r][o].
/// Parallelized over output columns so each element accumulates serially
/// over rows regardless of thread count.
void affine_backward_params(const double* x, const double* dy, int rows,
                            int in_dim, int out_dim, double* dw, double* db,
                            Exec exec);

void relu_inplace(double* v, std::size_t n, Exec exec);

/// Gates dy by activation output: dy[i] = 0 where y[i] <= 0.
void relu_backward(const double* y, double* dy, std::size_t n, Exec exec);

/// Column-wise max over row groups. `in` is (groups * group_size) x cols;
/// out[g][c] = max over the group's rows, argmax[g][c] = winning row offset
/// within the group (lowest index on ties).
void group_colmax(const double* in, int groups, int group_size, int cols,
                  double* out, int* argmax, Exec exec);

/// Normalizes each row to unit L2 norm; stores the original norms.
/// Zero rows are left unchanged with norm recorded as 0.
void l2_normalize_rows(double* m, int rows, int cols, double* norms, Exec exec);

/// Row-wise softmax with max-subtraction.
void softmax_rows(const double* logits, int rows, int cols, double* probs,
                  Exec exec);

}  // namespace mcpseg::kernels
