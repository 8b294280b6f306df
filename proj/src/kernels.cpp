#include "mcpseg/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mcpseg::kernels {

namespace {
inline bool par(Exec exec) {
#ifdef _OPENMP
  return exec == Exec::parallel;
#else
  (void)exec;
  return false;
#endif
}
}  // namespace

void affine_forward(const double* x, int rows, int in_dim, const double* w,
                    const double* b, double* y, int out_dim, Exec exec) {
  const bool p = par(exec);
#pragma omp parallel for schedule(static) if (p)
  for (int r = 0; r < rows; ++r) {
    const double* xr = x + static_cast<std::size_t>(r) * in_dim;
    double* yr = y + static_cast<std::size_t>(r) * out_dim;
    std::memcpy(yr, b, sizeof(double) * out_dim);
    for (int d = 0; d < in_dim; ++d) {
      const double xv = xr[d];
      const double* wd = w + static_cast<std::size_t>(d) * out_dim;
      for (int o = 0; o < out_dim; ++o) yr[o] += xv * wd[o];
    }
  }
}

void affine_backward_input(const double* dy, int rows, int in_dim,
                           const double* w, double* dx, int out_dim,
                           Exec exec) {
  const bool p = par(exec);
#pragma omp parallel for schedule(static) if (p)
  for (int r = 0; r < rows; ++r) {
    const double* gr = dy + static_cast<std::size_t>(r) * out_dim;
    double* dr = dx + static_cast<std::size_t>(r) * in_dim;
    for (int d = 0; d < in_dim; ++d) {
      const double* wd = w + static_cast<std::size_t>(d) * out_dim;
      double acc = 0.0;
      for (int o = 0; o < out_dim; ++o) acc += wd[o] * gr[o];
      dr[d] = acc;
    }
  }
}

void affine_backward_params(const double* x, const double* dy, int rows,
                            int in_dim, int out_dim, double* dw, double* db,
                            Exec exec) {
  const bool p = par(exec);
  // Column blocks keep writes disjoint across threads; the row loop inside
  // fixes the accumulation order per element for any thread count.
  const int block = 16;
  const int nblocks = (out_dim + block - 1) / block;
#pragma omp parallel for schedule(static) if (p)
  for (int nb = 0; nb < nblocks; ++nb) {
    const int o0 = nb * block;
    const int o1 = std::min(out_dim, o0 + block);
    for (int r = 0; r < rows; ++r) {
      const double* xr = x + static_cast<std::size_t>(r) * in_dim;
      const double* gr = dy + static_cast<std::size_t>(r) * out_dim;
      for (int o = o0; o < o1; ++o) db[o] += gr[o];
      for (int d = 0; d < in_dim; ++d) {
        double* wd = dw + static_cast<std::size_t>(d) * out_dim;
        const double xv = xr[d];
        for (int o = o0; o < o1; ++o) wd[o] += xv * gr[o];
      }
    }
  }
}

void relu_inplace(double* v, std::size_t n, Exec exec) {
  const bool p = par(exec);
  const std::ptrdiff_t sn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (p)
  for (std::ptrdiff_t i = 0; i < sn; ++i) {
    if (v[i] < 0.0) v[i] = 0.0;
  }
}

void relu_backward(const double* y, double* dy, std::size_t n, Exec exec) {
  const bool p = par(exec);
  const std::ptrdiff_t sn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (p)
  for (std::ptrdiff_t i = 0; i < sn; ++i) {
    if (y[i] <= 0.0) dy[i] = 0.0;
  }
}

void group_colmax(const double* in, int groups, int group_size, int cols,
                  double* out, int* argmax, Exec exec) {
  const bool p = par(exec);
  if (groups > 1) {
#pragma omp parallel for schedule(static) if (p)
    for (int g = 0; g < groups; ++g) {
      const double* base = in + static_cast<std::size_t>(g) * group_size * cols;
      double* og = out + static_cast<std::size_t>(g) * cols;
      int* ag = argmax + static_cast<std::size_t>(g) * cols;
      std::memcpy(og, base, sizeof(double) * cols);
      for (int c = 0; c < cols; ++c) ag[c] = 0;
      for (int r = 1; r < group_size; ++r) {
        const double* row = base + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) {
          if (row[c] > og[c]) {
            og[c] = row[c];
            ag[c] = r;
          }
        }
      }
    }
  } else {
    // single group: parallelize over columns instead
#pragma omp parallel for schedule(static) if (p)
    for (int c = 0; c < cols; ++c) {
      double best = in[c];
      int arg = 0;
      for (int r = 1; r < group_size; ++r) {
        const double v = in[static_cast<std::size_t>(r) * cols + c];
        if (v > best) {
          best = v;
          arg = r;
        }
      }
      out[c] = best;
      argmax[c] = arg;
    }
  }
}

void l2_normalize_rows(double* m, int rows, int cols, double* norms,
                       Exec exec) {
  const bool p = par(exec);
#pragma omp parallel for schedule(static) if (p)
  for (int r = 0; r < rows; ++r) {
    double* row = m + static_cast<std::size_t>(r) * cols;
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += row[c] * row[c];
    const double n = std::sqrt(s);
    norms[r] = n;
    if (n > 0.0) {
      const double inv = 1.0 / n;
      for (int c = 0; c < cols; ++c) row[c] *= inv;
    }
  }
}

void softmax_rows(const double* logits, int rows, int cols, double* probs,
                  Exec exec) {
  const bool p = par(exec);
#pragma omp parallel for schedule(static) if (p)
  for (int r = 0; r < rows; ++r) {
    const double* lr = logits + static_cast<std::size_t>(r) * cols;
    double* pr = probs + static_cast<std::size_t>(r) * cols;
    double mx = lr[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, lr[c]);
    double sum = 0.0;
    for (int c = 0; c < cols; ++c) {
      pr[c] = std::exp(lr[c] - mx);
      sum += pr[c];
    }
    const double inv = 1.0 / sum;
    for (int c = 0; c < cols; ++c) pr[c] *= inv;
  }
}

}  // namespace mcpseg::kernels
