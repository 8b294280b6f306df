#include "mcpseg/common.hpp"

#include <algorithm>
#include <numeric>

namespace mcpseg {

SymmetricEigen eigen_symmetric(std::vector<double> a, int n) {
  if (n <= 0 || a.size() != static_cast<std::size_t>(n) * n) {
    throw std::invalid_argument("eigen_symmetric: bad dimensions");
  }
  std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[i * n + i] = 1.0;

  auto off_diag = [&]() {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) s += a[i * n + j] * a[i * n + j];
    return s;
  };
  double frob2 = 0.0;
  for (double e : a) frob2 += e * e;
  const double tol = frob2 * 1e-28 + 1e-300;

  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps && off_diag() > tol; ++sweep) {
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::abs(apq) < 1e-300) continue;
        const double app = a[p * n + p];
        const double aqq = a[q * n + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a[k * n + p];
          const double akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a[p * n + k];
          const double aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v[p * n + k];
          const double vkq = v[q * n + k];
          v[p * n + k] = c * vkp - s * vkq;
          v[q * n + k] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return a[i * n + i] > a[j * n + j]; });

  SymmetricEigen out;
  out.values.resize(n);
  out.vectors.resize(static_cast<std::size_t>(n) * n);
  for (int k = 0; k < n; ++k) {
    const int src = order[k];
    out.values[k] = a[src * n + src];
    // fix the sign so results are reproducible: largest-magnitude entry positive
    int pivot = 0;
    for (int i = 1; i < n; ++i) {
      if (std::abs(v[src * n + i]) > std::abs(v[src * n + pivot])) pivot = i;
    }
    const double sign = v[src * n + pivot] < 0.0 ? -1.0 : 1.0;
    for (int i = 0; i < n; ++i) out.vectors[k * n + i] = sign * v[src * n + i];
  }
  return out;
}

}  // namespace mcpseg
