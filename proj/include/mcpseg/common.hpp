#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcpseg {

constexpr int kNumClasses = 13;     // semantic classes
constexpr int kEmbeddingDim = 50;   // clustering feature dimension
constexpr int kPointFeatureDim = 6; // x y z r g b

/// Execution policy for the compute kernels. Serial and parallel paths
/// produce bit-identical results; every parallel loop partitions output
/// elements and keeps a fixed accumulation order within each element.
enum class Exec { serial, parallel };

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  double& operator[](int i) { return (&x)[i]; }
  double operator[](int i) const { return (&x)[i]; }

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double squared_norm() const { return dot(*this); }
  double norm() const { return std::sqrt(squared_norm()); }
  double norm_xy() const { return std::sqrt(x * x + y * y); }

  Vec3 normalized() const {
    const double n = norm();
    if (n == 0.0) throw std::invalid_argument("cannot normalize zero vector");
    return {x / n, y / n, z / n};
  }
};

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

/// Integer grid cell identifier: floor(position / cell_size) per axis.
struct VoxelKey {
  std::int32_t x = 0, y = 0, z = 0;
  bool operator==(const VoxelKey& o) const { return x == o.x && y == o.y && z == o.z; }
};

inline VoxelKey voxel_key_of(const Vec3& p, double cell_size) {
  return {static_cast<std::int32_t>(std::floor(p.x / cell_size)),
          static_cast<std::int32_t>(std::floor(p.y / cell_size)),
          static_cast<std::int32_t>(std::floor(p.z / cell_size))};
}

inline int chebyshev_distance(const VoxelKey& a, const VoxelKey& b) {
  const int dx = std::abs(a.x - b.x);
  const int dy = std::abs(a.y - b.y);
  const int dz = std::abs(a.z - b.z);
  return std::max(dx, std::max(dy, dz));
}

inline std::uint64_t splitmix64(std::uint64_t v) {
  v += 0x9e3779b97f4a7c15ull;
  v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ull;
  v = (v ^ (v >> 27)) * 0x94d049bb133111ebull;
  return v ^ (v >> 31);
}

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    std::uint64_t h = static_cast<std::uint32_t>(k.x);
    h = splitmix64(h ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.y)) << 20));
    h = splitmix64(h ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.z)) << 40));
    return static_cast<std::size_t>(h);
  }
};

/// Deterministic random source. Distribution math is implemented here rather
/// than with std:: distributions so that streams are pinned by the seed alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard normal via Box-Muller (one value per call).
  double normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

  /// Derives an independent stream, e.g. one per scan index.
  Rng fork(std::uint64_t stream) const { return Rng(splitmix64(seed_ ^ splitmix64(stream + 1))); }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

/// Eigendecomposition of a dense symmetric n x n matrix (row-major) by cyclic
/// Jacobi rotations. Returns eigenvalues in descending order with matching
/// unit eigenvectors as rows of `vectors` (row k <-> values[k]).
struct SymmetricEigen {
  std::vector<double> values;
  std::vector<double> vectors;  // n x n row-major, row k is eigenvector k
};
SymmetricEigen eigen_symmetric(std::vector<double> a, int n);

}  // namespace mcpseg
