#include "mcpseg/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace mcpseg {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument("cosine_similarity: dimension mismatch");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    throw std::invalid_argument("cosine_similarity: zero vector");
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::uint32_t ClusterSet::find(std::uint32_t id) const {
  std::uint32_t root = id;
  while (parent_[root] != root + 1) root = parent_[root] - 1;
  // path halving
  std::uint32_t cur = id;
  while (parent_[cur] != cur + 1) {
    const std::uint32_t next = parent_[cur] - 1;
    parent_[cur] = root + 1;
    cur = next;
  }
  return root;
}

bool ClusterSet::contains(std::uint32_t id) const {
  return id < parent_.size() && parent_[id] != 0;
}

int ClusterSet::make_cluster(std::uint32_t id) {
  if (contains(id)) throw std::invalid_argument("point already clustered");
  if (id >= parent_.size()) {
    parent_.resize(id + 1, 0);
    rank_.resize(id + 1, 0);
    instance_.resize(id + 1, 0);
  }
  parent_[id] = id + 1;
  instance_[id] = next_instance_++;
  ++roots_;
  return instance_[id];
}

bool ClusterSet::merge(std::uint32_t a, std::uint32_t b) {
  if (!contains(a) || !contains(b)) {
    throw std::invalid_argument("merge of unregistered point");
  }
  std::uint32_t ra = find(a), rb = find(b);
  if (ra == rb) return false;
  const int surviving = std::min(instance_[ra], instance_[rb]);
  if (rank_[ra] < rank_[rb]) std::swap(ra, rb);
  parent_[rb] = ra + 1;
  if (rank_[ra] == rank_[rb]) ++rank_[ra];
  instance_[ra] = surviving;
  --roots_;
  return true;
}

int ClusterSet::instance_of(std::uint32_t id) const {
  if (!contains(id)) return 0;
  return instance_[find(id)];
}

AssignResult assign_new_points(ClusterSet& clusters,
                               const std::vector<std::uint32_t>& new_ids,
                               GlobalMap& map, double beta) {
  std::vector<std::uint32_t> order = new_ids;
  std::sort(order.begin(), order.end());

  AssignResult result;
  for (const std::uint32_t id : order) {
    const GlobalPoint& p = map.point(id);
    if (!p.has_embedding) {
      throw std::runtime_error("assign_new_points: point " + std::to_string(id) +
                               " has no embedding");
    }
    std::vector<std::uint32_t> connected;
    for (const std::uint32_t nb : map.neighbors(id)) {
      if (!clusters.contains(nb)) continue;  // not labeled yet
      const GlobalPoint& q = map.point(nb);
      if (!q.has_embedding) {
        throw std::runtime_error("assign_new_points: labeled neighbor " +
                                 std::to_string(nb) + " has no embedding");
      }
      const double cos = cosine_similarity(
          std::span<const double>(p.embedding.data(), kEmbeddingDim),
          std::span<const double>(q.embedding.data(), kEmbeddingDim));
      if (cos > beta) connected.push_back(nb);
    }

    clusters.make_cluster(id);
    int distinct_joins = 0;
    for (const std::uint32_t nb : connected) {
      if (clusters.merge(id, nb)) ++distinct_joins;
    }
    // joining >1 pre-existing cluster is a merge event
    if (distinct_joins > 1) ++result.merges;
  }
  for (const std::uint32_t id : order) {
    const int inst = clusters.instance_of(id);
    map.point(id).instance_id = inst;
    result.labels.emplace_back(id, inst);
  }
  return result;
}

void refresh_instances(GlobalMap& map, const ClusterSet& clusters) {
  for (std::uint32_t id = 0; id < map.size(); ++id) {
    GlobalPoint& gp = map.point(id);
    if (clusters.contains(id)) gp.instance_id = clusters.instance_of(id);
  }
}

namespace {
std::unordered_map<VoxelKey, std::vector<std::uint32_t>, VoxelKeyHash> bin_points(
    const std::vector<Vec3>& positions, double cell_size) {
  std::unordered_map<VoxelKey, std::vector<std::uint32_t>, VoxelKeyHash> cells;
  for (std::uint32_t i = 0; i < positions.size(); ++i) {
    cells[voxel_key_of(positions[i], cell_size)].push_back(i);
  }
  return cells;
}

template <class Fn>
void for_each_adjacent(
    const std::unordered_map<VoxelKey, std::vector<std::uint32_t>, VoxelKeyHash>& cells,
    const std::vector<Vec3>& positions, double cell_size, std::uint32_t i,
    Fn&& fn) {
  const VoxelKey c = voxel_key_of(positions[i], cell_size);
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const auto it = cells.find({c.x + dx, c.y + dy, c.z + dz});
        if (it == cells.end()) continue;
        for (const std::uint32_t j : it->second) {
          if (j != i) fn(j);
        }
      }
}
}  // namespace

std::vector<Vec3> estimate_normals(const std::vector<Vec3>& positions,
                                   double cell_size) {
  const auto cells = bin_points(positions, cell_size);
  std::vector<Vec3> normals(positions.size(), Vec3{0.0, 0.0, 1.0});
  for (std::uint32_t i = 0; i < positions.size(); ++i) {
    Vec3 mean{};
    int neighbor_count = 0;
    auto accumulate = [&](std::uint32_t j) {
      mean += positions[j];
      ++neighbor_count;
    };
    for_each_adjacent(cells, positions, cell_size, i, accumulate);
    if (neighbor_count < 3) continue;  // keep the +z default
    mean += positions[i];
    mean = mean * (1.0 / (neighbor_count + 1));

    std::vector<double> cov(9, 0.0);
    auto add_cov = [&](std::uint32_t j) {
      const Vec3 d = positions[j] - mean;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) cov[a * 3 + b] += d[a] * d[b];
    };
    add_cov(i);
    for_each_adjacent(cells, positions, cell_size, i, add_cov);

    const SymmetricEigen eig = eigen_symmetric(cov, 3);
    Vec3 n{eig.vectors[6], eig.vectors[7], eig.vectors[8]};  // smallest eigenvalue
    const double len = n.norm();
    if (len < 1e-12) continue;
    n = n * (1.0 / len);
    if (n.z < 0.0 || (n.z == 0.0 && (n.x < 0.0 || (n.x == 0.0 && n.y < 0.0)))) {
      n = n * -1.0;
    }
    normals[i] = n;
  }
  return normals;
}

std::vector<int> region_grow_baseline(const std::vector<Vec3>& positions,
                                      const std::vector<Vec3>& normals,
                                      const std::vector<Vec3>& colors,
                                      double cell_size, double angle_thresh_deg,
                                      double color_thresh) {
  if (positions.size() != normals.size() || positions.size() != colors.size()) {
    throw std::invalid_argument("region_grow_baseline: size mismatch");
  }
  const double cos_thresh = std::cos(angle_thresh_deg * M_PI / 180.0);
  const auto cells = bin_points(positions, cell_size);

  ClusterSet clusters;
  for (std::uint32_t i = 0; i < positions.size(); ++i) clusters.make_cluster(i);
  for (std::uint32_t i = 0; i < positions.size(); ++i) {
    for_each_adjacent(cells, positions, cell_size, i, [&](std::uint32_t j) {
      if (j < i) return;  // each unordered pair once
      // sign-agnostic normal comparison: PCA normals have arbitrary sign
      const double cos = std::abs(normals[i].dot(normals[j]));
      if (cos < cos_thresh) return;
      if ((colors[i] - colors[j]).norm() > color_thresh) return;
      clusters.merge(i, j);
    });
  }

  std::vector<int> labels(positions.size());
  for (std::uint32_t i = 0; i < positions.size(); ++i) {
    labels[i] = clusters.instance_of(i);
  }
  return labels;
}

}  // namespace mcpseg
