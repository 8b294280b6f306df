#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mcpseg/common.hpp"
#include "mcpseg/globalmap.hpp"

namespace mcpseg {

double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Union-find partition over global point ids carrying an instance ID per
/// root. Merges keep the smallest involved instance ID.
class ClusterSet {
 public:
  /// Registers a point with a fresh instance ID and returns it.
  int make_cluster(std::uint32_t id);

  /// Union of the two points' clusters; the smaller instance ID survives.
  /// Both ids must be registered. Returns true when two distinct clusters
  /// were actually merged.
  bool merge(std::uint32_t a, std::uint32_t b);

  bool contains(std::uint32_t id) const;
  int instance_of(std::uint32_t id) const;  // 0 when unregistered

  std::size_t cluster_count() const { return roots_; }
  int peek_next_instance() const { return next_instance_; }

 private:
  std::uint32_t find(std::uint32_t id) const;

  // parent_[id] == id+1 sentinel scheme: 0 means unregistered
  mutable std::vector<std::uint32_t> parent_;
  std::vector<std::uint32_t> rank_;
  std::vector<int> instance_;  // valid at roots
  int next_instance_ = 1;
  std::size_t roots_ = 0;
};

struct AssignResult {
  std::vector<std::pair<std::uint32_t, int>> labels;  // (id, final instance)
  int merges = 0;  // number of multi-cluster merge events
};

/// Applies the agglomerative connection rules to new points in id order:
/// each point connects to map neighbors (Chebyshev key distance <= 1) that
/// already carry an instance label, when the embedding cosine similarity
/// exceeds beta strictly. No connection seeds a new cluster; one or more
/// connections join / merge the involved clusters. Also stores the final
/// labels into the map. Returns post-merge labels for the new points.
AssignResult assign_new_points(ClusterSet& clusters,
                               const std::vector<std::uint32_t>& new_ids,
                               GlobalMap& map, double beta);

/// Re-materializes every stored point's instance label from the cluster
/// partition, so labels touched by later merges read back consistently.
void refresh_instances(GlobalMap& map, const ClusterSet& clusters);

/// PCA normal per point from neighbors within one cell (Chebyshev key
/// distance <= 1): smallest-eigenvalue eigenvector of the local covariance.
/// Points with fewer than 3 neighborhood samples default to +z. Signs are
/// canonicalized to a non-negative z component.
std::vector<Vec3> estimate_normals(const std::vector<Vec3>& positions,
                                   double cell_size);

/// Region-growing baseline: connected components over the <=1-cell
/// adjacency where normals differ by at most angle_thresh_deg and colors by
/// at most color_thresh (Euclidean RGB). Returns instance labels from 1.
std::vector<int> region_grow_baseline(const std::vector<Vec3>& positions,
                                      const std::vector<Vec3>& normals,
                                      const std::vector<Vec3>& colors,
                                      double cell_size, double angle_thresh_deg,
                                      double color_thresh);

}  // namespace mcpseg
