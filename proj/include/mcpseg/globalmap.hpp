#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mcpseg/common.hpp"
#include "mcpseg/pointcloud.hpp"

namespace mcpseg {

struct GlobalPoint {
  std::uint32_t id = 0;
  Vec3 position;
  Vec3 color;
  int gt_class = 0;
  int gt_instance = 0;
  int pred_class = -1;    // -1 until predicted
  int instance_id = 0;    // 0 until clustered; assigned IDs are positive
  bool has_embedding = false;
  std::array<double, kEmbeddingDim> embedding{};
};

/// Voxel-keyed lookup table holding at most one point per cell. Ids are
/// assigned by a monotone counter, so id order equals insertion order.
class GlobalMap {
 public:
  explicit GlobalMap(double cell_size = 0.1);

  double cell_size() const { return cell_size_; }
  std::size_t size() const { return points_.size(); }
  const GlobalPoint& point(std::uint32_t id) const { return points_[id]; }
  GlobalPoint& point(std::uint32_t id) { return points_[id]; }
  const std::vector<GlobalPoint>& points() const { return points_; }

  struct InsertResult {
    std::vector<std::uint32_t> added;       // new ids, insertion order
    std::vector<std::uint32_t> reobserved;  // existing points whose voxel was
                                            // re-scanned, first-touch order
  };

  /// Adds each scan point whose voxel is still empty; the first point to
  /// claim a voxel wins and later points never replace it.
  InsertResult insert_scan(const std::vector<LabeledPoint>& scan_points);

  /// Ids of all stored points within Chebyshev key distance 1 of `id`'s
  /// cell, excluding the point itself. Deterministic offset order.
  std::vector<std::uint32_t> neighbors(std::uint32_t id) const;

  /// Ids within Chebyshev key distance 3, excluding the point itself and
  /// any id in `exclude` (the current scan).
  std::vector<std::uint32_t> context(
      std::uint32_t id, const std::unordered_set<std::uint32_t>& exclude) const;

  /// Overwrites pred_class and embedding of each listed point
  /// (latest scan wins). Throws on unknown ids or length mismatch.
  void update_labels(const std::vector<std::uint32_t>& ids,
                     const std::vector<int>& pred_classes,
                     const std::vector<std::array<double, kEmbeddingDim>>& embeddings);

  std::optional<std::uint32_t> id_at(const VoxelKey& key) const;

  /// 10-column text export: "x y z r g b gt_class gt_instance pred_class
  /// instance_id" with -1 / 0 for unset predictions, in id order.
  void write_snapshot(const std::string& path) const;

 private:
  double cell_size_;
  std::vector<GlobalPoint> points_;
  std::unordered_map<VoxelKey, std::uint32_t, VoxelKeyHash> table_;
};

struct SnapshotPoint {
  Vec3 position;
  Vec3 color;
  int gt_class = 0;
  int gt_instance = 0;
  int pred_class = -1;
  int instance_id = 0;
};

std::vector<SnapshotPoint> load_snapshot(const std::string& path);

}  // namespace mcpseg
