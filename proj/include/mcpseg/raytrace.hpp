#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mcpseg/common.hpp"
#include "mcpseg/pointcloud.hpp"

namespace mcpseg {

/// Voxel lookup over an environment's points. Keys use floor division, so
/// negative coordinates map to negative keys. A dense occupancy bitmap over
/// the bounding box backs the per-step queries during ray traversal.
class OccupancyIndex {
 public:
  OccupancyIndex(const Environment& env, double cell_size);

  double cell_size() const { return cell_size_; }
  std::size_t occupied_cell_count() const { return cells_.size(); }
  bool occupied(const VoxelKey& key) const;
  /// Indices (into points()) of the points stored in a cell, in input order.
  const std::vector<std::uint32_t>* cell_points(const VoxelKey& key) const;
  const std::vector<LabeledPoint>& points() const { return points_; }

  /// Clips a ray to the occupied bounding box: returns [t_enter, t_exit]
  /// or nothing when the ray misses the box entirely.
  std::optional<std::pair<double, double>> clip_to_bounds(const Vec3& origin,
                                                          const Vec3& dir) const;

 private:
  double cell_size_;
  std::vector<LabeledPoint> points_;
  std::unordered_map<VoxelKey, std::vector<std::uint32_t>, VoxelKeyHash> cells_;
  VoxelKey lo_{}, hi_{};  // inclusive key bounds of occupied cells
  std::int64_t nx_ = 0, ny_ = 0, nz_ = 0;
  std::vector<std::uint8_t> dense_;
};

struct RayHit {
  VoxelKey key;
  std::uint32_t point_index;  // representative point: nearest to the ray line
  double t_enter;             // ray parameter where the hit voxel is entered
};

/// Walks the grid with incremental voxel stepping and returns the first
/// occupied voxel entered within max_range, or nothing. `direction` must be
/// unit length. The representative point is the stored point nearest to the
/// ray line, ties broken by lowest point index.
std::optional<RayHit> cast_ray(const Vec3& origin, const Vec3& direction,
                               const OccupancyIndex& index, double max_range);

struct ScanPose {
  Vec3 position;
};

struct Scan {
  ScanPose pose;
  std::vector<LabeledPoint> points;  // unique first-hit points, original coords
  long rays_cast = 0;
};

/// Unit direction for every (azimuth, elevation) sample of a full sweep:
/// azimuth over [0, 360) deg stepped by h_res, elevation over [-90, +90] deg
/// inclusive stepped by v_res. 360 must be divisible by h_res and 180 by v_res.
std::vector<Vec3> sweep_directions(double h_res_deg, double v_res_deg);

Scan simulate_scan(const ScanPose& pose, const OccupancyIndex& index,
                   double h_res_deg, double v_res_deg, double max_range,
                   Exec exec = Exec::parallel);

/// Resamples the waypoint polyline at arc-length intervals of `spacing`,
/// including the start point.
std::vector<ScanPose> resample_trajectory(const std::vector<Vec3>& waypoints,
                                          double spacing);

struct ScanParams {
  double h_res_deg = 1.0;
  double v_res_deg = 1.0;
  double max_range = 30.0;
};

std::vector<Scan> simulate_trajectory(const std::vector<Vec3>& waypoints,
                                      double spacing,
                                      const OccupancyIndex& index,
                                      const ScanParams& params,
                                      Exec exec = Exec::parallel);

// ---- scan dataset files -------------------------------------------------

/// Text file with one "x y z" waypoint per line; '#' comments ignored.
std::vector<Vec3> load_trajectory(const std::string& path);

struct ManifestEntry {
  std::string file;  // scan file name, relative to the manifest directory
  Vec3 pose;
};

struct ScanDataset {
  double floor_z = 0.0;
  std::vector<ManifestEntry> entries;
};

/// Writes one labeled point file per scan plus a manifest listing
/// "scan_file x y z" in traversal order with a "# floor_z <v>" header.
void write_scan_dataset(const std::string& dir, const std::vector<Scan>& scans,
                        double floor_z);

ScanDataset read_manifest(const std::string& path);

Scan load_scan_file(const std::string& path, const Vec3& pose);

}  // namespace mcpseg
