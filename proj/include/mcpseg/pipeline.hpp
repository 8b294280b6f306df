#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "mcpseg/clustering.hpp"
#include "mcpseg/common.hpp"
#include "mcpseg/globalmap.hpp"
#include "mcpseg/metrics.hpp"
#include "mcpseg/network.hpp"
#include "mcpseg/raytrace.hpp"

namespace mcpseg {

struct PipelineConfig {
  double radius = 2.0;      // keep-points radius around the sensor
  bool radius_3d = false;   // false: horizontal x-y distance
  int batch_n = 256;
  int context_m = 50;
  double beta = 0.9;        // clustering similarity threshold
  bool use_mcp = true;
  double cell_size = 0.1;
  std::uint64_t seed = 1;
  Exec exec = Exec::parallel;
};

struct PreprocessResult {
  std::vector<LabeledPoint> kept;  // original coordinates, scan order
  std::vector<int> kept_indices;   // positions in the input scan
  std::vector<double> features;    // kept.size() x 6, sensor-frame normalized
};

/// Drops points farther than the radius from the pose (x-y distance by
/// default) and normalizes the rest: (x - pose.x, y - pose.y, z - floor_z,
/// r, g, b).
PreprocessResult preprocess_scan(const Scan& scan, double floor_z,
                                 const PipelineConfig& cfg);

struct BatchSlice {
  std::vector<int> indices;  // row -> index into the point list
  int real = 0;              // rows >= real are replacement-sampled padding
};

/// Shuffles [0, count) and chunks into groups of batch_n; the last group is
/// padded to exactly batch_n by sampling with replacement over all points.
std::vector<BatchSlice> make_batches(int count, int batch_n, Rng& rng);

/// Sensor-frame features for one point.
void normalize_point(const Vec3& position, const Vec3& color, const Vec3& pose,
                     double floor_z, double* out6);

/// Context tensor rows for the given map points: per point, candidates come
/// from map.context(id, exclude) and M are sampled with replacement; a point
/// with no candidates is self-filled. Rows use the current sensor frame.
std::vector<double> assemble_context(const GlobalMap& map,
                                     const std::vector<std::uint32_t>& row_ids,
                                     const std::unordered_set<std::uint32_t>& exclude,
                                     const Vec3& pose, double floor_z,
                                     int context_m, Rng& rng);

/// One network batch plus the map ids its rows came from.
struct ScanBatch {
  Batch batch;
  std::vector<std::uint32_t> row_ids;
};

/// Builds the per-scan batches (inputs, context, ground truth) for the given
/// active map points. Shared by inference and training staging so both see
/// identical tensors for identical seeds.
std::vector<ScanBatch> build_scan_batches(const GlobalMap& map,
                                          const std::vector<std::uint32_t>& active_ids,
                                          const Vec3& pose, double floor_z,
                                          const PipelineConfig& cfg, Rng& rng);

struct ScanStats {
  int scan_index = 0;
  int points_kept = 0;
  int new_points = 0;
  int reobserved = 0;
  int merges = 0;
  double ms_elapsed = 0.0;
};

/// Runs one scan through the full loop: radius filter, map insertion,
/// batching + context, network inference, label updates (real rows only),
/// and incremental clustering of the newly inserted points.
ScanStats process_scan(const Scan& scan, int scan_index, GlobalMap& map,
                       ClusterSet& clusters, const NetworkParams& params,
                       const PipelineConfig& cfg, double floor_z);

struct RunResult {
  GlobalMap map;
  ClusterSet clusters;
  MetricsReport metrics;
  std::vector<ScanStats> stats;
};

/// Processes every scan in manifest order, evaluates against the carried
/// ground truth, and writes snapshot.txt, stats.csv and report.csv into
/// out_dir (skipped when out_dir is empty).
RunResult run(const ScanDataset& dataset, const std::string& dataset_dir,
              const NetworkParams& params, const PipelineConfig& cfg,
              const std::string& out_dir);

void write_stats_csv(const std::string& path, const std::vector<ScanStats>& stats);

/// Replays the scan sequence without a network and collects training batches
/// with context tensors, exactly as the online pass would build them.
std::vector<Batch> stage_training_batches(const ScanDataset& dataset,
                                          const std::string& dataset_dir,
                                          const PipelineConfig& cfg);

}  // namespace mcpseg
