#include "mcpseg/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unordered_map>

namespace mcpseg {

PreprocessResult preprocess_scan(const Scan& scan, double floor_z,
                                 const PipelineConfig& cfg) {
  PreprocessResult out;
  const Vec3& pose = scan.pose.position;
  for (int i = 0; i < static_cast<int>(scan.points.size()); ++i) {
    const LabeledPoint& p = scan.points[i];
    const Vec3 d = p.position - pose;
    const double dist = cfg.radius_3d ? d.norm() : d.norm_xy();
    if (dist > cfg.radius) continue;
    out.kept.push_back(p);
    out.kept_indices.push_back(i);
    double f[kPointFeatureDim];
    normalize_point(p.position, p.color, pose, floor_z, f);
    out.features.insert(out.features.end(), f, f + kPointFeatureDim);
  }
  return out;
}

void normalize_point(const Vec3& position, const Vec3& color, const Vec3& pose,
                     double floor_z, double* out6) {
  out6[0] = position.x - pose.x;
  out6[1] = position.y - pose.y;
  out6[2] = position.z - floor_z;
  out6[3] = color.x;
  out6[4] = color.y;
  out6[5] = color.z;
}

std::vector<BatchSlice> make_batches(int count, int batch_n, Rng& rng) {
  if (count <= 0) throw std::invalid_argument("make_batches: no points");
  if (batch_n < 1) throw std::invalid_argument("make_batches: bad batch size");

  std::vector<int> order(count);
  for (int i = 0; i < count; ++i) order[i] = i;
  rng.shuffle(order);

  std::vector<BatchSlice> batches;
  for (int start = 0; start < count; start += batch_n) {
    BatchSlice b;
    const int real = std::min(batch_n, count - start);
    b.real = real;
    b.indices.assign(order.begin() + start, order.begin() + start + real);
    while (static_cast<int>(b.indices.size()) < batch_n) {
      b.indices.push_back(order[rng.uniform_index(count)]);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

std::vector<double> assemble_context(const GlobalMap& map,
                                     const std::vector<std::uint32_t>& row_ids,
                                     const std::unordered_set<std::uint32_t>& exclude,
                                     const Vec3& pose, double floor_z,
                                     int context_m, Rng& rng) {
  if (context_m < 1) throw std::invalid_argument("assemble_context: need m >= 1");
  std::vector<double> tensor(row_ids.size() * static_cast<std::size_t>(context_m) *
                             kPointFeatureDim);
  std::unordered_map<std::uint32_t, std::vector<std::uint32_t>> candidate_cache;

  for (std::size_t r = 0; r < row_ids.size(); ++r) {
    const std::uint32_t id = row_ids[r];
    auto it = candidate_cache.find(id);
    if (it == candidate_cache.end()) {
      it = candidate_cache.emplace(id, map.context(id, exclude)).first;
    }
    const std::vector<std::uint32_t>& candidates = it->second;
    double* rows = tensor.data() +
                   r * static_cast<std::size_t>(context_m) * kPointFeatureDim;
    const GlobalPoint& self = map.point(id);
    for (int s = 0; s < context_m; ++s) {
      const GlobalPoint& src =
          candidates.empty()
              ? self  // cold start: the point stands in for itself
              : map.point(candidates[rng.uniform_index(candidates.size())]);
      normalize_point(src.position, src.color, pose, floor_z,
                      rows + static_cast<std::size_t>(s) * kPointFeatureDim);
    }
  }
  return tensor;
}

std::vector<ScanBatch> build_scan_batches(const GlobalMap& map,
                                          const std::vector<std::uint32_t>& active_ids,
                                          const Vec3& pose, double floor_z,
                                          const PipelineConfig& cfg, Rng& rng) {
  const int count = static_cast<int>(active_ids.size());
  const std::vector<BatchSlice> slices = make_batches(count, cfg.batch_n, rng);
  const std::unordered_set<std::uint32_t> exclude(active_ids.begin(),
                                                  active_ids.end());

  std::vector<ScanBatch> out;
  out.reserve(slices.size());
  for (const BatchSlice& slice : slices) {
    ScanBatch sb;
    sb.batch.n = static_cast<int>(slice.indices.size());
    sb.batch.real_rows = slice.real;
    sb.batch.m = cfg.use_mcp ? cfg.context_m : 0;
    sb.row_ids.reserve(slice.indices.size());
    for (const int idx : slice.indices) {
      const std::uint32_t id = active_ids[idx];
      sb.row_ids.push_back(id);
      const GlobalPoint& gp = map.point(id);
      double f[kPointFeatureDim];
      normalize_point(gp.position, gp.color, pose, floor_z, f);
      sb.batch.inputs.insert(sb.batch.inputs.end(), f, f + kPointFeatureDim);
      sb.batch.gt_class.push_back(gp.gt_class);
      sb.batch.gt_instance.push_back(gp.gt_instance);
    }
    if (cfg.use_mcp) {
      sb.batch.context = assemble_context(map, sb.row_ids, exclude, pose,
                                          floor_z, cfg.context_m, rng);
    }
    out.push_back(std::move(sb));
  }
  return out;
}

namespace {
int argmax_row(const double* row, int n) {
  int best = 0;
  for (int c = 1; c < n; ++c) {
    if (row[c] > row[best]) best = c;
  }
  return best;
}
}  // namespace

ScanStats process_scan(const Scan& scan, int scan_index, GlobalMap& map,
                       ClusterSet& clusters, const NetworkParams& params,
                       const PipelineConfig& cfg, double floor_z) {
  const auto t0 = std::chrono::steady_clock::now();
  ScanStats stats;
  stats.scan_index = scan_index;

  const PreprocessResult pre = preprocess_scan(scan, floor_z, cfg);
  stats.points_kept = static_cast<int>(pre.kept.size());
  if (!pre.kept.empty()) {
    const GlobalMap::InsertResult ins = map.insert_scan(pre.kept);
    stats.new_points = static_cast<int>(ins.added.size());
    stats.reobserved = static_cast<int>(ins.reobserved.size());

    std::vector<std::uint32_t> active = ins.added;
    active.insert(active.end(), ins.reobserved.begin(), ins.reobserved.end());

    Rng rng = Rng(cfg.seed).fork(0x5CA0 + static_cast<std::uint64_t>(scan_index));
    const std::vector<ScanBatch> batches = build_scan_batches(
        map, active, scan.pose.position, floor_z, cfg, rng);

    std::vector<std::uint32_t> update_ids;
    std::vector<int> update_classes;
    std::vector<std::array<double, kEmbeddingDim>> update_embeddings;
    update_ids.reserve(active.size());

    for (const ScanBatch& sb : batches) {
      const ForwardResult fwd = forward(sb.batch, params, cfg.exec);
      for (int r = 0; r < sb.batch.real_rows; ++r) {
        update_ids.push_back(sb.row_ids[r]);
        update_classes.push_back(argmax_row(
            fwd.probs.data() + static_cast<std::size_t>(r) * kNumClasses,
            kNumClasses));
        std::array<double, kEmbeddingDim> e;
        std::copy_n(fwd.embeddings.data() + static_cast<std::size_t>(r) * kEmbeddingDim,
                    kEmbeddingDim, e.begin());
        update_embeddings.push_back(e);
      }
    }
    map.update_labels(update_ids, update_classes, update_embeddings);

    const AssignResult assigned =
        assign_new_points(clusters, ins.added, map, cfg.beta);
    stats.merges = assigned.merges;
  }

  const auto t1 = std::chrono::steady_clock::now();
  stats.ms_elapsed =
      std::chrono::duration<double, std::milli>(t1 - t0).count();
  return stats;
}

RunResult run(const ScanDataset& dataset, const std::string& dataset_dir,
              const NetworkParams& params, const PipelineConfig& cfg,
              const std::string& out_dir) {
  if (dataset.entries.empty()) throw std::runtime_error("empty scan manifest");

  RunResult result;
  result.map = GlobalMap(cfg.cell_size);
  const std::filesystem::path root(dataset_dir);

  for (std::size_t i = 0; i < dataset.entries.size(); ++i) {
    const ManifestEntry& entry = dataset.entries[i];
    const std::filesystem::path scan_path = root / entry.file;
    if (!std::filesystem::exists(scan_path)) {
      throw std::runtime_error("missing scan file: " + scan_path.string());
    }
    const Scan scan = load_scan_file(scan_path.string(), entry.pose);
    result.stats.push_back(process_scan(scan, static_cast<int>(i), result.map,
                                        result.clusters, params, cfg,
                                        dataset.floor_z));
  }

  refresh_instances(result.map, result.clusters);

  EvalPair eval;
  for (const GlobalPoint& gp : result.map.points()) {
    if (gp.pred_class < 0) continue;
    eval.gt_class.push_back(gp.gt_class);
    eval.pred_class.push_back(gp.pred_class);
    eval.gt_instance.push_back(gp.gt_instance);
    eval.pred_instance.push_back(gp.instance_id);
  }
  if (!eval.gt_class.empty()) result.metrics = evaluate_all(eval);

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path out(out_dir);
    result.map.write_snapshot((out / "snapshot.txt").string());
    write_stats_csv((out / "stats.csv").string(), result.stats);
    write_report((out / "report.csv").string(), result.metrics,
                 ClassLegend::default_legend().names);
  }
  return result;
}

void write_stats_csv(const std::string& path,
                     const std::vector<ScanStats>& stats) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write stats: " + path);
  out << "index,points_kept,new_points,clusters_merged,ms_elapsed\n";
  char buf[128];
  for (const ScanStats& s : stats) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d,%.3f\n", s.scan_index,
                  s.points_kept, s.new_points, s.merges, s.ms_elapsed);
    out << buf;
  }
  if (!out) throw std::runtime_error("stats write failed: " + path);
}

std::vector<Batch> stage_training_batches(const ScanDataset& dataset,
                                          const std::string& dataset_dir,
                                          const PipelineConfig& cfg) {
  if (dataset.entries.empty()) throw std::runtime_error("empty scan manifest");
  GlobalMap map(cfg.cell_size);
  const std::filesystem::path root(dataset_dir);

  std::vector<Batch> out;
  for (std::size_t i = 0; i < dataset.entries.size(); ++i) {
    const ManifestEntry& entry = dataset.entries[i];
    const Scan scan =
        load_scan_file((root / entry.file).string(), entry.pose);
    const PreprocessResult pre = preprocess_scan(scan, dataset.floor_z, cfg);
    if (pre.kept.empty()) continue;
    const GlobalMap::InsertResult ins = map.insert_scan(pre.kept);
    std::vector<std::uint32_t> active = ins.added;
    active.insert(active.end(), ins.reobserved.begin(), ins.reobserved.end());
    if (active.empty()) continue;

    Rng rng = Rng(cfg.seed).fork(0x5CA0 + static_cast<std::uint64_t>(i));
    for (ScanBatch& sb :
         build_scan_batches(map, active, scan.pose.position, dataset.floor_z,
                            cfg, rng)) {
      out.push_back(std::move(sb.batch));
    }
  }
  if (out.empty()) throw std::runtime_error("no training batches staged");
  return out;
}

}  // namespace mcpseg
