#include "mcpseg/globalmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mcpseg {

GlobalMap::GlobalMap(double cell_size) : cell_size_(cell_size) {
  if (cell_size <= 0.0) throw std::invalid_argument("cell_size must be positive");
}

GlobalMap::InsertResult GlobalMap::insert_scan(
    const std::vector<LabeledPoint>& scan_points) {
  InsertResult result;
  std::unordered_set<std::uint32_t> touched;
  for (const LabeledPoint& p : scan_points) {
    const VoxelKey key = voxel_key_of(p.position, cell_size_);
    const auto it = table_.find(key);
    if (it == table_.end()) {
      GlobalPoint gp;
      gp.id = static_cast<std::uint32_t>(points_.size());
      gp.position = p.position;
      gp.color = p.color;
      gp.gt_class = p.gt_class;
      gp.gt_instance = p.gt_instance;
      table_.emplace(key, gp.id);
      points_.push_back(gp);
      result.added.push_back(gp.id);
      touched.insert(gp.id);
    } else if (touched.insert(it->second).second) {
      result.reobserved.push_back(it->second);
    }
  }
  return result;
}

std::vector<std::uint32_t> GlobalMap::neighbors(std::uint32_t id) const {
  if (id >= points_.size()) throw std::out_of_range("unknown point id");
  const VoxelKey c = voxel_key_of(points_[id].position, cell_size_);
  std::vector<std::uint32_t> out;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const VoxelKey k{c.x + dx, c.y + dy, c.z + dz};
        const auto it = table_.find(k);
        if (it != table_.end() && it->second != id) out.push_back(it->second);
      }
  return out;
}

std::vector<std::uint32_t> GlobalMap::context(
    std::uint32_t id, const std::unordered_set<std::uint32_t>& exclude) const {
  if (id >= points_.size()) throw std::out_of_range("unknown point id");
  const VoxelKey c = voxel_key_of(points_[id].position, cell_size_);
  std::vector<std::uint32_t> out;
  for (int dz = -3; dz <= 3; ++dz)
    for (int dy = -3; dy <= 3; ++dy)
      for (int dx = -3; dx <= 3; ++dx) {
        const VoxelKey k{c.x + dx, c.y + dy, c.z + dz};
        const auto it = table_.find(k);
        if (it == table_.end()) continue;
        const std::uint32_t other = it->second;
        if (other == id || exclude.count(other)) continue;
        out.push_back(other);
      }
  return out;
}

void GlobalMap::update_labels(
    const std::vector<std::uint32_t>& ids, const std::vector<int>& pred_classes,
    const std::vector<std::array<double, kEmbeddingDim>>& embeddings) {
  if (ids.size() != pred_classes.size() || ids.size() != embeddings.size()) {
    throw std::invalid_argument("update_labels: length mismatch");
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= points_.size()) {
      throw std::out_of_range("update_labels: unknown id " + std::to_string(ids[i]));
    }
    GlobalPoint& gp = points_[ids[i]];
    gp.pred_class = pred_classes[i];
    gp.embedding = embeddings[i];
    gp.has_embedding = true;
  }
}

std::optional<std::uint32_t> GlobalMap::id_at(const VoxelKey& key) const {
  const auto it = table_.find(key);
  if (it == table_.end()) return std::nullopt;
  return it->second;
}

void GlobalMap::write_snapshot(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write snapshot: " + path);
  char buf[256];
  const auto byte = [](double c) {
    return std::min(255, std::max(0, static_cast<int>(std::floor(c * 255.0 + 0.5))));
  };
  for (const GlobalPoint& p : points_) {
    std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %d %d %d %d %d %d %d\n",
                  p.position.x, p.position.y, p.position.z, byte(p.color.x),
                  byte(p.color.y), byte(p.color.z), p.gt_class, p.gt_instance,
                  p.pred_class, p.instance_id);
    out << buf;
  }
  if (!out) throw std::runtime_error("snapshot write failed: " + path);
}

std::vector<SnapshotPoint> load_snapshot(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open snapshot: " + path);
  std::vector<SnapshotPoint> points;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    SnapshotPoint p;
    double r, g, b;
    if (!(ls >> p.position.x >> p.position.y >> p.position.z >> r >> g >> b >>
          p.gt_class >> p.gt_instance >> p.pred_class >> p.instance_id)) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected 10 columns");
    }
    p.color = {r / 255.0, g / 255.0, b / 255.0};
    points.push_back(p);
  }
  return points;
}

}  // namespace mcpseg
