#include "mcpseg/raytrace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace mcpseg {

OccupancyIndex::OccupancyIndex(const Environment& env, double cell_size)
    : cell_size_(cell_size), points_(env.points) {
  if (cell_size <= 0.0) throw std::invalid_argument("cell_size must be positive");
  if (points_.empty()) throw std::runtime_error("empty environment");

  lo_ = hi_ = voxel_key_of(points_[0].position, cell_size_);
  for (std::uint32_t i = 0; i < points_.size(); ++i) {
    const VoxelKey k = voxel_key_of(points_[i].position, cell_size_);
    cells_[k].push_back(i);
    lo_ = {std::min(lo_.x, k.x), std::min(lo_.y, k.y), std::min(lo_.z, k.z)};
    hi_ = {std::max(hi_.x, k.x), std::max(hi_.y, k.y), std::max(hi_.z, k.z)};
  }
  nx_ = static_cast<std::int64_t>(hi_.x) - lo_.x + 1;
  ny_ = static_cast<std::int64_t>(hi_.y) - lo_.y + 1;
  nz_ = static_cast<std::int64_t>(hi_.z) - lo_.z + 1;
  const std::int64_t volume = nx_ * ny_ * nz_;
  if (volume <= (1 << 26)) {  // dense bitmap only for boxes up to 64M cells
    dense_.assign(static_cast<std::size_t>(volume), 0);
    for (const auto& [k, v] : cells_) {
      const std::size_t idx =
          static_cast<std::size_t>(((k.z - lo_.z) * ny_ + (k.y - lo_.y)) * nx_ +
                                   (k.x - lo_.x));
      dense_[idx] = 1;
    }
  }
}

bool OccupancyIndex::occupied(const VoxelKey& key) const {
  if (key.x < lo_.x || key.x > hi_.x || key.y < lo_.y || key.y > hi_.y ||
      key.z < lo_.z || key.z > hi_.z) {
    return false;
  }
  if (!dense_.empty()) {
    const std::size_t idx = static_cast<std::size_t>(
        ((key.z - lo_.z) * ny_ + (key.y - lo_.y)) * nx_ + (key.x - lo_.x));
    return dense_[idx] != 0;
  }
  return cells_.find(key) != cells_.end();
}

const std::vector<std::uint32_t>* OccupancyIndex::cell_points(
    const VoxelKey& key) const {
  const auto it = cells_.find(key);
  return it == cells_.end() ? nullptr : &it->second;
}

std::optional<std::pair<double, double>> OccupancyIndex::clip_to_bounds(
    const Vec3& origin, const Vec3& dir) const {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    const double lo = (&lo_.x)[axis] * cell_size_;
    const double hi = ((&hi_.x)[axis] + 1.0) * cell_size_;
    const double o = origin[axis];
    const double d = dir[axis];
    if (d == 0.0) {
      if (o < lo || o > hi) return std::nullopt;
      continue;
    }
    double ta = (lo - o) / d;
    double tb = (hi - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

std::optional<RayHit> cast_ray(const Vec3& origin, const Vec3& direction,
                               const OccupancyIndex& index, double max_range) {
  if (std::abs(direction.norm() - 1.0) > 1e-9) {
    throw std::invalid_argument("cast_ray: direction must be unit length");
  }
  if (max_range <= 0.0) throw std::invalid_argument("cast_ray: max_range must be positive");

  const auto clip = index.clip_to_bounds(origin, direction);
  if (!clip || clip->first > max_range) return std::nullopt;
  const double t_stop = std::min(max_range, clip->second);

  const double cell = index.cell_size();
  VoxelKey key = voxel_key_of(origin, cell);
  int step[3];
  double t_max[3], t_delta[3];
  for (int axis = 0; axis < 3; ++axis) {
    const double d = direction[axis];
    const double o = origin[axis];
    const std::int32_t k = (&key.x)[axis];
    if (d > 0.0) {
      step[axis] = 1;
      t_max[axis] = ((k + 1) * cell - o) / d;
      t_delta[axis] = cell / d;
    } else if (d < 0.0) {
      step[axis] = -1;
      t_max[axis] = (k * cell - o) / d;
      t_delta[axis] = -cell / d;
    } else {
      step[axis] = 0;
      t_max[axis] = std::numeric_limits<double>::infinity();
      t_delta[axis] = std::numeric_limits<double>::infinity();
    }
  }

  double t_enter = 0.0;
  while (t_enter <= t_stop) {
    if (index.occupied(key)) {
      const auto* pts = index.cell_points(key);
      std::uint32_t best = (*pts)[0];
      double best_d2 = std::numeric_limits<double>::infinity();
      for (const std::uint32_t pi : *pts) {
        const Vec3 w = index.points()[pi].position - origin;
        const double along = w.dot(direction);
        const double d2 = w.squared_norm() - along * along;
        if (d2 < best_d2) {
          best_d2 = d2;
          best = pi;
        }
      }
      return RayHit{key, best, t_enter};
    }
    const int axis = (t_max[0] <= t_max[1])
                         ? (t_max[0] <= t_max[2] ? 0 : 2)
                         : (t_max[1] <= t_max[2] ? 1 : 2);
    t_enter = t_max[axis];
    (&key.x)[axis] += step[axis];
    t_max[axis] += t_delta[axis];
  }
  return std::nullopt;
}

std::vector<Vec3> sweep_directions(double h_res_deg, double v_res_deg) {
  if (h_res_deg <= 0.0 || v_res_deg <= 0.0) {
    throw std::invalid_argument("sweep resolution must be positive");
  }
  const long n_az = std::lround(360.0 / h_res_deg);
  const long n_el = std::lround(180.0 / v_res_deg);
  if (std::abs(n_az * h_res_deg - 360.0) > 1e-9 ||
      std::abs(n_el * v_res_deg - 180.0) > 1e-9) {
    throw std::invalid_argument("sweep resolution must divide 360/180 degrees");
  }
  std::vector<Vec3> dirs;
  dirs.reserve(static_cast<std::size_t>(n_az) * (n_el + 1));
  const double deg = M_PI / 180.0;
  for (long i = 0; i < n_az; ++i) {
    const double az = i * h_res_deg * deg;
    for (long j = 0; j <= n_el; ++j) {
      const double el = (-90.0 + j * v_res_deg) * deg;
      dirs.push_back(
          {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)});
    }
  }
  return dirs;
}

Scan simulate_scan(const ScanPose& pose, const OccupancyIndex& index,
                   double h_res_deg, double v_res_deg, double max_range,
                   Exec exec) {
  const std::vector<Vec3> dirs = sweep_directions(h_res_deg, v_res_deg);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(dirs.size());
  std::vector<std::int64_t> hit(dirs.size(), -1);

  const bool p = exec == Exec::parallel;
#pragma omp parallel for schedule(static) if (p)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto h = cast_ray(pose.position, dirs[i], index, max_range);
    if (h) hit[i] = h->point_index;
  }

  Scan scan;
  scan.pose = pose;
  scan.rays_cast = static_cast<long>(dirs.size());
  std::vector<std::uint8_t> seen(index.points().size(), 0);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (hit[i] < 0) continue;
    const auto pi = static_cast<std::uint32_t>(hit[i]);
    if (!seen[pi]) {
      seen[pi] = 1;
      scan.points.push_back(index.points()[pi]);
    }
  }
  return scan;
}

std::vector<ScanPose> resample_trajectory(const std::vector<Vec3>& waypoints,
                                          double spacing) {
  if (waypoints.empty()) throw std::invalid_argument("trajectory needs >= 1 waypoint");
  if (spacing <= 0.0) throw std::invalid_argument("spacing must be positive");

  double total = 0.0;
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    total += (waypoints[i] - waypoints[i - 1]).norm();
  }
  const long count = static_cast<long>(std::floor(total / spacing + 1e-9));

  std::vector<ScanPose> poses;
  poses.reserve(count + 1);
  for (long k = 0; k <= count; ++k) {
    const double target = std::min(k * spacing, total);
    double walked = 0.0;
    Vec3 pos = waypoints.back();
    for (std::size_t i = 1; i < waypoints.size(); ++i) {
      const double seg = (waypoints[i] - waypoints[i - 1]).norm();
      if (walked + seg >= target - 1e-12 && seg > 0.0) {
        const double f = std::min(1.0, std::max(0.0, (target - walked) / seg));
        pos = waypoints[i - 1] + (waypoints[i] - waypoints[i - 1]) * f;
        break;
      }
      walked += seg;
    }
    if (waypoints.size() == 1) pos = waypoints[0];
    poses.push_back(ScanPose{pos});
  }
  return poses;
}

std::vector<Scan> simulate_trajectory(const std::vector<Vec3>& waypoints,
                                      double spacing,
                                      const OccupancyIndex& index,
                                      const ScanParams& params, Exec exec) {
  std::vector<Scan> scans;
  for (const ScanPose& pose : resample_trajectory(waypoints, spacing)) {
    scans.push_back(simulate_scan(pose, index, params.h_res_deg,
                                  params.v_res_deg, params.max_range, exec));
  }
  return scans;
}

std::vector<Vec3> load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory file: " + path);
  std::vector<Vec3> waypoints;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Vec3 w;
    if (!(ls >> w.x >> w.y >> w.z)) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected 'x y z'");
    }
    waypoints.push_back(w);
  }
  if (waypoints.empty()) throw std::runtime_error("no waypoints in " + path);
  return waypoints;
}

void write_scan_dataset(const std::string& dir, const std::vector<Scan>& scans,
                        double floor_z) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path root(dir);
  std::ofstream manifest(root / "manifest.txt");
  if (!manifest) throw std::runtime_error("cannot write manifest in " + dir);
  char buf[256];
  std::snprintf(buf, sizeof(buf), "# floor_z %.9g\n", floor_z);
  manifest << buf;

  for (std::size_t i = 0; i < scans.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "scan_%06zu.txt", i);
    std::ofstream out(root / name);
    if (!out) throw std::runtime_error(std::string("cannot write scan file ") + name);
    for (const auto& p : scans[i].points) {
      const auto byte = [](double c) {
        return std::min(255, std::max(0, static_cast<int>(std::floor(c * 255.0 + 0.5))));
      };
      std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %d %d %d %d %d\n",
                    p.position.x, p.position.y, p.position.z, byte(p.color.x),
                    byte(p.color.y), byte(p.color.z), p.gt_class,
                    p.gt_instance);
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), "%s %.9g %.9g %.9g\n", name,
                  scans[i].pose.position.x, scans[i].pose.position.y,
                  scans[i].pose.position.z);
    manifest << buf;
  }
  if (!manifest) throw std::runtime_error("manifest write failed in " + dir);
}

ScanDataset read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  ScanDataset ds;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string key;
      double v;
      if (hs >> key >> v && key == "floor_z") ds.floor_z = v;
      continue;
    }
    std::istringstream ls(line);
    ManifestEntry e;
    if (!(ls >> e.file >> e.pose.x >> e.pose.y >> e.pose.z)) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected 'scan_file x y z'");
    }
    ds.entries.push_back(e);
  }
  return ds;
}

Scan load_scan_file(const std::string& path, const Vec3& pose) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scan file: " + path);
  Scan scan;
  scan.pose.position = pose;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    LabeledPoint p;
    double r, g, b;
    if (!(ls >> p.position.x >> p.position.y >> p.position.z >> r >> g >> b >>
          p.gt_class >> p.gt_instance)) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected 8 fields");
    }
    p.color = {r / 255.0, g / 255.0, b / 255.0};
    scan.points.push_back(p);
  }
  return scan;
}

}  // namespace mcpseg
