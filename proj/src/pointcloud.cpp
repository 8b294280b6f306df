#include "mcpseg/pointcloud.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mcpseg {

const ClassLegend& ClassLegend::default_legend() {
  static const ClassLegend legend = [] {
    ClassLegend l;
    l.names = {"ceiling", "floor", "wall",  "beam",     "column",
               "window",  "door",  "table", "chair",    "sofa",
               "bookcase", "board", "clutter"};
    l.colors = {Vec3{0.85, 0.85, 0.85}, Vec3{0.55, 0.35, 0.15},
                Vec3{0.95, 0.85, 0.55}, Vec3{0.80, 0.10, 0.10},
                Vec3{0.55, 0.10, 0.55}, Vec3{0.20, 0.80, 0.95},
                Vec3{0.90, 0.55, 0.10}, Vec3{0.10, 0.45, 0.85},
                Vec3{0.95, 0.25, 0.55}, Vec3{0.50, 0.75, 0.20},
                Vec3{0.35, 0.20, 0.70}, Vec3{0.10, 0.70, 0.45},
                Vec3{0.45, 0.45, 0.45}};
    return l;
  }();
  return legend;
}

Environment load_environment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open environment file: " + path);

  Environment env;
  bool floor_set = false;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string key;
      double v;
      if (hs >> key >> v && key == "floor_z") {
        env.floor_z = v;
        floor_set = true;
      }
      continue;
    }
    std::istringstream ls(line);
    LabeledPoint p;
    double r, g, b;
    if (!(ls >> p.position.x >> p.position.y >> p.position.z >> r >> g >> b >>
          p.gt_class >> p.gt_instance)) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected 8 fields (x y z r g b class_id instance_id)");
    }
    if (p.gt_class < 0 || p.gt_class >= kNumClasses) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": class_id " + std::to_string(p.gt_class) +
                               " out of range [0," +
                               std::to_string(kNumClasses - 1) + "]");
    }
    p.color = {r / 255.0, g / 255.0, b / 255.0};
    env.points.push_back(p);
  }
  if (env.points.empty()) {
    throw std::runtime_error("no points in environment file: " + path);
  }
  if (!floor_set) {
    double min_z = env.points.front().position.z;
    for (const auto& p : env.points) min_z = std::min(min_z, p.position.z);
    env.floor_z = min_z;
  }
  return env;
}

namespace {
int channel_byte(double c) {
  const int v = static_cast<int>(std::floor(c * 255.0 + 0.5));
  return std::min(255, std::max(0, v));
}
}  // namespace

void save_environment(const std::string& path, const Environment& env) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write environment file: " + path);
  char buf[256];
  std::snprintf(buf, sizeof(buf), "# floor_z %.9g\n", env.floor_z);
  out << buf;
  for (const auto& p : env.points) {
    std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %d %d %d %d %d\n",
                  p.position.x, p.position.y, p.position.z,
                  channel_byte(p.color.x), channel_byte(p.color.y),
                  channel_byte(p.color.z), p.gt_class, p.gt_instance);
    out << buf;
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Vec3 instance_color(int instance_id) {
  const std::uint64_t h = splitmix64(static_cast<std::uint64_t>(instance_id) + 0x5eedull);
  // bright, saturated palette: channels in [0.15, 1.0]
  auto chan = [](std::uint64_t bits) {
    return 0.15 + 0.85 * static_cast<double>(bits & 0xffff) / 65535.0;
  };
  return {chan(h), chan(h >> 16), chan(h >> 32)};
}

void export_colored(const std::vector<ExportPoint>& points, ColorMode mode,
                    const ClassLegend& legend, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write PLY file: " + path);
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "end_header\n";
  char buf[192];
  for (const auto& p : points) {
    Vec3 c;
    switch (mode) {
      case ColorMode::kClass:
        if (p.label < 0 || p.label >= kNumClasses) {
          throw std::invalid_argument("class label out of range: " +
                                      std::to_string(p.label));
        }
        c = legend.colors[p.label];
        break;
      case ColorMode::kInstance:
        c = instance_color(p.label);
        break;
      case ColorMode::kEmbedding:
        c = p.color;
        if (c.x < -1e-9 || c.x > 1.0 + 1e-9 || c.y < -1e-9 ||
            c.y > 1.0 + 1e-9 || c.z < -1e-9 || c.z > 1.0 + 1e-9) {
          throw std::invalid_argument("embedding color outside [0,1]");
        }
        break;
    }
    std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %d %d %d\n", p.position.x,
                  p.position.y, p.position.z, channel_byte(c.x),
                  channel_byte(c.y), channel_byte(c.z));
    out << buf;
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<PlyVertex> read_ply_vertices(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open PLY file: " + path);
  std::string line;
  long vertex_count = -1;
  if (!std::getline(in, line) || line != "ply") {
    throw std::runtime_error("not an ASCII PLY file: " + path);
  }
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "element") {
      std::string what;
      long count;
      if (ls >> what >> count && what == "vertex") vertex_count = count;
    } else if (tok == "end_header") {
      break;
    }
  }
  if (vertex_count < 0) throw std::runtime_error("PLY header missing vertex element");
  std::vector<PlyVertex> verts;
  verts.reserve(vertex_count);
  for (long i = 0; i < vertex_count; ++i) {
    if (!std::getline(in, line)) {
      throw std::runtime_error("PLY truncated at vertex " + std::to_string(i));
    }
    std::istringstream ls(line);
    PlyVertex v;
    double r, g, b;
    if (!(ls >> v.position.x >> v.position.y >> v.position.z >> r >> g >> b)) {
      throw std::runtime_error("bad PLY vertex line " + std::to_string(i));
    }
    v.color = {r / 255.0, g / 255.0, b / 255.0};
    verts.push_back(v);
  }
  return verts;
}

std::vector<Vec3> pca_to_rgb(const std::vector<double>& embeddings, int count,
                             int dim) {
  if (count <= 0 || dim <= 0 ||
      embeddings.size() != static_cast<std::size_t>(count) * dim) {
    throw std::invalid_argument("pca_to_rgb: bad dimensions");
  }
  std::vector<double> mean(dim, 0.0);
  for (int i = 0; i < count; ++i)
    for (int d = 0; d < dim; ++d) mean[d] += embeddings[i * dim + d];
  for (int d = 0; d < dim; ++d) mean[d] /= count;

  std::vector<double> cov(static_cast<std::size_t>(dim) * dim, 0.0);
  for (int i = 0; i < count; ++i) {
    for (int a = 0; a < dim; ++a) {
      const double da = embeddings[i * dim + a] - mean[a];
      for (int b = a; b < dim; ++b) {
        cov[a * dim + b] += da * (embeddings[i * dim + b] - mean[b]);
      }
    }
  }
  for (int a = 0; a < dim; ++a)
    for (int b = a; b < dim; ++b) {
      cov[a * dim + b] /= count;
      cov[b * dim + a] = cov[a * dim + b];
    }

  double trace = 0.0;
  for (int d = 0; d < dim; ++d) trace += cov[d * dim + d];
  const SymmetricEigen eig = eigen_symmetric(cov, dim);

  std::vector<Vec3> out(count, Vec3{0.5, 0.5, 0.5});
  const double eig_tol = std::max(trace, 1.0) * 1e-12;
  for (int k = 0; k < 3 && k < dim; ++k) {
    if (eig.values[k] <= eig_tol) continue;  // degenerate axis stays at 0.5
    std::vector<double> score(count);
    double lo = 0.0, hi = 0.0;
    for (int i = 0; i < count; ++i) {
      double s = 0.0;
      for (int d = 0; d < dim; ++d) {
        s += (embeddings[i * dim + d] - mean[d]) * eig.vectors[k * dim + d];
      }
      score[i] = s;
      if (i == 0) {
        lo = hi = s;
      } else {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
      }
    }
    if (hi - lo <= 1e-12) continue;
    const double inv = 1.0 / (hi - lo);
    for (int i = 0; i < count; ++i) out[i][k] = (score[i] - lo) * inv;
  }
  return out;
}

}  // namespace mcpseg
