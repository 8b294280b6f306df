#pragma once

#include <array>
#include <string>
#include <vector>

#include "mcpseg/common.hpp"

namespace mcpseg {

struct LabeledPoint {
  Vec3 position;       // meters
  Vec3 color;          // each channel in [0,1]
  int gt_class = 0;    // in [0, kNumClasses)
  int gt_instance = 0; // unique per object in an environment
};

/// Fixed 13-class convention (indoor building components and furniture)
/// with a distinct display color per class.
struct ClassLegend {
  std::array<std::string, kNumClasses> names;
  std::array<Vec3, kNumClasses> colors;

  static const ClassLegend& default_legend();
};

struct Environment {
  std::vector<LabeledPoint> points;
  double floor_z = 0.0;  // reference height of the floor
};

/// Loads a labeled point cloud from text: one "x y z r g b class_id
/// instance_id" per line, '#' comments ignored, optional "# floor_z <v>"
/// header. Colors are stored as 0-255 integers and scaled to [0,1].
/// Throws std::runtime_error with the line number on malformed input.
Environment load_environment(const std::string& path);

void save_environment(const std::string& path, const Environment& env);

enum class ColorMode { kClass, kInstance, kEmbedding };

/// One point of a colored export. `label` is read in class / instance mode,
/// `color` (channels in [0,1]) in embedding mode.
struct ExportPoint {
  Vec3 position;
  int label = 0;
  Vec3 color;
};

/// Writes an ASCII PLY with per-vertex x,y,z (float) and red,green,blue
/// (uchar). Channel bytes are floor(c * 255 + 0.5). Instance colors are a
/// pure function of the instance ID.
void export_colored(const std::vector<ExportPoint>& points, ColorMode mode,
                    const ClassLegend& legend, const std::string& path);

/// Deterministic pseudo-random color for an instance ID.
Vec3 instance_color(int instance_id);

struct PlyVertex {
  Vec3 position;
  Vec3 color;  // [0,1]
};
std::vector<PlyVertex> read_ply_vertices(const std::string& path);

/// Projects row-major `count` x `dim` embeddings onto their top-3 principal
/// axes and min-max rescales each output channel to [0,1]. Channels with
/// degenerate variance are filled with 0.5.
std::vector<Vec3> pca_to_rgb(const std::vector<double>& embeddings, int count,
                             int dim);

}  // namespace mcpseg
