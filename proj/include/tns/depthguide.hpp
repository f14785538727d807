#pragma once

// Guide-depth pathway: a monocular-style depth map of arbitrary scale is
// anchored to metric units by a least-squares scale fit against sparse
// depth observations, then queried per ray at the nearest pixel.

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tns/image_io.hpp"

namespace tns::depthguide {

struct DepthMap {
  int frame_id = -1;
  img::DepthImage values;  // 0 marks invalid pixels

  bool valid_at(int x, int y) const {
    const float v = values.at(x, y);
    return v > 0 && std::isfinite(v);
  }
};

struct SparseObservation {
  int frame_id = -1;
  double px = 0, py = 0;
  double depth = 0;  // camera-frame, world units
};

// Least-squares scale k minimizing sum (k*D_j - z_j)^2 over observations
// that land on valid pixels of the map's frame. Nearest-pixel lookup.
inline double fit_depth_scale(const DepthMap& map, const std::vector<SparseObservation>& obs) {
  double num = 0, den = 0;
  int used = 0;
  for (const auto& o : obs) {
    if (o.frame_id != map.frame_id) continue;
    const int x = static_cast<int>(o.px);
    const int y = static_cast<int>(o.py);
    if (x < 0 || x >= map.values.width || y < 0 || y >= map.values.height) continue;
    if (!map.valid_at(x, y)) continue;
    const double d = map.values.at(x, y);
    num += d * o.depth;
    den += d * d;
    ++used;
  }
  if (used < 3) throw std::runtime_error("fit_depth_scale: need at least 3 usable observations");
  if (den <= 0) throw std::runtime_error("fit_depth_scale: degenerate map values");
  return num / den;
}

inline DepthMap rescale(DepthMap map, double k) {
  for (float& v : map.values.values)
    if (v > 0) v = static_cast<float>(v * k);
  return map;
}

// Rescaled guide depth at the nearest pixel, or nothing for invalid pixels.
inline std::optional<double> guide_depth_for_ray(const DepthMap& map, double px, double py) {
  const int x = static_cast<int>(px);
  const int y = static_cast<int>(py);
  if (x < 0 || x >= map.values.width || y < 0 || y >= map.values.height)
    throw std::invalid_argument("guide_depth_for_ray: pixel outside image");
  if (!map.valid_at(x, y)) return std::nullopt;
  return map.values.at(x, y);
}

// CSV with header "frame_id,px,py,depth".
inline std::vector<SparseObservation> load_sparse_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line) || line.rfind("frame_id,px,py,depth", 0) != 0)
    throw std::runtime_error("bad sparse observation header in " + path);
  std::vector<SparseObservation> obs;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    SparseObservation o;
    char c;
    ss >> o.frame_id >> c >> o.px >> c >> o.py >> c >> o.depth;
    if (!ss) throw std::runtime_error("bad sparse observation row: " + line);
    if (o.depth <= 0) throw std::runtime_error("sparse observation depth must be > 0");
    obs.push_back(o);
  }
  return obs;
}

inline void save_sparse_csv(const std::string& path, const std::vector<SparseObservation>& obs) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "frame_id,px,py,depth\n";
  f.precision(17);
  for (const auto& o : obs) f << o.frame_id << "," << o.px << "," << o.py << "," << o.depth << "\n";
}

}  // namespace tns::depthguide
