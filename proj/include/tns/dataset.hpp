#pragma once

// In-memory view of a generated dataset directory: linearized images,
// ground-truth and rescaled guide depth, per-frame poses, split membership.

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "tns/depthguide.hpp"
#include "tns/geometry.hpp"
#include "tns/image_io.hpp"
#include "tns/scenegen.hpp"

namespace tns::data {

struct Frame {
  int index = 0;
  geom::Pose pose;
  std::string split;
  Eigen::Matrix3Xf linear_rgb;             // 3 x (w*h), sRGB inverted, row-major pixels
  img::DepthImage depth_gt;                // ray distance, 0 = miss
  std::optional<depthguide::DepthMap> guide;  // rescaled, only on guide frames
};

struct SceneDataset {
  geom::CameraIntrinsics intrinsics;
  double t_near = 0, t_far = 0;
  std::vector<Frame> frames;
  scene::DatasetManifest manifest;
  double fitted_depth_scale = 0;  // 0 when no guide frames are loaded

  std::vector<int> split_indices(const std::string& split) const {
    std::vector<int> out;
    for (const auto& f : frames)
      if (f.split == split) out.push_back(f.index);
    return out;
  }

  Eigen::Vector3d pixel_color(int frame, int x, int y) const {
    return frames[frame].linear_rgb.col(y * intrinsics.width + x).cast<double>();
  }

  geom::Ray pixel_ray(int frame, double px, double py) const {
    return geom::ray_for_pixel(intrinsics, frames[frame].pose, px, py, t_near, t_far);
  }
};

// Loads a dataset directory. guide_frames selects which frames get a guide
// depth map (they must have one on disk); the map is rescaled once via the
// sparse observations. Empty list = no depth guidance.
SceneDataset load_dataset(const std::string& dir, const std::vector<int>& guide_frames);

}  // namespace tns::data
