#pragma once

// Synthetic dataset factory: analytic SDF scenes rendered by sphere tracing
// under orbit or tube-flythrough trajectories, with headlight shading,
// ground-truth depth, synthetically degraded guide depth, and sparse depth
// observations. All depths in dataset files are distances along the pixel
// ray. Convention: f > 0 in free (traversable) space.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tns/geometry.hpp"
#include "tns/image_io.hpp"

namespace tns::scene {

enum class SdfKind { Sphere, Torus, BentTube };
enum class TrajectoryKind { Orbit, Flythrough };

struct AnalyticScene {
  SdfKind kind = SdfKind::Sphere;
  // sphere
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.5;
  // torus (xy-plane)
  double major_radius = 0.5, minor_radius = 0.2;
  // bent tube: circular-arc centerline of radius arc_radius in the xy-plane,
  // arc angle arc_angle, lumen radius tube_radius
  double arc_radius = 0.6, arc_angle = 4.2, tube_radius = 0.22;

  bool low_texture = false;
  TrajectoryKind trajectory = TrajectoryKind::Orbit;
  double t_near = 0.6, t_far = 3.0;

  static AnalyticScene preset(const std::string& name);  // sphere | torus | tube

  nlohmann::json to_json() const;
  static AnalyticScene from_json(const nlohmann::json& j);
};

double analytic_sdf(const AnalyticScene& scene, const Eigen::Vector3d& x);
Eigen::Vector3d analytic_normal(const AnalyticScene& scene, const Eigen::Vector3d& x);

// March t <- t + f until |f| < 1e-6 or t leaves [t_near, t_far].
std::optional<double> sphere_trace(const AnalyticScene& scene, const geom::Ray& ray);

Eigen::Vector3d albedo(const AnalyticScene& scene, const Eigen::Vector3d& p);

// Headlight at the camera: albedo * clamp(<n, -v>, 0, 1) / (1 + d^2).
Eigen::Vector3d shade(const AnalyticScene& scene, const Eigen::Vector3d& hit,
                      const Eigen::Vector3d& normal, const Eigen::Vector3d& view,
                      double distance);

geom::CameraIntrinsics default_intrinsics(const AnalyticScene& scene, int width, int height);
std::vector<geom::Pose> make_trajectory(const AnalyticScene& scene, int frame_count);

struct GenerationParams {
  int frames = 20;
  int width = 64, height = 64;
  std::uint64_t seed = 0;
  double depth_scale_true = 2.0;  // guide depth is GT/depth_scale_true ...
  double depth_noise = 0.0;       // ... with multiplicative Gaussian noise
  int sparse_count = 200;
  std::vector<int> guide_frames = {0};
};

struct FrameEntry {
  Eigen::Matrix4d pose = Eigen::Matrix4d::Identity();  // camera-to-world
  std::string image;
  std::string depth_gt;
  std::string depth_guide;  // empty unless a guide frame
  std::string split;        // train | test | val
};

struct DatasetManifest {
  geom::CameraIntrinsics intrinsics;
  std::vector<FrameEntry> frames;
  double t_near = 0, t_far = 0;
  std::uint64_t seed = 0;
  AnalyticScene scene;
  GenerationParams params;
};

// 6:2:2 split by frame index: i % 10 -> 0..5 train, 6..7 test, 8..9 val.
std::string split_for_index(int index);

// Renders one frame; linear shading, sRGB-quantized storage.
void render_frame(const AnalyticScene& scene, const geom::CameraIntrinsics& intr,
                  const geom::Pose& pose, img::ImageU8* image, img::DepthImage* depth);

DatasetManifest generate_dataset(const AnalyticScene& scene, const std::string& out_dir,
                                 const GenerationParams& params, int threads = 1);

void save_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

}  // namespace tns::scene
