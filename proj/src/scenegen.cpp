#include "tns/scenegen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <thread>

#include "tns/depthguide.hpp"
#include "tns/rng.hpp"

namespace tns::scene {

namespace fs = std::filesystem;
using Eigen::Vector3d;

AnalyticScene AnalyticScene::preset(const std::string& name) {
  AnalyticScene s;
  if (name == "sphere") {
    s.kind = SdfKind::Sphere;
    s.trajectory = TrajectoryKind::Orbit;
    s.t_near = 0.6;
    s.t_far = 3.0;
  } else if (name == "torus") {
    s.kind = SdfKind::Torus;
    s.trajectory = TrajectoryKind::Orbit;
    s.t_near = 0.6;
    s.t_far = 3.0;
  } else if (name == "tube") {
    s.kind = SdfKind::BentTube;
    s.trajectory = TrajectoryKind::Flythrough;
    s.t_near = 0.02;
    s.t_far = 2.5;
  } else {
    throw std::invalid_argument("unknown scene preset: " + name);
  }
  return s;
}

nlohmann::json AnalyticScene::to_json() const {
  const char* kinds[] = {"sphere", "torus", "bent_tube"};
  const char* trajs[] = {"orbit", "flythrough"};
  return {{"kind", kinds[static_cast<int>(kind)]},
          {"center", {center.x(), center.y(), center.z()}},
          {"radius", radius},
          {"major_radius", major_radius},
          {"minor_radius", minor_radius},
          {"arc_radius", arc_radius},
          {"arc_angle", arc_angle},
          {"tube_radius", tube_radius},
          {"low_texture", low_texture},
          {"trajectory", trajs[static_cast<int>(trajectory)]},
          {"t_near", t_near},
          {"t_far", t_far}};
}

AnalyticScene AnalyticScene::from_json(const nlohmann::json& j) {
  AnalyticScene s;
  const std::string kind = j.at("kind");
  s.kind = kind == "sphere" ? SdfKind::Sphere
                            : (kind == "torus" ? SdfKind::Torus : SdfKind::BentTube);
  auto c = j.at("center");
  s.center = Vector3d(c[0], c[1], c[2]);
  s.radius = j.at("radius");
  s.major_radius = j.at("major_radius");
  s.minor_radius = j.at("minor_radius");
  s.arc_radius = j.at("arc_radius");
  s.arc_angle = j.at("arc_angle");
  s.tube_radius = j.at("tube_radius");
  s.low_texture = j.at("low_texture");
  s.trajectory = j.at("trajectory") == "orbit" ? TrajectoryKind::Orbit : TrajectoryKind::Flythrough;
  s.t_near = j.at("t_near");
  s.t_far = j.at("t_far");
  return s;
}

namespace {

// Distance from x to the circular arc {arc_radius*(cos p, sin p, 0), p in [0, angle]}.
double arc_distance(const AnalyticScene& s, const Vector3d& x) {
  const double phi = std::atan2(x.y(), x.x());
  const double wrapped = phi < 0 ? phi + 2.0 * 3.14159265358979323846 : phi;
  if (wrapped >= 0 && wrapped <= s.arc_angle) {
    const double rho = std::hypot(x.x(), x.y());
    return std::hypot(rho - s.arc_radius, x.z());
  }
  const Vector3d a(s.arc_radius, 0, 0);
  const Vector3d b(s.arc_radius * std::cos(s.arc_angle), s.arc_radius * std::sin(s.arc_angle), 0);
  return std::min((x - a).norm(), (x - b).norm());
}

}  // namespace

double analytic_sdf(const AnalyticScene& s, const Vector3d& x) {
  switch (s.kind) {
    case SdfKind::Sphere:
      return (x - s.center).norm() - s.radius;
    case SdfKind::Torus: {
      const double rho = std::hypot(x.x(), x.y());
      return std::hypot(rho - s.major_radius, x.z()) - s.minor_radius;
    }
    case SdfKind::BentTube:
      // Positive inside the lumen (free space for flythrough cameras),
      // zero on the wall, negative beyond it.
      return s.tube_radius - arc_distance(s, x);
  }
  return 0;
}

Eigen::Vector3d analytic_normal(const AnalyticScene& s, const Vector3d& x) {
  const double eps = 1e-6;
  Vector3d g;
  for (int k = 0; k < 3; ++k) {
    Vector3d hi = x, lo = x;
    hi[k] += eps;
    lo[k] -= eps;
    g[k] = (analytic_sdf(s, hi) - analytic_sdf(s, lo)) / (2 * eps);
  }
  return g.normalized();
}

std::optional<double> sphere_trace(const AnalyticScene& scene, const geom::Ray& ray) {
  double t = ray.t_near;
  for (int iter = 0; iter < 2000; ++iter) {
    const double f = analytic_sdf(scene, ray.at(t));
    if (f < 1e-6) return f > -1e-6 ? std::optional<double>(t) : std::nullopt;
    t += f;
    if (t > ray.t_far) return std::nullopt;
  }
  return std::nullopt;
}

Eigen::Vector3d albedo(const AnalyticScene& s, const Vector3d& p) {
  const double u = p.x() + 0.7 * p.y() + 0.4 * p.z();
  if (s.low_texture) {
    // Uniform tissue tone with 5% brightness stripes.
    const double stripe = std::sin(8.0 * 3.14159265358979323846 * u) > 0 ? 1.0 : 0.95;
    return Vector3d(0.78, 0.42, 0.36) * stripe;
  }
  const double w1 = 0.5 * (1.0 + std::sin(6.0 * 3.14159265358979323846 * u));
  const double w2 = 0.5 * (1.0 + std::sin(4.0 * 3.14159265358979323846 * (p.y() - 0.3 * p.x())));
  return Vector3d(0.55 + 0.35 * w1, 0.30 + 0.30 * w2, 0.25 + 0.25 * w1 * w2);
}

Eigen::Vector3d shade(const AnalyticScene& scene, const Vector3d& hit, const Vector3d& normal,
                      const Vector3d& view, double distance) {
  const double lambert = std::clamp(normal.dot(-view), 0.0, 1.0);
  const double falloff = 1.0 / (1.0 + distance * distance);
  Vector3d c = albedo(scene, hit) * lambert * falloff;
  return c.cwiseMin(1.0).cwiseMax(0.0);
}

geom::CameraIntrinsics default_intrinsics(const AnalyticScene& scene, int width, int height) {
  geom::CameraIntrinsics intr;
  intr.width = width;
  intr.height = height;
  intr.cx = width / 2.0;
  intr.cy = height / 2.0;
  const double fov = scene.trajectory == TrajectoryKind::Flythrough ? 100.0 : 50.0;
  intr.fx = intr.fy = (width / 2.0) / std::tan(fov * 3.14159265358979323846 / 360.0);
  intr.validate();
  return intr;
}

namespace {

geom::Pose look_at(const Vector3d& eye, const Vector3d& target) {
  const Vector3d up(0, 0, 1);
  geom::Pose pose;
  Vector3d z = (target - eye).normalized();
  Vector3d x = z.cross(up).normalized();  // image y points down
  Vector3d y = z.cross(x);
  pose.rotation.col(0) = x;
  pose.rotation.col(1) = y;
  pose.rotation.col(2) = z;
  pose.translation = eye;
  return pose;
}

}  // namespace

std::vector<geom::Pose> make_trajectory(const AnalyticScene& scene, int frame_count) {
  std::vector<geom::Pose> poses;
  poses.reserve(frame_count);
  const double pi = 3.14159265358979323846;
  if (scene.trajectory == TrajectoryKind::Orbit) {
    for (int i = 0; i < frame_count; ++i) {
      const double theta = 2.0 * pi * i / frame_count;
      const Vector3d eye(1.5 * std::cos(theta), 1.5 * std::sin(theta),
                         0.45 * std::sin(2.0 * theta) + 0.1);
      poses.push_back(look_at(eye, scene.center));
    }
  } else {
    // Camera advances along the arc centerline looking down the lumen.
    const double lo = 0.12 * scene.arc_angle, hi = 0.72 * scene.arc_angle;
    for (int i = 0; i < frame_count; ++i) {
      const double phi = lo + (hi - lo) * i / std::max(frame_count - 1, 1);
      const Vector3d eye(scene.arc_radius * std::cos(phi), scene.arc_radius * std::sin(phi), 0);
      const double ahead = phi + 0.25;
      const Vector3d target(scene.arc_radius * std::cos(ahead),
                            scene.arc_radius * std::sin(ahead), 0);
      poses.push_back(look_at(eye, target));
    }
  }
  return poses;
}

std::string split_for_index(int index) {
  const int r = index % 10;
  if (r < 6) return "train";
  if (r < 8) return "test";
  return "val";
}

void render_frame(const AnalyticScene& scene, const geom::CameraIntrinsics& intr,
                  const geom::Pose& pose, img::ImageU8* image, img::DepthImage* depth) {
  image->width = intr.width;
  image->height = intr.height;
  image->rgb.assign(static_cast<size_t>(intr.width) * intr.height * 3, 0);
  depth->width = intr.width;
  depth->height = intr.height;
  depth->values.assign(static_cast<size_t>(intr.width) * intr.height, 0.0f);
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      geom::Ray ray =
          geom::ray_for_pixel(intr, pose, x + 0.5, y + 0.5, scene.t_near, scene.t_far);
      auto hit = sphere_trace(scene, ray);
      if (!hit) continue;
      const Vector3d p = ray.at(*hit);
      const Vector3d rgb = shade(scene, p, analytic_normal(scene, p), ray.direction, *hit);
      std::uint8_t* px = image->pixel(x, y);
      for (int c = 0; c < 3; ++c) px[c] = img::quantize_srgb(rgb[c]);
      depth->at(x, y) = static_cast<float>(*hit);
    }
  }
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + salt * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::string frame_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", i);
  return buf;
}

void parallel_frames(int count, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  for (int w = 0; w < std::min(threads, count); ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace

DatasetManifest generate_dataset(const AnalyticScene& scene, const std::string& out_dir,
                                 const GenerationParams& params, int threads) {
  DatasetManifest man;
  man.intrinsics = default_intrinsics(scene, params.width, params.height);
  man.t_near = scene.t_near;
  man.t_far = scene.t_far;
  man.seed = params.seed;
  man.scene = scene;
  man.params = params;

  auto poses = make_trajectory(scene, params.frames);
  for (const auto& pose : poses) {
    pose.validate();
    if (analytic_sdf(scene, pose.translation) <= 0.05)
      throw std::runtime_error("generate_dataset: camera too close to or inside geometry");
  }

  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "depth_gt");
  fs::create_directories(fs::path(out_dir) / "depth_guide");

  man.frames.resize(params.frames);
  std::vector<img::DepthImage> gt_depths(params.frames);
  parallel_frames(params.frames, threads, [&](int i) {
    img::ImageU8 image;
    img::DepthImage depth;
    render_frame(scene, man.intrinsics, poses[i], &image, &depth);
    FrameEntry& fe = man.frames[i];
    fe.pose.setIdentity();
    fe.pose.topLeftCorner<3, 3>() = poses[i].rotation;
    fe.pose.topRightCorner<3, 1>() = poses[i].translation;
    fe.split = split_for_index(i);
    fe.image = "images/" + frame_name(i) + ".png";
    fe.depth_gt = "depth_gt/" + frame_name(i) + ".pfm";
    img::write_png((fs::path(out_dir) / fe.image).string(), image);
    img::write_pfm((fs::path(out_dir) / fe.depth_gt).string(), depth);
    gt_depths[i] = std::move(depth);
  });

  // Degraded guide depth: GT / k_true with multiplicative Gaussian noise.
  std::vector<depthguide::SparseObservation> sparse;
  for (int gf : params.guide_frames) {
    if (gf < 0 || gf >= params.frames)
      throw std::runtime_error("generate_dataset: guide frame out of range");
    const img::DepthImage& gt = gt_depths[gf];
    img::DepthImage degraded = gt;
    Rng noise_rng(mix_seed(params.seed, 1000 + gf));
    for (float& v : degraded.values) {
      if (v <= 0) continue;
      v = static_cast<float>(v / params.depth_scale_true *
                             (1.0 + params.depth_noise * noise_rng.normal()));
    }
    FrameEntry& fe = man.frames[gf];
    fe.depth_guide = "depth_guide/" + frame_name(gf) + ".pfm";
    img::write_pfm((fs::path(out_dir) / fe.depth_guide).string(), degraded);

    // Sparse observations with exact depth on surface-visible pixels.
    Rng pick_rng(mix_seed(params.seed, 2000 + gf));
    int found = 0, guard = 0;
    while (found < params.sparse_count && guard++ < params.sparse_count * 1000) {
      const int x = static_cast<int>(pick_rng.uniform_index(gt.width));
      const int y = static_cast<int>(pick_rng.uniform_index(gt.height));
      if (gt.at(x, y) <= 0) continue;
      sparse.push_back({gf, x + 0.5, y + 0.5, gt.at(x, y)});
      ++found;
    }
    if (found < params.sparse_count)
      throw std::runtime_error("generate_dataset: not enough surface-visible pixels");
  }
  depthguide::save_sparse_csv((fs::path(out_dir) / "sparse.csv").string(), sparse);
  save_manifest(man, (fs::path(out_dir) / "scene.json").string());
  return man;
}

void save_manifest(const DatasetManifest& man, const std::string& path) {
  nlohmann::json j;
  j["intrinsics"] = {{"fx", man.intrinsics.fx},       {"fy", man.intrinsics.fy},
                     {"cx", man.intrinsics.cx},       {"cy", man.intrinsics.cy},
                     {"width", man.intrinsics.width}, {"height", man.intrinsics.height}};
  j["t_near"] = man.t_near;
  j["t_far"] = man.t_far;
  j["seed"] = man.seed;
  j["scene"] = man.scene.to_json();
  j["generator"] = {{"frames", man.params.frames},
                    {"width", man.params.width},
                    {"height", man.params.height},
                    {"depth_scale_true", man.params.depth_scale_true},
                    {"depth_noise", man.params.depth_noise},
                    {"sparse_count", man.params.sparse_count},
                    {"guide_frames", man.params.guide_frames}};
  j["frames"] = nlohmann::json::array();
  for (const auto& fe : man.frames) {
    std::vector<double> pose(16);
    // row-major 4x4
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) pose[r * 4 + c] = fe.pose(r, c);
    nlohmann::json fj = {{"pose", pose},
                         {"image", fe.image},
                         {"depth_gt", fe.depth_gt},
                         {"split", fe.split}};
    if (!fe.depth_guide.empty()) fj["depth_guide"] = fe.depth_guide;
    j["frames"].push_back(fj);
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  nlohmann::json j = nlohmann::json::parse(f);
  DatasetManifest man;
  const auto& ji = j.at("intrinsics");
  man.intrinsics.fx = ji.at("fx");
  man.intrinsics.fy = ji.at("fy");
  man.intrinsics.cx = ji.at("cx");
  man.intrinsics.cy = ji.at("cy");
  man.intrinsics.width = ji.at("width");
  man.intrinsics.height = ji.at("height");
  man.intrinsics.validate();
  man.t_near = j.at("t_near");
  man.t_far = j.at("t_far");
  man.seed = j.at("seed");
  man.scene = AnalyticScene::from_json(j.at("scene"));
  const auto& jg = j.at("generator");
  man.params.frames = jg.at("frames");
  man.params.width = jg.at("width");
  man.params.height = jg.at("height");
  man.params.depth_scale_true = jg.at("depth_scale_true");
  man.params.depth_noise = jg.at("depth_noise");
  man.params.sparse_count = jg.at("sparse_count");
  man.params.guide_frames = jg.at("guide_frames").get<std::vector<int>>();
  for (const auto& fj : j.at("frames")) {
    FrameEntry fe;
    const auto& pose = fj.at("pose");
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) fe.pose(r, c) = pose[r * 4 + c];
    fe.image = fj.at("image");
    fe.depth_gt = fj.at("depth_gt");
    fe.split = fj.at("split");
    if (fj.contains("depth_guide")) fe.depth_guide = fj.at("depth_guide");
    man.frames.push_back(fe);
  }
  return man;
}

}  // namespace tns::scene
