#include "tns/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "tns/rng.hpp"

namespace tns::metrics {

using Eigen::Vector3d;

double psnr(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double peak) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("psnr: dimension mismatch");
  if (peak <= 0) throw std::invalid_argument("psnr: peak must be > 0");
  const double mse = (a - b).array().square().mean();
  if (mse <= 0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(peak * peak / mse));
}

double depth_rmse(const img::DepthImage& pred, const img::DepthImage& gt,
                  const std::vector<std::uint8_t>& mask) {
  if (pred.width != gt.width || pred.height != gt.height ||
      mask.size() != gt.values.size())
    throw std::invalid_argument("depth_rmse: dimension mismatch");
  double acc = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const double d = static_cast<double>(pred.values[i]) - gt.values[i];
    acc += d * d;
    ++count;
  }
  if (count == 0) throw std::invalid_argument("depth_rmse: empty mask");
  return std::sqrt(acc / count);
}

namespace {

// Ericson, Real-Time Collision Detection, closest point on triangle.
Vector3d closest_point_on_triangle(const Vector3d& p, const Vector3d& a, const Vector3d& b,
                                   const Vector3d& c) {
  const Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
  const Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && d4 - d3 >= 0 && d5 - d6 >= 0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

}  // namespace

MeshDistanceIndex::MeshDistanceIndex(const mesh::Mesh& m) : mesh_(m) {
  if (m.empty()) throw std::invalid_argument("MeshDistanceIndex: empty mesh");
  lo_.setConstant(std::numeric_limits<double>::max());
  hi_.setConstant(std::numeric_limits<double>::lowest());
  for (const auto& v : m.vertices) {
    lo_ = lo_.cwiseMin(v);
    hi_ = hi_.cwiseMax(v);
  }
  const Vector3d extent = (hi_ - lo_).cwiseMax(1e-9);
  cell_ = extent.maxCoeff() / 48.0;
  nx_ = std::max(1, static_cast<int>(std::ceil(extent.x() / cell_)));
  ny_ = std::max(1, static_cast<int>(std::ceil(extent.y() / cell_)));
  nz_ = std::max(1, static_cast<int>(std::ceil(extent.z() / cell_)));
  cells_.resize(static_cast<size_t>(nx_) * ny_ * nz_);
  for (int t = 0; t < static_cast<int>(m.triangles.size()); ++t) {
    Vector3d tlo = lo_ + Vector3d::Constant(std::numeric_limits<double>::max());
    Vector3d thi = lo_ + Vector3d::Constant(std::numeric_limits<double>::lowest());
    for (int k = 0; k < 3; ++k) {
      const Vector3d& v = m.vertices[m.triangles[t][k]];
      tlo = tlo.cwiseMin(v);
      thi = thi.cwiseMax(v);
    }
    const auto clampi = [](int v, int n) { return std::clamp(v, 0, n - 1); };
    const int x0 = clampi(static_cast<int>((tlo.x() - lo_.x()) / cell_), nx_);
    const int x1 = clampi(static_cast<int>((thi.x() - lo_.x()) / cell_), nx_);
    const int y0 = clampi(static_cast<int>((tlo.y() - lo_.y()) / cell_), ny_);
    const int y1 = clampi(static_cast<int>((thi.y() - lo_.y()) / cell_), ny_);
    const int z0 = clampi(static_cast<int>((tlo.z() - lo_.z()) / cell_), nz_);
    const int z1 = clampi(static_cast<int>((thi.z() - lo_.z()) / cell_), nz_);
    for (int z = z0; z <= z1; ++z)
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
          cells_[(static_cast<size_t>(z) * ny_ + y) * nx_ + x].push_back(t);
  }
}

double MeshDistanceIndex::distance(const Eigen::Vector3d& p) const {
  const auto clampi = [](int v, int n) { return std::clamp(v, 0, n - 1); };
  const int px = clampi(static_cast<int>((p.x() - lo_.x()) / cell_), nx_);
  const int py = clampi(static_cast<int>((p.y() - lo_.y()) / cell_), ny_);
  const int pz = clampi(static_cast<int>((p.z() - lo_.z()) / cell_), nz_);
  double best = std::numeric_limits<double>::max();
  const int max_ring = std::max({nx_, ny_, nz_});
  for (int ring = 0; ring <= max_ring; ++ring) {
    // Once a hit is found, one extra ring suffices: any triangle outside it
    // is at least ring*cell_ away (measured from the query's cell).
    if (best < (ring - 1) * cell_) break;
    bool any_cell = false;
    for (int z = pz - ring; z <= pz + ring; ++z) {
      if (z < 0 || z >= nz_) continue;
      for (int y = py - ring; y <= py + ring; ++y) {
        if (y < 0 || y >= ny_) continue;
        for (int x = px - ring; x <= px + ring; ++x) {
          if (x < 0 || x >= nx_) continue;
          const bool on_shell = std::max({std::abs(x - px), std::abs(y - py),
                                          std::abs(z - pz)}) == ring;
          if (!on_shell) continue;
          any_cell = true;
          for (int t : cells_[(static_cast<size_t>(z) * ny_ + y) * nx_ + x]) {
            const auto& tri = mesh_.triangles[t];
            const Vector3d q = closest_point_on_triangle(
                p, mesh_.vertices[tri[0]], mesh_.vertices[tri[1]], mesh_.vertices[tri[2]]);
            best = std::min(best, (p - q).norm());
          }
        }
      }
    }
    if (!any_cell && best < std::numeric_limits<double>::max() && ring > max_ring) break;
  }
  return best;
}

double chamfer(const mesh::Mesh& m, const scene::AnalyticScene& scn, int sample_count,
               std::uint64_t seed) {
  if (m.empty()) throw std::runtime_error("chamfer: empty mesh");
  Rng rng(seed);

  // (A) area-weighted samples on the mesh vs the exact field.
  std::vector<double> cum(m.triangles.size());
  double total = 0;
  for (size_t t = 0; t < m.triangles.size(); ++t) {
    total += m.triangle_area(static_cast<int>(t));
    cum[t] = total;
  }
  double sum_a = 0;
  for (int i = 0; i < sample_count; ++i) {
    const double u = rng.uniform() * total;
    const size_t t = std::lower_bound(cum.begin(), cum.end(), u) - cum.begin();
    const auto& tri = m.triangles[std::min(t, m.triangles.size() - 1)];
    double r1 = std::sqrt(rng.uniform()), r2 = rng.uniform();
    const Vector3d p = (1 - r1) * m.vertices[tri[0]] + r1 * (1 - r2) * m.vertices[tri[1]] +
                       r1 * r2 * m.vertices[tri[2]];
    sum_a += std::abs(scene::analytic_sdf(scn, p));
  }

  // (B) sphere-traced ground-truth surface points vs the mesh.
  MeshDistanceIndex index(m);
  const auto poses = scene::make_trajectory(scn, 20);
  const geom::CameraIntrinsics intr = scene::default_intrinsics(scn, 64, 64);
  double sum_b = 0;
  int found = 0, guard = 0;
  while (found < sample_count && guard++ < sample_count * 200) {
    const auto& pose = poses[rng.uniform_index(poses.size())];
    const double px = rng.uniform(0.0, intr.width);
    const double py = rng.uniform(0.0, intr.height);
    geom::Ray ray = geom::ray_for_pixel(intr, pose, px, py, scn.t_near, scn.t_far);
    auto hit = scene::sphere_trace(scn, ray);
    if (!hit) continue;
    sum_b += index.distance(ray.at(*hit));
    ++found;
  }
  if (found == 0) throw std::runtime_error("chamfer: no ground-truth surface samples");
  return 0.5 * (sum_a / sample_count + sum_b / found);
}

void write_eval_csv(const EvalReport& report, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "frame,split,psnr,depth_rmse\n";
  f.precision(10);
  for (size_t i = 0; i < report.frame_ids.size(); ++i)
    f << report.frame_ids[i] << "," << report.split << "," << report.frame_psnr[i] << ","
      << report.frame_depth_rmse[i] << "\n";
}

void write_eval_summary(const EvalReport& report, const std::string& path) {
  nlohmann::json j = {{"split", report.split},
                      {"mean_psnr", report.mean_psnr},
                      {"depth_rmse", report.depth_rmse},
                      {"frames", report.frame_ids}};
  if (report.chamfer >= 0) j["chamfer"] = report.chamfer;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << j.dump(2) << "\n";
}

}  // namespace tns::metrics
