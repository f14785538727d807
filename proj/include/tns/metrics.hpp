#pragma once

// Quantitative evaluation: PSNR on linear color, masked depth RMSE, and a
// symmetric Chamfer distance between a mesh and an analytic scene.

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "tns/image_io.hpp"
#include "tns/meshing.hpp"
#include "tns/scenegen.hpp"

namespace tns::metrics {

struct EvalReport {
  std::vector<int> frame_ids;
  std::vector<double> frame_psnr;
  std::vector<double> frame_depth_rmse;
  double mean_psnr = 0;
  double depth_rmse = 0;  // pooled over all masked pixels
  double chamfer = -1;    // < 0 when not computed
  std::string split;
};

// 10*log10(peak^2 / MSE) over all entries; identical inputs cap at 99 dB.
double psnr(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double peak);

double depth_rmse(const img::DepthImage& pred, const img::DepthImage& gt,
                  const std::vector<std::uint8_t>& mask);

// Nearest-distance queries from points to mesh triangles via a uniform grid.
class MeshDistanceIndex {
 public:
  explicit MeshDistanceIndex(const mesh::Mesh& mesh);
  double distance(const Eigen::Vector3d& p) const;

 private:
  const mesh::Mesh& mesh_;
  Eigen::Vector3d lo_, hi_;
  double cell_ = 0;
  int nx_ = 0, ny_ = 0, nz_ = 0;
  std::vector<std::vector<int>> cells_;
};

// Symmetric mean of (A) |analytic sdf| over area-weighted random mesh
// samples and (B) distance from sphere-traced ground-truth surface points
// to the mesh.
double chamfer(const mesh::Mesh& m, const scene::AnalyticScene& scn, int sample_count,
               std::uint64_t seed);

void write_eval_csv(const EvalReport& report, const std::string& path);
void write_eval_summary(const EvalReport& report, const std::string& path);

}  // namespace tns::metrics
