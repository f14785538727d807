#pragma once

// Isosurface extraction from an SDF via marching cubes, with shared-vertex
// welding and OBJ export. Triangles wind so normals point toward
// increasing field values.

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace tns::mesh {

struct Mesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> triangles;

  bool empty() const { return triangles.empty(); }
  double triangle_area(int t) const;
  double surface_area() const;
};

// Batched field evaluator: 3 x N positions -> N values.
using FieldBatchFn = std::function<Eigen::VectorXd(const Eigen::Matrix3Xd&)>;

// resolution = cells per axis (so resolution+1 samples per axis).
Mesh marching_cubes(const FieldBatchFn& field, const Eigen::Vector3d& lo,
                    const Eigen::Vector3d& hi, int resolution);

void export_mesh(const Mesh& mesh, const std::string& path);
Mesh load_obj(const std::string& path);

}  // namespace tns::mesh
