#include "tns/meshing.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "tns/mc_tables.hpp"

namespace tns::mesh {

using Eigen::Vector3d;

double Mesh::triangle_area(int t) const {
  const auto& tri = triangles[t];
  const Vector3d e1 = vertices[tri[1]] - vertices[tri[0]];
  const Vector3d e2 = vertices[tri[2]] - vertices[tri[0]];
  return 0.5 * e1.cross(e2).norm();
}

double Mesh::surface_area() const {
  double a = 0;
  for (int t = 0; t < static_cast<int>(triangles.size()); ++t) a += triangle_area(t);
  return a;
}

namespace {

// Canonical edge identity: (grid coords of the lower corner, axis).
struct EdgeBase {
  int dx, dy, dz, axis;
};

constexpr EdgeBase edge_base(int e) {
  const int a = kEdgeCorners[e][0], b = kEdgeCorners[e][1];
  int lo[3], axis = 0;
  for (int k = 0; k < 3; ++k) {
    lo[k] = kCornerOffset[a][k] < kCornerOffset[b][k] ? kCornerOffset[a][k]
                                                      : kCornerOffset[b][k];
    if (kCornerOffset[a][k] != kCornerOffset[b][k]) axis = k;
  }
  return {lo[0], lo[1], lo[2], axis};
}

}  // namespace

Mesh marching_cubes(const FieldBatchFn& field, const Vector3d& lo, const Vector3d& hi,
                    int resolution) {
  if (resolution < 8) throw std::invalid_argument("marching_cubes: resolution must be >= 8");
  const int N = resolution;
  const int G = N + 1;
  const Vector3d cell = (hi - lo) / N;

  // Grid samples, evaluated in column chunks.
  std::vector<double> values(static_cast<size_t>(G) * G * G);
  {
    const int chunk = 1 << 18;
    Eigen::Matrix3Xd pos(3, chunk);
    size_t idx = 0;
    int fill = 0;
    auto flush = [&](size_t end_idx) {
      if (fill == 0) return;
      Eigen::VectorXd v = field(pos.leftCols(fill));
      for (int i = 0; i < fill; ++i) values[end_idx - fill + i] = v[i];
      fill = 0;
    };
    for (int z = 0; z < G; ++z)
      for (int y = 0; y < G; ++y)
        for (int x = 0; x < G; ++x) {
          pos.col(fill++) = lo + Vector3d(x * cell.x(), y * cell.y(), z * cell.z());
          ++idx;
          if (fill == chunk) flush(idx);
        }
    flush(idx);
  }
  auto value_at = [&](int x, int y, int z) -> double {
    return values[(static_cast<size_t>(z) * G + y) * G + x];
  };
  auto point_at = [&](int x, int y, int z) {
    return Vector3d(lo.x() + x * cell.x(), lo.y() + y * cell.y(), lo.z() + z * cell.z());
  };

  Mesh mesh;
  std::unordered_map<std::uint64_t, int> edge_vertices;
  auto vertex_on_edge = [&](int x, int y, int z, int axis) -> int {
    const std::uint64_t key =
        ((static_cast<std::uint64_t>(x) * G + y) * G + z) * 3 + axis;
    auto it = edge_vertices.find(key);
    if (it != edge_vertices.end()) return it->second;
    int x2 = x + (axis == 0), y2 = y + (axis == 1), z2 = z + (axis == 2);
    const double f1 = value_at(x, y, z), f2 = value_at(x2, y2, z2);
    const Vector3d p1 = point_at(x, y, z), p2 = point_at(x2, y2, z2);
    const double denom = f2 - f1;
    const double t = std::abs(denom) < 1e-12 ? 0.5 : (0.0 - f1) / denom;
    mesh.vertices.push_back(p1 + t * (p2 - p1));
    const int id = static_cast<int>(mesh.vertices.size()) - 1;
    edge_vertices.emplace(key, id);
    return id;
  };

  for (int z = 0; z < N; ++z)
    for (int y = 0; y < N; ++y)
      for (int x = 0; x < N; ++x) {
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          const double v = value_at(x + kCornerOffset[c][0], y + kCornerOffset[c][1],
                                    z + kCornerOffset[c][2]);
          if (v < 0) cube |= 1 << c;
        }
        if (kEdgeTable[cube] == 0) continue;
        int edge_vertex[12];
        for (int e = 0; e < 12; ++e) {
          if (!(kEdgeTable[cube] & (1 << e))) continue;
          const EdgeBase b = edge_base(e);
          edge_vertex[e] = vertex_on_edge(x + b.dx, y + b.dy, z + b.dz, b.axis);
        }
        for (int t = 0; kTriTable[cube][t] != -1; t += 3) {
          // Reversed order: normals toward increasing field values.
          std::array<int, 3> tri = {edge_vertex[kTriTable[cube][t]],
                                    edge_vertex[kTriTable[cube][t + 2]],
                                    edge_vertex[kTriTable[cube][t + 1]]};
          if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) continue;
          mesh.triangles.push_back(tri);
          if (mesh.triangle_area(static_cast<int>(mesh.triangles.size()) - 1) <= 1e-12)
            mesh.triangles.pop_back();
        }
      }
  return mesh;
}

void export_mesh(const Mesh& mesh, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.precision(9);
  for (const auto& v : mesh.vertices) f << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
  for (const auto& t : mesh.triangles)
    f << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
  if (!f) throw std::runtime_error("obj write failed: " + path);
}

Mesh load_obj(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  Mesh mesh;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vector3d v;
      ss >> v.x() >> v.y() >> v.z();
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::array<int, 3> t;
      ss >> t[0] >> t[1] >> t[2];
      for (int& i : t) --i;
      mesh.triangles.push_back(t);
    }
  }
  return mesh;
}

}  // namespace tns::mesh
