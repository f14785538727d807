// Python bindings for the dataset/train/render/mesh/eval pipeline. Thin
// wrappers over the C++ entry points; array traffic goes through numpy.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "tns/dataset.hpp"
#include "tns/eval.hpp"
#include "tns/meshing.hpp"
#include "tns/metrics.hpp"
#include "tns/scenegen.hpp"
#include "tns/trainer.hpp"

namespace py = pybind11;
using namespace tns;

namespace {

Eigen::Matrix3Xd points_from_array(const py::array_t<double>& pts) {
  auto buf = pts.unchecked<2>();
  if (buf.shape(1) != 3) throw std::invalid_argument("points must have shape (n, 3)");
  Eigen::Matrix3Xd out(3, buf.shape(0));
  for (py::ssize_t i = 0; i < buf.shape(0); ++i)
    for (int k = 0; k < 3; ++k) out(k, i) = buf(i, k);
  return out;
}

field::FieldModel<float> load_model(const std::string& ckpt) {
  return field::load_checkpoint<float>(ckpt).first;
}

}  // namespace

PYBIND11_MODULE(_tns, m) {
  m.doc() = "neural surface reconstruction toolkit";

  m.def(
      "generate",
      [](const std::string& preset, const std::string& out_dir, int frames, int width,
         int height, std::uint64_t seed, double depth_scale, double depth_noise, int sparse,
         bool low_texture, const std::vector<int>& guide_frames, int threads) {
        auto scn = scene::AnalyticScene::preset(preset);
        scn.low_texture = low_texture;
        scene::GenerationParams params;
        params.frames = frames;
        params.width = width;
        params.height = height;
        params.seed = seed;
        params.depth_scale_true = depth_scale;
        params.depth_noise = depth_noise;
        params.sparse_count = sparse;
        params.guide_frames = guide_frames;
        scene::generate_dataset(scn, out_dir, params, threads);
      },
      py::arg("preset"), py::arg("out_dir"), py::arg("frames") = 20, py::arg("width") = 64,
      py::arg("height") = 64, py::arg("seed") = 0, py::arg("depth_scale") = 2.0,
      py::arg("depth_noise") = 0.0, py::arg("sparse") = 200, py::arg("low_texture") = false,
      py::arg("guide_frames") = std::vector<int>{0}, py::arg("threads") = 1,
      "Generate a synthetic dataset directory from a scene preset.");

  m.def(
      "train",
      [](const std::string& data_dir, const std::string& out_dir,
         const std::string& config_json, const std::vector<int>& guide_frames,
         bool fixed_lambda) {
        train::TrainConfig cfg;
        cfg.guide_frames = guide_frames;
        cfg.fixed_lambda = fixed_lambda;
        if (!config_json.empty())
          cfg = cfg.with_overrides(nlohmann::json::parse(config_json));
        auto ds = data::load_dataset(data_dir, cfg.guide_frames);
        train::train(ds, cfg, out_dir);
        return out_dir + "/ckpt_" + std::to_string(cfg.iterations) + ".tns";
      },
      py::arg("data_dir"), py::arg("out_dir"), py::arg("config_json") = std::string(),
      py::arg("guide_frames") = std::vector<int>{0}, py::arg("fixed_lambda") = false,
      "Train a model; returns the path of the final checkpoint.");

  m.def(
      "render_frame",
      [](const std::string& ckpt, const std::string& data_dir, int frame, int n_samples) {
        auto model = load_model(ckpt);
        auto ds = data::load_dataset(data_dir, {});
        render::RenderConfig cfg;
        cfg.n_samples = n_samples;
        auto rf = eval::render_model_frame(model, ds, frame, cfg, 1);
        const int w = ds.intrinsics.width, h = ds.intrinsics.height;
        py::array_t<float> rgb({h, w, 3});
        py::array_t<float> depth({h, w});
        auto rbuf = rgb.mutable_unchecked<3>();
        auto dbuf = depth.mutable_unchecked<2>();
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) rbuf(y, x, c) = rf.linear_rgb(c, y * w + x);
            dbuf(y, x) = rf.depth.values[y * w + x];
          }
        return py::make_tuple(rgb, depth);
      },
      py::arg("ckpt"), py::arg("data_dir"), py::arg("frame"), py::arg("n_samples") = 64,
      "Render one dataset frame; returns (linear_rgb (h,w,3), ray_depth (h,w)).");

  m.def(
      "evaluate",
      [](const std::string& ckpt, const std::string& data_dir, const std::string& split,
         int n_samples) {
        auto model = load_model(ckpt);
        auto ds = data::load_dataset(data_dir, {});
        render::RenderConfig cfg;
        cfg.n_samples = n_samples;
        auto rep = eval::evaluate_dataset(model, ds, split, cfg, 1);
        py::dict out;
        out["split"] = rep.split;
        out["mean_psnr"] = rep.mean_psnr;
        out["depth_rmse"] = rep.depth_rmse;
        out["frames"] = rep.frame_ids;
        out["psnr"] = rep.frame_psnr;
        out["frame_depth_rmse"] = rep.frame_depth_rmse;
        return out;
      },
      py::arg("ckpt"), py::arg("data_dir"), py::arg("split") = "test",
      py::arg("n_samples") = 64, "Evaluate a checkpoint; returns a metrics dict.");

  m.def(
      "extract_mesh",
      [](const std::string& ckpt, int resolution, double bound, const std::string& out_obj) {
        auto model = load_model(ckpt);
        auto field_fn = [&model](const Eigen::Matrix3Xd& p) {
          using Mat = field::FieldModel<float>::Mat;
          Mat pos = p.cast<float>();
          return model.sdf_forward(pos).row(0).transpose().cast<double>().eval();
        };
        mesh::Mesh msh = mesh::marching_cubes(field_fn, Eigen::Vector3d::Constant(-bound),
                                              Eigen::Vector3d::Constant(bound), resolution);
        if (!out_obj.empty()) mesh::export_mesh(msh, out_obj);
        py::array_t<double> verts({static_cast<py::ssize_t>(msh.vertices.size()),
                                   static_cast<py::ssize_t>(3)});
        py::array_t<int> tris({static_cast<py::ssize_t>(msh.triangles.size()),
                               static_cast<py::ssize_t>(3)});
        auto vb = verts.mutable_unchecked<2>();
        auto tb = tris.mutable_unchecked<2>();
        for (size_t i = 0; i < msh.vertices.size(); ++i)
          for (int k = 0; k < 3; ++k) vb(i, k) = msh.vertices[i][k];
        for (size_t i = 0; i < msh.triangles.size(); ++i)
          for (int k = 0; k < 3; ++k) tb(i, k) = msh.triangles[i][k];
        return py::make_tuple(verts, tris);
      },
      py::arg("ckpt"), py::arg("resolution") = 128, py::arg("bound") = 1.0,
      py::arg("out_obj") = std::string(),
      "Run marching cubes on a checkpoint; returns (vertices, triangles).");

  m.def(
      "sdf",
      [](const std::string& ckpt, const py::array_t<double>& points) {
        auto model = load_model(ckpt);
        Eigen::Matrix3Xd p = points_from_array(points);
        using Mat = field::FieldModel<float>::Mat;
        Mat pos = p.cast<float>();
        Eigen::VectorXd f = model.sdf_forward(pos).row(0).transpose().cast<double>();
        return py::array_t<double>(f.size(), f.data());
      },
      py::arg("ckpt"), py::arg("points"),
      "Signed distance of a trained field at points of shape (n, 3).");

  m.def(
      "analytic_sdf",
      [](const std::string& preset, const py::array_t<double>& points) {
        auto scn = scene::AnalyticScene::preset(preset);
        Eigen::Matrix3Xd p = points_from_array(points);
        Eigen::VectorXd f(p.cols());
        for (Eigen::Index i = 0; i < p.cols(); ++i)
          f[i] = scene::analytic_sdf(scn, p.col(i));
        return py::array_t<double>(f.size(), f.data());
      },
      py::arg("preset"), py::arg("points"),
      "Exact signed distance of a scene preset at points of shape (n, 3).");

  m.def(
      "chamfer",
      [](const py::array_t<double>& verts, const py::array_t<int>& tris,
         const std::string& preset, int samples, std::uint64_t seed) {
        mesh::Mesh msh;
        auto vb = verts.unchecked<2>();
        auto tb = tris.unchecked<2>();
        for (py::ssize_t i = 0; i < vb.shape(0); ++i)
          msh.vertices.emplace_back(vb(i, 0), vb(i, 1), vb(i, 2));
        for (py::ssize_t i = 0; i < tb.shape(0); ++i)
          msh.triangles.push_back({tb(i, 0), tb(i, 1), tb(i, 2)});
        return metrics::chamfer(msh, scene::AnalyticScene::preset(preset), samples, seed);
      },
      py::arg("vertices"), py::arg("triangles"), py::arg("preset"),
      py::arg("samples") = 2000, py::arg("seed") = 0,
      "Symmetric Chamfer distance between a mesh and an analytic preset.");
}
