#include "tns/dataset.hpp"

#include <filesystem>
#include <stdexcept>

namespace tns::data {

namespace fs = std::filesystem;

SceneDataset load_dataset(const std::string& dir, const std::vector<int>& guide_frames) {
  SceneDataset ds;
  ds.manifest = scene::load_manifest((fs::path(dir) / "scene.json").string());
  ds.intrinsics = ds.manifest.intrinsics;
  ds.t_near = ds.manifest.t_near;
  ds.t_far = ds.manifest.t_far;

  std::vector<depthguide::SparseObservation> sparse;
  if (!guide_frames.empty())
    sparse = depthguide::load_sparse_csv((fs::path(dir) / "sparse.csv").string());

  const int w = ds.intrinsics.width, h = ds.intrinsics.height;
  for (int i = 0; i < static_cast<int>(ds.manifest.frames.size()); ++i) {
    const auto& fe = ds.manifest.frames[i];
    Frame frame;
    frame.index = i;
    frame.split = fe.split;
    frame.pose.rotation = fe.pose.topLeftCorner<3, 3>();
    frame.pose.translation = fe.pose.topRightCorner<3, 1>();
    frame.pose.validate();

    img::ImageU8 image = img::read_png((fs::path(dir) / fe.image).string());
    if (image.width != w || image.height != h)
      throw std::runtime_error("image size mismatch in " + fe.image);
    frame.linear_rgb.resize(3, w * h);
    for (int p = 0; p < w * h; ++p)
      for (int c = 0; c < 3; ++c)
        frame.linear_rgb(c, p) =
            static_cast<float>(img::srgb_to_linear(image.rgb[3 * p + c] / 255.0));
    frame.depth_gt = img::read_pfm((fs::path(dir) / fe.depth_gt).string());
    ds.frames.push_back(std::move(frame));
  }

  for (int gf : guide_frames) {
    if (gf < 0 || gf >= static_cast<int>(ds.frames.size()))
      throw std::runtime_error("guide frame index out of range");
    const auto& fe = ds.manifest.frames[gf];
    if (fe.depth_guide.empty())
      throw std::runtime_error("frame has no guide depth map: " + std::to_string(gf));
    depthguide::DepthMap map;
    map.frame_id = gf;
    map.values = img::read_pfm((fs::path(dir) / fe.depth_guide).string());
    const double k = depthguide::fit_depth_scale(map, sparse);
    ds.fitted_depth_scale = k;
    ds.frames[gf].guide = depthguide::rescale(std::move(map), k);
  }
  return ds;
}

}  // namespace tns::data
