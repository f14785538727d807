#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "tns/depthguide.hpp"
#include "tns/scenegen.hpp"

using namespace tns;
namespace fs = std::filesystem;
using Eigen::Vector3d;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::string(std::istreambuf_iterator<char>(f), {});
}

fs::path fresh_dir(const char* name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_SUITE("scenegen") {

TEST_CASE("analytic sdf values") {
  auto sphere = scene::AnalyticScene::preset("sphere");
  CHECK(scene::analytic_sdf(sphere, Vector3d::Zero()) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(scene::analytic_sdf(sphere, Vector3d(0.5, 0, 0)) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(scene::analytic_sdf(sphere, Vector3d(0, 0, 2)) == doctest::Approx(1.5).epsilon(1e-12));

  auto torus = scene::AnalyticScene::preset("torus");
  CHECK(scene::analytic_sdf(torus, Vector3d(0.5, 0, 0.2)) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(scene::analytic_sdf(torus, Vector3d(0.5, 0, 0)) == doctest::Approx(-0.2).epsilon(1e-12));

  auto tube = scene::AnalyticScene::preset("tube");
  // Positive (free) on the arc centerline, zero on the lumen wall.
  CHECK(scene::analytic_sdf(tube, Vector3d(tube.arc_radius, 0, 0)) ==
        doctest::Approx(tube.tube_radius).epsilon(1e-12));
  CHECK(scene::analytic_sdf(tube, Vector3d(tube.arc_radius, 0, tube.tube_radius)) ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("analytic normal of the sphere is radial") {
  auto sphere = scene::AnalyticScene::preset("sphere");
  Vector3d p(0.3, -0.4, 0.2);
  CHECK((scene::analytic_normal(sphere, p) - p.normalized()).norm() < 1e-6);
}

TEST_CASE("sphere trace hits the surface") {
  auto sphere = scene::AnalyticScene::preset("sphere");
  geom::Ray ray;
  ray.origin = Vector3d(0, 0, -2);
  ray.direction = Vector3d(0, 0, 1);
  ray.t_near = 0.6;
  ray.t_far = 3.0;
  auto t = scene::sphere_trace(sphere, ray);
  REQUIRE(t.has_value());
  CHECK(*t == doctest::Approx(1.5).epsilon(1e-5));
  CHECK(std::abs(scene::analytic_sdf(sphere, ray.at(*t))) < 1e-5);

  ray.direction = Vector3d(1, 0, 0);  // grazes past the sphere
  CHECK(!scene::sphere_trace(sphere, ray).has_value());
}

TEST_CASE("headlight shading falls off with squared distance") {
  auto sphere = scene::AnalyticScene::preset("sphere");
  Vector3d hit(0, 0, -0.5), n(0, 0, -1), view(0, 0, 1);
  Vector3d near = scene::shade(sphere, hit, n, view, 1.0);
  Vector3d far = scene::shade(sphere, hit, n, view, 2.0);
  for (int c = 0; c < 3; ++c)
    CHECK(far[c] / near[c] == doctest::Approx(0.4).epsilon(1e-9));  // (1+1)/(1+4)
  // Back-facing surfaces receive no light.
  CHECK(scene::shade(sphere, hit, -n, view, 1.0).isZero());
}

TEST_CASE("split assignment is 6:2:2, disjoint, exhaustive") {
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < 20; ++i) {
    const std::string s = scene::split_for_index(i);
    REQUIRE((s == "train" || s == "test" || s == "val"));
    ++counts[s == "train" ? 0 : (s == "test" ? 1 : 2)];
  }
  CHECK(counts[0] == 12);
  CHECK(counts[1] == 4);
  CHECK(counts[2] == 4);
}

TEST_CASE("flythrough cameras stay in free space") {
  auto tube = scene::AnalyticScene::preset("tube");
  for (const auto& pose : scene::make_trajectory(tube, 20)) {
    pose.validate();
    CHECK(scene::analytic_sdf(tube, pose.translation) > 0.05);
  }
}

TEST_CASE("generation is deterministic and re-renderable") {
  auto sphere = scene::AnalyticScene::preset("sphere");
  scene::GenerationParams params;
  params.frames = 10;
  params.width = params.height = 32;
  params.seed = 17;
  params.sparse_count = 50;
  const fs::path a = fresh_dir("tns_test_gen_a");
  const fs::path b = fresh_dir("tns_test_gen_b");
  auto man = scene::generate_dataset(sphere, a.string(), params);
  scene::generate_dataset(sphere, b.string(), params, 2);

  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    CAPTURE(rel.string());
    CHECK(slurp(entry.path()) == slurp(b / rel));
  }

  // Stored depth must match a fresh trace through the stored pose.
  img::DepthImage depth = img::read_pfm((a / man.frames[3].depth_gt).string());
  geom::Pose pose;
  pose.rotation = man.frames[3].pose.topLeftCorner<3, 3>();
  pose.translation = man.frames[3].pose.topRightCorner<3, 1>();
  for (int y = 0; y < depth.height; y += 5) {
    for (int x = 0; x < depth.width; x += 5) {
      geom::Ray ray = geom::ray_for_pixel(man.intrinsics, pose, x + 0.5, y + 0.5, man.t_near,
                                          man.t_far);
      auto t = scene::sphere_trace(sphere, ray);
      if (t)
        CHECK(depth.at(x, y) == doctest::Approx(*t).epsilon(1e-5));
      else
        CHECK(depth.at(x, y) == 0.0f);
    }
  }

  // And the whole frame re-renders byte-identically.
  img::ImageU8 image2;
  img::DepthImage depth2;
  scene::render_frame(sphere, man.intrinsics, pose, &image2, &depth2);
  img::ImageU8 image = img::read_png((a / man.frames[3].image).string());
  CHECK(image.rgb == image2.rgb);
  CHECK(depth.values == depth2.values);

  // Manifest survives a save/load round trip.
  auto loaded = scene::load_manifest((a / "scene.json").string());
  CHECK(loaded.frames.size() == man.frames.size());
  CHECK(loaded.intrinsics.fx == doctest::Approx(man.intrinsics.fx));
  CHECK(loaded.frames[3].pose.isApprox(man.frames[3].pose, 1e-12));

  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("noiseless guide depth recovers the true scale") {
  auto sphere = scene::AnalyticScene::preset("sphere");
  scene::GenerationParams params;
  params.frames = 4;
  params.width = params.height = 32;
  params.seed = 5;
  params.depth_scale_true = 2.0;
  params.depth_noise = 0.0;
  params.sparse_count = 50;
  const fs::path dir = fresh_dir("tns_test_gen_scale");
  auto man = scene::generate_dataset(sphere, dir.string(), params);

  depthguide::DepthMap guide;
  guide.frame_id = 0;
  guide.values = img::read_pfm((dir / man.frames[0].depth_guide).string());
  auto obs = depthguide::load_sparse_csv((dir / "sparse.csv").string());
  CHECK(std::abs(depthguide::fit_depth_scale(guide, obs) - params.depth_scale_true) < 1e-5);
  fs::remove_all(dir);
}

}  // TEST_SUITE
