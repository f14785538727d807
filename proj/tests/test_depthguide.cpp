#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "tns/depthguide.hpp"
#include "tns/rng.hpp"

using namespace tns;
using depthguide::DepthMap;
using depthguide::SparseObservation;

namespace {

DepthMap map_from(std::initializer_list<float> vals, int w, int h, int frame = 0) {
  DepthMap m;
  m.frame_id = frame;
  m.values.width = w;
  m.values.height = h;
  m.values.values.assign(vals);
  return m;
}

double scale_objective(const DepthMap& map, const std::vector<SparseObservation>& obs,
                       double k) {
  double acc = 0;
  for (const auto& o : obs) {
    const double d = map.values.at(static_cast<int>(o.px), static_cast<int>(o.py));
    acc += (k * d - o.depth) * (k * d - o.depth);
  }
  return acc;
}

}  // namespace

TEST_SUITE("depthguide") {

TEST_CASE("least-squares scale on hand-worked values") {
  // k = (2*1 + 4*2 + 6*3) / (4 + 16 + 36) = 28/56 = 0.5
  DepthMap map = map_from({2.0f, 4.0f, 6.0f}, 3, 1);
  std::vector<SparseObservation> obs = {{0, 0.5, 0.5, 1.0}, {0, 1.5, 0.5, 2.0}, {0, 2.5, 0.5, 3.0}};
  CHECK(depthguide::fit_depth_scale(map, obs) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("noiseless consistent data recovers k exactly") {
  Rng rng(3);
  DepthMap map;
  map.frame_id = 2;
  map.values.width = 8;
  map.values.height = 8;
  map.values.values.resize(64);
  for (float& v : map.values.values) v = static_cast<float>(rng.uniform(0.5, 3.0));
  const double k_true = 1.0;
  std::vector<SparseObservation> obs;
  for (int i = 0; i < 20; ++i) {
    const int x = static_cast<int>(rng.uniform_index(8)), y = static_cast<int>(rng.uniform_index(8));
    obs.push_back({2, x + 0.5, y + 0.5, k_true * map.values.at(x, y)});
  }
  CHECK(std::abs(depthguide::fit_depth_scale(map, obs) - k_true) < 1e-9);
}

TEST_CASE("fitted scale is equivariant to map rescaling") {
  DepthMap map = map_from({1.5f, 2.5f, 3.5f, 4.5f}, 2, 2);
  std::vector<SparseObservation> obs = {
      {0, 0.5, 0.5, 2.9}, {0, 1.5, 0.5, 5.2}, {0, 0.5, 1.5, 7.1}, {0, 1.5, 1.5, 8.8}};
  const double k = depthguide::fit_depth_scale(map, obs);
  DepthMap scaled = depthguide::rescale(map, 2.0);
  CHECK(depthguide::fit_depth_scale(scaled, obs) == doctest::Approx(k / 2.0).epsilon(1e-9));
}

TEST_CASE("fit needs at least three usable observations") {
  DepthMap map = map_from({2.0f, 4.0f}, 2, 1);
  std::vector<SparseObservation> obs = {{0, 0.5, 0.5, 1.0}, {0, 1.5, 0.5, 2.0}};
  CHECK_THROWS_AS(depthguide::fit_depth_scale(map, obs), std::runtime_error);
  // Observations from other frames or on invalid pixels do not count.
  obs.push_back({1, 0.5, 0.5, 1.0});
  CHECK_THROWS_AS(depthguide::fit_depth_scale(map, obs), std::runtime_error);
  DepthMap holed = map_from({2.0f, 4.0f, 0.0f}, 3, 1);
  std::vector<SparseObservation> obs3 = {{0, 0.5, 0.5, 1.0}, {0, 1.5, 0.5, 2.0}, {0, 2.5, 0.5, 9.0}};
  CHECK_THROWS_AS(depthguide::fit_depth_scale(holed, obs3), std::runtime_error);
}

TEST_CASE("fitted scale minimizes the squared objective") {
  DepthMap map = map_from({1.0f, 2.0f, 3.0f, 4.0f}, 4, 1);
  std::vector<SparseObservation> obs = {
      {0, 0.5, 0.5, 1.7}, {0, 1.5, 0.5, 3.1}, {0, 2.5, 0.5, 4.4}, {0, 3.5, 0.5, 6.3}};
  const double k = depthguide::fit_depth_scale(map, obs);
  const double at_k = scale_objective(map, obs, k);
  for (double delta : {1e-3, -1e-3, 0.1, -0.1})
    CHECK(at_k < scale_objective(map, obs, k + delta));
}

TEST_CASE("guide depth lookup") {
  DepthMap map = map_from({1.0f, 0.0f, 3.0f, 4.0f}, 2, 2);
  auto d = depthguide::guide_depth_for_ray(map, 0.5, 0.5);
  REQUIRE(d.has_value());
  CHECK(*d == doctest::Approx(1.0));
  CHECK(!depthguide::guide_depth_for_ray(map, 1.5, 0.5).has_value());  // invalid pixel
  CHECK_THROWS_AS(depthguide::guide_depth_for_ray(map, 2.5, 0.5), std::invalid_argument);
}

TEST_CASE("sparse csv round trip") {
  const auto path =
      (std::filesystem::temp_directory_path() / "tns_test_sparse.csv").string();
  std::vector<SparseObservation> obs = {{0, 3.5, 7.5, 1.25}, {4, 0.5, 0.5, 2.75}};
  depthguide::save_sparse_csv(path, obs);
  auto loaded = depthguide::load_sparse_csv(path);
  REQUIRE(loaded.size() == obs.size());
  for (size_t i = 0; i < obs.size(); ++i) {
    CHECK(loaded[i].frame_id == obs[i].frame_id);
    CHECK(loaded[i].px == obs[i].px);
    CHECK(loaded[i].py == obs[i].py);
    CHECK(loaded[i].depth == obs[i].depth);
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(depthguide::load_sparse_csv(path), std::runtime_error);
}

}  // TEST_SUITE
