#pragma once

// Discrete volume rendering along rays. Transparency is a sigmoid of the
// SDF (T ~ 1 in free space), per-sample weights are clamped forward
// differences of T, and the rendered color is the weight-sum of per-sample
// radiance. Spatial SDF gradients come from central finite differences and
// feed both the radiance normals and the Eikonal term.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "tns/field.hpp"
#include "tns/geometry.hpp"
#include "tns/rng.hpp"
#include "tns/tape.hpp"

namespace tns::render {

struct RenderConfig {
  int n_samples = 64;
  double fd_eps = 1e-3;      // finite-difference step for SDF gradients
  bool stratified = true;
  bool importance = false;   // second sampling pass guided by first-pass weights
};

// Strictly increasing sample distances over [t_near, t_far]: one draw per
// equal-width bin (stratified) or the bin midpoints (deterministic).
inline Eigen::VectorXd sample_ray(const geom::Ray& ray, int n, Rng* rng, bool stratified) {
  if (n < 2) throw std::invalid_argument("sample_ray: need at least 2 samples");
  Eigen::VectorXd t(n);
  const double w = (ray.t_far - ray.t_near) / n;
  for (int i = 0; i < n; ++i) {
    const double u = stratified ? rng->uniform() : 0.5;
    t[i] = ray.t_near + (i + u) * w;
  }
  return t;
}

inline double transparency_from_sdf(double f, double s) {
  if (s <= 0) throw std::invalid_argument("transparency_from_sdf: s must be > 0");
  const double x = s * f;
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// w_i = max(T_i - T_{i+1}, 0); length n-1.
inline Eigen::VectorXd weights_from_transparency(const Eigen::VectorXd& T) {
  Eigen::VectorXd w(T.size() - 1);
  for (Eigen::Index i = 0; i + 1 < T.size(); ++i) w[i] = std::max(T[i] - T[i + 1], 0.0);
  return w;
}

// First sign change f_i > 0 >= f_{i+1}, linearly interpolated.
inline std::optional<double> zero_crossing_depth(const Eigen::VectorXd& t,
                                                 const Eigen::VectorXd& f) {
  if (t.size() != f.size() || t.size() < 2)
    throw std::invalid_argument("zero_crossing_depth: misaligned inputs");
  for (Eigen::Index i = 0; i + 1 < t.size(); ++i)
    if (f[i] > 0 && f[i + 1] <= 0)
      return t[i] - f[i] * (t[i + 1] - t[i]) / (f[i + 1] - f[i]);
  return std::nullopt;
}

// Merge n_extra samples drawn from the discrete weight distribution into an
// existing sample vector (inverse-CDF, stratified positions).
inline Eigen::VectorXd importance_resample(const Eigen::VectorXd& t, const Eigen::VectorXd& w,
                                           int n_extra, Rng* rng) {
  const Eigen::Index k = w.size();
  double total = w.sum();
  std::vector<double> merged(t.data(), t.data() + t.size());
  if (total > 1e-12) {
    Eigen::VectorXd cdf(k);
    double acc = 0;
    for (Eigen::Index i = 0; i < k; ++i) {
      acc += w[i] / total;
      cdf[i] = acc;
    }
    for (int j = 0; j < n_extra; ++j) {
      const double u = (j + (rng ? rng->uniform() : 0.5)) / n_extra;
      Eigen::Index i = 0;
      while (i + 1 < k && cdf[i] < u) ++i;
      const double lo = i == 0 ? 0.0 : cdf[i - 1];
      const double frac = (u - lo) / std::max(cdf[i] - lo, 1e-12);
      merged.push_back(t[i] + frac * (t[i + 1] - t[i]));
    }
  }
  std::sort(merged.begin(), merged.end());
  merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
  return Eigen::Map<Eigen::VectorXd>(merged.data(), static_cast<Eigen::Index>(merged.size()));
}

struct RaySampleSet {
  Eigen::VectorXd t;
  Eigen::Matrix3Xd positions;
  Eigen::VectorXd f;
  Eigen::MatrixXd features;      // F x n
  Eigen::VectorXd transparency;  // n
  Eigen::VectorXd weights;       // n - 1
  Eigen::Matrix3Xd colors;       // 3 x (n - 1)
};

struct RenderOutput {
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  std::optional<double> depth_zero_crossing;
  double depth_expected = 0;
  double acc = 0;
  Eigen::VectorXd grad_norms;  // n
};

// Node handles of one rendered batch; rays are column-major segments of
// length n (ray r occupies sample columns r*n .. r*n+n-1).
struct RenderGraph {
  int f = -1;            // 1 x (m*n)
  int features = -1;     // F x (m*n)
  int grad = -1;         // 3 x (m*n)
  int grad_norm = -1;    // 1 x (m*n)
  int transparency = -1; // 1 x (m*n)
  int weights = -1;      // 1 x (m*(n-1))
  int rgb = -1;          // 3 x (m*n)
  int chat = -1;         // 3 x m
  int m = 0, n = 0;
};

// origins/dirs: 3 x m; tsamples: n x m (ascending per column).
template <class S>
RenderGraph build_render_graph(ad::Tape<S>& tape, const field::FieldModel<S>& model,
                               const Eigen::Matrix3Xd& origins, const Eigen::Matrix3Xd& dirs,
                               const Eigen::MatrixXd& tsamples, double fd_eps) {
  using Mat = typename field::FieldModel<S>::Mat;
  const int m = static_cast<int>(origins.cols());
  const int n = static_cast<int>(tsamples.rows());
  const int M = m * n;
  const int F = model.config.feature_dim;

  // Sample positions, plus the six finite-difference shifts as extra column
  // blocks: [center | +x | -x | +y | -y | +z | -z].
  Eigen::Matrix3Xd P(3, M);
  for (int r = 0; r < m; ++r)
    for (int i = 0; i < n; ++i) P.col(r * n + i) = origins.col(r) + tsamples(i, r) * dirs.col(r);
  Mat P_all(3, 7 * M);
  P_all.leftCols(M) = P.cast<S>();
  for (int k = 0; k < 3; ++k) {
    Mat shift = Mat::Zero(3, M);
    shift.row(k).setConstant(static_cast<S>(fd_eps));
    P_all.middleCols((1 + 2 * k) * M, M) = P_all.leftCols(M) + shift;
    P_all.middleCols((2 + 2 * k) * M, M) = P_all.leftCols(M) - shift;
  }

  RenderGraph g;
  g.m = m;
  g.n = n;
  auto [encoded, enc_buf] =
      tape.constant_slot(3 + 6 * model.config.pos_freqs, P_all.cols());
  field::positional_encode_into<S>(P_all, model.config.pos_freqs, *enc_buf);
  int hidden = model.sdf_hidden_graph(tape, encoded);
  int f_all = model.apply_head(tape, model.layout.sdf_head_f, hidden);
  g.f = tape.cols(f_all, 0, M);
  g.features = model.apply_head(tape, model.layout.sdf_head_feat, tape.cols(hidden, 0, M));

  const S inv2eps = static_cast<S>(1.0 / (2.0 * fd_eps));
  int gx = tape.scale(tape.sub(tape.cols(f_all, M, M), tape.cols(f_all, 2 * M, M)), inv2eps);
  int gy = tape.scale(tape.sub(tape.cols(f_all, 3 * M, M), tape.cols(f_all, 4 * M, M)), inv2eps);
  int gz = tape.scale(tape.sub(tape.cols(f_all, 5 * M, M), tape.cols(f_all, 6 * M, M)), inv2eps);
  g.grad = tape.concat_rows({gx, gy, gz});
  g.grad_norm = tape.norm_cols(g.grad);
  int normals = tape.normalize_cols(g.grad, static_cast<S>(1e-9));

  // Radiance inputs: [x, encoded view dir, normal, feature].
  Eigen::Matrix3Xd dir_per_sample(3, M);
  for (int r = 0; r < m; ++r) dir_per_sample.middleCols(r * n, n).colwise() = dirs.col(r);
  Mat head(3 + model.config.dir_enc_dim(), M);
  head.topRows(3) = P.cast<S>();
  Mat dps = dir_per_sample.cast<S>();
  head.bottomRows(model.config.dir_enc_dim()) =
      field::positional_encode<S>(dps, model.config.dir_freqs);
  int rad_in = tape.concat_rows({tape.constant(std::move(head)), normals, g.features});
  g.rgb = model.radiance_graph(tape, rad_in);

  int s_node = tape.exp_op(model.log_s_node(tape));
  g.transparency = tape.sigmoid(tape.broadcast_scale(s_node, g.f));
  g.weights = tape.relu(tape.seg_diff(g.transparency, n));
  g.chat = tape.seg_weighted_sum(g.rgb, g.weights, n);
  return g;
}

// Numeric per-ray outputs extracted from a rendered graph.
template <class S>
RenderOutput extract_output(const ad::Tape<S>& tape, const RenderGraph& g,
                            const Eigen::MatrixXd& tsamples, int ray_index) {
  const int n = g.n;
  RenderOutput out;
  out.color = tape.value(g.chat).col(ray_index).template cast<double>();
  Eigen::VectorXd f =
      tape.value(g.f).row(0).segment(ray_index * n, n).transpose().template cast<double>();
  Eigen::VectorXd t = tsamples.col(ray_index);
  Eigen::VectorXd w = tape.value(g.weights)
                          .row(0)
                          .segment(ray_index * (n - 1), n - 1)
                          .transpose()
                          .template cast<double>();
  out.acc = w.sum();
  out.depth_expected = w.dot(t.head(n - 1)) / std::max(out.acc, 1e-6);
  out.depth_zero_crossing = zero_crossing_depth(t, f);
  out.grad_norms =
      tape.value(g.grad_norm).row(0).segment(ray_index * n, n).transpose().template cast<double>();
  if (!out.color.allFinite() || !out.grad_norms.allFinite())
    throw std::runtime_error("render: non-finite network output");
  return out;
}

template <class S>
std::pair<RaySampleSet, RenderOutput> finalize_ray(const ad::Tape<S>& tape, const RenderGraph& g,
                                                   const geom::Ray& ray,
                                                   const Eigen::VectorXd& t) {
  const int n = static_cast<int>(t.size());
  RaySampleSet s;
  s.t = t;
  s.positions.resize(3, n);
  for (int i = 0; i < n; ++i) s.positions.col(i) = ray.at(t[i]);
  s.f = tape.value(g.f).row(0).transpose().template cast<double>();
  s.features = tape.value(g.features).template cast<double>();
  s.transparency = tape.value(g.transparency).row(0).transpose().template cast<double>();
  s.weights = tape.value(g.weights).row(0).transpose().template cast<double>();
  s.colors = tape.value(g.rgb).leftCols(n - 1).template cast<double>();
  RenderOutput out = extract_output(tape, g, t, 0);
  return {std::move(s), std::move(out)};
}

template <class S>
std::pair<RaySampleSet, RenderOutput> render_ray(const field::FieldModel<S>& model,
                                                 const geom::Ray& ray, const RenderConfig& cfg,
                                                 Rng* rng = nullptr) {
  Eigen::VectorXd t = sample_ray(ray, cfg.n_samples, rng, cfg.stratified && rng);
  Eigen::Matrix3Xd origins(3, 1), dirs(3, 1);
  origins.col(0) = ray.origin;
  dirs.col(0) = ray.direction;
  ad::Tape<S> tape(&model.params);
  RenderGraph g = build_render_graph(tape, model, origins, dirs, t, cfg.fd_eps);
  if (cfg.importance) {
    Eigen::VectorXd w = tape.value(g.weights).row(0).transpose().template cast<double>();
    t = importance_resample(t, w, static_cast<int>(t.size()), rng);
    ad::Tape<S> tape2(&model.params);
    RenderGraph g2 = build_render_graph(tape2, model, origins, dirs, t, cfg.fd_eps);
    return finalize_ray(tape2, g2, ray, t);
  }
  return finalize_ray(tape, g, ray, t);
}

}  // namespace tns::render
