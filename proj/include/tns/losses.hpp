#pragma once

// Training objectives: color loss (per-ray L2 norm + L1 over channels),
// depth-adaptive Eikonal regularization with the ray-wise weight
// lambda_r = alpha / (d_r + alpha), and their sum. The rendered
// zero-crossing depth enters lambda_r as a detached value only; no gradient
// flows back through it.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "tns/geometry.hpp"
#include "tns/renderer.hpp"
#include "tns/tape.hpp"

namespace tns::losses {

struct RayBatch {
  std::vector<geom::Ray> rays;
  Eigen::Matrix3Xd gt_colors;                       // 3 x m, linear [0,1]
  std::vector<std::optional<double>> guide_depths;  // m entries
  std::vector<render::RenderOutput> outputs;        // m entries

  int size() const { return static_cast<int>(rays.size()); }
};

struct LossReport {
  double l_rgb = 0, l_sdf = 0, l_total = 0;
  Eigen::VectorXd per_ray_lambda;
  Eigen::VectorXd per_ray_d;
};

inline double rgb_loss(const RayBatch& batch) {
  const int m = batch.size();
  if (m < 1) throw std::invalid_argument("rgb_loss: empty batch");
  double acc = 0;
  for (int i = 0; i < m; ++i) {
    Eigen::Vector3d diff = batch.outputs[i].color - batch.gt_colors.col(i);
    acc += diff.norm() + diff.cwiseAbs().sum();
  }
  return acc / m;
}

// |guide - rendered zero-crossing|; zero when the ray misses the foreground
// or carries no guide.
inline double depth_distance(const render::RenderOutput& out, std::optional<double> guide) {
  if (!guide || !out.depth_zero_crossing) return 0.0;
  return std::abs(*guide - *out.depth_zero_crossing);
}

inline double lambda_r(double d_r, double alpha) {
  if (alpha <= 0) throw std::invalid_argument("lambda_r: alpha must be > 0");
  return alpha / (d_r + alpha);
}

inline double eikonal_loss(const RayBatch& batch, double alpha, double lambda_E) {
  const int m = batch.size();
  if (m < 1) throw std::invalid_argument("eikonal_loss: empty batch");
  const Eigen::Index n = batch.outputs[0].grad_norms.size();
  double acc = 0;
  for (int i = 0; i < m; ++i) {
    const auto& norms = batch.outputs[i].grad_norms;
    if (norms.size() != n || n == 0)
      throw std::invalid_argument("eikonal_loss: missing per-sample gradient norms");
    const double lam = lambda_r(depth_distance(batch.outputs[i], batch.guide_depths[i]), alpha);
    acc += lam * (norms.array() - 1.0).square().sum();
  }
  return lambda_E / (m * static_cast<double>(n)) * acc;
}

inline LossReport total_loss(const RayBatch& batch, double alpha, double lambda_E,
                             bool fixed_lambda = false) {
  const int m = batch.size();
  LossReport rep;
  rep.per_ray_lambda.resize(m);
  rep.per_ray_d.resize(m);
  for (int i = 0; i < m; ++i) {
    rep.per_ray_d[i] = depth_distance(batch.outputs[i], batch.guide_depths[i]);
    rep.per_ray_lambda[i] = fixed_lambda ? 1.0 : lambda_r(rep.per_ray_d[i], alpha);
  }
  rep.l_rgb = rgb_loss(batch);
  if (fixed_lambda) {
    const Eigen::Index n = batch.outputs[0].grad_norms.size();
    double acc = 0;
    for (int i = 0; i < m; ++i) acc += (batch.outputs[i].grad_norms.array() - 1.0).square().sum();
    rep.l_sdf = lambda_E / (m * static_cast<double>(n)) * acc;
  } else {
    rep.l_sdf = eikonal_loss(batch, alpha, lambda_E);
  }
  rep.l_total = rep.l_rgb + rep.l_sdf;
  return rep;
}

// --- graph side -------------------------------------------------------------

// Per-ray lambda values for a rendered graph: the zero-crossing depth is read
// from forward values (detached), so the result is a constant in the loss
// graph. d_out, when given, receives the per-ray depth distances.
template <class S>
Eigen::VectorXd per_ray_lambda(const ad::Tape<S>& tape, const render::RenderGraph& g,
                               const Eigen::MatrixXd& tsamples,
                               const std::vector<std::optional<double>>& guides, double alpha,
                               bool fixed_lambda, Eigen::VectorXd* d_out = nullptr) {
  const int m = g.m, n = g.n;
  Eigen::VectorXd lam(m), d(m);
  for (int r = 0; r < m; ++r) {
    Eigen::VectorXd f =
        tape.value(g.f).row(0).segment(r * n, n).transpose().template cast<double>();
    auto zc = render::zero_crossing_depth(tsamples.col(r), f);
    d[r] = (guides[r] && zc) ? std::abs(*guides[r] - *zc) : 0.0;
    lam[r] = fixed_lambda ? 1.0 : lambda_r(d[r], alpha);
  }
  if (d_out) *d_out = d;
  return lam;
}

struct LossGraph {
  int l_rgb = -1;
  int l_eik = -1;
  int l_total = -1;
};

template <class S>
LossGraph build_total_loss(ad::Tape<S>& tape, const render::RenderGraph& g,
                           const Eigen::Matrix3Xd& gt_colors,
                           const Eigen::VectorXd& lambda_per_ray, double lambda_E) {
  using Mat = typename ad::Tape<S>::Mat;
  const int m = g.m, n = g.n;
  LossGraph out;

  int diff = tape.sub(g.chat, tape.constant(gt_colors.cast<S>()));
  int per_ray = tape.add(tape.norm_cols(diff), tape.colsum(tape.abs_op(diff)));
  out.l_rgb = tape.scale(tape.sum_all(per_ray), static_cast<S>(1.0 / m));

  Mat w(1, m * n);
  for (int r = 0; r < m; ++r)
    w.middleCols(r * n, n).setConstant(
        static_cast<S>(lambda_E * lambda_per_ray[r] / (static_cast<double>(m) * n)));
  int eik_terms = tape.square(tape.add_scalar(g.grad_norm, S(-1)));
  out.l_eik = tape.weighted_sum_all(eik_terms, std::move(w));

  out.l_total = tape.add(out.l_rgb, out.l_eik);
  return out;
}

}  // namespace tns::losses
