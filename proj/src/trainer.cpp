#include "tns/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "tns/renderer.hpp"

namespace tns::train {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (batch_rays < 1) throw std::invalid_argument("batch_rays must be >= 1");
  if (n_samples < 2) throw std::invalid_argument("n_samples must be >= 2");
  if (alpha <= 0) throw std::invalid_argument("alpha must be > 0");
  if (lambda_e < 0) throw std::invalid_argument("lambda_e must be >= 0");
  if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  if (lr <= 0 || lr_final <= 0) throw std::invalid_argument("learning rates must be > 0");
  if (log_every < 1 || checkpoint_every < 1)
    throw std::invalid_argument("cadences must be >= 1");
  arch.validate();
}

TrainConfig TrainConfig::with_overrides(const nlohmann::json& j) const {
  TrainConfig c = *this;
  nlohmann::json arch_json = c.arch.to_json();
  for (const auto& [key, val] : j.items()) {
    if (key == "iterations") c.iterations = val;
    else if (key == "batch_rays") c.batch_rays = val;
    else if (key == "n_samples") c.n_samples = val;
    else if (key == "lr") c.lr = val;
    else if (key == "lr_final") c.lr_final = val;
    else if (key == "alpha") c.alpha = val;
    else if (key == "lambda_e") c.lambda_e = val;
    else if (key == "fd_eps") c.fd_eps = val;
    else if (key == "stratified") c.stratified = val;
    else if (key == "importance") c.importance = val;
    else if (key == "fixed_lambda") c.fixed_lambda = val;
    else if (key == "seed") c.seed = val;
    else if (key == "guide_frames") c.guide_frames = val.get<std::vector<int>>();
    else if (key == "log_every") c.log_every = val;
    else if (key == "checkpoint_every") c.checkpoint_every = val;
    else if (key == "arch") {
      for (const auto& [akey, aval] : val.items()) {
        if (!arch_json.contains(akey))
          throw std::invalid_argument("unknown arch config key: " + akey);
        arch_json[akey] = aval;
      }
      c.arch = field::ArchitectureConfig::from_json(arch_json);
    } else {
      throw std::invalid_argument("unknown config key: " + key);
    }
  }
  c.validate();
  return c;
}

double cosine_lr(const TrainConfig& cfg, int iter) {
  const double progress =
      cfg.iterations > 1 ? static_cast<double>(iter) / (cfg.iterations - 1) : 0.0;
  return cfg.lr_final +
         0.5 * (cfg.lr - cfg.lr_final) * (1.0 + std::cos(3.14159265358979323846 * progress));
}

void adam_step(Eigen::VectorXf& params, const Eigen::VectorXf& grad, AdamState& state,
               double lr) {
  if (params.size() != grad.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: misaligned vectors");
  if (!grad.allFinite()) throw std::runtime_error("adam_step: non-finite gradient");
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  state.step += 1;
  state.m = (b1 * state.m.cast<double>() + (1 - b1) * grad.cast<double>()).cast<float>();
  state.v =
      (b2 * state.v.cast<double>() + (1 - b2) * grad.cast<double>().cwiseAbs2()).cast<float>();
  const double c1 = 1.0 - std::pow(b1, state.step);
  const double c2 = 1.0 - std::pow(b2, state.step);
  Eigen::VectorXd mhat = state.m.cast<double>() / c1;
  Eigen::VectorXd vhat = state.v.cast<double>() / c2;
  params -=
      (lr * mhat.array() / (vhat.array().sqrt() + eps)).matrix().cast<float>();
}

std::vector<PixelSample> sample_batch(const data::SceneDataset& ds, Rng& rng, int m) {
  const std::vector<int> frames = ds.split_indices("train");
  if (frames.empty()) throw std::invalid_argument("sample_batch: empty train split");
  std::vector<PixelSample> out(m);
  for (int i = 0; i < m; ++i) {
    out[i].frame = frames[rng.uniform_index(frames.size())];
    out[i].x = static_cast<int>(rng.uniform_index(ds.intrinsics.width));
    out[i].y = static_cast<int>(rng.uniform_index(ds.intrinsics.height));
  }
  return out;
}

namespace {

// Redraws n samples from the coarse weight CDF (stratified inverse CDF),
// keeping every other coarse sample so empty regions stay covered.
Eigen::VectorXd importance_redraw(const Eigen::VectorXd& t, const Eigen::VectorXd& w, Rng& rng) {
  const int n = static_cast<int>(t.size());
  const double total = w.sum();
  if (total <= 1e-12) return t;
  const int n_fine = n / 2;
  std::vector<double> merged;
  merged.reserve(n);
  for (int i = 0; i < n - n_fine; ++i) merged.push_back(t[i * (n - 1) / (n - n_fine - 1)]);
  Eigen::VectorXd cdf(w.size());
  double acc = 0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    acc += w[i] / total;
    cdf[i] = acc;
  }
  for (int j = 0; j < n_fine; ++j) {
    const double u = (j + rng.uniform()) / n_fine;
    Eigen::Index i = 0;
    while (i + 1 < cdf.size() && cdf[i] < u) ++i;
    const double lo = i == 0 ? 0.0 : cdf[i - 1];
    const double frac = (u - lo) / std::max(cdf[i] - lo, 1e-12);
    merged.push_back(t[i] + frac * (t[i + 1] - t[i]));
  }
  std::sort(merged.begin(), merged.end());
  Eigen::VectorXd out(n);
  double prev = -1e300;
  for (int i = 0; i < n; ++i) {
    out[i] = std::max(merged[i], prev + 1e-9);
    prev = out[i];
  }
  return out;
}

void write_log_row(std::ofstream& log, const IterationStats& st) {
  log << st.iter << "," << st.l_rgb << "," << st.l_sdf << "," << st.l_total << "," << st.s << ","
      << st.mean_lambda_r << "," << st.mean_d_r << "," << st.lr << "\n";
  log.flush();
}

}  // namespace

field::FieldModel<float> train(const data::SceneDataset& ds, const TrainConfig& cfg,
                               const std::string& out_dir,
                               const std::function<void(const IterationStats&)>& on_iter) {
  cfg.validate();
  fs::create_directories(out_dir);
  auto model = field::FieldModel<float>::create(cfg.arch, cfg.seed);
  AdamState state = AdamState::create(model.params.size());
  Rng rng(Rng(cfg.seed).fork(0x7261696e).next_u64());

  std::ofstream log((fs::path(out_dir) / "train_log.csv").string());
  if (!log) throw std::runtime_error("cannot open training log in " + out_dir);
  log << "iter,l_rgb,l_sdf,l_total,s,mean_lambda_r,mean_d_r,lr\n";
  log.precision(10);

  const int m = cfg.batch_rays, n = cfg.n_samples;
  Eigen::VectorXf last_good = model.params;
  int last_good_iter = 0;
  ad::Tape<float> tape(&model.params);
  ad::Tape<float> coarse(&model.params);

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const std::vector<PixelSample> pixels = sample_batch(ds, rng, m);
    Eigen::Matrix3Xd origins(3, m), dirs(3, m);
    Eigen::MatrixXd tsamples(n, m);
    Eigen::Matrix3Xd gt(3, m);
    std::vector<std::optional<double>> guides(m);
    std::vector<geom::Ray> rays(m);
    for (int i = 0; i < m; ++i) {
      const PixelSample& px = pixels[i];
      rays[i] = ds.pixel_ray(px.frame, px.x + 0.5, px.y + 0.5);
      origins.col(i) = rays[i].origin;
      dirs.col(i) = rays[i].direction;
      tsamples.col(i) = render::sample_ray(rays[i], n, &rng, cfg.stratified);
      gt.col(i) = ds.pixel_color(px.frame, px.x, px.y);
      const auto& guide = ds.frames[px.frame].guide;
      if (guide) {
        const float z = guide->values.at(px.x, px.y);
        if (z > 0) guides[i] = z;
      }
    }

    if (cfg.importance) {
      coarse.reset();
      render::RenderGraph cg =
          render::build_render_graph(coarse, model, origins, dirs, tsamples, cfg.fd_eps);
      for (int i = 0; i < m; ++i) {
        Eigen::VectorXd w = coarse.value(cg.weights)
                                .row(0)
                                .segment(i * (n - 1), n - 1)
                                .transpose()
                                .cast<double>();
        tsamples.col(i) = importance_redraw(tsamples.col(i), w, rng);
      }
    }

    tape.reset();
    render::RenderGraph g =
        render::build_render_graph(tape, model, origins, dirs, tsamples, cfg.fd_eps);
    Eigen::VectorXd d;
    Eigen::VectorXd lam =
        losses::per_ray_lambda(tape, g, tsamples, guides, cfg.alpha, cfg.fixed_lambda, &d);
    losses::LossGraph loss = losses::build_total_loss(tape, g, gt, lam, cfg.lambda_e);

    IterationStats st;
    st.iter = iter;
    st.l_rgb = tape.value(loss.l_rgb)(0, 0);
    st.l_sdf = tape.value(loss.l_eik)(0, 0);
    st.l_total = tape.value(loss.l_total)(0, 0);
    st.s = model.s();
    st.mean_lambda_r = lam.mean();
    st.mean_d_r = d.mean();
    st.lr = cosine_lr(cfg, iter);
    if (!std::isfinite(st.l_total)) {
      model.params = last_good;
      field::save_checkpoint(model, last_good_iter,
                             (fs::path(out_dir) / "ckpt_last_good.tns").string());
      throw std::runtime_error("train: non-finite loss at iteration " + std::to_string(iter));
    }

    tape.backward(loss.l_total);
    adam_step(model.params, tape.grad_vector(), state, st.lr);
    last_good = model.params;
    last_good_iter = iter + 1;

    if (iter % cfg.log_every == 0 || iter == cfg.iterations - 1) {
      write_log_row(log, st);
      if (on_iter) on_iter(st);
    }
    if ((iter + 1) % cfg.checkpoint_every == 0 || iter == cfg.iterations - 1)
      field::save_checkpoint(
          model, iter + 1,
          (fs::path(out_dir) / ("ckpt_" + std::to_string(iter + 1) + ".tns")).string());
  }
  return model;
}

}  // namespace tns::train
