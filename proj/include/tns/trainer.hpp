#pragma once

// Optimization loop: uniform ray batches over the train split, whole-batch
// graph rendering, depth-adaptive loss, bias-corrected adaptive updates with
// cosine learning-rate decay, CSV logging, and periodic checkpoints.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tns/dataset.hpp"
#include "tns/field.hpp"
#include "tns/losses.hpp"
#include "tns/rng.hpp"

namespace tns::train {

struct TrainConfig {
  int iterations = 5000;
  int batch_rays = 512;   // m
  int n_samples = 64;     // n
  double lr = 5e-4;
  double lr_final = 5e-5;
  double alpha = 1e-3;
  double lambda_e = 0.1;
  double fd_eps = 1e-3;
  bool stratified = true;
  bool importance = false;
  bool fixed_lambda = false;  // ablation: lambda_r == 1
  std::uint64_t seed = 0;
  std::vector<int> guide_frames = {0};
  int log_every = 10;
  int checkpoint_every = 1000;
  field::ArchitectureConfig arch;

  void validate() const;

  // Overrides fields present in j on top of *this; unknown keys are an error.
  TrainConfig with_overrides(const nlohmann::json& j) const;
};

struct IterationStats {
  int iter = 0;
  double l_rgb = 0, l_sdf = 0, l_total = 0;
  double s = 0, mean_lambda_r = 0, mean_d_r = 0, lr = 0;
};

double cosine_lr(const TrainConfig& cfg, int iter);

struct AdamState {
  Eigen::VectorXf m, v;
  int step = 0;

  static AdamState create(Eigen::Index count) {
    AdamState st;
    st.m.setZero(count);
    st.v.setZero(count);
    return st;
  }
};

// Standard bias-corrected update, beta1=0.9, beta2=0.999, eps=1e-8.
void adam_step(Eigen::VectorXf& params, const Eigen::VectorXf& grad, AdamState& state, double lr);

struct PixelSample {
  int frame = 0, x = 0, y = 0;
};

// m pixels drawn uniformly over (train frame, pixel).
std::vector<PixelSample> sample_batch(const data::SceneDataset& ds, Rng& rng, int m);

// Runs the loop, writing train_log.csv and ckpt_<iter>.tns under out_dir.
// on_iter, when set, observes every logged row.
field::FieldModel<float> train(const data::SceneDataset& ds, const TrainConfig& cfg,
                               const std::string& out_dir,
                               const std::function<void(const IterationStats&)>& on_iter = {});

}  // namespace tns::train
