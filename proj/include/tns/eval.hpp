#pragma once

// Full-frame rendering of a trained model and dataset-level evaluation.
// Frame rendering is deterministic (midpoint sampling, no RNG), so repeated
// runs produce byte-identical images.

#include <Eigen/Dense>

#include <string>

#include "tns/dataset.hpp"
#include "tns/field.hpp"
#include "tns/image_io.hpp"
#include "tns/metrics.hpp"
#include "tns/renderer.hpp"

namespace tns::eval {

struct RenderedFrame {
  Eigen::Matrix3Xf linear_rgb;  // 3 x (w*h)
  img::ImageU8 image;           // sRGB-quantized
  img::DepthImage depth;        // zero-crossing ray distance, 0 = miss
};

RenderedFrame render_model_frame(const field::FieldModel<float>& model,
                                 const data::SceneDataset& ds, int frame,
                                 const render::RenderConfig& cfg, int threads = 1);

metrics::EvalReport evaluate_dataset(const field::FieldModel<float>& model,
                                     const data::SceneDataset& ds, const std::string& split,
                                     const render::RenderConfig& cfg, int threads = 1);

}  // namespace tns::eval
