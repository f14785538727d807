#include "tns/eval.hpp"

#include <algorithm>
#include <stdexcept>
#include <thread>
#include <vector>

namespace tns::eval {

namespace {

// Renders pixel columns [begin, end) of one frame into the output buffers.
void render_span(const field::FieldModel<float>& model, const data::SceneDataset& ds, int frame,
                 const render::RenderConfig& cfg, int begin, int end, RenderedFrame* out) {
  const int w = ds.intrinsics.width;
  const int n = cfg.n_samples;
  const int batch = 256;
  ad::Tape<float> tape(&model.params);
  for (int p0 = begin; p0 < end; p0 += batch) {
    const int m = std::min(batch, end - p0);
    Eigen::Matrix3Xd origins(3, m), dirs(3, m);
    Eigen::MatrixXd tsamples(n, m);
    std::vector<geom::Ray> rays;
    rays.reserve(m);
    for (int i = 0; i < m; ++i) {
      const int p = p0 + i;
      geom::Ray ray = ds.pixel_ray(frame, (p % w) + 0.5, (p / w) + 0.5);
      origins.col(i) = ray.origin;
      dirs.col(i) = ray.direction;
      tsamples.col(i) = render::sample_ray(ray, n, nullptr, false);
      rays.push_back(ray);
    }
    tape.reset();
    render::RenderGraph g = render::build_render_graph(tape, model, origins, dirs, tsamples,
                                                       cfg.fd_eps);
    for (int i = 0; i < m; ++i) {
      render::RenderOutput ro = render::extract_output(tape, g, tsamples, i);
      const int p = p0 + i;
      out->linear_rgb.col(p) = ro.color.cwiseMax(0.0).cwiseMin(1.0).cast<float>();
      out->depth.values[p] =
          ro.depth_zero_crossing ? static_cast<float>(*ro.depth_zero_crossing) : 0.0f;
    }
  }
}

}  // namespace

RenderedFrame render_model_frame(const field::FieldModel<float>& model,
                                 const data::SceneDataset& ds, int frame,
                                 const render::RenderConfig& cfg, int threads) {
  if (frame < 0 || frame >= static_cast<int>(ds.frames.size()))
    throw std::invalid_argument("render_model_frame: frame index out of range");
  const int w = ds.intrinsics.width, h = ds.intrinsics.height;
  RenderedFrame out;
  out.linear_rgb.resize(3, w * h);
  out.depth.width = w;
  out.depth.height = h;
  out.depth.values.assign(static_cast<size_t>(w) * h, 0.0f);

  const int total = w * h;
  threads = std::clamp(threads, 1, total);
  if (threads == 1) {
    render_span(model, ds, frame, cfg, 0, total, &out);
  } else {
    std::vector<std::thread> pool;
    const int span = (total + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const int begin = t * span, end = std::min(total, begin + span);
      if (begin >= end) break;
      pool.emplace_back(render_span, std::cref(model), std::cref(ds), frame, std::cref(cfg),
                        begin, end, &out);
    }
    for (auto& th : pool) th.join();
  }

  out.image.width = w;
  out.image.height = h;
  out.image.rgb.resize(static_cast<size_t>(w) * h * 3);
  for (int p = 0; p < total; ++p)
    for (int c = 0; c < 3; ++c)
      out.image.rgb[3 * p + c] = img::quantize_srgb(out.linear_rgb(c, p));
  return out;
}

metrics::EvalReport evaluate_dataset(const field::FieldModel<float>& model,
                                     const data::SceneDataset& ds, const std::string& split,
                                     const render::RenderConfig& cfg, int threads) {
  const std::vector<int> frames = ds.split_indices(split);
  if (frames.empty()) throw std::invalid_argument("evaluate_dataset: empty split " + split);
  metrics::EvalReport rep;
  rep.split = split;
  double sq_acc = 0;
  std::size_t sq_count = 0;
  for (int fi : frames) {
    RenderedFrame rf = render_model_frame(model, ds, fi, cfg, threads);
    const auto& frame = ds.frames[fi];
    rep.frame_ids.push_back(fi);
    rep.frame_psnr.push_back(metrics::psnr(rf.linear_rgb.cast<double>(),
                                           frame.linear_rgb.cast<double>(), 1.0));
    std::vector<std::uint8_t> mask(frame.depth_gt.values.size());
    for (size_t p = 0; p < mask.size(); ++p)
      mask[p] = frame.depth_gt.values[p] > 0 && rf.depth.values[p] > 0;
    double rmse = 0;
    if (std::count(mask.begin(), mask.end(), std::uint8_t(1)) > 0) {
      rmse = metrics::depth_rmse(rf.depth, frame.depth_gt, mask);
      for (size_t p = 0; p < mask.size(); ++p) {
        if (!mask[p]) continue;
        const double d = static_cast<double>(rf.depth.values[p]) - frame.depth_gt.values[p];
        sq_acc += d * d;
        ++sq_count;
      }
    }
    rep.frame_depth_rmse.push_back(rmse);
  }
  rep.mean_psnr = Eigen::Map<const Eigen::VectorXd>(rep.frame_psnr.data(),
                                                    static_cast<Eigen::Index>(rep.frame_psnr.size()))
                      .mean();
  rep.depth_rmse = sq_count ? std::sqrt(sq_acc / sq_count) : 0.0;
  return rep;
}

}  // namespace tns::eval
