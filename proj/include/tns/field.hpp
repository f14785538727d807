#pragma once

// Trainable SDF + radiance networks over a single flat parameter vector.
// The SDF net maps an encoded position to (signed distance, feature); the
// radiance net maps (position, encoded view dir, normal, feature) to RGB.
// Sharpness s is carried as log_s so it stays positive.

#include <Eigen/Dense>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tns/rng.hpp"
#include "tns/tape.hpp"

namespace tns::field {

struct ArchitectureConfig {
  int pos_freqs = 6;
  int dir_freqs = 4;
  int sdf_layers = 4;       // hidden layers
  int sdf_width = 64;
  int radiance_layers = 3;  // hidden layers
  int radiance_width = 64;
  int feature_dim = 32;
  double init_radius = 0.5;

  void validate() const {
    if (pos_freqs < 0 || dir_freqs < 0) throw std::invalid_argument("frequency counts must be >= 0");
    if (sdf_layers < 1 || sdf_width < 1 || radiance_layers < 1 || radiance_width < 1 ||
        feature_dim < 1)
      throw std::invalid_argument("layer/width/feature counts must be >= 1");
    if (init_radius <= 0) throw std::invalid_argument("init_radius must be > 0");
  }

  int sdf_input_dim() const { return 3 + 6 * pos_freqs; }
  int dir_enc_dim() const { return 3 + 6 * dir_freqs; }
  int radiance_input_dim() const { return 3 + dir_enc_dim() + 3 + feature_dim; }

  nlohmann::json to_json() const {
    return {{"pos_freqs", pos_freqs},           {"dir_freqs", dir_freqs},
            {"sdf_layers", sdf_layers},         {"sdf_width", sdf_width},
            {"radiance_layers", radiance_layers}, {"radiance_width", radiance_width},
            {"feature_dim", feature_dim},       {"init_radius", init_radius}};
  }

  static ArchitectureConfig from_json(const nlohmann::json& j) {
    ArchitectureConfig c;
    c.pos_freqs = j.at("pos_freqs");
    c.dir_freqs = j.at("dir_freqs");
    c.sdf_layers = j.at("sdf_layers");
    c.sdf_width = j.at("sdf_width");
    c.radiance_layers = j.at("radiance_layers");
    c.radiance_width = j.at("radiance_width");
    c.feature_dim = j.at("feature_dim");
    c.init_radius = j.at("init_radius");
    c.validate();
    return c;
  }
};

// Offsets of one affine layer inside the flat parameter vector.
struct LayerSlot {
  int w_offset, b_offset;
  int in_dim, out_dim;
};

struct ParamLayout {
  std::vector<LayerSlot> sdf_hidden;
  LayerSlot sdf_head_f;     // 1 output row: the signed distance
  LayerSlot sdf_head_feat;  // feature_dim output rows
  std::vector<LayerSlot> radiance;
  int log_s_offset = 0;
  int total = 0;

  static ParamLayout build(const ArchitectureConfig& cfg) {
    ParamLayout lay;
    int off = 0;
    auto make = [&off](int in, int out) {
      LayerSlot s{off, off + in * out, in, out};
      off += in * out + out;
      return s;
    };
    auto add = [&make](std::vector<LayerSlot>& dst, int in, int out) { dst.push_back(make(in, out)); };
    int in = cfg.sdf_input_dim();
    for (int l = 0; l < cfg.sdf_layers; ++l) {
      add(lay.sdf_hidden, in, cfg.sdf_width);
      in = cfg.sdf_width;
    }
    lay.sdf_head_f = make(in, 1);
    lay.sdf_head_feat = make(in, cfg.feature_dim);
    in = cfg.radiance_input_dim();
    for (int l = 0; l < cfg.radiance_layers; ++l) {
      add(lay.radiance, in, cfg.radiance_width);
      in = cfg.radiance_width;
    }
    add(lay.radiance, in, 3);
    lay.log_s_offset = off;
    lay.total = off + 1;
    return lay;
  }
};

constexpr double kSoftplusBeta = 100.0;

// x concatenated with [sin(2^k pi x), cos(2^k pi x)] for k = 0..L-1,
// written into out (resized as needed).
template <class S>
void positional_encode_into(
    const Eigen::Ref<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>>& x, int freqs,
    Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>& out) {
  const int d = static_cast<int>(x.rows());
  const Eigen::Index n = x.cols();
  if (out.rows() != d + 2 * freqs * d || out.cols() != n) out.resize(d + 2 * freqs * d, n);
  out.topRows(d) = x;
  if (freqs > 0) {
    // One sin/cos evaluation at the base frequency; higher octaves follow by
    // angle doubling (sin 2a = 2 sin a cos a, cos 2a = cos^2 a - sin^2 a).
    const S pi = static_cast<S>(3.14159265358979323846);
    out.middleRows(d, d) = (x.array() * pi).sin().matrix();
    out.middleRows(2 * d, d) = (x.array() * pi).cos().matrix();
    for (int k = 1; k < freqs; ++k) {
      auto sp = out.middleRows(d + 2 * (k - 1) * d, d).array();
      auto cp = out.middleRows(d + (2 * (k - 1) + 1) * d, d).array();
      out.middleRows(d + 2 * k * d, d) = (S(2) * sp * cp).matrix();
      out.middleRows(d + (2 * k + 1) * d, d) = (cp.square() - sp.square()).matrix();
    }
  }
}

template <class S>
Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> positional_encode(
    const Eigen::Ref<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>>& x, int freqs) {
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> out;
  positional_encode_into<S>(x, freqs, out);
  return out;
}

template <class S>
struct FieldModel {
  using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

  ArchitectureConfig config;
  ParamLayout layout;
  Vec params;

  static FieldModel create(const ArchitectureConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    FieldModel m;
    m.config = cfg;
    m.layout = ParamLayout::build(cfg);
    m.params.setZero(m.layout.total);
    m.geometric_init(seed);
    return m;
  }

  S s() const { return std::exp(params[layout.log_s_offset]); }
  S log_s() const { return params[layout.log_s_offset]; }

  // Sphere initialization: f(x) ~ |x| - init_radius before any training.
  // First-layer weights on the encoding channels start at zero so the net
  // initially sees only the raw coordinates.
  void geometric_init(std::uint64_t seed) {
    Rng rng(seed);
    auto fill_normal = [&](int off, int count, double mean, double std) {
      for (int i = 0; i < count; ++i)
        params[off + i] = static_cast<S>(mean + std * rng.normal());
    };
    const int nsdf = static_cast<int>(layout.sdf_hidden.size());
    for (int l = 0; l < nsdf; ++l) {
      const LayerSlot& slot = layout.sdf_hidden[l];
      const double std = std::sqrt(2.0) / std::sqrt(static_cast<double>(slot.out_dim));
      if (l == 0) {
        for (int c = 0; c < slot.in_dim; ++c)
          for (int r = 0; r < slot.out_dim; ++r)
            params[slot.w_offset + c * slot.out_dim + r] =
                c < 3 ? static_cast<S>(std * rng.normal()) : S(0);
      } else {
        fill_normal(slot.w_offset, slot.in_dim * slot.out_dim, 0.0, std);
      }
      std::fill_n(params.data() + slot.b_offset, slot.out_dim, S(0));
    }
    {
      const LayerSlot& feat = layout.sdf_head_feat;
      fill_normal(feat.w_offset, feat.in_dim * feat.out_dim, 0.0, 0.05);
      std::fill_n(params.data() + feat.b_offset, feat.out_dim, S(0));
    }
    fit_sphere_head(rng);
    const int nrad = static_cast<int>(layout.radiance.size());
    for (int l = 0; l < nrad; ++l) {
      const LayerSlot& slot = layout.radiance[l];
      const double std = l == nrad - 1
                             ? 0.1
                             : std::sqrt(2.0) / std::sqrt(static_cast<double>(slot.out_dim));
      fill_normal(slot.w_offset, slot.in_dim * slot.out_dim, 0.0, std);
      std::fill_n(params.data() + slot.b_offset, slot.out_dim, S(0));
    }
    params[layout.log_s_offset] = static_cast<S>(std::log(20.0));
  }

  // Distance-head calibration for geometric_init: ridge-regress the random
  // hidden features onto |x| - r0 over seeded sample points (box interior
  // plus a shell around the target radius). Random hidden layers alone only
  // realize the sphere in expectation; the fit makes it tight.
  void fit_sphere_head(Rng& rng) {
    const int K = 2048;
    Mat pts(3, K);
    for (int i = 0; i < K; ++i) {
      Eigen::Vector3d p;
      if (i % 2 == 0) {
        p = Eigen::Vector3d(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5),
                            rng.uniform(-1.5, 1.5));
      } else {
        p = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized() *
            (config.init_radius * rng.uniform(0.7, 1.3));
      }
      pts.col(i) = p.cast<S>();
    }
    ad::Tape<S> tape(&params);
    int x = tape.constant(positional_encode<S>(pts, config.pos_freqs));
    Eigen::MatrixXd H = tape.value(sdf_hidden_graph(tape, x)).template cast<double>();
    const int W = static_cast<int>(H.rows());
    Eigen::MatrixXd A(W + 1, K);
    A.topRows(W) = H;
    A.row(W).setOnes();
    Eigen::VectorXd y(K);
    for (int i = 0; i < K; ++i)
      y[i] = pts.col(i).template cast<double>().norm() - config.init_radius;
    Eigen::MatrixXd G = A * A.transpose();
    G.diagonal().array() += 1e-6 * K;
    Eigen::VectorXd w = G.ldlt().solve(A * y);
    const LayerSlot& slot = layout.sdf_head_f;
    for (int i = 0; i < slot.in_dim; ++i) params[slot.w_offset + i] = static_cast<S>(w[i]);
    params[slot.b_offset] = static_cast<S>(w[W]);
  }

  // --- graph builders -------------------------------------------------------

  // encoded_x: sdf_input_dim x N node. Returns the last hidden activation.
  int sdf_hidden_graph(ad::Tape<S>& tape, int encoded_x) const {
    int h = encoded_x;
    for (const LayerSlot& s : layout.sdf_hidden) {
      int w = tape.param(s.w_offset, s.out_dim, s.in_dim);
      int b = tape.param(s.b_offset, s.out_dim, 1);
      h = tape.softplus(tape.linear(w, h, b), static_cast<S>(kSoftplusBeta));
    }
    return h;
  }

  int apply_head(ad::Tape<S>& tape, const LayerSlot& s, int h) const {
    int w = tape.param(s.w_offset, s.out_dim, s.in_dim);
    int b = tape.param(s.b_offset, s.out_dim, 1);
    return tape.linear(w, h, b);
  }

  // ((1 + F) x N): row 0 signed distance, rest feature.
  int sdf_graph(ad::Tape<S>& tape, int encoded_x) const {
    int h = sdf_hidden_graph(tape, encoded_x);
    return tape.concat_rows({apply_head(tape, layout.sdf_head_f, h),
                             apply_head(tape, layout.sdf_head_feat, h)});
  }

  // input: radiance_input_dim x N node. Returns RGB in (0,1), 3 x N.
  int radiance_graph(ad::Tape<S>& tape, int input) const {
    int h = input;
    const int n = static_cast<int>(layout.radiance.size());
    for (int l = 0; l < n; ++l) {
      const LayerSlot& s = layout.radiance[l];
      int w = tape.param(s.w_offset, s.out_dim, s.in_dim);
      int b = tape.param(s.b_offset, s.out_dim, 1);
      h = tape.linear(w, h, b);
      h = l + 1 < n ? tape.relu(h) : tape.sigmoid(h);
    }
    return h;
  }

  int log_s_node(ad::Tape<S>& tape) const { return tape.param(layout.log_s_offset, 1, 1); }

  // --- direct evaluation ----------------------------------------------------

  // Batched (f, feature): returns the raw head output (1 + F) x N.
  Mat sdf_forward(const Eigen::Ref<const Mat>& positions) const {
    ad::Tape<S> tape(&params);
    int x = tape.constant(positional_encode<S>(positions, config.pos_freqs));
    return tape.value(sdf_graph(tape, x));
  }

  S sdf_value(const Eigen::Vector3d& p) const {
    Mat pos(3, 1);
    pos.col(0) = p.cast<S>();
    return sdf_forward(pos)(0, 0);
  }

  std::pair<S, Vec> sdf_eval(const Eigen::Vector3d& p) const {
    Mat pos(3, 1);
    pos.col(0) = p.cast<S>();
    Mat out = sdf_forward(pos);
    return {out(0, 0), out.col(0).tail(config.feature_dim)};
  }

  // Central finite differences of f, step eps.
  Eigen::Vector3d sdf_spatial_gradient(const Eigen::Vector3d& p, double eps) const {
    if (eps <= 0) throw std::invalid_argument("sdf_spatial_gradient: eps must be > 0");
    Mat pos(3, 6);
    for (int k = 0; k < 3; ++k) {
      Eigen::Vector3d hi = p, lo = p;
      hi[k] += eps;
      lo[k] -= eps;
      pos.col(2 * k) = hi.cast<S>();
      pos.col(2 * k + 1) = lo.cast<S>();
    }
    Mat out = sdf_forward(pos);
    Eigen::Vector3d g;
    for (int k = 0; k < 3; ++k)
      g[k] = (static_cast<double>(out(0, 2 * k)) - static_cast<double>(out(0, 2 * k + 1))) /
             (2.0 * eps);
    return g;
  }

  Eigen::Vector3d radiance_eval(const Eigen::Vector3d& p, const Eigen::Vector3d& v,
                                const Eigen::Vector3d& normal, const Vec& feature) const {
    if (std::abs(v.norm() - 1.0) > 1e-6)
      throw std::invalid_argument("radiance_eval: view direction must be unit length");
    Mat in(config.radiance_input_dim(), 1);
    Mat dir(3, 1);
    dir.col(0) = v.cast<S>();
    in.topRows(3).col(0) = p.cast<S>();
    in.middleRows(3, config.dir_enc_dim()) = positional_encode<S>(dir, config.dir_freqs);
    in.middleRows(3 + config.dir_enc_dim(), 3).col(0) = normal.cast<S>();
    in.bottomRows(config.feature_dim).col(0) = feature;
    ad::Tape<S> tape(&params);
    Mat out = tape.value(radiance_graph(tape, tape.constant(in)));
    return out.col(0).template cast<double>();
  }
};

// --- checkpoint format ------------------------------------------------------
// "TNSV1\0" | u32 LE json length | architecture JSON (UTF-8) |
// params as little-endian float32 in declaration order | u64 LE iteration.

inline constexpr char kCheckpointMagic[6] = {'T', 'N', 'S', 'V', '1', '\0'};

template <class S>
void save_checkpoint(const FieldModel<S>& model, std::uint64_t iteration,
                     const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  f.write(kCheckpointMagic, 6);
  const std::string js = model.config.to_json().dump();
  const std::uint32_t len = static_cast<std::uint32_t>(js.size());
  f.write(reinterpret_cast<const char*>(&len), 4);
  f.write(js.data(), js.size());
  for (Eigen::Index i = 0; i < model.params.size(); ++i) {
    const float v = static_cast<float>(model.params[i]);
    f.write(reinterpret_cast<const char*>(&v), 4);
  }
  f.write(reinterpret_cast<const char*>(&iteration), 8);
  if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

template <class S>
std::pair<FieldModel<S>, std::uint64_t> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[6];
  f.read(magic, 6);
  if (!f || std::memcmp(magic, kCheckpointMagic, 6) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  std::uint32_t len = 0;
  f.read(reinterpret_cast<char*>(&len), 4);
  std::string js(len, '\0');
  f.read(js.data(), len);
  FieldModel<S> m;
  m.config = ArchitectureConfig::from_json(nlohmann::json::parse(js));
  m.layout = ParamLayout::build(m.config);
  m.params.resize(m.layout.total);
  for (int i = 0; i < m.layout.total; ++i) {
    float v;
    f.read(reinterpret_cast<char*>(&v), 4);
    m.params[i] = static_cast<S>(v);
  }
  std::uint64_t iter = 0;
  f.read(reinterpret_cast<char*>(&iter), 8);
  if (!f) throw std::runtime_error("truncated checkpoint: " + path);
  return {std::move(m), iter};
}

}  // namespace tns::field
