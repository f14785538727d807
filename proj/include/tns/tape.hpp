#pragma once

// Recorded-operations reverse-mode gradient engine over a flat parameter
// vector. Nodes hold dense matrices whose columns are the batch dimension;
// ops are coarse (whole-layer) so the heavy lifting stays in GEMMs.
//
// A tape can be reset and re-recorded; node storage is kept across resets,
// so a loop that rebuilds the same graph shape every iteration reuses all
// large buffers instead of churning the allocator.

#include <Eigen/Dense>

#include <cassert>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace tns::ad {

template <class S>
class Tape {
 public:
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

  explicit Tape(const Vec* params) : params_(params) {
    if (params_) grad_.setZero(params_->size());
  }

  // Start a fresh recording, keeping node buffers for reuse.
  void reset() { next_ = 0; }

  const Mat& value(int id) const { return nodes_[id].value; }
  const Vec& grad_vector() const { return grad_; }
  int size() const { return next_; }

  int constant(Mat v) {
    int id = alloc(false);
    nodes_[id].value = std::move(v);
    return id;
  }

  // Constant node whose storage the caller fills in place (reused on reset).
  std::pair<int, Mat*> constant_slot(Eigen::Index rows, Eigen::Index cols) {
    int id = alloc(false);
    Mat& v = nodes_[id].value;
    if (v.rows() != rows || v.cols() != cols) v.resize(rows, cols);
    return {id, &v};
  }

  // View of params_[offset .. offset+rows*cols) reshaped column-major.
  int param(int offset, int rows, int cols) {
    assert(params_ && offset + rows * cols <= params_->size());
    int id = alloc(true);
    nodes_[id].value = Eigen::Map<const Mat>(params_->data() + offset, rows, cols);
    nodes_[id].backward = [offset, rows, cols](Tape& t, int self) {
      Eigen::Map<const Vec> flat(t.nodes_[self].grad.data(), rows * cols);
      t.grad_.segment(offset, rows * cols) += flat;
    };
    return id;
  }

  // y = W x + b, b broadcast over columns. b < 0 means no bias.
  int linear(int w, int x, int b) {
    int id = alloc(any_grad({w, x, b}));
    Mat& out = nodes_[id].value;
    out.noalias() = nodes_[w].value * nodes_[x].value;
    if (b >= 0)
      out.colwise() += Eigen::Map<const Vec>(nodes_[b].value.data(), nodes_[b].value.rows());
    nodes_[id].backward = [w, x, b](Tape& t, int self) {
      const Mat& g = t.nodes_[self].grad;
      if (t.needs(w)) t.gref(w).noalias() += g * t.nodes_[x].value.transpose();
      if (t.needs(x)) t.gref(x).noalias() += t.nodes_[w].value.transpose() * g;
      if (b >= 0 && t.needs(b)) t.gref(b) += g.rowwise().sum();
    };
    return id;
  }

  int add(int a, int b) {
    int id = alloc(any_grad({a, b}));
    nodes_[id].value = nodes_[a].value + nodes_[b].value;
    nodes_[id].backward = [a, b](Tape& t, int self) {
      if (t.needs(a)) t.gref(a) += t.nodes_[self].grad;
      if (t.needs(b)) t.gref(b) += t.nodes_[self].grad;
    };
    return id;
  }

  int sub(int a, int b) {
    int id = alloc(any_grad({a, b}));
    nodes_[id].value = nodes_[a].value - nodes_[b].value;
    nodes_[id].backward = [a, b](Tape& t, int self) {
      if (t.needs(a)) t.gref(a) += t.nodes_[self].grad;
      if (t.needs(b)) t.gref(b) -= t.nodes_[self].grad;
    };
    return id;
  }

  int cmul(int a, int b) {
    int id = alloc(any_grad({a, b}));
    nodes_[id].value = nodes_[a].value.cwiseProduct(nodes_[b].value);
    nodes_[id].backward = [a, b](Tape& t, int self) {
      const Mat& g = t.nodes_[self].grad;
      if (t.needs(a)) t.gref(a) += g.cwiseProduct(t.nodes_[b].value);
      if (t.needs(b)) t.gref(b) += g.cwiseProduct(t.nodes_[a].value);
    };
    return id;
  }

  int scale(int a, S c) {
    int id = alloc(needs(a));
    nodes_[id].value = nodes_[a].value * c;
    nodes_[id].backward = [a, c](Tape& t, int self) {
      if (t.needs(a)) t.gref(a) += t.nodes_[self].grad * c;
    };
    return id;
  }

  int add_scalar(int a, S c) {
    int id = alloc(needs(a));
    nodes_[id].value = (nodes_[a].value.array() + c).matrix();
    nodes_[id].backward = [a](Tape& t, int self) {
      if (t.needs(a)) t.gref(a) += t.nodes_[self].grad;
    };
    return id;
  }

  // y = s * a with s a 1x1 node.
  int broadcast_scale(int s, int a) {
    const S sv = nodes_[s].value(0, 0);
    int id = alloc(any_grad({s, a}));
    nodes_[id].value = nodes_[a].value * sv;
    nodes_[id].backward = [s, a, sv](Tape& t, int self) {
      const Mat& g = t.nodes_[self].grad;
      if (t.needs(a)) t.gref(a) += g * sv;
      if (t.needs(s)) t.gref(s)(0, 0) += g.cwiseProduct(t.nodes_[a].value).sum();
    };
    return id;
  }

  int exp_op(int a) {
    int id = alloc(needs(a));
    nodes_[id].value = nodes_[a].value.array().exp().matrix();
    nodes_[id].backward = [a](Tape& t, int self) {
      if (t.needs(a))
        t.gref(a).array() += t.nodes_[self].grad.array() * t.nodes_[self].value.array();
    };
    return id;
  }

  // softplus with sharpness beta: max(x,0) + log(1 + exp(-beta |x|)) / beta.
  // Branch-free so every pass stays vectorized; the derivative sigmoid(beta x)
  // comes from the same exp and is cached in the node for the backward sweep.
  int softplus(int a, S beta) {
    int id = alloc(needs(a));
    const Mat& x = nodes_[a].value;
    Node& n = nodes_[id];
    n.aux = (-beta * x.array().abs()).exp().matrix();
    n.value = (x.array().max(S(0)) + (S(1) + n.aux.array()).log() / beta).matrix();
    n.aux = (S(0.5) + x.array().sign() * ((S(1) + n.aux.array()).inverse() - S(0.5))).matrix();
    n.backward = [a](Tape& t, int self) {
      if (t.needs(a))
        t.gref(a).array() += t.nodes_[self].grad.array() * t.nodes_[self].aux.array();
    };
    return id;
  }

  int relu(int a) {
    int id = alloc(needs(a));
    nodes_[id].value = nodes_[a].value.cwiseMax(S(0));
    nodes_[id].backward = [a](Tape& t, int self) {
      if (t.needs(a))
        t.gref(a).array() += t.nodes_[self].grad.array() *
                             (t.nodes_[self].value.array() > S(0)).template cast<S>();
    };
    return id;
  }

  int sigmoid(int a) {
    int id = alloc(needs(a));
    const auto& x = nodes_[a].value.array();
    Node& n = nodes_[id];
    n.aux = (-x.abs()).exp().matrix();
    n.value = (S(0.5) + x.sign() * ((S(1) + n.aux.array()).inverse() - S(0.5))).matrix();
    n.backward = [a](Tape& t, int self) {
      if (!t.needs(a)) return;
      const auto& y = t.nodes_[self].value.array();
      t.gref(a).array() += t.nodes_[self].grad.array() * y * (S(1) - y);
    };
    return id;
  }

  int abs_op(int a) {
    int id = alloc(needs(a));
    nodes_[id].value = nodes_[a].value.cwiseAbs();
    nodes_[id].backward = [a](Tape& t, int self) {
      if (!t.needs(a)) return;
      t.gref(a).array() += t.nodes_[self].grad.array() * t.nodes_[a].value.array().sign();
    };
    return id;
  }

  int square(int a) {
    int id = alloc(needs(a));
    nodes_[id].value = nodes_[a].value.array().square().matrix();
    nodes_[id].backward = [a](Tape& t, int self) {
      if (t.needs(a))
        t.gref(a).array() += S(2) * t.nodes_[self].grad.array() * t.nodes_[a].value.array();
    };
    return id;
  }

  int rows(int a, int r0, int nrows) {
    int id = alloc(needs(a));
    nodes_[id].value = nodes_[a].value.middleRows(r0, nrows);
    nodes_[id].backward = [a, r0, nrows](Tape& t, int self) {
      if (t.needs(a)) t.gref(a).middleRows(r0, nrows) += t.nodes_[self].grad;
    };
    return id;
  }

  int cols(int a, int c0, int ncols) {
    int id = alloc(needs(a));
    nodes_[id].value = nodes_[a].value.middleCols(c0, ncols);
    nodes_[id].backward = [a, c0, ncols](Tape& t, int self) {
      if (t.needs(a)) t.gref(a).middleCols(c0, ncols) += t.nodes_[self].grad;
    };
    return id;
  }

  int concat_rows(const std::vector<int>& parts) {
    int id = alloc(any_grad(parts));
    int total = 0;
    const Eigen::Index nc = nodes_[parts.front()].value.cols();
    for (int p : parts) total += static_cast<int>(nodes_[p].value.rows());
    Mat& v = nodes_[id].value;
    if (v.rows() != total || v.cols() != nc) v.resize(total, nc);
    int r = 0;
    for (int p : parts) {
      const int nr = static_cast<int>(nodes_[p].value.rows());
      v.middleRows(r, nr) = nodes_[p].value;
      r += nr;
    }
    nodes_[id].backward = [parts](Tape& t, int self) {
      int r = 0;
      for (int p : parts) {
        const int nr = static_cast<int>(t.nodes_[p].value.rows());
        if (t.needs(p)) t.gref(p) += t.nodes_[self].grad.middleRows(r, nr);
        r += nr;
      }
    };
    return id;
  }

  // Column-wise Euclidean norm, 1 x N.
  int norm_cols(int a) {
    int id = alloc(needs(a));
    nodes_[id].value = nodes_[a].value.colwise().norm();
    nodes_[id].backward = [a](Tape& t, int self) {
      if (!t.needs(a)) return;
      const Mat& x = t.nodes_[a].value;
      const Mat& n = t.nodes_[self].value;
      const Mat& g = t.nodes_[self].grad;
      Mat scale = (g.array() / n.array().max(S(1e-12))).matrix();
      t.gref(a).array() += x.array().rowwise() * scale.row(0).array();
    };
    return id;
  }

  // Columns rescaled to unit length (eps-guarded).
  int normalize_cols(int a, S eps) {
    int id = alloc(needs(a));
    const Mat& x = nodes_[a].value;
    Node& n = nodes_[id];
    n.aux = ((x.colwise().norm().array() + eps).inverse()).matrix();
    n.value = (x.array().rowwise() * n.aux.row(0).array()).matrix();
    n.backward = [a](Tape& t, int self) {
      if (!t.needs(a)) return;
      const Mat& inv = t.nodes_[self].aux;
      const Mat& y = t.nodes_[self].value;
      const Mat& g = t.nodes_[self].grad;
      // dx = inv * (g - y * <y, g>)
      Mat dot = ((y.array() * g.array()).colwise().sum()).matrix();
      Mat corr = (g.array() - y.array().rowwise() * dot.row(0).array()).matrix();
      t.gref(a).array() += corr.array().rowwise() * inv.row(0).array();
    };
    return id;
  }

  // Sum of every row within each column, 1 x N.
  int colsum(int a) {
    int id = alloc(needs(a));
    nodes_[id].value = nodes_[a].value.colwise().sum();
    nodes_[id].backward = [a](Tape& t, int self) {
      if (t.needs(a))
        t.gref(a).array() +=
            t.nodes_[self].grad.row(0).array().replicate(t.nodes_[a].value.rows(), 1);
    };
    return id;
  }

  int sum_all(int a) {
    int id = alloc(needs(a));
    Mat& v = nodes_[id].value;
    v.resize(1, 1);
    v(0, 0) = nodes_[a].value.sum();
    nodes_[id].backward = [a](Tape& t, int self) {
      if (t.needs(a)) t.gref(a).array() += t.nodes_[self].grad(0, 0);
    };
    return id;
  }

  // sum(w .* a) with constant weights, 1 x 1.
  int weighted_sum_all(int a, Mat w) {
    int id = alloc(needs(a));
    Node& n = nodes_[id];
    n.aux = std::move(w);
    n.value.resize(1, 1);
    n.value(0, 0) = nodes_[a].value.cwiseProduct(n.aux).sum();
    n.backward = [a](Tape& t, int self) {
      if (t.needs(a)) t.gref(a) += t.nodes_[self].aux * t.nodes_[self].grad(0, 0);
    };
    return id;
  }

  // Input 1 x (m*seg); output 1 x (m*(seg-1)): out[r,i] = in[r,i] - in[r,i+1].
  int seg_diff(int a, int seg) {
    int id = alloc(needs(a));
    const Mat& x = nodes_[a].value;
    const int m = static_cast<int>(x.cols()) / seg;
    assert(m * seg == x.cols() && x.rows() == 1);
    Mat& v = nodes_[id].value;
    if (v.rows() != 1 || v.cols() != m * (seg - 1)) v.resize(1, m * (seg - 1));
    for (int r = 0; r < m; ++r)
      v.middleCols(r * (seg - 1), seg - 1) =
          x.middleCols(r * seg, seg - 1) - x.middleCols(r * seg + 1, seg - 1);
    nodes_[id].backward = [a, seg, m](Tape& t, int self) {
      if (!t.needs(a)) return;
      const Mat& g = t.nodes_[self].grad;
      Mat& ga = t.gref(a);
      for (int r = 0; r < m; ++r) {
        ga.middleCols(r * seg, seg - 1) += g.middleCols(r * (seg - 1), seg - 1);
        ga.middleCols(r * seg + 1, seg - 1) -= g.middleCols(r * (seg - 1), seg - 1);
      }
    };
    return id;
  }

  // colors: C x (m*seg); w: 1 x (m*(seg-1)); out: C x m,
  // out[:,r] = sum_{i<seg-1} w[r,i] * colors[:, r*seg+i]. The trailing sample
  // of each segment carries no weight.
  int seg_weighted_sum(int colors, int w, int seg) {
    int id = alloc(any_grad({colors, w}));
    const Mat& c = nodes_[colors].value;
    const Mat& wv = nodes_[w].value;
    const int C = static_cast<int>(c.rows());
    const int m = static_cast<int>(c.cols()) / seg;
    Mat& v = nodes_[id].value;
    if (v.rows() != C || v.cols() != m) v.resize(C, m);
    for (int r = 0; r < m; ++r)
      v.col(r).noalias() =
          c.middleCols(r * seg, seg - 1) * wv.middleCols(r * (seg - 1), seg - 1).transpose();
    nodes_[id].backward = [colors, w, seg, m](Tape& t, int self) {
      const Mat& g = t.nodes_[self].grad;
      const Mat& c = t.nodes_[colors].value;
      const Mat& wv = t.nodes_[w].value;
      for (int r = 0; r < m; ++r) {
        if (t.needs(colors))
          t.gref(colors).middleCols(r * seg, seg - 1).noalias() +=
              g.col(r) * wv.middleCols(r * (seg - 1), seg - 1);
        if (t.needs(w))
          t.gref(w).middleCols(r * (seg - 1), seg - 1).noalias() +=
              g.col(r).transpose() * c.middleCols(r * seg, seg - 1);
      }
    };
    return id;
  }

  // Pass-through in the forward direction; backward stops here.
  int stop_gradient(int a) {
    int id = alloc(false);
    nodes_[id].value = nodes_[a].value;
    return id;
  }

  // Reverse sweep from a 1x1 root; accumulates into the flat gradient vector.
  void backward(int root) {
    if (root < 0 || root >= next_ || nodes_[root].value.size() != 1)
      throw std::invalid_argument("backward root must be a scalar node");
    grad_.setZero();
    ++epoch_;
    Node& r = nodes_[root];
    if (r.grad.rows() != 1 || r.grad.cols() != 1) r.grad.resize(1, 1);
    r.grad(0, 0) = S(1);
    r.grad_epoch = epoch_;
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad_epoch != epoch_ || !n.backward) continue;
      n.backward(*this, i);
    }
  }

  bool needs(int id) const { return id >= 0 && nodes_[id].requires_grad; }

 private:
  struct Node {
    Mat value;
    Mat grad;
    Mat aux;  // op-private cache (e.g. activation derivative)
    std::uint64_t grad_epoch = 0;
    bool requires_grad = false;
    std::function<void(Tape&, int)> backward;
  };

  // Zeroed-on-first-touch gradient buffer of the node's shape.
  Mat& gref(int id) {
    Node& n = nodes_[id];
    if (n.grad_epoch != epoch_) {
      if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols())
        n.grad.resize(n.value.rows(), n.value.cols());
      n.grad.setZero();
      n.grad_epoch = epoch_;
    }
    return n.grad;
  }

  bool any_grad(const std::vector<int>& ids) const {
    for (int i : ids)
      if (needs(i)) return true;
    return false;
  }

  int alloc(bool req) {
    if (next_ == static_cast<int>(nodes_.size())) nodes_.emplace_back();
    Node& n = nodes_[next_];
    n.requires_grad = req;
    n.grad_epoch = 0;
    n.backward = nullptr;
    return next_++;
  }

  const Vec* params_;
  Vec grad_;
  std::vector<Node> nodes_;
  int next_ = 0;
  std::uint64_t epoch_ = 0;
};

}  // namespace tns::ad
