// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avsm/autodiff.hpp"

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace avsm::ad {

namespace {

using MatrixMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>>;
using ConstMatrixMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>;

// C = A(m,k) * B(k,n), optionally transposing either side; beta 0 or 1.
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n,
          std::int64_t k, const double* a, const double* b, double beta,
          double* c) {
  MatrixMap C(c, m, n);
  auto mul = [&](const auto& A, const auto& B) {
    if (beta == 0.0)
      C.noalias() = A * B;
    else
      C.noalias() += A * B;
  };
  if (!trans_a && !trans_b)
    mul(ConstMatrixMap(a, m, k), ConstMatrixMap(b, k, n));
  else if (!trans_a && trans_b)
    mul(ConstMatrixMap(a, m, k), ConstMatrixMap(b, n, k).transpose());
  else if (trans_a && !trans_b)
    mul(ConstMatrixMap(a, k, m).transpose(), ConstMatrixMap(b, k, n));
  else
    mul(ConstMatrixMap(a, k, m).transpose(),
        ConstMatrixMap(b, n, k).transpose());
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.same_shape(b), ErrorKind::kShape,
          std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
              shape_str(b.shape));
}

inline bool tracked(const Tape* t, const Tensor& a) {
  return t != nullptr && a.node >= 0;
}

inline bool tracked(const Tape* t, const Tensor& a, const Tensor& b) {
  return t != nullptr && (a.node >= 0 || b.node >= 0);
}

inline bool tracked3(const Tape* t, const Tensor& a, const Tensor& b,
                     const Tensor& c) {
  return t != nullptr && (a.node >= 0 || b.node >= 0 || c.node >= 0);
}

inline double sigmoid_s(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus_s(double x) {
  return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::abs(x)));
}

constexpr double kPi = 3.141592653589793238462643383279502884;

}  // namespace

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

int Tape::watch(Tensor& t) {
  if (!t.requires_grad) return -1;
  Node n;
  n.out_shape = t.shape;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  t.node = static_cast<int>(nodes_.size()) - 1;
  return t.node;
}

int Tape::push(std::vector<int> out_shape, BackFn back) {
  Node n;
  n.out_shape = std::move(out_shape);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Tape::grad_slot(int node, const std::vector<int>& shape) {
  auto& g = grads_[static_cast<std::size_t>(node)];
  if (!g.data) g = Tensor::zeros(shape);
  return g;
}

void Tape::accum(int node, const Tensor& contrib) {
  if (node < 0) return;
  accum_raw(node, contrib.shape, contrib.ptr(), contrib.numel());
}

void Tape::accum_raw(int node, const std::vector<int>& shape, const double* p,
                     std::int64_t n) {
  if (node < 0) return;
  Tensor& g = grad_slot(node, shape);
  double* dst = g.ptr();
  for (std::int64_t i = 0; i < n; ++i) dst[i] += p[i];
}

void Tape::backward(const Tensor& loss) {
  require(loss.numel() == 1, ErrorKind::kContract,
          "backward: loss must be a scalar");
  require(loss.node >= 0, ErrorKind::kContract,
          "backward: loss is not connected to this tape");
  grads_.assign(nodes_.size(), Tensor{});
  grad_slot(loss.node, {1}).ptr()[0] = 1.0;
  for (int i = loss.node; i >= 0; --i) {
    auto& node = nodes_[static_cast<std::size_t>(i)];
    if (!has_grad(i)) continue;
    if (node.back) {
      node.back(*this, grads_[static_cast<std::size_t>(i)]);
      // Intermediate gradients are not needed once propagated.
      grads_[static_cast<std::size_t>(i)] = Tensor{};
    }
  }
}

Tensor Tape::grad(const Tensor& t) const {
  if (has_grad(t.node)) return grads_[static_cast<std::size_t>(t.node)];
  return Tensor::zeros(t.shape);
}

std::unordered_map<int, Tensor> Tape::leaf_grads() const {
  std::unordered_map<int, Tensor> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].is_leaf && has_grad(static_cast<int>(i)))
      out.emplace(static_cast<int>(i), grads_[i]);
  }
  return out;
}

void Tape::clear() {
  nodes_.clear();
  grads_.clear();
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Tensor add(Tape* t, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  const double* pb = b.ptr();
  double* po = out.ptr();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  if (tracked(t, a, b)) {
    int na = a.node, nb = b.node;
    out.node = t->push(out.shape, [na, nb](Tape& tp, const Tensor& g) {
      tp.accum_raw(na, g.shape, g.ptr(), g.numel());
      tp.accum_raw(nb, g.shape, g.ptr(), g.numel());
    });
  }
  return out;
}

Tensor sub(Tape* t, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  const double* pb = b.ptr();
  double* po = out.ptr();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
  if (tracked(t, a, b)) {
    int na = a.node, nb = b.node;
    out.node = t->push(out.shape, [na, nb](Tape& tp, const Tensor& g) {
      tp.accum_raw(na, g.shape, g.ptr(), g.numel());
      if (nb >= 0) {
        Tensor& gb = tp.grad_slot(nb, g.shape);
        const double* pg = g.ptr();
        double* p = gb.ptr();
        for (std::int64_t i = 0; i < g.numel(); ++i) p[i] -= pg[i];
      }
    });
  }
  return out;
}

Tensor mul(Tape* t, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  const double* pb = b.ptr();
  double* po = out.ptr();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  if (tracked(t, a, b)) {
    int na = a.node, nb = b.node;
    Tensor sa = a, sb = b;  // shared data, kept for backward
    out.node = t->push(out.shape, [na, nb, sa, sb](Tape& tp, const Tensor& g) {
      const double* pg = g.ptr();
      const std::int64_t m = g.numel();
      if (na >= 0) {
        double* p = tp.grad_slot(na, sa.shape).ptr();
        const double* q = sb.ptr();
        for (std::int64_t i = 0; i < m; ++i) p[i] += pg[i] * q[i];
      }
      if (nb >= 0) {
        double* p = tp.grad_slot(nb, sb.shape).ptr();
        const double* q = sa.ptr();
        for (std::int64_t i = 0; i < m; ++i) p[i] += pg[i] * q[i];
      }
    });
  }
  return out;
}

Tensor neg(Tape* t, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  double* po = out.ptr();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = -pa[i];
  if (tracked(t, a)) {
    int na = a.node;
    out.node = t->push(out.shape, [na](Tape& tp, const Tensor& g) {
      double* p = tp.grad_slot(na, g.shape).ptr();
      const double* pg = g.ptr();
      for (std::int64_t i = 0; i < g.numel(); ++i) p[i] -= pg[i];
    });
  }
  return out;
}

Tensor add_scalar(Tape* t, const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  double* po = out.ptr();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + c;
  if (tracked(t, a)) {
    int na = a.node;
    out.node = t->push(out.shape, [na](Tape& tp, const Tensor& g) {
      tp.accum_raw(na, g.shape, g.ptr(), g.numel());
    });
  }
  return out;
}

Tensor mul_scalar(Tape* t, const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  double* po = out.ptr();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * c;
  if (tracked(t, a)) {
    int na = a.node;
    out.node = t->push(out.shape, [na, c](Tape& tp, const Tensor& g) {
      double* p = tp.grad_slot(na, g.shape).ptr();
      const double* pg = g.ptr();
      for (std::int64_t i = 0; i < g.numel(); ++i) p[i] += c * pg[i];
    });
  }
  return out;
}

Tensor pow_scalar(Tape* t, const Tensor& a, double p) {
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  double* po = out.ptr();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    require(pa[i] >= 0.0, ErrorKind::kDomain, "pow_scalar: negative base");
    po[i] = std::pow(pa[i], p);
  }
  if (tracked(t, a)) {
    int na = a.node;
    Tensor sa = a;
    out.node = t->push(out.shape, [na, sa, p](Tape& tp, const Tensor& g) {
      double* gp = tp.grad_slot(na, sa.shape).ptr();
      const double* pg = g.ptr();
      const double* pa2 = sa.ptr();
      for (std::int64_t i = 0; i < g.numel(); ++i) {
        double d;
        if (pa2[i] == 0.0) {
          d = (p == 1.0) ? 1.0 : 0.0;  // subgradient 0 at the kink
        } else {
          d = p * std::pow(pa2[i], p - 1.0);
        }
        gp[i] += pg[i] * d;
      }
    });
  }
  return out;
}

Tensor exp(Tape* t, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  double* po = out.ptr();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = std::exp(pa[i]);
  if (tracked(t, a)) {
    int na = a.node;
    Tensor so = out;
    out.node = t->push(out.shape, [na, so](Tape& tp, const Tensor& g) {
      double* p = tp.grad_slot(na, so.shape).ptr();
      const double* pg = g.ptr();
      const double* pe = so.ptr();
      for (std::int64_t i = 0; i < g.numel(); ++i) p[i] += pg[i] * pe[i];
    });
  }
  return out;
}

Tensor log(Tape* t, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  double* po = out.ptr();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    require(pa[i] > 0.0, ErrorKind::kDomain, "log: non-positive input");
    po[i] = std::log(pa[i]);
  }
  if (tracked(t, a)) {
    int na = a.node;
    Tensor sa = a;
    out.node = t->push(out.shape, [na, sa](Tape& tp, const Tensor& g) {
      double* p = tp.grad_slot(na, sa.shape).ptr();
      const double* pg = g.ptr();
      const double* px = sa.ptr();
      for (std::int64_t i = 0; i < g.numel(); ++i) p[i] += pg[i] / px[i];
    });
  }
  return out;
}

Tensor sqrt(Tape* t, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  double* po = out.ptr();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    require(pa[i] >= 0.0, ErrorKind::kDomain, "sqrt: negative input");
    po[i] = std::sqrt(pa[i]);
  }
  if (tracked(t, a)) {
    int na = a.node;
    Tensor so = out;
    out.node = t->push(out.shape, [na, so](Tape& tp, const Tensor& g) {
      double* p = tp.grad_slot(na, so.shape).ptr();
      const double* pg = g.ptr();
      const double* ps = so.ptr();
      for (std::int64_t i = 0; i < g.numel(); ++i)
        p[i] += ps[i] > 0.0 ? pg[i] * 0.5 / ps[i] : 0.0;
    });
  }
  return out;
}

Tensor abs(Tape* t, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  double* po = out.ptr();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = std::abs(pa[i]);
  if (tracked(t, a)) {
    int na = a.node;
    Tensor sa = a;
    out.node = t->push(out.shape, [na, sa](Tape& tp, const Tensor& g) {
      double* p = tp.grad_slot(na, sa.shape).ptr();
      const double* pg = g.ptr();
      const double* px = sa.ptr();
      for (std::int64_t i = 0; i < g.numel(); ++i) {
        double s = px[i] > 0.0 ? 1.0 : (px[i] < 0.0 ? -1.0 : 0.0);
        p[i] += pg[i] * s;
      }
    });
  }
  return out;
}

Tensor sin(Tape* t, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  double* po = out.ptr();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = std::sin(pa[i]);
  if (tracked(t, a)) {
    int na = a.node;
    Tensor sa = a;
    out.node = t->push(out.shape, [na, sa](Tape& tp, const Tensor& g) {
      double* p = tp.grad_slot(na, sa.shape).ptr();
      const double* pg = g.ptr();
      const double* px = sa.ptr();
      for (std::int64_t i = 0; i < g.numel(); ++i)
        p[i] += pg[i] * std::cos(px[i]);
    });
  }
  return out;
}

Tensor cos(Tape* t, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  double* po = out.ptr();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = std::cos(pa[i]);
  if (tracked(t, a)) {
    int na = a.node;
    Tensor sa = a;
    out.node = t->push(out.shape, [na, sa](Tape& tp, const Tensor& g) {
      double* p = tp.grad_slot(na, sa.shape).ptr();
      const double* pg = g.ptr();
      const double* px = sa.ptr();
      for (std::int64_t i = 0; i < g.numel(); ++i)
        p[i] -= pg[i] * std::sin(px[i]);
    });
  }
  return out;
}

Tensor atan2(Tape* t, const Tensor& y, const Tensor& x) {
  check_same_shape(y, x, "atan2");
  Tensor out = Tensor::zeros(y.shape);
  const double* py = y.ptr();
  const double* px = x.ptr();
  double* po = out.ptr();
  const std::int64_t n = y.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    double p = std::atan2(py[i], px[i]);
    if (p <= -kPi) p += 2.0 * kPi;  // keep range (-pi, pi]
    po[i] = p;
  }
  if (tracked(t, y, x)) {
    int ny = y.node, nx = x.node;
    Tensor sy = y, sx = x;
    out.node = t->push(out.shape, [ny, nx, sy, sx](Tape& tp, const Tensor& g) {
      const double* pg = g.ptr();
      const double* py2 = sy.ptr();
      const double* px2 = sx.ptr();
      const std::int64_t m = g.numel();
      if (ny >= 0) {
        double* p = tp.grad_slot(ny, sy.shape).ptr();
        for (std::int64_t i = 0; i < m; ++i) {
          double r2 = px2[i] * px2[i] + py2[i] * py2[i];
          p[i] += r2 > 0.0 ? pg[i] * px2[i] / r2 : 0.0;
        }
      }
      if (nx >= 0) {
        double* p = tp.grad_slot(nx, sx.shape).ptr();
        for (std::int64_t i = 0; i < m; ++i) {
          double r2 = px2[i] * px2[i] + py2[i] * py2[i];
          p[i] -= r2 > 0.0 ? pg[i] * py2[i] / r2 : 0.0;
        }
      }
    });
  }
  return out;
}

Tensor sigmoid(Tape* t, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  double* po = out.ptr();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = sigmoid_s(pa[i]);
  if (tracked(t, a)) {
    int na = a.node;
    Tensor so = out;
    out.node = t->push(out.shape, [na, so](Tape& tp, const Tensor& g) {
      double* p = tp.grad_slot(na, so.shape).ptr();
      const double* pg = g.ptr();
      const double* ps = so.ptr();
      for (std::int64_t i = 0; i < g.numel(); ++i)
        p[i] += pg[i] * ps[i] * (1.0 - ps[i]);
    });
  }
  return out;
}

Tensor silu(Tape* t, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  double* po = out.ptr();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * sigmoid_s(pa[i]);
  if (tracked(t, a)) {
    int na = a.node;
    Tensor sa = a;
    out.node = t->push(out.shape, [na, sa](Tape& tp, const Tensor& g) {
      double* p = tp.grad_slot(na, sa.shape).ptr();
      const double* pg = g.ptr();
      const double* px = sa.ptr();
      for (std::int64_t i = 0; i < g.numel(); ++i) {
        double s = sigmoid_s(px[i]);
        p[i] += pg[i] * s * (1.0 + px[i] * (1.0 - s));
      }
    });
  }
  return out;
}

Tensor softplus(Tape* t, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  double* po = out.ptr();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = softplus_s(pa[i]);
  if (tracked(t, a)) {
    int na = a.node;
    Tensor sa = a;
    out.node = t->push(out.shape, [na, sa](Tape& tp, const Tensor& g) {
      double* p = tp.grad_slot(na, sa.shape).ptr();
      const double* pg = g.ptr();
      const double* px = sa.ptr();
      for (std::int64_t i = 0; i < g.numel(); ++i)
        p[i] += pg[i] * sigmoid_s(px[i]);
    });
  }
  return out;
}

Tensor round_detach(Tape* t, const Tensor& a) {
  (void)t;  // piecewise constant: no gradient recorded
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  double* po = out.ptr();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = std::nearbyint(pa[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Tensor sum_all(Tape* t, const Tensor& a) {
  double s = 0.0;
  const double* pa = a.ptr();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) s += pa[i];
  Tensor out = Tensor::scalar(s);
  if (tracked(t, a)) {
    int na = a.node;
    std::vector<int> sh = a.shape;
    out.node = t->push(out.shape, [na, sh, n](Tape& tp, const Tensor& g) {
      double* p = tp.grad_slot(na, sh).ptr();
      const double g0 = g.ptr()[0];
      for (std::int64_t i = 0; i < n; ++i) p[i] += g0;
    });
  }
  return out;
}

Tensor mean_all(Tape* t, const Tensor& a) {
  require(a.numel() > 0, ErrorKind::kEmptyInput, "mean_all: empty tensor");
  double s = 0.0;
  const double* pa = a.ptr();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) s += pa[i];
  Tensor out = Tensor::scalar(s / static_cast<double>(n));
  if (tracked(t, a)) {
    int na = a.node;
    std::vector<int> sh = a.shape;
    out.node = t->push(out.shape, [na, sh, n](Tape& tp, const Tensor& g) {
      double* p = tp.grad_slot(na, sh).ptr();
      const double g0 = g.ptr()[0] / static_cast<double>(n);
      for (std::int64_t i = 0; i < n; ++i) p[i] += g0;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(Tape* t, const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          ErrorKind::kShape,
          "matmul: incompatible shapes " + shape_str(a.shape) + " x " +
              shape_str(b.shape));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  gemm(false, false, m, n, k, a.ptr(), b.ptr(), 0.0, out.ptr());
  if (tracked(t, a, b)) {
    int na = a.node, nb = b.node;
    Tensor sa = a, sb = b;
    out.node =
        t->push(out.shape, [na, nb, sa, sb, m, k, n](Tape& tp, const Tensor& g) {
          if (na >= 0) {
            double* ga = tp.grad_slot(na, sa.shape).ptr();
            gemm(false, true, m, k, n, g.ptr(), sb.ptr(), 1.0, ga);  // gC B^T
          }
          if (nb >= 0) {
            double* gb = tp.grad_slot(nb, sb.shape).ptr();
            gemm(true, false, k, n, m, sa.ptr(), g.ptr(), 1.0, gb);  // A^T gC
          }
        });
  }
  return out;
}

Tensor add_rowvec(Tape* t, const Tensor& a, const Tensor& v) {
  require(a.rank() >= 1 && v.rank() == 1 &&
              a.dim(a.rank() - 1) == v.dim(0),
          ErrorKind::kShape, "add_rowvec: last dim must match vector length");
  const std::int64_t n = a.numel();
  const int c = v.dim(0);
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  const double* pv = v.ptr();
  double* po = out.ptr();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pv[i % c];
  if (tracked(t, a, v)) {
    int na = a.node, nv = v.node;
    std::vector<int> vsh = v.shape;
    out.node = t->push(out.shape, [na, nv, vsh, c](Tape& tp, const Tensor& g) {
      tp.accum_raw(na, g.shape, g.ptr(), g.numel());
      if (nv >= 0) {
        double* p = tp.grad_slot(nv, vsh).ptr();
        const double* pg = g.ptr();
        const std::int64_t m = g.numel();
        for (std::int64_t i = 0; i < m; ++i) p[i % c] += pg[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

Tensor reshape(Tape* t, const Tensor& a, std::vector<int> shape) {
  require(Tensor::numel_of(shape) == a.numel(), ErrorKind::kShape,
          "reshape: element count mismatch");
  Tensor out;
  out.shape = shape;
  out.data = a.data;  // ops never mutate buffers, sharing is safe
  if (tracked(t, a)) {
    int na = a.node;
    std::vector<int> in_shape = a.shape;
    out.node = t->push(shape, [na, in_shape](Tape& tp, const Tensor& g) {
      tp.accum_raw(na, in_shape, g.ptr(), g.numel());
    });
  }
  return out;
}

Tensor slice_cols(Tape* t, const Tensor& a, int c0, int c1) {
  require(a.rank() == 2 && 0 <= c0 && c0 < c1 && c1 <= a.dim(1),
          ErrorKind::kShape, "slice_cols: bad range");
  const int m = a.dim(0), n = a.dim(1), w = c1 - c0;
  Tensor out = Tensor::zeros({m, w});
  const double* pa = a.ptr();
  double* po = out.ptr();
  for (int i = 0; i < m; ++i)
    std::memcpy(po + static_cast<std::int64_t>(i) * w,
                pa + static_cast<std::int64_t>(i) * n + c0,
                sizeof(double) * static_cast<std::size_t>(w));
  if (tracked(t, a)) {
    int na = a.node;
    std::vector<int> ash = a.shape;
    out.node =
        t->push(out.shape, [na, ash, m, n, w, c0](Tape& tp, const Tensor& g) {
          double* p = tp.grad_slot(na, ash).ptr();
          const double* pg = g.ptr();
          for (int i = 0; i < m; ++i) {
            double* row = p + static_cast<std::int64_t>(i) * n + c0;
            const double* grow = pg + static_cast<std::int64_t>(i) * w;
            for (int j = 0; j < w; ++j) row[j] += grow[j];
          }
        });
  }
  return out;
}

Tensor slice_rows(Tape* t, const Tensor& a, int r0, int r1) {
  require(a.rank() >= 1 && 0 <= r0 && r0 < r1 && r1 <= a.dim(0),
          ErrorKind::kShape, "slice_rows: bad range");
  const int rows = a.dim(0);
  const std::int64_t rowsz = a.numel() / rows;
  std::vector<int> osh = a.shape;
  osh[0] = r1 - r0;
  Tensor out = Tensor::zeros(osh);
  std::memcpy(out.ptr(), a.ptr() + r0 * rowsz,
              sizeof(double) * static_cast<std::size_t>((r1 - r0) * rowsz));
  if (tracked(t, a)) {
    int na = a.node;
    std::vector<int> ash = a.shape;
    out.node =
        t->push(out.shape, [na, ash, r0, rowsz](Tape& tp, const Tensor& g) {
          double* p = tp.grad_slot(na, ash).ptr() + r0 * rowsz;
          const double* pg = g.ptr();
          for (std::int64_t i = 0; i < g.numel(); ++i) p[i] += pg[i];
        });
  }
  return out;
}

Tensor concat_cols(Tape* t, const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(0) == b.dim(0),
          ErrorKind::kShape, "concat_cols: row count mismatch");
  const int m = a.dim(0), n1 = a.dim(1), n2 = b.dim(1);
  Tensor out = Tensor::zeros({m, n1 + n2});
  const double* pa = a.ptr();
  const double* pb = b.ptr();
  double* po = out.ptr();
  for (int i = 0; i < m; ++i) {
    std::memcpy(po + static_cast<std::int64_t>(i) * (n1 + n2),
                pa + static_cast<std::int64_t>(i) * n1,
                sizeof(double) * static_cast<std::size_t>(n1));
    std::memcpy(po + static_cast<std::int64_t>(i) * (n1 + n2) + n1,
                pb + static_cast<std::int64_t>(i) * n2,
                sizeof(double) * static_cast<std::size_t>(n2));
  }
  if (tracked(t, a, b)) {
    int na = a.node, nb = b.node;
    std::vector<int> ash = a.shape, bsh = b.shape;
    out.node = t->push(
        out.shape, [na, nb, ash, bsh, m, n1, n2](Tape& tp, const Tensor& g) {
          const double* pg = g.ptr();
          if (na >= 0) {
            double* p = tp.grad_slot(na, ash).ptr();
            for (int i = 0; i < m; ++i)
              for (int j = 0; j < n1; ++j)
                p[static_cast<std::int64_t>(i) * n1 + j] +=
                    pg[static_cast<std::int64_t>(i) * (n1 + n2) + j];
          }
          if (nb >= 0) {
            double* p = tp.grad_slot(nb, bsh).ptr();
            for (int i = 0; i < m; ++i)
              for (int j = 0; j < n2; ++j)
                p[static_cast<std::int64_t>(i) * n2 + j] +=
                    pg[static_cast<std::int64_t>(i) * (n1 + n2) + n1 + j];
          }
        });
  }
  return out;
}

namespace {
// Copies a[b,l,c] -> out[b,L-1-l,c]; works for rank-2 [L,C] as B=1.
void reverse_copy(const Tensor& a, Tensor& out, int B, int L, std::int64_t C) {
  const double* pa = a.ptr();
  double* po = out.ptr();
  for (int b = 0; b < B; ++b) {
    for (int l = 0; l < L; ++l) {
      std::memcpy(po + (static_cast<std::int64_t>(b) * L + (L - 1 - l)) * C,
                  pa + (static_cast<std::int64_t>(b) * L + l) * C,
                  sizeof(double) * static_cast<std::size_t>(C));
    }
  }
}
}  // namespace

Tensor reverse_seq(Tape* t, const Tensor& a) {
  require(a.rank() == 2 || a.rank() == 3, ErrorKind::kShape,
          "reverse_seq: expected [L,C] or [B,L,C]");
  const int B = a.rank() == 3 ? a.dim(0) : 1;
  const int L = a.rank() == 3 ? a.dim(1) : a.dim(0);
  const std::int64_t C = a.numel() / (static_cast<std::int64_t>(B) * L);
  Tensor out = Tensor::zeros(a.shape);
  reverse_copy(a, out, B, L, C);
  if (tracked(t, a)) {
    int na = a.node;
    std::vector<int> ash = a.shape;
    out.node = t->push(out.shape, [na, ash, B, L, C](Tape& tp, const Tensor& g) {
      Tensor rg = Tensor::zeros(ash);
      reverse_copy(g, rg, B, L, C);
      tp.accum(na, rg);
    });
  }
  return out;
}

namespace {
void transpose01_copy(const double* src, double* dst, int A, int B,
                      std::int64_t R) {
  for (int i = 0; i < A; ++i)
    for (int j = 0; j < B; ++j)
      std::memcpy(dst + (static_cast<std::int64_t>(j) * A + i) * R,
                  src + (static_cast<std::int64_t>(i) * B + j) * R,
                  sizeof(double) * static_cast<std::size_t>(R));
}
}  // namespace

Tensor transpose01(Tape* t, const Tensor& a) {
  require(a.rank() >= 2, ErrorKind::kShape, "transpose01: rank must be >= 2");
  const int A = a.dim(0), B = a.dim(1);
  const std::int64_t R = a.numel() / (static_cast<std::int64_t>(A) * B);
  std::vector<int> osh = a.shape;
  std::swap(osh[0], osh[1]);
  Tensor out = Tensor::zeros(osh);
  transpose01_copy(a.ptr(), out.ptr(), A, B, R);
  if (tracked(t, a)) {
    int na = a.node;
    std::vector<int> ash = a.shape;
    out.node = t->push(out.shape, [na, ash, A, B, R](Tape& tp, const Tensor& g) {
      Tensor tg = Tensor::zeros(ash);
      transpose01_copy(g.ptr(), tg.ptr(), B, A, R);
      tp.accum(na, tg);
    });
  }
  return out;
}

Tensor stack2(Tape* t, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "stack2");
  std::vector<int> osh;
  osh.push_back(2);
  for (int d : a.shape) osh.push_back(d);
  Tensor out = Tensor::zeros(osh);
  const std::int64_t n = a.numel();
  std::memcpy(out.ptr(), a.ptr(), sizeof(double) * static_cast<std::size_t>(n));
  std::memcpy(out.ptr() + n, b.ptr(),
              sizeof(double) * static_cast<std::size_t>(n));
  if (tracked(t, a, b)) {
    int na = a.node, nb = b.node;
    std::vector<int> ash = a.shape;
    out.node = t->push(out.shape, [na, nb, ash, n](Tape& tp, const Tensor& g) {
      tp.accum_raw(na, ash, g.ptr(), n);
      tp.accum_raw(nb, ash, g.ptr() + n, n);
    });
  }
  return out;
}

Tensor plane(Tape* t, const Tensor& a, int i) {
  require(a.rank() >= 2 && 0 <= i && i < a.dim(0), ErrorKind::kShape,
          "plane: index out of range");
  std::vector<int> osh(a.shape.begin() + 1, a.shape.end());
  const std::int64_t n = Tensor::numel_of(osh);
  Tensor out = Tensor::zeros(osh);
  std::memcpy(out.ptr(), a.ptr() + static_cast<std::int64_t>(i) * n,
              sizeof(double) * static_cast<std::size_t>(n));
  if (tracked(t, a)) {
    int na = a.node;
    std::vector<int> ash = a.shape;
    out.node = t->push(out.shape, [na, ash, i, n](Tape& tp, const Tensor& g) {
      double* p = tp.grad_slot(na, ash).ptr() + static_cast<std::int64_t>(i) * n;
      const double* pg = g.ptr();
      for (std::int64_t j = 0; j < n; ++j) p[j] += pg[j];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Broadcast helpers
// ---------------------------------------------------------------------------

Tensor tile_mid(Tape* t, const Tensor& a, int f) {
  require(a.rank() == 2 && f >= 1, ErrorKind::kShape,
          "tile_mid: expected [T,C] input");
  const int T = a.dim(0), C = a.dim(1);
  Tensor out = Tensor::zeros({T, f, C});
  const double* pa = a.ptr();
  double* po = out.ptr();
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < f; ++j)
      std::memcpy(po + (static_cast<std::int64_t>(i) * f + j) * C,
                  pa + static_cast<std::int64_t>(i) * C,
                  sizeof(double) * static_cast<std::size_t>(C));
  if (tracked(t, a)) {
    int na = a.node;
    std::vector<int> ash = a.shape;
    out.node =
        t->push(out.shape, [na, ash, T, f, C](Tape& tp, const Tensor& g) {
          double* p = tp.grad_slot(na, ash).ptr();
          const double* pg = g.ptr();
          for (int i = 0; i < T; ++i)
            for (int j = 0; j < f; ++j)
              for (int c = 0; c < C; ++c)
                p[static_cast<std::int64_t>(i) * C + c] +=
                    pg[(static_cast<std::int64_t>(i) * f + j) * C + c];
        });
  }
  return out;
}

Tensor scale_freq(Tape* t, const Tensor& x, const Tensor& s) {
  require(x.rank() == 3 && s.rank() == 1 && x.dim(1) == s.dim(0),
          ErrorKind::kShape, "scale_freq: x[T,F,C], s[F] required");
  const int T = x.dim(0), F = x.dim(1), C = x.dim(2);
  Tensor out = Tensor::zeros(x.shape);
  const double* px = x.ptr();
  const double* ps = s.ptr();
  double* po = out.ptr();
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < F; ++j) {
      const double sv = ps[j];
      const std::int64_t base = (static_cast<std::int64_t>(i) * F + j) * C;
      for (int c = 0; c < C; ++c) po[base + c] = px[base + c] * sv;
    }
  if (tracked(t, x, s)) {
    int nx = x.node, ns = s.node;
    Tensor sx = x, ss = s;
    out.node =
        t->push(out.shape, [nx, ns, sx, ss, T, F, C](Tape& tp, const Tensor& g) {
          const double* pg = g.ptr();
          if (nx >= 0) {
            double* p = tp.grad_slot(nx, sx.shape).ptr();
            const double* ps2 = ss.ptr();
            for (int i = 0; i < T; ++i)
              for (int j = 0; j < F; ++j) {
                const double sv = ps2[j];
                const std::int64_t base =
                    (static_cast<std::int64_t>(i) * F + j) * C;
                for (int c = 0; c < C; ++c) p[base + c] += pg[base + c] * sv;
              }
          }
          if (ns >= 0) {
            double* p = tp.grad_slot(ns, ss.shape).ptr();
            const double* px2 = sx.ptr();
            for (int i = 0; i < T; ++i)
              for (int j = 0; j < F; ++j) {
                const std::int64_t base =
                    (static_cast<std::int64_t>(i) * F + j) * C;
                double acc = 0.0;
                for (int c = 0; c < C; ++c) acc += pg[base + c] * px2[base + c];
                p[j] += acc;
              }
          }
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

Tensor conv1d_depthwise(Tape* t, const Tensor& x, const Tensor& w) {
  require(x.rank() == 3 && w.rank() == 2 && x.dim(2) == w.dim(0),
          ErrorKind::kShape, "conv1d_depthwise: x[B,L,C], w[C,K] required");
  const int B = x.dim(0), L = x.dim(1), C = x.dim(2), K = w.dim(1);
  Tensor out = Tensor::zeros(x.shape);
  const double* px = x.ptr();
  const double* pw = w.ptr();
  double* po = out.ptr();
  for (int b = 0; b < B; ++b) {
    const double* xb = px + static_cast<std::int64_t>(b) * L * C;
    double* ob = po + static_cast<std::int64_t>(b) * L * C;
    for (int l = 0; l < L; ++l) {
      double* orow = ob + static_cast<std::int64_t>(l) * C;
      for (int k = 0; k < K; ++k) {
        const int src = l - (K - 1) + k;
        if (src < 0) continue;
        const double* xrow = xb + static_cast<std::int64_t>(src) * C;
        for (int c = 0; c < C; ++c) orow[c] += pw[c * K + k] * xrow[c];
      }
    }
  }
  if (tracked(t, x, w)) {
    int nx = x.node, nw = w.node;
    Tensor sx = x, sw = w;
    out.node = t->push(
        out.shape, [nx, nw, sx, sw, B, L, C, K](Tape& tp, const Tensor& g) {
          const double* pg = g.ptr();
          const double* px2 = sx.ptr();
          const double* pw2 = sw.ptr();
          double* gx = nx >= 0 ? tp.grad_slot(nx, sx.shape).ptr() : nullptr;
          double* gw = nw >= 0 ? tp.grad_slot(nw, sw.shape).ptr() : nullptr;
          for (int b = 0; b < B; ++b) {
            const std::int64_t off = static_cast<std::int64_t>(b) * L * C;
            for (int l = 0; l < L; ++l) {
              const double* grow = pg + off + static_cast<std::int64_t>(l) * C;
              for (int k = 0; k < K; ++k) {
                const int src = l - (K - 1) + k;
                if (src < 0) continue;
                const std::int64_t xoff = off + static_cast<std::int64_t>(src) * C;
                if (gx) {
                  for (int c = 0; c < C; ++c)
                    gx[xoff + c] += grow[c] * pw2[c * K + k];
                }
                if (gw) {
                  for (int c = 0; c < C; ++c)
                    gw[c * K + k] += grow[c] * px2[xoff + c];
                }
              }
            }
          }
        });
  }
  return out;
}

Tensor conv1d_same(Tape* t, const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.rank() == 2 && w.rank() == 3 && b.rank() == 1, ErrorKind::kShape,
          "conv1d_same: x[L,Cin], w[Cout,Cin,K], b[Cout] required");
  const int L = x.dim(0), Cin = x.dim(1);
  const int Cout = w.dim(0), K = w.dim(2);
  require(w.dim(1) == Cin && b.dim(0) == Cout, ErrorKind::kShape,
          "conv1d_same: channel mismatch");
  require(K % 2 == 1, ErrorKind::kConfig, "conv1d_same: kernel must be odd");
  const int h = K / 2;
  Tensor out = Tensor::zeros({L, Cout});
  const double* px = x.ptr();
  const double* pw = w.ptr();
  const double* pb = b.ptr();
  double* po = out.ptr();
  for (int l = 0; l < L; ++l) {
    double* orow = po + static_cast<std::int64_t>(l) * Cout;
    for (int o = 0; o < Cout; ++o) {
      double acc = pb[o];
      const double* wk = pw + static_cast<std::int64_t>(o) * Cin * K;
      for (int k = 0; k < K; ++k) {
        const int src = l + k - h;
        if (src < 0 || src >= L) continue;
        const double* xrow = px + static_cast<std::int64_t>(src) * Cin;
        for (int c = 0; c < Cin; ++c) acc += wk[c * K + k] * xrow[c];
      }
      orow[o] = acc;
    }
  }
  if (tracked3(t, x, w, b)) {
    int nx = x.node, nw = w.node, nb = b.node;
    Tensor sx = x, sw = w, sb = b;
    out.node = t->push(
        out.shape,
        [nx, nw, nb, sx, sw, sb, L, Cin, Cout, K, h](Tape& tp, const Tensor& g) {
          const double* pg = g.ptr();
          const double* px2 = sx.ptr();
          const double* pw2 = sw.ptr();
          double* gx = nx >= 0 ? tp.grad_slot(nx, sx.shape).ptr() : nullptr;
          double* gw = nw >= 0 ? tp.grad_slot(nw, sw.shape).ptr() : nullptr;
          double* gb = nb >= 0 ? tp.grad_slot(nb, sb.shape).ptr() : nullptr;
          for (int l = 0; l < L; ++l) {
            const double* grow = pg + static_cast<std::int64_t>(l) * Cout;
            for (int o = 0; o < Cout; ++o) {
              const double gv = grow[o];
              if (gb) gb[o] += gv;
              const double* wk = pw2 + static_cast<std::int64_t>(o) * Cin * K;
              double* gwk =
                  gw ? gw + static_cast<std::int64_t>(o) * Cin * K : nullptr;
              for (int k = 0; k < K; ++k) {
                const int src = l + k - h;
                if (src < 0 || src >= L) continue;
                const std::int64_t xoff = static_cast<std::int64_t>(src) * Cin;
                if (gx)
                  for (int c = 0; c < Cin; ++c)
                    gx[xoff + c] += gv * wk[c * K + k];
                if (gwk)
                  for (int c = 0; c < Cin; ++c)
                    gwk[c * K + k] += gv * px2[xoff + c];
              }
            }
          }
        });
  }
  return out;
}

namespace {

// im2col for conv2d: x[T,F,Cin] -> col[T*F, Cin*kT*kF], zero padding,
// dilation dil_f along the frequency axis.
void im2col(const double* x, int T, int F, int Cin, int kT, int kF, int dil_f,
            double* col) {
  const int hT = kT / 2, hF = kF / 2;
  const std::int64_t K = static_cast<std::int64_t>(Cin) * kT * kF;
  for (int ti = 0; ti < T; ++ti) {
    for (int fi = 0; fi < F; ++fi) {
      double* crow = col + (static_cast<std::int64_t>(ti) * F + fi) * K;
      std::int64_t idx = 0;
      for (int c = 0; c < Cin; ++c) {
        for (int i = 0; i < kT; ++i) {
          const int st = ti + i - hT;
          for (int j = 0; j < kF; ++j, ++idx) {
            const int sf = fi + (j - hF) * dil_f;
            crow[idx] = (st < 0 || st >= T || sf < 0 || sf >= F)
                            ? 0.0
                            : x[(static_cast<std::int64_t>(st) * F + sf) * Cin + c];
          }
        }
      }
    }
  }
}

void col2im_accum(const double* col, int T, int F, int Cin, int kT, int kF,
                  int dil_f, double* gx) {
  const int hT = kT / 2, hF = kF / 2;
  const std::int64_t K = static_cast<std::int64_t>(Cin) * kT * kF;
  for (int ti = 0; ti < T; ++ti) {
    for (int fi = 0; fi < F; ++fi) {
      const double* crow = col + (static_cast<std::int64_t>(ti) * F + fi) * K;
      std::int64_t idx = 0;
      for (int c = 0; c < Cin; ++c) {
        for (int i = 0; i < kT; ++i) {
          const int st = ti + i - hT;
          for (int j = 0; j < kF; ++j, ++idx) {
            const int sf = fi + (j - hF) * dil_f;
            if (st < 0 || st >= T || sf < 0 || sf >= F) continue;
            gx[(static_cast<std::int64_t>(st) * F + sf) * Cin + c] += crow[idx];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(Tape* t, const Tensor& x, const Tensor& w, const Tensor& b,
              int dil_f) {
  require(x.rank() == 3 && w.rank() == 4 && b.rank() == 1, ErrorKind::kShape,
          "conv2d: x[T,F,Cin], w[Cout,Cin,kT,kF], b[Cout] required");
  const int T = x.dim(0), F = x.dim(1), Cin = x.dim(2);
  const int Cout = w.dim(0), kT = w.dim(2), kF = w.dim(3);
  require(w.dim(1) == Cin && b.dim(0) == Cout, ErrorKind::kShape,
          "conv2d: channel mismatch");
  require(kT % 2 == 1 && kF % 2 == 1 && dil_f >= 1, ErrorKind::kConfig,
          "conv2d: odd kernels and dil_f >= 1 required");
  const std::int64_t G = static_cast<std::int64_t>(T) * F;
  const std::int64_t K = static_cast<std::int64_t>(Cin) * kT * kF;
  std::vector<double> col(static_cast<std::size_t>(G * K));
  im2col(x.ptr(), T, F, Cin, kT, kF, dil_f, col.data());
  Tensor out = Tensor::zeros({T, F, Cout});
  // out = col * W^T (+bias)
  gemm(false, true, G, Cout, K, col.data(), w.ptr(), 0.0, out.ptr());
  {
    double* po = out.ptr();
    const double* pb = b.ptr();
    for (std::int64_t gidx = 0; gidx < G; ++gidx)
      for (int o = 0; o < Cout; ++o) po[gidx * Cout + o] += pb[o];
  }
  if (tracked3(t, x, w, b)) {
    int nx = x.node, nw = w.node, nb = b.node;
    Tensor sx = x, sw = w, sb = b;
    out.node = t->push(
        out.shape, [nx, nw, nb, sx, sw, sb, T, F, Cin, Cout, kT, kF, dil_f, G,
                    K](Tape& tp, const Tensor& g) {
          if (nb >= 0) {
            double* gb = tp.grad_slot(nb, sb.shape).ptr();
            const double* pg = g.ptr();
            for (std::int64_t gi = 0; gi < G; ++gi)
              for (int o = 0; o < Cout; ++o) gb[o] += pg[gi * Cout + o];
          }
          if (nw >= 0) {
            std::vector<double> col(static_cast<std::size_t>(G * K));
            im2col(sx.ptr(), T, F, Cin, kT, kF, dil_f, col.data());
            double* gw = tp.grad_slot(nw, sw.shape).ptr();
            gemm(true, false, Cout, K, G, g.ptr(), col.data(), 1.0,
                 gw);  // g^T col
          }
          if (nx >= 0) {
            std::vector<double> gcol(static_cast<std::size_t>(G * K));
            gemm(false, false, G, K, Cout, g.ptr(), sw.ptr(), 0.0,
                 gcol.data());  // g W
            double* gx = tp.grad_slot(nx, sx.shape).ptr();
            col2im_accum(gcol.data(), T, F, Cin, kT, kF, dil_f, gx);
          }
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// LayerNorm
// ---------------------------------------------------------------------------

Tensor layer_norm(Tape* t, const Tensor& x, const Tensor& gamma,
                  const Tensor& beta, double eps) {
  require(x.rank() >= 1 && gamma.rank() == 1 && beta.rank() == 1,
          ErrorKind::kShape, "layer_norm: bad ranks");
  const int C = x.dim(x.rank() - 1);
  require(gamma.dim(0) == C && beta.dim(0) == C, ErrorKind::kShape,
          "layer_norm: parameter length must equal trailing dim");
  const std::int64_t rows = x.numel() / C;
  Tensor out = Tensor::zeros(x.shape);
  Tensor xhat = Tensor::zeros(x.shape);
  std::vector<double> inv(static_cast<std::size_t>(rows));
  const double* px = x.ptr();
  const double* pgm = gamma.ptr();
  const double* pbt = beta.ptr();
  double* po = out.ptr();
  double* ph = xhat.ptr();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* row = px + r * C;
    double mu = 0.0;
    for (int c = 0; c < C; ++c) mu += row[c];
    mu /= C;
    double var = 0.0;
    for (int c = 0; c < C; ++c) {
      const double d = row[c] - mu;
      var += d * d;
    }
    var /= C;
    const double is = 1.0 / std::sqrt(var + eps);
    inv[static_cast<std::size_t>(r)] = is;
    double* hrow = ph + r * C;
    double* orow = po + r * C;
    for (int c = 0; c < C; ++c) {
      hrow[c] = (row[c] - mu) * is;
      orow[c] = pgm[c] * hrow[c] + pbt[c];
    }
  }
  if (tracked3(t, x, gamma, beta)) {
    int nx = x.node, ng = gamma.node, nb = beta.node;
    Tensor sg = gamma, sb = beta, sh = xhat;
    auto sinv = std::make_shared<std::vector<double>>(std::move(inv));
    std::vector<int> xsh = x.shape;
    out.node = t->push(
        out.shape,
        [nx, ng, nb, sg, sb, sh, sinv, xsh, rows, C](Tape& tp, const Tensor& g) {
          const double* pg = g.ptr();
          const double* phat = sh.ptr();
          const double* pgm2 = sg.ptr();
          double* gx = nx >= 0 ? tp.grad_slot(nx, xsh).ptr() : nullptr;
          double* gg = ng >= 0 ? tp.grad_slot(ng, sg.shape).ptr() : nullptr;
          double* gb = nb >= 0 ? tp.grad_slot(nb, sb.shape).ptr() : nullptr;
          for (std::int64_t r = 0; r < rows; ++r) {
            const double* grow = pg + r * C;
            const double* hrow = phat + r * C;
            if (gg || gb) {
              for (int c = 0; c < C; ++c) {
                if (gg) gg[c] += grow[c] * hrow[c];
                if (gb) gb[c] += grow[c];
              }
            }
            if (gx) {
              const double is = (*sinv)[static_cast<std::size_t>(r)];
              double m1 = 0.0, m2 = 0.0;
              for (int c = 0; c < C; ++c) {
                const double gh = grow[c] * pgm2[c];
                m1 += gh;
                m2 += gh * hrow[c];
              }
              m1 /= C;
              m2 /= C;
              double* gxrow = gx + r * C;
              for (int c = 0; c < C; ++c) {
                const double gh = grow[c] * pgm2[c];
                gxrow[c] += is * (gh - m1 - hrow[c] * m2);
              }
            }
          }
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// AdamW
// ---------------------------------------------------------------------------

void adamw_step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                AdamWState& state, const AdamWConfig& cfg) {
  require(params.size() == grads.size(), ErrorKind::kShape,
          "adamw_step: params/grads size mismatch");
  if (state.m.empty()) {
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const Tensor* p : params) {
      state.m.push_back(Tensor::zeros(p->shape));
      state.v.push_back(Tensor::zeros(p->shape));
    }
  }
  require(state.m.size() == params.size(), ErrorKind::kShape,
          "adamw_step: state size mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    require(p.same_shape(g), ErrorKind::kShape,
            "adamw_step: grad shape mismatch");
    double* pm = state.m[i].ptr();
    double* pv = state.v[i].ptr();
    double* pp = p.ptr();
    const double* pg = g.ptr();
    const std::int64_t n = p.numel();
    for (std::int64_t j = 0; j < n; ++j) {
      pm[j] = cfg.beta1 * pm[j] + (1.0 - cfg.beta1) * pg[j];
      pv[j] = cfg.beta2 * pv[j] + (1.0 - cfg.beta2) * pg[j] * pg[j];
      const double mhat = pm[j] / bc1;
      const double vhat = pv[j] / bc2;
      pp[j] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                         cfg.weight_decay * pp[j]);
    }
  }
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

double finite_diff(const std::function<double(const std::vector<Tensor>&)>& f,
                   std::vector<Tensor> inputs, std::size_t which,
                   std::int64_t idx, double h) {
  Tensor pert = inputs[which].clone();
  pert.requires_grad = inputs[which].requires_grad;
  inputs[which] = pert;
  double* v = &(*pert.data)[static_cast<std::size_t>(idx)];
  const double orig = *v;
  *v = orig + h;
  const double fp = f(inputs);
  *v = orig - h;
  const double fm = f(inputs);
  *v = orig;
  return (fp - fm) / (2.0 * h);
}

}  // namespace avsm::ad
