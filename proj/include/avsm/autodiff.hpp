// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "avsm/tensor.hpp"

// Reverse-mode autodiff over dense tensors. Define-by-run: a Tape is built
// per training step and discarded. Ops are free functions taking `Tape*`;
// passing nullptr runs the pure forward computation with no recording.
// A Tape is single-owner; independent tapes may run on separate threads.
namespace avsm::ad {

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a leaf. Assigns a node id iff t.requires_grad.
  int watch(Tensor& t);

  // Reverse sweep from a scalar loss. Deterministic: fixed reverse
  // topological order, fixed accumulation order.
  void backward(const Tensor& loss);

  // Gradient of a watched/derived tensor after backward(). Zero tensor of
  // matching shape if no gradient reached it.
  Tensor grad(const Tensor& t) const;

  // node_id -> gradient for all leaves that received gradient.
  std::unordered_map<int, Tensor> leaf_grads() const;

  void clear();

  std::size_t size() const { return nodes_.size(); }

  // --- internal: used by op implementations ---
  // Backward fn receives the node's own output gradient and propagates it to
  // the node's inputs via accum()/grad_slot(). Null for leaves.
  using BackFn = std::function<void(Tape&, const Tensor&)>;

  struct Node {
    std::vector<int> out_shape;
    bool is_leaf = false;
    BackFn back;
  };

  int push(std::vector<int> out_shape, BackFn back);
  // Accumulate `contrib` into grads_[node] (no-op for node < 0).
  void accum(int node, const Tensor& contrib);
  void accum_raw(int node, const std::vector<int>& shape, const double* p,
                 std::int64_t n);
  // Current gradient of node (must exist during backward).
  const Tensor& grad_at(int node) const { return grads_[static_cast<std::size_t>(node)]; }
  bool has_grad(int node) const {
    return node >= 0 && static_cast<std::size_t>(node) < grads_.size() &&
           grads_[static_cast<std::size_t>(node)].data != nullptr;
  }
  Tensor& grad_slot(int node, const std::vector<int>& shape);

 private:
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

// ---- elementwise / scalar ----
Tensor add(Tape* t, const Tensor& a, const Tensor& b);
Tensor sub(Tape* t, const Tensor& a, const Tensor& b);
Tensor mul(Tape* t, const Tensor& a, const Tensor& b);
Tensor neg(Tape* t, const Tensor& a);
Tensor add_scalar(Tape* t, const Tensor& a, double c);
Tensor mul_scalar(Tape* t, const Tensor& a, double c);
Tensor pow_scalar(Tape* t, const Tensor& a, double p);  // a >= 0
Tensor exp(Tape* t, const Tensor& a);
Tensor log(Tape* t, const Tensor& a);  // a > 0
Tensor sqrt(Tape* t, const Tensor& a);
Tensor abs(Tape* t, const Tensor& a);
Tensor sin(Tape* t, const Tensor& a);
Tensor cos(Tape* t, const Tensor& a);
Tensor atan2(Tape* t, const Tensor& y, const Tensor& x);
Tensor sigmoid(Tape* t, const Tensor& a);
Tensor silu(Tape* t, const Tensor& a);
Tensor softplus(Tape* t, const Tensor& a);
// Nearest-integer rounding, zero gradient (piecewise constant).
Tensor round_detach(Tape* t, const Tensor& a);

// ---- reductions ----
Tensor sum_all(Tape* t, const Tensor& a);
Tensor mean_all(Tape* t, const Tensor& a);

// ---- linear algebra ----
Tensor matmul(Tape* t, const Tensor& a, const Tensor& b);     // [m,k]x[k,n]
Tensor add_rowvec(Tape* t, const Tensor& a, const Tensor& v); // [m,n]+[n]

// ---- shape ops ----
Tensor reshape(Tape* t, const Tensor& a, std::vector<int> shape);
Tensor slice_cols(Tape* t, const Tensor& a, int c0, int c1);   // [m,n]->[m,c1-c0]
Tensor slice_rows(Tape* t, const Tensor& a, int r0, int r1);   // leading axis
Tensor concat_cols(Tape* t, const Tensor& a, const Tensor& b); // [m,n1]+[m,n2]
Tensor reverse_seq(Tape* t, const Tensor& a);      // [B,L,C], reverse along L
Tensor transpose01(Tape* t, const Tensor& a);      // [A,B,C...] -> [B,A,C...]
Tensor stack2(Tape* t, const Tensor& a, const Tensor& b);  // two [S] -> [2,S...]
Tensor plane(Tape* t, const Tensor& a, int i);     // [P,S...] -> [S...]

// ---- broadcast helpers ----
// [T,C] -> [T,F,C] (rows tiled across a new middle axis).
Tensor tile_mid(Tape* t, const Tensor& a, int f);
// x[T,F,C] scaled per-frequency by s[F].
Tensor scale_freq(Tape* t, const Tensor& x, const Tensor& s);

// ---- neural-net ops ----
// Depthwise causal conv: x[B,L,C], w[C,K]; left zero-pad K-1, no bias.
Tensor conv1d_depthwise(Tape* t, const Tensor& x, const Tensor& w);
// Dense 1-D conv, same padding (odd K): x[L,Cin], w[Cout,Cin,K], b[Cout].
Tensor conv1d_same(Tape* t, const Tensor& x, const Tensor& w, const Tensor& b);
// Dense 2-D conv, same padding (odd kernels), dilation along the second
// spatial axis: x[T,F,Cin], w[Cout,Cin,kT,kF], b[Cout].
Tensor conv2d(Tape* t, const Tensor& x, const Tensor& w, const Tensor& b,
              int dil_f);
// LayerNorm over the trailing axis with affine parameters.
Tensor layer_norm(Tape* t, const Tensor& x, const Tensor& gamma,
                  const Tensor& beta, double eps = 1e-5);

// ---- optimizer ----
struct AdamWConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

struct AdamWState {
  std::int64_t step = 0;
  std::vector<Tensor> m, v;  // parallel to the parameter list
};

// Decoupled weight decay update with bias correction. `params` and `grads`
// are parallel; state is initialized on first use.
void adamw_step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                AdamWState& state, const AdamWConfig& cfg);

// ---- testing utilities ----
// Central-difference gradient of f w.r.t. inputs[which] at position idx.
double finite_diff(const std::function<double(const std::vector<Tensor>&)>& f,
                   std::vector<Tensor> inputs, std::size_t which,
                   std::int64_t idx, double h = 1e-5);

}  // namespace avsm::ad
