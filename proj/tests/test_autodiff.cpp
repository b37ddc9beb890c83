// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avsm/autodiff.hpp"

#include <cmath>

#include "doctest.h"
#include "test_helpers.hpp"

using namespace avsm;
using namespace avsm_test;
namespace ops = avsm::ad;

TEST_CASE("softplus derivative is sigmoid; 0.5 at zero") {
  Tensor x = Tensor::from({3}, {-2.0, 0.0, 3.0});
  x.requires_grad = true;
  Tape tape;
  tape.watch(x);
  Tensor y = ops::sum_all(&tape, ops::softplus(&tape, x));
  tape.backward(y);
  Tensor g = tape.grad(x);
  for (int i = 0; i < 3; ++i) {
    const double s = 1.0 / (1.0 + std::exp(-x.ptr()[i]));
    CHECK(g.ptr()[i] == doctest::Approx(s).epsilon(1e-12));
  }
  CHECK(g.ptr()[1] == doctest::Approx(0.5));
}

TEST_CASE("backward of sum is ones; of sum of squares is 2x") {
  Rng rng(11);
  Tensor x = random_tensor({4, 5}, rng);
  {
    Tape tape;
    tape.watch(x);
    Tensor l = ops::sum_all(&tape, x);
    tape.backward(l);
    Tensor g = tape.grad(x);
    for (std::int64_t i = 0; i < g.numel(); ++i) CHECK(g.ptr()[i] == 1.0);
  }
  {
    Tape tape;
    tape.watch(x);
    Tensor l = ops::sum_all(&tape, ops::mul(&tape, x, x));
    tape.backward(l);
    Tensor g = tape.grad(x);
    for (std::int64_t i = 0; i < g.numel(); ++i)
      CHECK(g.ptr()[i] == doctest::Approx(2.0 * x.ptr()[i]).epsilon(1e-12));
  }
}

TEST_CASE("matmul gradcheck 3x4 * 4x2") {
  Rng rng(42);
  auto res = gradcheck(
      [](Tape* t, const std::vector<Tensor>& in) {
        return ops::sum_all(t, ops::matmul(t, in[0], in[1]));
      },
      {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)});
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("elementwise and shape op gradchecks") {
  Rng rng(7);
  auto weighted_sum = [](Tape* t, const Tensor& x) {
    // breaks the symmetry so reductions cannot hide transposition bugs
    Tensor w = Tensor::zeros(x.shape);
    for (std::int64_t i = 0; i < w.numel(); ++i)
      w.ptr()[i] = 0.3 + 0.1 * static_cast<double>(i % 7);
    return ops::sum_all(t, ops::mul(t, x, w));
  };

  SUBCASE("add/sub/mul/neg") {
    auto res = gradcheck(
        [&](Tape* t, const std::vector<Tensor>& in) {
          Tensor a = ops::add(t, in[0], in[1]);
          Tensor b = ops::sub(t, a, ops::neg(t, in[0]));
          return weighted_sum(t, ops::mul(t, b, in[1]));
        },
        {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)});
    CHECK(res.max_rel_err < 1e-6);
  }
  SUBCASE("exp/log/sqrt/pow") {
    Tensor x = random_tensor({12}, rng);
    for (std::int64_t i = 0; i < x.numel(); ++i)
      x.ptr()[i] = 0.5 + std::abs(x.ptr()[i]);  // positive domain
    auto res = gradcheck(
        [&](Tape* t, const std::vector<Tensor>& in) {
          Tensor a = ops::log(t, in[0]);
          Tensor b = ops::sqrt(t, in[0]);
          Tensor c = ops::exp(t, ops::mul_scalar(t, in[0], -0.5));
          Tensor d = ops::pow_scalar(t, in[0], 0.3);
          return weighted_sum(
              t, ops::add(t, ops::add(t, a, b), ops::add(t, c, d)));
        },
        {x}, 1e-6);
    CHECK(res.max_rel_err < 1e-5);
  }
  SUBCASE("sigmoid/silu/softplus/abs/sin/cos") {
    auto res = gradcheck(
        [&](Tape* t, const std::vector<Tensor>& in) {
          Tensor a = ops::sigmoid(t, in[0]);
          Tensor b = ops::silu(t, in[0]);
          Tensor c = ops::softplus(t, in[0]);
          Tensor d = ops::abs(t, in[0]);
          Tensor e = ops::sin(t, in[0]);
          Tensor f = ops::cos(t, in[0]);
          Tensor s = ops::add(t, ops::add(t, a, b), ops::add(t, c, d));
          return weighted_sum(t, ops::add(t, s, ops::add(t, e, f)));
        },
        {random_tensor({17}, rng)});
    CHECK(res.max_rel_err < 1e-6);
  }
  SUBCASE("atan2") {
    auto res = gradcheck(
        [&](Tape* t, const std::vector<Tensor>& in) {
          return weighted_sum(t, ops::atan2(t, in[0], in[1]));
        },
        {random_tensor({9}, rng), random_tensor({9}, rng)});
    CHECK(res.max_rel_err < 1e-6);
  }
  SUBCASE("slice/concat/reverse/transpose/reshape/stack/plane/tile") {
    auto res = gradcheck(
        [&](Tape* t, const std::vector<Tensor>& in) {
          Tensor a = ops::slice_cols(t, in[0], 1, 3);          // [4,2]
          Tensor b = ops::slice_rows(t, in[0], 0, 3);          // [3,4]
          Tensor c = ops::concat_cols(t, a, ops::slice_cols(t, in[0], 0, 2));
          Tensor d = ops::reverse_seq(t, ops::reshape(t, c, {2, 2, 4}));
          Tensor e = ops::transpose01(t, d);
          Tensor f = ops::stack2(t, e, e);
          Tensor g = ops::plane(t, f, 1);
          Tensor h = ops::tile_mid(t, ops::reshape(t, g, {8, 2}), 3);
          return ops::add(t, weighted_sum(t, h), weighted_sum(t, b));
        },
        {random_tensor({4, 4}, rng)});
    CHECK(res.max_rel_err < 1e-6);
  }
  SUBCASE("add_rowvec/scale_freq/layer_norm") {
    auto res = gradcheck(
        [&](Tape* t, const std::vector<Tensor>& in) {
          Tensor a = ops::add_rowvec(t, in[0], in[1]);  // [6,3]
          Tensor b = ops::layer_norm(t, a, in[2], in[3]);
          Tensor c = ops::scale_freq(t, ops::reshape(t, b, {2, 3, 3}), in[4]);
          return weighted_sum(t, c);
        },
        {random_tensor({6, 3}, rng), random_tensor({3}, rng),
         random_tensor({3}, rng, 0.5), random_tensor({3}, rng),
         random_tensor({3}, rng)});
    CHECK(res.max_rel_err < 2e-5);
  }
  SUBCASE("conv1d_depthwise causal") {
    auto res = gradcheck(
        [&](Tape* t, const std::vector<Tensor>& in) {
          return weighted_sum(t, ops::conv1d_depthwise(t, in[0], in[1]));
        },
        {random_tensor({2, 6, 3}, rng), random_tensor({3, 4}, rng)});
    CHECK(res.max_rel_err < 1e-6);
  }
  SUBCASE("conv1d_same") {
    auto res = gradcheck(
        [&](Tape* t, const std::vector<Tensor>& in) {
          return weighted_sum(t, ops::conv1d_same(t, in[0], in[1], in[2]));
        },
        {random_tensor({7, 3}, rng), random_tensor({2, 3, 3}, rng),
         random_tensor({2}, rng)});
    CHECK(res.max_rel_err < 1e-6);
  }
  SUBCASE("conv2d dilated") {
    auto res = gradcheck(
        [&](Tape* t, const std::vector<Tensor>& in) {
          return weighted_sum(t, ops::conv2d(t, in[0], in[1], in[2], 2));
        },
        {random_tensor({5, 6, 2}, rng), random_tensor({3, 2, 3, 3}, rng),
         random_tensor({3}, rng)});
    CHECK(res.max_rel_err < 1e-6);
  }
}

TEST_CASE("causal depthwise conv matches a direct loop") {
  Rng rng(3);
  Tensor x = random_tensor({1, 8, 2}, rng, 1.0, false);
  Tensor w = random_tensor({2, 3}, rng, 1.0, false);
  Tensor y = ops::conv1d_depthwise(nullptr, x, w);
  for (int l = 0; l < 8; ++l) {
    for (int c = 0; c < 2; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) {
        const int src = l - 2 + k;
        if (src >= 0) acc += w.ptr()[c * 3 + k] * x.ptr()[src * 2 + c];
      }
      CHECK(y.ptr()[l * 2 + c] == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("backward is deterministic (bit-identical reruns)") {
  Rng rng(5);
  Tensor a = random_tensor({8, 8}, rng);
  Tensor b = random_tensor({8, 8}, rng);
  Tape tape;
  tape.watch(a);
  tape.watch(b);
  Tensor l = ops::mean_all(
      &tape, ops::silu(&tape, ops::matmul(&tape, a, ops::exp(&tape, b))));
  tape.backward(l);
  Tensor g1 = tape.grad(a).clone();
  Tensor h1 = tape.grad(b).clone();
  tape.backward(l);
  Tensor g2 = tape.grad(a);
  Tensor h2 = tape.grad(b);
  for (std::int64_t i = 0; i < g1.numel(); ++i) {
    CHECK(g1.ptr()[i] == g2.ptr()[i]);
    CHECK(h1.ptr()[i] == h2.ptr()[i]);
  }
}

TEST_CASE("no gradient flows into requires_grad=false tensors") {
  Rng rng(6);
  Tensor frozen = random_tensor({4, 4}, rng, 1.0, false);
  Tensor live = random_tensor({4, 4}, rng);
  Tape tape;
  tape.watch(frozen);  // no-op: requires_grad is false
  tape.watch(live);
  CHECK(frozen.node == -1);
  Tensor l = ops::sum_all(&tape, ops::mul(&tape, frozen, live));
  tape.backward(l);
  CHECK(tape.has_grad(live.node));
  Tensor gf = tape.grad(frozen);
  for (std::int64_t i = 0; i < gf.numel(); ++i) CHECK(gf.ptr()[i] == 0.0);
}

TEST_CASE("backward rejects non-scalar and detached losses") {
  Rng rng(8);
  Tensor x = random_tensor({3}, rng);
  Tape tape;
  tape.watch(x);
  Tensor y = ops::mul_scalar(&tape, x, 2.0);
  CHECK_THROWS_AS(tape.backward(y), Error);
  Tensor detached = Tensor::scalar(1.0);
  CHECK_THROWS_AS(tape.backward(detached), Error);
}

TEST_CASE("shape errors are reported") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({3, 2});
  CHECK_THROWS_AS(ops::add(nullptr, a, b), Error);
  CHECK_THROWS_AS(ops::matmul(nullptr, a, a), Error);
  Tensor neg = Tensor::from({1}, {-1.0});
  CHECK_THROWS_AS(ops::log(nullptr, neg), Error);
  CHECK_THROWS_AS(ops::sqrt(nullptr, neg), Error);
}

TEST_CASE("adamw: zero gradient and zero weight decay leave params unchanged") {
  Tensor p = Tensor::from({3}, {1.0, -2.0, 3.0});
  std::vector<Tensor*> params{&p};
  std::vector<Tensor> grads{Tensor::zeros({3})};
  ad::AdamWState state;
  ad::AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  ad::adamw_step(params, grads, state, cfg);
  CHECK(p.ptr()[0] == 1.0);
  CHECK(p.ptr()[1] == -2.0);
  CHECK(p.ptr()[2] == 3.0);
}

TEST_CASE("adamw: first step moves opposite the gradient sign") {
  Tensor p = Tensor::from({4}, {0.5, -0.5, 2.0, -2.0});
  Tensor g = Tensor::from({4}, {0.3, -0.1, 2.5, -4.0});
  std::vector<Tensor*> params{&p};
  std::vector<Tensor> grads{g};
  ad::AdamWState state;
  ad::AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  const std::vector<double> before(p.data->begin(), p.data->end());
  ad::adamw_step(params, grads, state, cfg);
  for (int i = 0; i < 4; ++i) {
    const double delta = p.ptr()[i] - before[static_cast<std::size_t>(i)];
    CHECK(delta * g.ptr()[i] < 0.0);
  }
}

TEST_CASE("adamw converges on a quadratic bowl") {
  // f(w) = |w - w*|^2, 500 steps at lr 1e-2
  Tensor w = Tensor::from({3}, {2.0, -1.5, 0.7});
  const std::vector<double> target{-0.3, 0.8, 0.1};
  std::vector<Tensor*> params{&w};
  ad::AdamWState state;
  ad::AdamWConfig cfg;
  cfg.lr = 1e-2;
  cfg.weight_decay = 0.0;
  for (int step = 0; step < 500; ++step) {
    Tensor g = Tensor::zeros({3});
    for (int i = 0; i < 3; ++i)
      g.ptr()[i] = 2.0 * (w.ptr()[i] - target[static_cast<std::size_t>(i)]);
    std::vector<Tensor> grads{g};
    ad::adamw_step(params, grads, state, cfg);
  }
  for (int i = 0; i < 3; ++i)
    CHECK(std::abs(w.ptr()[i] - target[static_cast<std::size_t>(i)]) < 1e-3);
}
