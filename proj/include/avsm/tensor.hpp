// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "avsm/common.hpp"

namespace avsm::ad {

// Dense double tensor, row-major, shared storage. Ops never mutate their
// inputs; every op allocates a fresh output buffer. `node` links the tensor
// to a tape record when gradients are being tracked (-1 = detached).
struct Tensor {
  std::vector<int> shape;
  std::shared_ptr<std::vector<double>> data;
  bool requires_grad = false;
  int node = -1;

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape) {
    Tensor t;
    t.shape = std::move(shape);
    t.data = std::make_shared<std::vector<double>>(numel_of(t.shape), 0.0);
    return t;
  }

  static Tensor full(std::vector<int> shape, double v) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.data->begin(), t.data->end(), v);
    return t;
  }

  static Tensor scalar(double v) { return full({1}, v); }

  static Tensor from(std::vector<int> shape, std::vector<double> values) {
    require(numel_of(shape) == static_cast<std::int64_t>(values.size()),
            ErrorKind::kShape, "tensor init: shape/data size mismatch");
    Tensor t;
    t.shape = std::move(shape);
    t.data = std::make_shared<std::vector<double>>(std::move(values));
    return t;
  }

  static std::int64_t numel_of(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }

  std::int64_t numel() const { return numel_of(shape); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  double* ptr() { return data->data(); }
  const double* ptr() const { return data->data(); }

  double value() const {
    require(numel() == 1, ErrorKind::kContract, "value() on non-scalar tensor");
    return (*data)[0];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : *data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Tensor detached() const {
    Tensor t = *this;
    t.node = -1;
    t.requires_grad = false;
    return t;
  }

  // Deep copy (fresh buffer).
  Tensor clone() const {
    Tensor t;
    t.shape = shape;
    t.data = std::make_shared<std::vector<double>>(*data);
    return t;
  }
};

std::string shape_str(const std::vector<int>& s);

}  // namespace avsm::ad
