// Copyright (c) 2026 the mixdet authors. Licensed under the Apache License 2.0.

#pragma once

#include <cassert>
#include <cstddef>
#include <utility>
#include <vector>

namespace mixdet {

/// @brief Dense row-major tensor of doubles.
///
/// Images use CHW layout (shape = {channels, height, width}). The struct is a
/// plain value type: copying copies the buffer, and the default state is an
/// empty tensor.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s)
      : shape(std::move(s)), data(count(shape), 0.0) {}

  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  std::size_t channels() const { assert(shape.size() == 3); return shape[0]; }
  std::size_t height() const { assert(shape.size() == 3); return shape[1]; }
  std::size_t width() const { assert(shape.size() == 3); return shape[2]; }

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    assert(shape.size() == 3 && c < shape[0] && y < shape[1] && x < shape[2]);
    return data[(c * shape[1] + y) * shape[2] + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    assert(shape.size() == 3 && c < shape[0] && y < shape[1] && x < shape[2]);
    return data[(c * shape[1] + y) * shape[2] + x];
  }

  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  void fill(double v) { data.assign(data.size(), v); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

}  // namespace mixdet
