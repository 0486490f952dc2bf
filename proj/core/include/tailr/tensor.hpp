#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace tailr {

// Dense row-major double tensor. Rank 0 (scalar, stored as one value),
// rank 1 and rank 2 are the only shapes the engine needs.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> v;

  Tensor() = default;

  static Tensor scalar(double x) {
    Tensor t;
    t.shape = {};
    t.v = {x};
    return t;
  }
  static Tensor zeros(std::vector<std::size_t> shape) {
    Tensor t;
    t.shape = std::move(shape);
    t.v.assign(t.count(t.shape), 0.0);
    return t;
  }
  static Tensor full(std::vector<std::size_t> shape, double x) {
    Tensor t = zeros(std::move(shape));
    for (auto& e : t.v) e = x;
    return t;
  }
  static Tensor vector(std::vector<double> values) {
    Tensor t;
    t.shape = {values.size()};
    t.v = std::move(values);
    return t;
  }
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values) {
    if (values.size() != rows * cols)
      throw std::invalid_argument("matrix: value count != rows*cols");
    Tensor t;
    t.shape = {rows, cols};
    t.v = std::move(values);
    return t;
  }

  std::size_t size() const { return v.size(); }
  bool is_scalar() const { return v.size() == 1 && shape.size() <= 1; }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const {
    return shape.size() < 2 ? (shape.empty() ? 1 : shape[0]) : shape[1];
  }

  double& at(std::size_t i) { return v[i]; }
  double at(std::size_t i) const { return v[i]; }
  double& at(std::size_t i, std::size_t j) { return v[i * shape[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return v[i * shape[1] + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  static std::size_t count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }

  static std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

}  // namespace tailr
