#pragma once

#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "convit/errors.hpp"
#include "convit/rng.hpp"

namespace convit {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

namespace detail {

template <typename S>
struct Node {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // empty until a backward pass touches this node
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
};

}  // namespace detail

// Rank-N row-major tensor of 32- or 64-bit floats with an optional gradient
// buffer. Copies are shallow: handles share storage and gradient. Forward
// operations never mutate their inputs; gradients accumulate across backward
// passes until zero_grad().
template <typename S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() = default;

  Tensor(Shape shape, std::vector<S> data, bool requires_grad = false) {
    check_shape(shape);
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
      throw ShapeError("tensor: shape " + shape_str(shape) + " does not match data length " +
                       std::to_string(data.size()));
    node_ = std::make_shared<detail::Node<S>>();
    node_->shape = std::move(shape);
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), S(0), requires_grad);
  }

  static Tensor ones(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), S(1), requires_grad);
  }

  static Tensor full(Shape shape, S v, bool requires_grad = false) {
    check_shape(shape);
    std::vector<S> data(static_cast<std::size_t>(shape_numel(shape)), v);
    return Tensor(std::move(shape), std::move(data), requires_grad);
  }

  static Tensor scalar(S v) { return Tensor({1}, {v}); }

  static Tensor randn(Shape shape, SplitMix64& rng, double stddev = 1.0,
                      bool requires_grad = false) {
    check_shape(shape);
    std::vector<S> data(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : data) v = static_cast<S>(rng.normal(0.0, stddev));
    return Tensor(std::move(shape), std::move(data), requires_grad);
  }

  static Tensor uniform(Shape shape, SplitMix64& rng, double lo, double hi,
                        bool requires_grad = false) {
    check_shape(shape);
    std::vector<S> data(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : data) v = static_cast<S>(rng.uniform(lo, hi));
    return Tensor(std::move(shape), std::move(data), requires_grad);
  }

  bool valid() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return shape_numel(node_->shape); }

  std::vector<S>& value() { return node_->value; }
  const std::vector<S>& value() const { return node_->value; }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::vector<S>& grad() {
    if (!has_grad()) throw ContractError("tensor: gradient not populated");
    return node_->grad;
  }
  const std::vector<S>& grad() const {
    if (!has_grad()) throw ContractError("tensor: gradient not populated");
    return node_->grad;
  }

  void zero_grad() { node_->grad.assign(node_->value.size(), S(0)); }
  void drop_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  // Element access by multi-index; bounds-checked, intended for tests and
  // small host-side glue, not inner loops.
  S at(const std::vector<int>& idx) const { return node_->value[offset(idx)]; }
  void set(const std::vector<int>& idx, S v) { node_->value[offset(idx)] = v; }

  Tensor clone() const {
    Tensor t(node_->shape, node_->value, node_->requires_grad);
    t.node_->grad = node_->grad;
    return t;
  }

  // Shared storage node; used by the tape and op implementations.
  const std::shared_ptr<detail::Node<S>>& node() const { return node_; }

 private:
  static void check_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor: rank must be >= 1");
    for (int d : shape)
      if (d < 1) throw ShapeError("tensor: dims must be >= 1, got " + shape_str(shape));
  }

  std::size_t offset(const std::vector<int>& idx) const {
    const Shape& sh = node_->shape;
    if (idx.size() != sh.size()) throw ShapeError("tensor: index rank mismatch");
    std::size_t off = 0;
    for (std::size_t i = 0; i < sh.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= sh[i]) throw ShapeError("tensor: index out of range");
      off = off * static_cast<std::size_t>(sh[i]) + static_cast<std::size_t>(idx[i]);
    }
    return off;
  }

  std::shared_ptr<detail::Node<S>> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// A [B,H,W,C] tensor by convention; the backbone emits these and every ViT
// consumes and produces them.
template <typename S>
using FeatureMap = Tensor<S>;

}  // namespace convit
