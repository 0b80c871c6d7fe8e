#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sasg/common.hpp"

namespace sasg::nn {

using Eigen::Index;

/// A named dense parameter tensor. Shapes are fixed at construction.
template <typename Scalar>
struct Parameter {
  std::string name;
  MatrixX<Scalar> value;
};

template <typename Scalar>
using Gradients = std::vector<MatrixX<Scalar>>;

/// Ordered collection of parameters; the order defines the flat layout.
template <typename Scalar>
class ParameterSet {
 public:
  std::size_t add(std::string name, Index rows, Index cols) {
    params_.push_back({std::move(name), MatrixX<Scalar>::Zero(rows, cols)});
    return params_.size() - 1;
  }

  std::size_t size() const { return params_.size(); }
  Parameter<Scalar>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<Scalar>& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  Index total_size() const {
    Index n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  VectorX<Scalar> flatten() const {
    VectorX<Scalar> flat(total_size());
    Index offset = 0;
    for (const auto& p : params_) {
      flat.segment(offset, p.value.size()) =
          Eigen::Map<const VectorX<Scalar>>(p.value.data(), p.value.size());
      offset += p.value.size();
    }
    return flat;
  }

  void assign(const VectorX<Scalar>& flat) {
    if (flat.size() != total_size()) throw ConfigError("parameter buffer size mismatch");
    Index offset = 0;
    for (auto& p : params_) {
      Eigen::Map<VectorX<Scalar>>(p.value.data(), p.value.size()) =
          flat.segment(offset, p.value.size());
      offset += p.value.size();
    }
  }

  Gradients<Scalar> zero_gradients() const {
    Gradients<Scalar> g;
    g.reserve(params_.size());
    for (const auto& p : params_) g.push_back(MatrixX<Scalar>::Zero(p.value.rows(), p.value.cols()));
    return g;
  }

  template <typename Other>
  ParameterSet<Other> cast() const {
    ParameterSet<Other> out;
    for (const auto& p : params_) {
      auto idx = out.add(p.name, p.value.rows(), p.value.cols());
      out[idx].value = p.value.template cast<Other>();
    }
    return out;
  }

  bool all_finite() const {
    for (const auto& p : params_)
      if (!p.value.allFinite()) return false;
    return true;
  }

 private:
  std::vector<Parameter<Scalar>> params_;
};

struct Var {
  int id = -1;
};

/// Reverse-mode tape. Nodes are appended in evaluation order and replayed
/// backwards. With recording off, no backward closures are stored.
template <typename Scalar>
class Tape {
 public:
  using Mat = MatrixX<Scalar>;
  using Backward = std::function<void(Tape&, Var)>;

  explicit Tape(bool record = true) : record_(record) { nodes_.reserve(256); }

  bool recording() const { return record_; }

  Var input(Mat value) { return push(std::move(value), false, nullptr); }

  /// A free variable whose gradient is kept on the tape (used by tests).
  Var leaf(Mat value) { return push(std::move(value), record_, nullptr); }

  Var param(const ParameterSet<Scalar>& ps, std::size_t index) {
    Node n;
    n.external = &ps[index].value;
    n.requires_grad = record_;
    n.param_index = static_cast<int>(index);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var push(Mat value, bool requires_grad, Backward back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad && record_;
    if (n.requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const Mat& value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.external ? *n.external : n.value;
  }

  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Gradient accumulator for v, allocated as zeros on first use.
  Mat& grad(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.size() == 0) {
      const Mat& val = value(v);
      n.grad = Mat::Zero(val.rows(), val.cols());
    }
    return n.grad;
  }

  bool has_grad(Var v) const { return nodes_[v.id].grad.size() != 0; }

  void backward(Var root) {
    if (value(root).size() != 1) throw StageError("autograd", "backward() root must be scalar");
    backward(root, Mat::Ones(1, 1));
  }

  void backward(Var root, const Mat& seed) {
    if (!record_) throw StageError("autograd", "tape was not recording");
    grad(root) += seed;
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.back && n.grad.size() != 0) n.back(*this, Var{i});
    }
  }

  /// Adds parameter gradients into `out` (indexed like the ParameterSet).
  void accumulate(Gradients<Scalar>& out) const {
    for (const Node& n : nodes_)
      if (n.param_index >= 0 && n.grad.size() != 0) out[n.param_index] += n.grad;
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    const Mat* external = nullptr;
    Backward back;
    bool requires_grad = false;
    int param_index = -1;
  };

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace sasg::nn
