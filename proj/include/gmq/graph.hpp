#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gmq/rng.hpp"
#include "gmq/tensor.hpp"

namespace gmq {

// A named trainable tensor. Graphs copy `value` when the parameter is bound
// and accumulate into `grad` during backward().
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad = Tensor(value.shape()); }
};

using NodeId = std::size_t;

enum class Op : std::uint8_t {
  Constant,
  Variable,
  Param,
  MatMul,
  AddRow,
  Transpose,
  Sigmoid,
  Relu,
  Softmax,
  Add,
  Sub,
  Mul,
  Div,
  AddScalar,
  MulScalar,
  PowScalar,
  Exp,
  Log,
  Sqrt,
  Abs,
  Sum,
  Mean,
  Max,
  Median,
  Concat,
  Dropout,
  FrobeniusNorm,
  QuadForm,
  TriSolve,
  CholFactor,
  GaussianLogPdf,
  Reshape,
};

std::string_view op_name(Op op) noexcept;

// Reduction axis: 0 or 1 for rank-2 inputs, 0 for rank-1 inputs, or kAll.
inline constexpr int kAll = -1;

// Reverse-mode tape over dense tensors.
//
// Nodes are evaluated eagerly as they are added, so node ids are already in
// topological order. forward() re-evaluates the whole tape from the current
// leaf values (dropout masks are kept), which is what finite-difference
// checks use after perturbing a leaf. backward() sweeps the tape in reverse
// and adds parameter gradients into the bound Parameter objects.
//
// A Graph is single-threaded. NaN/Inf checks run after every op unless
// disabled with set_check_finite(false).
class Graph {
 public:
  // `training` enables dropout; `rng` supplies dropout masks and must
  // outlive graph construction when training is true.
  explicit Graph(bool training = false, Rng* rng = nullptr) : training_(training), rng_(rng) {}

  bool training() const noexcept { return training_; }
  static void set_check_finite(bool on) noexcept;
  static bool check_finite() noexcept;

  // Leaves.
  NodeId constant(Tensor value);
  NodeId variable(Tensor value);  // differentiable leaf not tied to a Parameter
  NodeId param(Parameter& p);

  // Linear algebra.
  NodeId matmul(NodeId a, NodeId b);       // (m,n)x(n,k)
  NodeId add_row(NodeId x, NodeId bias);   // (m,n) + (n) broadcast over rows
  NodeId affine(NodeId x, NodeId w, NodeId bias) { return add_row(matmul(x, w), bias); }
  NodeId transpose(NodeId a);
  NodeId reshape(NodeId a, Shape shape);  // same element count, row-major
  NodeId frobenius_norm(NodeId a);
  // Batched u_i^T M u_i over rows of U (m,d) with M (d,d); result (m).
  NodeId quad_form(NodeId u, NodeId m);
  // X = L^{-1} B for lower-triangular L (d,d) and B (d,k).
  NodeId tri_solve(NodeId lower, NodeId b);
  // (K,d,d) unconstrained -> lower-triangular factors with exp() on the
  // diagonal, so every factor has strictly positive diagonal.
  NodeId chol_factor(NodeId raw);
  // Z (m,d), means (K,d), factors (K,d,d) -> log N(z_i | mu_k, L_k L_k^T), (m,K).
  NodeId gaussian_logpdf(NodeId z, NodeId means, NodeId factors);

  // Elementwise.
  NodeId sigmoid(NodeId a);
  NodeId relu(NodeId a);
  NodeId softmax(NodeId a);  // rows of a rank-2 tensor, or the whole rank-1 tensor
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId add_scalar(NodeId a, double c);
  NodeId mul_scalar(NodeId a, double c);
  NodeId pow_scalar(NodeId a, double exponent);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId sqrt(NodeId a);
  NodeId abs(NodeId a);  // subgradient 0 at 0

  // Reductions.
  NodeId sum(NodeId a, int axis = kAll);
  NodeId mean(NodeId a, int axis = kAll);
  NodeId max(NodeId a, int axis);
  // Lower median; ties broken by lowest index. Gradient goes to the selected element.
  NodeId median(NodeId a, int axis);
  NodeId concat(const std::vector<NodeId>& parts, int axis);

  // Inverted dropout with drop probability `rate`. Identity when not training.
  NodeId dropout(NodeId a, double rate);

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  const Tensor& grad(NodeId id) const { return nodes_.at(id).grad; }
  Op op(NodeId id) const { return nodes_.at(id).op; }
  std::size_t size() const noexcept { return nodes_.size(); }
  // Ids of Param and Variable leaves, in creation order.
  std::vector<NodeId> trainable_nodes() const;

  // Replace a Constant/Variable/Param leaf value (same shape) before forward().
  void set_value(NodeId leaf, Tensor value);

  // Re-evaluate every node; returns the value of the last node.
  const Tensor& forward();
  // Gradients of scalar `root` w.r.t. every node; bound parameters
  // accumulate theirs into Parameter::grad.
  void backward(NodeId root);

 private:
  struct Node {
    Op op{};
    std::vector<NodeId> inputs;
    Tensor value;
    Tensor grad;
    int axis = kAll;
    double scalar = 0.0;
    Parameter* param = nullptr;
    std::vector<std::size_t> selected;  // max/median routing
    Tensor aux;                         // dropout mask, gaussian solves
    Shape target;                       // reshape
  };

  NodeId push(Node node);
  void evaluate(Node& node);
  void propagate(Node& node);
  const Tensor& in(const Node& node, std::size_t k) const { return nodes_[node.inputs[k]].value; }
  Tensor& in_grad(const Node& node, std::size_t k) { return nodes_[node.inputs[k]].grad; }

  std::vector<Node> nodes_;
  bool training_;
  Rng* rng_;
};

}  // namespace gmq
