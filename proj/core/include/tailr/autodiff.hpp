#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "tailr/tensor.hpp"

namespace tailr {

// Reverse-mode autodiff over Tensor. Graphs are built per step and
// discarded; parameters are long-lived leaf nodes whose gradients are
// zeroed at the start of every backward pass.
struct Node;
using NodeRef = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // materialized by backward()
  std::vector<NodeRef> parents;
  // accumulates this node's grad into its parents' grads
  std::function<void(Node&)> backprop;
  bool stop_gradient = false;
};

NodeRef make_leaf(Tensor value);
NodeRef make_constant(Tensor value);  // leaf flagged stop_gradient

// elementwise binary ops; shapes must match, or one operand is scalar
NodeRef add(const NodeRef& a, const NodeRef& b);
NodeRef sub(const NodeRef& a, const NodeRef& b);
NodeRef mul(const NodeRef& a, const NodeRef& b);
NodeRef div(const NodeRef& a, const NodeRef& b);

// elementwise unary ops
NodeRef neg(const NodeRef& a);
NodeRef log(const NodeRef& a);
NodeRef exp(const NodeRef& a);
NodeRef sigmoid(const NodeRef& a);
NodeRef tanh(const NodeRef& a);
NodeRef add_const(const NodeRef& a, double c);
NodeRef mul_const(const NodeRef& a, double c);
// max(a_i, c); subgradient at the tie goes to the constant branch
NodeRef max_with_const(const NodeRef& a, double c);

NodeRef matmul(const NodeRef& a, const NodeRef& b);
// A[m,n] + row vector b[n], broadcast over rows
NodeRef add_rowvec(const NodeRef& a, const NodeRef& b);

// log-softmax over the last dimension (rank 1: whole vector; rank 2: rowwise)
NodeRef softmax_log_probs(const NodeRef& logits);

// identity forward, zero gradient to parents
NodeRef stop_gradient(const NodeRef& a);

NodeRef sum(const NodeRef& a);
// rows of a matrix selected by index (embedding lookup); backward scatters
NodeRef gather_rows(const NodeRef& table, const std::vector<std::size_t>& ids);
// one entry per row: a[i, idx[i]]
NodeRef take_per_row(const NodeRef& a, const std::vector<std::size_t>& idx);
// arbitrary flat-index selection
NodeRef take_flat(const NodeRef& a, const std::vector<std::size_t>& flat_idx);

// seeds root (must be scalar) with 1 and propagates; every node in the
// graph gets a zeroed grad first, so shared subgraphs accumulate correctly
void backward(const NodeRef& root);

// max over coordinates of |AD grad - central difference| / (|cd| + 1e-12)
double finite_diff_check(const std::function<NodeRef(const NodeRef&)>& f,
                         const Tensor& point, double eps);

}  // namespace tailr
