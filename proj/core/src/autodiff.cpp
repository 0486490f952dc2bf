#include "tailr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace tailr {

namespace {

void check_binary_shapes(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b) && !a.is_scalar() && !b.is_scalar())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                Tensor::shape_str(a.shape) + " vs " +
                                Tensor::shape_str(b.shape));
}

// value of operand i under scalar broadcast
double bop(const Tensor& t, std::size_t i) {
  return t.is_scalar() ? t.v[0] : t.v[i];
}

void accumulate(Node& parent, std::size_t i, double g) {
  if (parent.value.is_scalar())
    parent.grad.v[0] += g;
  else
    parent.grad.v[i] += g;
}

NodeRef binary(const char* tag, const NodeRef& a, const NodeRef& b,
               const std::function<double(double, double)>& fwd,
               const std::function<void(Node&, Node&, Node&)>& bwd) {
  check_binary_shapes(tag, a->value, b->value);
  auto n = std::make_shared<Node>();
  const Tensor& big = a->value.is_scalar() ? b->value : a->value;
  n->value = Tensor::zeros(big.shape);
  for (std::size_t i = 0; i < n->value.size(); ++i)
    n->value.v[i] = fwd(bop(a->value, i), bop(b->value, i));
  n->parents = {a, b};
  n->backprop = [bwd](Node& self) {
    bwd(self, *self.parents[0], *self.parents[1]);
  };
  return n;
}

NodeRef unary(const NodeRef& a, const std::function<double(double)>& fwd,
              const std::function<double(double, double)>& dfwd) {
  auto n = std::make_shared<Node>();
  n->value = Tensor::zeros(a->value.shape);
  for (std::size_t i = 0; i < n->value.size(); ++i)
    n->value.v[i] = fwd(a->value.v[i]);
  n->parents = {a};
  n->backprop = [dfwd](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < self.value.size(); ++i)
      p.grad.v[i] += self.grad.v[i] * dfwd(p.value.v[i], self.value.v[i]);
  };
  return n;
}

}  // namespace

NodeRef make_leaf(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return n;
}

NodeRef make_constant(Tensor value) {
  auto n = make_leaf(std::move(value));
  n->stop_gradient = true;
  return n;
}

NodeRef add(const NodeRef& a, const NodeRef& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](Node& self, Node& pa, Node& pb) {
        for (std::size_t i = 0; i < self.value.size(); ++i) {
          accumulate(pa, i, self.grad.v[i]);
          accumulate(pb, i, self.grad.v[i]);
        }
      });
}

NodeRef sub(const NodeRef& a, const NodeRef& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](Node& self, Node& pa, Node& pb) {
        for (std::size_t i = 0; i < self.value.size(); ++i) {
          accumulate(pa, i, self.grad.v[i]);
          accumulate(pb, i, -self.grad.v[i]);
        }
      });
}

NodeRef mul(const NodeRef& a, const NodeRef& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](Node& self, Node& pa, Node& pb) {
        for (std::size_t i = 0; i < self.value.size(); ++i) {
          accumulate(pa, i, self.grad.v[i] * bop(pb.value, i));
          accumulate(pb, i, self.grad.v[i] * bop(pa.value, i));
        }
      });
}

NodeRef div(const NodeRef& a, const NodeRef& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](Node& self, Node& pa, Node& pb) {
        for (std::size_t i = 0; i < self.value.size(); ++i) {
          const double y = bop(pb.value, i);
          accumulate(pa, i, self.grad.v[i] / y);
          accumulate(pb, i, -self.grad.v[i] * bop(pa.value, i) / (y * y));
        }
      });
}

NodeRef neg(const NodeRef& a) {
  return unary(
      a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

NodeRef log(const NodeRef& a) {
  return unary(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

NodeRef exp(const NodeRef& a) {
  return unary(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

NodeRef sigmoid(const NodeRef& a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

NodeRef tanh(const NodeRef& a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

NodeRef add_const(const NodeRef& a, double c) {
  return unary(
      a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

NodeRef mul_const(const NodeRef& a, double c) {
  return unary(
      a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

NodeRef max_with_const(const NodeRef& a, double c) {
  return unary(
      a, [c](double x) { return std::max(x, c); },
      [c](double x, double) { return x > c ? 1.0 : 0.0; });
}

NodeRef matmul(const NodeRef& a, const NodeRef& b) {
  const Tensor& A = a->value;
  const Tensor& B = b->value;
  if (A.shape.size() != 2 || B.shape.size() != 2 || A.shape[1] != B.shape[0])
    throw std::invalid_argument("matmul: dimension mismatch " +
                                Tensor::shape_str(A.shape) + " vs " +
                                Tensor::shape_str(B.shape));
  const std::size_t m = A.shape[0], k = A.shape[1], p = B.shape[1];
  auto n = std::make_shared<Node>();
  n->value = Tensor::zeros({m, p});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = A.v[i * k + kk];
      if (aik == 0.0) continue;
      const double* brow = &B.v[kk * p];
      double* out = &n->value.v[i * p];
      for (std::size_t j = 0; j < p; ++j) out[j] += aik * brow[j];
    }
  n->parents = {a, b};
  n->backprop = [m, k, p](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    // gA += G * B^T
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < p; ++j) {
        const double g = self.grad.v[i * p + j];
        if (g == 0.0) continue;
        double* garow = &pa.grad.v[i * k];
        for (std::size_t kk = 0; kk < k; ++kk)
          garow[kk] += g * pb.value.v[kk * p + j];
      }
    // gB += A^T * G
    for (std::size_t kk = 0; kk < k; ++kk)
      for (std::size_t i = 0; i < m; ++i) {
        const double aik = pa.value.v[i * k + kk];
        if (aik == 0.0) continue;
        const double* grow = &self.grad.v[i * p];
        double* gbrow = &pb.grad.v[kk * p];
        for (std::size_t j = 0; j < p; ++j) gbrow[j] += aik * grow[j];
      }
  };
  return n;
}

NodeRef add_rowvec(const NodeRef& a, const NodeRef& b) {
  const Tensor& A = a->value;
  const Tensor& B = b->value;
  if (A.shape.size() != 2 || B.shape.size() != 1 || A.shape[1] != B.shape[0])
    throw std::invalid_argument("add_rowvec: shape mismatch " +
                                Tensor::shape_str(A.shape) + " vs " +
                                Tensor::shape_str(B.shape));
  const std::size_t m = A.shape[0], c = A.shape[1];
  auto n = std::make_shared<Node>();
  n->value = Tensor::zeros({m, c});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < c; ++j)
      n->value.v[i * c + j] = A.v[i * c + j] + B.v[j];
  n->parents = {a, b};
  n->backprop = [m, c](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        pa.grad.v[i * c + j] += self.grad.v[i * c + j];
        pb.grad.v[j] += self.grad.v[i * c + j];
      }
  };
  return n;
}

NodeRef softmax_log_probs(const NodeRef& logits) {
  const Tensor& L = logits->value;
  const std::size_t rows = L.shape.size() == 2 ? L.shape[0] : 1;
  const std::size_t cols = L.shape.size() == 2 ? L.shape[1] : L.size();
  auto n = std::make_shared<Node>();
  n->value = Tensor::zeros(L.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = &L.v[r * cols];
    double* out = &n->value.v[r * cols];
    double mx = in[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, in[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(in[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < cols; ++j) out[j] = in[j] - lse;
  }
  n->parents = {logits};
  n->backprop = [rows, cols](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t r = 0; r < rows; ++r) {
      const double* g = &self.grad.v[r * cols];
      const double* lp = &self.value.v[r * cols];
      double gsum = 0.0;
      for (std::size_t j = 0; j < cols; ++j) gsum += g[j];
      double* gp = &p.grad.v[r * cols];
      for (std::size_t j = 0; j < cols; ++j)
        gp[j] += g[j] - std::exp(lp[j]) * gsum;
    }
  };
  return n;
}

NodeRef stop_gradient(const NodeRef& a) {
  auto n = std::make_shared<Node>();
  n->value = a->value;
  n->stop_gradient = true;
  // no parents registered: backward never reaches a through this node
  return n;
}

NodeRef sum(const NodeRef& a) {
  auto n = std::make_shared<Node>();
  double s = 0.0;
  for (double x : a->value.v) s += x;
  n->value = Tensor::scalar(s);
  n->parents = {a};
  n->backprop = [](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < p.value.size(); ++i)
      p.grad.v[i] += self.grad.v[0];
  };
  return n;
}

NodeRef gather_rows(const NodeRef& table, const std::vector<std::size_t>& ids) {
  const Tensor& T = table->value;
  if (T.shape.size() != 2)
    throw std::invalid_argument("gather_rows: table must be rank 2");
  const std::size_t c = T.shape[1];
  for (auto id : ids)
    if (id >= T.shape[0])
      throw std::out_of_range("gather_rows: row id " + std::to_string(id) +
                              " out of range");
  auto n = std::make_shared<Node>();
  n->value = Tensor::zeros({ids.size(), c});
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(&T.v[ids[i] * c], c, &n->value.v[i * c]);
  n->parents = {table};
  n->backprop = [ids, c](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < c; ++j)
        p.grad.v[ids[i] * c + j] += self.grad.v[i * c + j];
  };
  return n;
}

NodeRef take_per_row(const NodeRef& a, const std::vector<std::size_t>& idx) {
  const Tensor& A = a->value;
  if (A.shape.size() != 2 || idx.size() != A.shape[0])
    throw std::invalid_argument("take_per_row: need one index per row");
  std::vector<std::size_t> flat(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= A.shape[1])
      throw std::out_of_range("take_per_row: column index out of range");
    flat[i] = i * A.shape[1] + idx[i];
  }
  return take_flat(a, flat);
}

NodeRef take_flat(const NodeRef& a, const std::vector<std::size_t>& flat_idx) {
  for (auto i : flat_idx)
    if (i >= a->value.size())
      throw std::out_of_range("take_flat: index out of range");
  auto n = std::make_shared<Node>();
  n->value = Tensor::zeros({flat_idx.size()});
  for (std::size_t i = 0; i < flat_idx.size(); ++i)
    n->value.v[i] = a->value.v[flat_idx[i]];
  n->parents = {a};
  n->backprop = [flat_idx](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < flat_idx.size(); ++i)
      p.grad.v[flat_idx[i]] += self.grad.v[i];
  };
  return n;
}

void backward(const NodeRef& root) {
  if (!root->value.is_scalar())
    throw std::invalid_argument("backward: root must be scalar");
  // iterative post-order DFS
  std::vector<Node*> topo;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : topo) n->grad = Tensor::zeros(n->value.shape);
  root->grad.v[0] = 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && !n->stop_gradient) n->backprop(*n);
  }
}

double finite_diff_check(const std::function<NodeRef(const NodeRef&)>& f,
                         const Tensor& point, double eps) {
  auto x = make_leaf(point);
  auto y = f(x);
  backward(y);
  const Tensor ad_grad = x->grad;

  double max_rel = 0.0;
  Tensor p = point;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p.v[i];
    p.v[i] = orig + eps;
    const double fp = f(make_leaf(p))->value.v[0];
    p.v[i] = orig - eps;
    const double fm = f(make_leaf(p))->value.v[0];
    p.v[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("finite_diff_check: non-finite evaluation");
    const double cd = (fp - fm) / (2.0 * eps);
    const double rel = std::abs(ad_grad.v[i] - cd) / (std::abs(cd) + 1e-12);
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace tailr
