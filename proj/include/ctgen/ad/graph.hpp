#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ctgen/core/tensor.hpp"

namespace ctgen::ad {

/// Reverse-mode autodiff over Tensor values.
///
/// Gradients are built as graph nodes themselves, so grad(..., create_graph
/// = true) yields a differentiable expression — this is what the gradient
/// penalty needs to backpropagate through an input-gradient norm into the
/// critic parameters. The linear/data-movement core (matmul, bmm, gather,
/// scatter_add, sums) and the piecewise-linear activations are exact under
/// repeated differentiation; smooth activations capture their forward value
/// and are first-order.

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  bool requires_grad = false;
  std::vector<Var> parents;
  // Returns one gradient contribution per parent (null where undefined).
  std::function<std::vector<Var>(const Var& self_grad)> backward;
  const char* op = "";
};

bool grad_enabled();

/// Disables graph recording for the guarded scope (value-only evaluation).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

Var constant(Tensor value);
Var leaf(Tensor value, bool requires_grad = true);
inline const Tensor& val(const Var& v) { return v->value; }

/// Shared immutable index map for gather/scatter ops; entry -1 reads as 0 /
/// scatters nowhere.
using IndexMap = std::shared_ptr<const std::vector<int64_t>>;

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var neg(const Var& a);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var square(const Var& a);
Var sqrt_v(const Var& a);
Var exp_v(const Var& a);
Var log_v(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var sigmoid(const Var& a);
Var silu(const Var& a);
Var tanh_v(const Var& a);
Var detach(const Var& a);

/// Forward value of `quantized`, gradient passed through to `pre_quant`
/// unchanged (the straight-through estimator). No gradient reaches the
/// quantized side.
Var straight_through(const Var& pre_quant, const Tensor& quantized);

// ---- linear algebra ----
Var matmul(const Var& a, const Var& b);          // [m,k] x [k,n]
Var transpose(const Var& a);                     // [m,n] -> [n,m]
Var bmm(const Var& a, const Var& b);             // [n,r,c] x [n,c,p]
Var btranspose(const Var& a);                    // [n,r,c] -> [n,c,r]

// ---- shape / data movement ----
Var reshape(const Var& a, Shape shape);
Var gather(const Var& a, const IndexMap& map, Shape out_shape);
Var scatter_add(const Var& a, const IndexMap& map, Shape out_shape);

// ---- reductions ----
Var sum_all(const Var& a);                 // -> [1]
Var mean_all(const Var& a);                // -> [1]
Var broadcast_all(const Var& a, Shape s);  // [1] -> s
Var sum_rows(const Var& a);                // [m,n] -> [m]
Var sum_cols(const Var& a);                // [m,n] -> [n]
Var broadcast_cols(const Var& a, int64_t n);  // [m] -> [m,n]
Var broadcast_rows(const Var& a, int64_t m);  // [n] -> [m,n]

// ---- softmax family (first-order) ----
Var softmax_rows(const Var& a);  // [m,n], stable
/// Mean negative log-likelihood of integer targets under row-wise softmax.
Var cross_entropy_rows(const Var& logits, const std::vector<int64_t>& targets);

/// d(output)/d(each wrt): reverse sweep from a scalar (or seeded) output.
/// With create_graph the returned Vars are differentiable graphs.
std::vector<Var> grad(const Var& output, const std::vector<Var>& wrt, bool create_graph = false);

/// Convenience: accumulate gradients as plain tensors (create_graph=false).
std::vector<Tensor> grad_values(const Var& output, const std::vector<Var>& wrt);

}  // namespace ctgen::ad
