#include "ctgen/ad/graph.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <unordered_map>
#include <unordered_set>

namespace ctgen::ad {

namespace {

thread_local bool g_grad_enabled = true;

using EMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const EMat> emap(const Tensor& t, int64_t rows, int64_t cols) {
  return Eigen::Map<const EMat>(t.data(), rows, cols);
}

Eigen::Map<EMat> emap_mut(Tensor& t, int64_t rows, int64_t cols) {
  return Eigen::Map<EMat>(t.data(), rows, cols);
}

using BackwardFn = std::function<std::vector<Var>(const Var&)>;

Var make(Tensor value, std::vector<Var> parents, BackwardFn backward, const char* op) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  if (g_grad_enabled) {
    bool any = false;
    for (const Var& p : parents) any = any || (p && p->requires_grad);
    if (any) {
      n->requires_grad = true;
      n->parents = std::move(parents);
      n->backward = std::move(backward);
    }
  }
  return n;
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a->value.shape() != b->value.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a->value.shape()) + " vs " +
                                shape_str(b->value.shape()));
}

/// Elementwise op whose gradient is a captured constant factor (first-order;
/// fine everywhere the second derivative is not required, see header note).
Var unary_with_factor(const Var& a, Tensor value, Tensor factor, const char* op) {
  Var f = constant(std::move(factor));
  return make(std::move(value), {a}, [f](const Var& g) { return std::vector<Var>{mul(g, f)}; }, op);
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = "const";
  return n;
}

Var leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->op = "leaf";
  return n;
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + b->value[i];
  return make(std::move(out), {a, b}, [](const Var& g) { return std::vector<Var>{g, g}; }, "add");
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] - b->value[i];
  return make(std::move(out), {a, b}, [](const Var& g) { return std::vector<Var>{g, neg(g)}; }, "sub");
}

Var neg(const Var& a) {
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = -a->value[i];
  return make(std::move(out), {a}, [](const Var& g) { return std::vector<Var>{neg(g)}; }, "neg");
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * b->value[i];
  return make(std::move(out), {a, b},
              [a, b](const Var& g) { return std::vector<Var>{mul(g, b), mul(g, a)}; }, "mul");
}

Var div(const Var& a, const Var& b) {
  require_same_shape(a, b, "div");
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] / b->value[i];
  return make(std::move(out), {a, b},
              [a, b](const Var& g) {
                Var ga = div(g, b);
                Var gb = neg(div(mul(g, a), mul(b, b)));
                return std::vector<Var>{ga, gb};
              },
              "div");
}

Var add_scalar(const Var& a, double s) {
  Tensor out(a->value.shape());
  const float fs = static_cast<float>(s);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + fs;
  return make(std::move(out), {a}, [](const Var& g) { return std::vector<Var>{g}; }, "add_scalar");
}

Var mul_scalar(const Var& a, double s) {
  Tensor out(a->value.shape());
  const float fs = static_cast<float>(s);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * fs;
  return make(std::move(out), {a}, [s](const Var& g) { return std::vector<Var>{mul_scalar(g, s)}; }, "mul_scalar");
}

Var square(const Var& a) {
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * a->value[i];
  return make(std::move(out), {a},
              [a](const Var& g) { return std::vector<Var>{mul(g, mul_scalar(a, 2.0))}; }, "square");
}

Var sqrt_v(const Var& a) {
  Tensor out(a->value.shape());
  Tensor factor(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) {
    out[i] = std::sqrt(a->value[i]);
    factor[i] = 0.5f / std::max(out[i], 1e-12f);
  }
  return unary_with_factor(a, std::move(out), std::move(factor), "sqrt");
}

Var exp_v(const Var& a) {
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::exp(a->value[i]);
  Tensor factor = out;
  return unary_with_factor(a, std::move(out), std::move(factor), "exp");
}

Var log_v(const Var& a) {
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::log(a->value[i]);
  return make(std::move(out), {a}, [a](const Var& g) { return std::vector<Var>{div(g, a)}; }, "log");
}

Var relu(const Var& a) {
  Tensor out(a->value.shape());
  Tensor mask(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) {
    const bool pos = a->value[i] > 0.0f;
    out[i] = pos ? a->value[i] : 0.0f;
    mask[i] = pos ? 1.0f : 0.0f;
  }
  return unary_with_factor(a, std::move(out), std::move(mask), "relu");
}

Var leaky_relu(const Var& a, double slope) {
  Tensor out(a->value.shape());
  Tensor mask(a->value.shape());
  const float fs = static_cast<float>(slope);
  for (int64_t i = 0; i < out.numel(); ++i) {
    const bool pos = a->value[i] > 0.0f;
    out[i] = pos ? a->value[i] : fs * a->value[i];
    mask[i] = pos ? 1.0f : fs;
  }
  return unary_with_factor(a, std::move(out), std::move(mask), "leaky_relu");
}

Var sigmoid(const Var& a) {
  Tensor out(a->value.shape());
  Tensor factor(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) {
    const float s = 1.0f / (1.0f + std::exp(-a->value[i]));
    out[i] = s;
    factor[i] = s * (1.0f - s);
  }
  return unary_with_factor(a, std::move(out), std::move(factor), "sigmoid");
}

Var silu(const Var& a) {
  Tensor out(a->value.shape());
  Tensor factor(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) {
    const float x = a->value[i];
    const float s = 1.0f / (1.0f + std::exp(-x));
    out[i] = x * s;
    factor[i] = s * (1.0f + x * (1.0f - s));
  }
  return unary_with_factor(a, std::move(out), std::move(factor), "silu");
}

Var tanh_v(const Var& a) {
  Tensor out(a->value.shape());
  Tensor factor(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) {
    const float t = std::tanh(a->value[i]);
    out[i] = t;
    factor[i] = 1.0f - t * t;
  }
  return unary_with_factor(a, std::move(out), std::move(factor), "tanh");
}

Var detach(const Var& a) { return constant(a->value); }

Var straight_through(const Var& pre_quant, const Tensor& quantized) {
  if (pre_quant->value.shape() != quantized.shape())
    throw std::invalid_argument("straight_through: shape mismatch");
  return make(Tensor(quantized), {pre_quant}, [](const Var& g) { return std::vector<Var>{g}; }, "straight_through");
}

Var matmul(const Var& a, const Var& b) {
  if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.dim(1) != b->value.dim(0))
    throw std::invalid_argument("matmul: need [m,k]x[k,n], got " + shape_str(a->value.shape()) + " x " +
                                shape_str(b->value.shape()));
  const int64_t m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
  Tensor out({m, n});
  emap_mut(out, m, n).noalias() = emap(a->value, m, k) * emap(b->value, k, n);
  return make(std::move(out), {a, b},
              [a, b](const Var& g) {
                Var ga = matmul(g, transpose(b));
                Var gb = matmul(transpose(a), g);
                return std::vector<Var>{ga, gb};
              },
              "matmul");
}

Var transpose(const Var& a) {
  if (a->value.rank() != 2) throw std::invalid_argument("transpose: need rank-2");
  const int64_t m = a->value.dim(0), n = a->value.dim(1);
  Tensor out({n, m});
  emap_mut(out, n, m).noalias() = emap(a->value, m, n).transpose();
  return make(std::move(out), {a}, [](const Var& g) { return std::vector<Var>{transpose(g)}; }, "transpose");
}

Var bmm(const Var& a, const Var& b) {
  if (a->value.rank() != 3 || b->value.rank() != 3 || a->value.dim(0) != b->value.dim(0) ||
      a->value.dim(2) != b->value.dim(1))
    throw std::invalid_argument("bmm: need [n,r,c]x[n,c,p], got " + shape_str(a->value.shape()) + " x " +
                                shape_str(b->value.shape()));
  const int64_t nb = a->value.dim(0), r = a->value.dim(1), c = a->value.dim(2), p = b->value.dim(2);
  Tensor out({nb, r, p});
  for (int64_t i = 0; i < nb; ++i) {
    Eigen::Map<EMat>(out.data() + i * r * p, r, p).noalias() =
        Eigen::Map<const EMat>(a->value.data() + i * r * c, r, c) *
        Eigen::Map<const EMat>(b->value.data() + i * c * p, c, p);
  }
  return make(std::move(out), {a, b},
              [a, b](const Var& g) {
                Var ga = bmm(g, btranspose(b));
                Var gb = bmm(btranspose(a), g);
                return std::vector<Var>{ga, gb};
              },
              "bmm");
}

Var btranspose(const Var& a) {
  if (a->value.rank() != 3) throw std::invalid_argument("btranspose: need rank-3");
  const int64_t nb = a->value.dim(0), r = a->value.dim(1), c = a->value.dim(2);
  Tensor out({nb, c, r});
  for (int64_t i = 0; i < nb; ++i)
    Eigen::Map<EMat>(out.data() + i * r * c, c, r).noalias() =
        Eigen::Map<const EMat>(a->value.data() + i * r * c, r, c).transpose();
  return make(std::move(out), {a}, [](const Var& g) { return std::vector<Var>{btranspose(g)}; }, "btranspose");
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a->value.reshaped(std::move(shape));
  Shape back = a->value.shape();
  return make(std::move(out), {a},
              [back](const Var& g) { return std::vector<Var>{reshape(g, back)}; }, "reshape");
}

Var gather(const Var& a, const IndexMap& map, Shape out_shape) {
  if (static_cast<int64_t>(map->size()) != shape_numel(out_shape))
    throw std::invalid_argument("gather: map size does not match output shape");
  Tensor out(std::move(out_shape));
  const float* src = a->value.data();
  for (int64_t i = 0; i < out.numel(); ++i) {
    const int64_t j = (*map)[static_cast<size_t>(i)];
    out[i] = j >= 0 ? src[j] : 0.0f;
  }
  Shape a_shape = a->value.shape();
  return make(std::move(out), {a},
              [map, a_shape](const Var& g) { return std::vector<Var>{scatter_add(g, map, a_shape)}; }, "gather");
}

Var scatter_add(const Var& a, const IndexMap& map, Shape out_shape) {
  if (static_cast<int64_t>(map->size()) != a->value.numel())
    throw std::invalid_argument("scatter_add: map size does not match input");
  Tensor out(std::move(out_shape));
  for (int64_t i = 0; i < a->value.numel(); ++i) {
    const int64_t j = (*map)[static_cast<size_t>(i)];
    if (j >= 0) out[j] += a->value[i];
  }
  Shape a_shape = a->value.shape();
  return make(std::move(out), {a},
              [map, a_shape](const Var& g) { return std::vector<Var>{gather(g, map, a_shape)}; }, "scatter_add");
}

Var sum_all(const Var& a) {
  double acc = 0.0;
  for (int64_t i = 0; i < a->value.numel(); ++i) acc += a->value[i];
  Shape back = a->value.shape();
  return make(Tensor::scalar(static_cast<float>(acc)), {a},
              [back](const Var& g) { return std::vector<Var>{broadcast_all(g, back)}; }, "sum_all");
}

Var mean_all(const Var& a) { return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a->value.numel())); }

Var broadcast_all(const Var& a, Shape s) {
  if (a->value.numel() != 1) throw std::invalid_argument("broadcast_all: input must be scalar");
  Tensor out(std::move(s), a->value[0]);
  return make(std::move(out), {a}, [](const Var& g) { return std::vector<Var>{sum_all(g)}; }, "broadcast_all");
}

Var sum_rows(const Var& a) {
  if (a->value.rank() != 2) throw std::invalid_argument("sum_rows: need rank-2");
  const int64_t m = a->value.dim(0), n = a->value.dim(1);
  Tensor out({m});
  for (int64_t r = 0; r < m; ++r) {
    double acc = 0.0;
    for (int64_t c = 0; c < n; ++c) acc += a->value[r * n + c];
    out[r] = static_cast<float>(acc);
  }
  return make(std::move(out), {a},
              [n](const Var& g) { return std::vector<Var>{broadcast_cols(g, n)}; }, "sum_rows");
}

Var sum_cols(const Var& a) {
  if (a->value.rank() != 2) throw std::invalid_argument("sum_cols: need rank-2");
  const int64_t m = a->value.dim(0), n = a->value.dim(1);
  Tensor out({n});
  for (int64_t r = 0; r < m; ++r)
    for (int64_t c = 0; c < n; ++c) out[c] += a->value[r * n + c];
  return make(std::move(out), {a},
              [m](const Var& g) { return std::vector<Var>{broadcast_rows(g, m)}; }, "sum_cols");
}

Var broadcast_cols(const Var& a, int64_t n) {
  if (a->value.rank() != 1) throw std::invalid_argument("broadcast_cols: need rank-1");
  const int64_t m = a->value.dim(0);
  Tensor out({m, n});
  for (int64_t r = 0; r < m; ++r)
    for (int64_t c = 0; c < n; ++c) out[r * n + c] = a->value[r];
  return make(std::move(out), {a}, [](const Var& g) { return std::vector<Var>{sum_rows(g)}; }, "broadcast_cols");
}

Var broadcast_rows(const Var& a, int64_t m) {
  if (a->value.rank() != 1) throw std::invalid_argument("broadcast_rows: need rank-1");
  const int64_t n = a->value.dim(0);
  Tensor out({m, n});
  for (int64_t r = 0; r < m; ++r)
    for (int64_t c = 0; c < n; ++c) out[r * n + c] = a->value[c];
  return make(std::move(out), {a}, [](const Var& g) { return std::vector<Var>{sum_cols(g)}; }, "broadcast_rows");
}

Var softmax_rows(const Var& a) {
  if (a->value.rank() != 2) throw std::invalid_argument("softmax_rows: need rank-2");
  const int64_t m = a->value.dim(0), n = a->value.dim(1);
  Tensor out({m, n});
  for (int64_t r = 0; r < m; ++r) {
    float mx = a->value[r * n];
    for (int64_t c = 1; c < n; ++c) mx = std::max(mx, a->value[r * n + c]);
    double denom = 0.0;
    for (int64_t c = 0; c < n; ++c) {
      const float e = std::exp(a->value[r * n + c] - mx);
      out[r * n + c] = e;
      denom += e;
    }
    const float inv = static_cast<float>(1.0 / denom);
    for (int64_t c = 0; c < n; ++c) out[r * n + c] *= inv;
  }
  Var soft = constant(out);
  return make(std::move(out), {a},
              [soft](const Var& g) {
                // gx = s * (g - rowsum(g*s))
                Var gs = mul(g, soft);
                Var row = broadcast_cols(sum_rows(gs), soft->value.dim(1));
                return std::vector<Var>{mul(soft, sub(g, row))};
              },
              "softmax_rows");
}

Var cross_entropy_rows(const Var& logits, const std::vector<int64_t>& targets) {
  if (logits->value.rank() != 2) throw std::invalid_argument("cross_entropy_rows: need rank-2 logits");
  const int64_t m = logits->value.dim(0), n = logits->value.dim(1);
  if (static_cast<int64_t>(targets.size()) != m)
    throw std::invalid_argument("cross_entropy_rows: target count mismatch");

  Tensor grad_base({m, n});  // (softmax - onehot) / m
  double nll = 0.0;
  for (int64_t r = 0; r < m; ++r) {
    float mx = logits->value[r * n];
    for (int64_t c = 1; c < n; ++c) mx = std::max(mx, logits->value[r * n + c]);
    double denom = 0.0;
    for (int64_t c = 0; c < n; ++c) denom += std::exp(logits->value[r * n + c] - mx);
    const int64_t t = targets[static_cast<size_t>(r)];
    if (t < 0 || t >= n) throw std::invalid_argument("cross_entropy_rows: target out of range");
    nll -= (logits->value[r * n + t] - mx) - std::log(denom);
    for (int64_t c = 0; c < n; ++c) {
      const float p = static_cast<float>(std::exp(logits->value[r * n + c] - mx) / denom);
      grad_base[r * n + c] = (p - (c == t ? 1.0f : 0.0f)) / static_cast<float>(m);
    }
  }
  Var base = constant(std::move(grad_base));
  Shape shape = logits->value.shape();
  return make(Tensor::scalar(static_cast<float>(nll / static_cast<double>(m))), {logits},
              [base, shape](const Var& g) {
                return std::vector<Var>{mul(broadcast_all(g, shape), base)};
              },
              "cross_entropy");
}

std::vector<Var> grad(const Var& output, const std::vector<Var>& wrt, bool create_graph) {
  // Iterative post-order over the requires_grad subgraph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  if (output && output->requires_grad) stack.push_back({output.get(), 0});
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx == 0 && visited.count(node)) {
      stack.pop_back();
      continue;
    }
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx].get();
      ++idx;
      if (p && p->requires_grad && !visited.count(p)) stack.push_back({p, 0});
    } else {
      visited.insert(node);
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::optional<NoGradGuard> guard;
  if (!create_graph) guard.emplace();

  std::unordered_map<Node*, Var> gmap;
  if (output && output->requires_grad) gmap[output.get()] = constant(ones_like(output->value));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    auto git = gmap.find(n);
    if (git == gmap.end() || !n->backward) continue;
    std::vector<Var> contribs = n->backward(git->second);
    if (contribs.size() != n->parents.size())
      throw std::logic_error(std::string("grad: backward arity mismatch in op ") + n->op);
    for (size_t i = 0; i < n->parents.size(); ++i) {
      const Var& p = n->parents[i];
      if (!p || !p->requires_grad || !contribs[i]) continue;
      auto pit = gmap.find(p.get());
      if (pit == gmap.end())
        gmap[p.get()] = contribs[i];
      else
        pit->second = add(pit->second, contribs[i]);
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const Var& w : wrt) {
    auto it = gmap.find(w.get());
    out.push_back(it != gmap.end() ? it->second : constant(zeros_like(w->value)));
  }
  return out;
}

std::vector<Tensor> grad_values(const Var& output, const std::vector<Var>& wrt) {
  std::vector<Var> g = grad(output, wrt, false);
  std::vector<Tensor> out;
  out.reserve(g.size());
  for (const Var& v : g) out.push_back(v->value);
  return out;
}

}  // namespace ctgen::ad
