#include "acdnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace acdnet {

namespace {

thread_local bool g_grad_enabled = true;

using Node = Tensor::Node;
using NodePtr = std::shared_ptr<Node>;

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

// Builds an op result. The backprop body receives the finished output node;
// it must guard every accumulation with parent->needs_grad.
Tensor make_op(Shape shape, std::vector<double> data,
               std::vector<NodePtr> parents,
               std::function<void(Node&)> body) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents)
      if (p->needs_grad) needs = true;
  }
  if (needs) {
    n->needs_grad = true;
    n->parents = std::move(parents);
    Node* raw = n.get();
    n->backprop = [raw, body = std::move(body)] {
      if (!raw->grad.empty()) body(*raw);
    };
  }
  return Tensor(n);
}

void check(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

// Rank-1 operands follow the numpy convention: a row vector on the left,
// a column vector on the right.
void as_matrix(const Tensor& t, bool left, std::size_t& r, std::size_t& c) {
  if (t.rank() == 1) {
    if (left) {
      r = 1;
      c = t.dim(0);
    } else {
      r = t.dim(0);
      c = 1;
    }
  } else if (t.rank() == 2) {
    r = t.dim(0);
    c = t.dim(1);
  } else {
    throw ShapeError("matmul expects rank 1 or 2, got " + shape_str(t.shape()));
  }
}

enum class Broadcast { Same, BScalar, AScalar, BRow, ARow };

Broadcast classify(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::Same;
  if (b.size() == 1 && b.rank() <= 1) return Broadcast::BScalar;
  if (a.size() == 1 && a.rank() <= 1) return Broadcast::AScalar;
  if (a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0))
    return Broadcast::BRow;
  if (b.rank() == 2 && a.rank() == 1 && b.dim(1) == a.dim(0))
    return Broadcast::ARow;
  throw ShapeError("incompatible shapes " + shape_str(a.shape()) + " vs " +
                   shape_str(b.shape()));
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return from(std::move(shape), {}, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> d(shape_numel(shape), value);
  return from(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  auto n = std::make_shared<Node>();
  std::size_t numel = shape_numel(shape);
  if (data.empty()) data.assign(numel, 0.0);
  if (data.size() != numel)
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  n->needs_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from(Shape{}, {value}, requires_grad);
}

double Tensor::item() const {
  if (size() != 1)
    throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
  return node_->data[0];
}

void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw ShapeError("backward() needs a scalar loss, got " +
                     shape_str(loss.shape()));
  NodePtr root = loss.node();
  if (!root->needs_grad) return;

  // Post-order DFS over the differentiable subgraph.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->needs_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root->grad_buf()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop();
}

// --- matmul / transpose --------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  std::size_t m, k, k2, n;
  as_matrix(a, true, m, k);
  as_matrix(b, false, k2, n);
  if (k != k2)
    throw ShapeError("matmul dimension mismatch: " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  const auto& A = a.data();
  const auto& B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = B.data() + p * n;
      double* crow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  Shape oshape;
  if (a.rank() == 2 && b.rank() == 2)
    oshape = {m, n};
  else if (a.rank() == 1 && b.rank() == 1)
    oshape = {};
  else if (a.rank() == 1)
    oshape = {n};
  else
    oshape = {m};

  auto pa = a.node();
  auto pb = b.node();
  return make_op(std::move(oshape), std::move(out), {pa, pb},
                 [pa, pb, m, k, n](Node& o) {
                   const auto& G = o.grad;
                   if (pa->needs_grad) {
                     auto& dA = pa->grad_buf();
                     const auto& B = pb->data;
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t p = 0; p < k; ++p) {
                         double s = 0.0;
                         const double* g = G.data() + i * n;
                         const double* br = B.data() + p * n;
                         for (std::size_t j = 0; j < n; ++j) s += g[j] * br[j];
                         dA[i * k + p] += s;
                       }
                   }
                   if (pb->needs_grad) {
                     auto& dB = pb->grad_buf();
                     const auto& A = pa->data;
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t p = 0; p < k; ++p) {
                         double aip = A[i * k + p];
                         if (aip == 0.0) continue;
                         const double* g = G.data() + i * n;
                         double* dbr = dB.data() + p * n;
                         for (std::size_t j = 0; j < n; ++j)
                           dbr[j] += aip * g[j];
                       }
                   }
                 });
}

Tensor transpose(const Tensor& x) {
  check(x.rank() == 2, "transpose expects rank 2, got " + shape_str(x.shape()));
  std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(r * c);
  const auto& X = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = X[i * c + j];
  auto px = x.node();
  return make_op({c, r}, std::move(out), {px}, [px, r, c](Node& o) {
    if (!px->needs_grad) return;
    auto& dX = px->grad_buf();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dX[i * c + j] += o.grad[j * r + i];
  });
}

// --- softmax / layernorm -------------------------------------------------

namespace {
// (rows, len, start(row), stride) describing the reduction lanes.
struct Lanes {
  std::size_t rows, len, stride;
  std::vector<std::size_t> starts;
};

Lanes lanes_for(const Tensor& x, int axis) {
  Lanes l;
  if (x.rank() == 1) {
    check(axis == 0, "axis out of range for rank-1 tensor");
    l.rows = 1;
    l.len = x.dim(0);
    l.stride = 1;
    l.starts = {0};
  } else if (x.rank() == 2) {
    std::size_t r = x.dim(0), c = x.dim(1);
    if (axis == 1 || axis == -1) {
      l.rows = r;
      l.len = c;
      l.stride = 1;
      for (std::size_t i = 0; i < r; ++i) l.starts.push_back(i * c);
    } else if (axis == 0) {
      l.rows = c;
      l.len = r;
      l.stride = c;
      for (std::size_t j = 0; j < c; ++j) l.starts.push_back(j);
    } else {
      throw ShapeError("axis out of range for rank-2 tensor");
    }
  } else {
    throw ShapeError("softmax/reduction supports rank 1 or 2 only");
  }
  return l;
}
}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  Lanes l = lanes_for(x, axis);
  std::vector<double> out(x.size());
  const auto& X = x.data();
  for (std::size_t r = 0; r < l.rows; ++r) {
    std::size_t s = l.starts[r];
    double mx = X[s];
    for (std::size_t i = 1; i < l.len; ++i)
      mx = std::max(mx, X[s + i * l.stride]);
    double z = 0.0;
    for (std::size_t i = 0; i < l.len; ++i) {
      double e = std::exp(X[s + i * l.stride] - mx);
      out[s + i * l.stride] = e;
      z += e;
    }
    for (std::size_t i = 0; i < l.len; ++i) out[s + i * l.stride] /= z;
  }
  auto px = x.node();
  return make_op(x.shape(), std::move(out), {px}, [px, l](Node& o) {
    if (!px->needs_grad) return;
    auto& dX = px->grad_buf();
    for (std::size_t r = 0; r < l.rows; ++r) {
      std::size_t s = l.starts[r];
      double dot = 0.0;
      for (std::size_t i = 0; i < l.len; ++i) {
        std::size_t k = s + i * l.stride;
        dot += o.grad[k] * o.data[k];
      }
      for (std::size_t i = 0; i < l.len; ++i) {
        std::size_t k = s + i * l.stride;
        dX[k] += o.data[k] * (o.grad[k] - dot);
      }
    }
  });
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps) {
  std::size_t d = x.rank() == 1 ? x.dim(0) : x.dim(1);
  check(x.rank() >= 1 && x.rank() <= 2, "layernorm expects rank 1 or 2");
  check(gain.rank() == 1 && gain.dim(0) == d, "layernorm gain width mismatch");
  check(bias.rank() == 1 && bias.dim(0) == d, "layernorm bias width mismatch");
  std::size_t nrows = x.rank() == 1 ? 1 : x.dim(0);

  std::vector<double> out(x.size());
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv = std::make_shared<std::vector<double>>(nrows);
  const auto& X = x.data();
  const auto& G = gain.data();
  const auto& B = bias.data();
  for (std::size_t r = 0; r < nrows; ++r) {
    const double* xr = X.data() + r * d;
    double m = 0.0;
    for (std::size_t j = 0; j < d; ++j) m += xr[j];
    m /= d;
    double v = 0.0;
    for (std::size_t j = 0; j < d; ++j) v += (xr[j] - m) * (xr[j] - m);
    v /= d;
    double iv = 1.0 / std::sqrt(v + eps);
    (*inv)[r] = iv;
    for (std::size_t j = 0; j < d; ++j) {
      double xh = (xr[j] - m) * iv;
      (*xhat)[r * d + j] = xh;
      out[r * d + j] = G[j] * xh + B[j];
    }
  }
  auto px = x.node();
  auto pg = gain.node();
  auto pb = bias.node();
  return make_op(x.shape(), std::move(out), {px, pg, pb},
                 [px, pg, pb, xhat, inv, nrows, d](Node& o) {
                   const auto& G = pg->data;
                   for (std::size_t r = 0; r < nrows; ++r) {
                     const double* g = o.grad.data() + r * d;
                     const double* xh = xhat->data() + r * d;
                     if (pg->needs_grad) {
                       auto& dG = pg->grad_buf();
                       for (std::size_t j = 0; j < d; ++j)
                         dG[j] += g[j] * xh[j];
                     }
                     if (pb->needs_grad) {
                       auto& dB = pb->grad_buf();
                       for (std::size_t j = 0; j < d; ++j) dB[j] += g[j];
                     }
                     if (px->needs_grad) {
                       auto& dX = px->grad_buf();
                       double mdx = 0.0, mdxx = 0.0;
                       for (std::size_t j = 0; j < d; ++j) {
                         double dxh = g[j] * G[j];
                         mdx += dxh;
                         mdxx += dxh * xh[j];
                       }
                       mdx /= d;
                       mdxx /= d;
                       for (std::size_t j = 0; j < d; ++j) {
                         double dxh = g[j] * G[j];
                         dX[r * d + j] +=
                             (*inv)[r] * (dxh - mdx - xh[j] * mdxx);
                       }
                     }
                   }
                 });
}

// --- unary ---------------------------------------------------------------

namespace {
Tensor unary(const Tensor& x, double (*f)(double),
             std::function<double(double x, double y)> dfdx) {
  std::vector<double> out(x.size());
  const auto& X = x.data();
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = f(X[i]);
  auto px = x.node();
  return make_op(x.shape(), std::move(out), {px},
                 [px, dfdx = std::move(dfdx)](Node& o) {
                   if (!px->needs_grad) return;
                   auto& dX = px->grad_buf();
                   for (std::size_t i = 0; i < o.data.size(); ++i)
                     dX[i] += o.grad[i] * dfdx(px->data[i], o.data[i]);
                 });
}
}  // namespace

Tensor tanh(const Tensor& x) {
  return unary(x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  std::vector<double> out(x.size());
  const auto& X = x.data();
  for (std::size_t i = 0; i < X.size(); ++i)
    out[i] = X[i] > 0.0 ? X[i] : slope * X[i];
  auto px = x.node();
  return make_op(x.shape(), std::move(out), {px}, [px, slope](Node& o) {
    if (!px->needs_grad) return;
    auto& dX = px->grad_buf();
    for (std::size_t i = 0; i < o.data.size(); ++i)
      dX[i] += o.grad[i] * (px->data[i] > 0.0 ? 1.0 : slope);
  });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x,
               [](double v) {
                 return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                 : std::exp(v) / (1.0 + std::exp(v));
               },
               [](double, double y) { return y * (1.0 - y); });
}

Tensor log(const Tensor& x) {
  return unary(x, [](double v) { return std::log(v); },
               [](double v, double) { return 1.0 / v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  std::vector<double> out(x.size());
  const auto& X = x.data();
  for (std::size_t i = 0; i < X.size(); ++i)
    out[i] = std::min(hi, std::max(lo, X[i]));
  auto px = x.node();
  return make_op(x.shape(), std::move(out), {px}, [px, lo, hi](Node& o) {
    if (!px->needs_grad) return;
    auto& dX = px->grad_buf();
    for (std::size_t i = 0; i < o.data.size(); ++i)
      if (px->data[i] >= lo && px->data[i] <= hi) dX[i] += o.grad[i];
  });
}

// --- binary elementwise --------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  Broadcast k = classify(a, b);
  if (k == Broadcast::AScalar || k == Broadcast::ARow) return add(b, a);
  const auto& A = a.data();
  const auto& B = b.data();
  std::vector<double> out(a.size());
  if (k == Broadcast::Same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i];
  } else if (k == Broadcast::BScalar) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[0];
  } else {  // BRow
    std::size_t n = a.dim(0), d = a.dim(1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] = A[i * d + j] + B[j];
  }
  auto pa = a.node();
  auto pb = b.node();
  return make_op(a.shape(), std::move(out), {pa, pb}, [pa, pb, k](Node& o) {
    if (pa->needs_grad) {
      auto& dA = pa->grad_buf();
      for (std::size_t i = 0; i < o.grad.size(); ++i) dA[i] += o.grad[i];
    }
    if (pb->needs_grad) {
      auto& dB = pb->grad_buf();
      if (k == Broadcast::Same) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) dB[i] += o.grad[i];
      } else if (k == Broadcast::BScalar) {
        for (double g : o.grad) dB[0] += g;
      } else {
        std::size_t d = dB.size();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
          dB[i % d] += o.grad[i];
      }
    }
  });
}

Tensor scale(const Tensor& x, double kf) {
  std::vector<double> out(x.size());
  const auto& X = x.data();
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = kf * X[i];
  auto px = x.node();
  return make_op(x.shape(), std::move(out), {px}, [px, kf](Node& o) {
    if (!px->needs_grad) return;
    auto& dX = px->grad_buf();
    for (std::size_t i = 0; i < o.grad.size(); ++i) dX[i] += kf * o.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  Broadcast k = classify(a, b);
  if (k == Broadcast::AScalar || k == Broadcast::ARow) return mul(b, a);
  const auto& A = a.data();
  const auto& B = b.data();
  std::vector<double> out(a.size());
  if (k == Broadcast::Same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
  } else if (k == Broadcast::BScalar) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[0];
  } else {
    std::size_t n = a.dim(0), d = a.dim(1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] = A[i * d + j] * B[j];
  }
  auto pa = a.node();
  auto pb = b.node();
  return make_op(a.shape(), std::move(out), {pa, pb}, [pa, pb, k](Node& o) {
    const auto& A = pa->data;
    const auto& B = pb->data;
    if (pa->needs_grad) {
      auto& dA = pa->grad_buf();
      if (k == Broadcast::Same) {
        for (std::size_t i = 0; i < o.grad.size(); ++i)
          dA[i] += o.grad[i] * B[i];
      } else if (k == Broadcast::BScalar) {
        for (std::size_t i = 0; i < o.grad.size(); ++i)
          dA[i] += o.grad[i] * B[0];
      } else {
        std::size_t d = B.size();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
          dA[i] += o.grad[i] * B[i % d];
      }
    }
    if (pb->needs_grad) {
      auto& dB = pb->grad_buf();
      if (k == Broadcast::Same) {
        for (std::size_t i = 0; i < o.grad.size(); ++i)
          dB[i] += o.grad[i] * A[i];
      } else if (k == Broadcast::BScalar) {
        for (std::size_t i = 0; i < o.grad.size(); ++i)
          dB[0] += o.grad[i] * A[i];
      } else {
        std::size_t d = dB.size();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
          dB[i % d] += o.grad[i] * A[i];
      }
    }
  });
}

// --- reductions ----------------------------------------------------------

namespace {
Tensor reduce(const Tensor& x, int axis, bool take_mean) {
  check(x.rank() == 2, "axis reduction expects rank 2");
  Lanes l = lanes_for(x, axis == 0 ? 0 : 1);
  double div = take_mean ? static_cast<double>(l.len) : 1.0;
  std::vector<double> out(l.rows, 0.0);
  const auto& X = x.data();
  for (std::size_t r = 0; r < l.rows; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < l.len; ++i) s += X[l.starts[r] + i * l.stride];
    out[r] = s / div;
  }
  auto px = x.node();
  return make_op({l.rows}, std::move(out), {px}, [px, l, div](Node& o) {
    if (!px->needs_grad) return;
    auto& dX = px->grad_buf();
    for (std::size_t r = 0; r < l.rows; ++r) {
      double g = o.grad[r] / div;
      for (std::size_t i = 0; i < l.len; ++i)
        dX[l.starts[r] + i * l.stride] += g;
    }
  });
}
}  // namespace

Tensor sum(const Tensor& x, int axis) { return reduce(x, axis, false); }
Tensor mean(const Tensor& x, int axis) { return reduce(x, axis, true); }
Tensor mean_rows(const Tensor& x) { return reduce(x, 0, true); }

Tensor sum_all(const Tensor& x) {
  double s = std::accumulate(x.data().begin(), x.data().end(), 0.0);
  auto px = x.node();
  return make_op(Shape{}, {s}, {px}, [px](Node& o) {
    if (!px->needs_grad) return;
    auto& dX = px->grad_buf();
    for (auto& g : dX) g += o.grad[0];
  });
}

// --- shape ops -----------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  check(!parts.empty(), "concat of zero tensors");
  std::size_t r = parts[0].rank();
  check((r == 1 && axis == 0) || (r == 2 && (axis == 0 || axis == 1)),
        "concat: unsupported rank/axis");
  std::vector<NodePtr> ps;
  for (const auto& t : parts) {
    check(t.rank() == r, "concat: mixed ranks");
    ps.push_back(t.node());
  }
  if (r == 1 || axis == 0) {
    std::size_t cols = r == 2 ? parts[0].dim(1) : 0;
    std::size_t total = 0;
    std::vector<double> out;
    for (const auto& t : parts) {
      if (r == 2) check(t.dim(1) == cols, "concat: column mismatch");
      total += t.dim(0);
      out.insert(out.end(), t.data().begin(), t.data().end());
    }
    Shape sh = r == 2 ? Shape{total, cols} : Shape{total};
    return make_op(std::move(sh), std::move(out), ps, [ps](Node& o) {
      std::size_t off = 0;
      for (auto& p : ps) {
        if (p->needs_grad) {
          auto& dP = p->grad_buf();
          for (std::size_t i = 0; i < dP.size(); ++i) dP[i] += o.grad[off + i];
        }
        off += p->data.size();
      }
    });
  }
  // axis == 1 on rank-2: column-wise concat
  std::size_t nrows = parts[0].dim(0), total = 0;
  std::vector<std::size_t> widths;
  for (const auto& t : parts) {
    check(t.dim(0) == nrows, "concat: row mismatch");
    widths.push_back(t.dim(1));
    total += t.dim(1);
  }
  std::vector<double> out(nrows * total);
  std::size_t off = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& D = parts[p].data();
    for (std::size_t i = 0; i < nrows; ++i)
      for (std::size_t j = 0; j < widths[p]; ++j)
        out[i * total + off + j] = D[i * widths[p] + j];
    off += widths[p];
  }
  return make_op({nrows, total}, std::move(out), ps,
                 [ps, nrows, total, widths](Node& o) {
                   std::size_t off = 0;
                   for (std::size_t p = 0; p < ps.size(); ++p) {
                     if (ps[p]->needs_grad) {
                       auto& dP = ps[p]->grad_buf();
                       for (std::size_t i = 0; i < nrows; ++i)
                         for (std::size_t j = 0; j < widths[p]; ++j)
                           dP[i * widths[p] + j] += o.grad[i * total + off + j];
                     }
                     off += widths[p];
                   }
                 });
}

Tensor stack_rows(const std::vector<Tensor>& rows_in) {
  check(!rows_in.empty(), "stack_rows of zero tensors");
  std::size_t d = rows_in[0].dim(0);
  std::vector<NodePtr> ps;
  std::vector<double> out;
  for (const auto& t : rows_in) {
    check(t.rank() == 1 && t.dim(0) == d, "stack_rows: width mismatch");
    ps.push_back(t.node());
    out.insert(out.end(), t.data().begin(), t.data().end());
  }
  return make_op({rows_in.size(), d}, std::move(out), ps, [ps, d](Node& o) {
    for (std::size_t r = 0; r < ps.size(); ++r) {
      if (!ps[r]->needs_grad) continue;
      auto& dP = ps[r]->grad_buf();
      for (std::size_t j = 0; j < d; ++j) dP[j] += o.grad[r * d + j];
    }
  });
}

Tensor row(const Tensor& x, std::size_t i) {
  check(x.rank() == 2, "row expects rank 2");
  check(i < x.dim(0), "row index out of range");
  std::size_t d = x.dim(1);
  std::vector<double> out(x.data().begin() + i * d,
                          x.data().begin() + (i + 1) * d);
  auto px = x.node();
  return make_op({d}, std::move(out), {px}, [px, i, d](Node& o) {
    if (!px->needs_grad) return;
    auto& dX = px->grad_buf();
    for (std::size_t j = 0; j < d; ++j) dX[i * d + j] += o.grad[j];
  });
}

Tensor rows(const Tensor& x, const std::vector<std::size_t>& idx) {
  check(x.rank() == 2, "rows expects rank 2");
  std::size_t d = x.dim(1);
  std::vector<double> out;
  out.reserve(idx.size() * d);
  for (auto i : idx) {
    if (i >= x.dim(0))
      throw ShapeError("row index " + std::to_string(i) +
                       " out of range for " + shape_str(x.shape()));
    out.insert(out.end(), x.data().begin() + i * d,
               x.data().begin() + (i + 1) * d);
  }
  auto px = x.node();
  return make_op({idx.size(), d}, std::move(out), {px}, [px, idx, d](Node& o) {
    if (!px->needs_grad) return;
    auto& dX = px->grad_buf();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < d; ++j)
        dX[idx[r] * d + j] += o.grad[r * d + j];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1) {
  check(x.rank() == 2, "slice_cols expects rank 2");
  check(c0 < c1 && c1 <= x.dim(1), "slice_cols range invalid");
  std::size_t n = x.dim(0), d = x.dim(1), w = c1 - c0;
  std::vector<double> out(n * w);
  const auto& X = x.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = X[i * d + c0 + j];
  auto px = x.node();
  return make_op({n, w}, std::move(out), {px}, [px, n, d, c0, w](Node& o) {
    if (!px->needs_grad) return;
    auto& dX = px->grad_buf();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j)
        dX[i * d + c0 + j] += o.grad[i * w + j];
  });
}

namespace {
Tensor reshaped(const Tensor& x, Shape sh) {
  auto px = x.node();
  std::vector<double> out = x.data();
  return make_op(std::move(sh), std::move(out), {px}, [px](Node& o) {
    if (!px->needs_grad) return;
    auto& dX = px->grad_buf();
    for (std::size_t i = 0; i < o.grad.size(); ++i) dX[i] += o.grad[i];
  });
}
}  // namespace

Tensor reshape_to_row(const Tensor& x) {
  check(x.rank() == 1, "reshape_to_row expects rank 1");
  return reshaped(x, {1, x.dim(0)});
}

Tensor flatten(const Tensor& x) { return reshaped(x, {x.size()}); }

// --- model-specific primitives -------------------------------------------

Tensor cosine_rows(const Tensor& a, const Tensor& b, double eps) {
  check(a.rank() == 1 && b.rank() == 2 && b.dim(1) == a.dim(0),
        "cosine_rows expects [D] and [NxD]");
  std::size_t n = b.dim(0), d = a.dim(0);
  const auto& A = a.data();
  const auto& B = b.data();
  double na2 = 0.0;
  for (double v : A) na2 += v * v;
  double na = std::sqrt(na2);
  if (eps <= 0.0 && na == 0.0)
    throw NumericError("cosine_rows: zero-norm query without eps guard");

  auto norms = std::make_shared<std::vector<double>>(n);
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double nb2 = 0.0, dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      nb2 += B[i * d + j] * B[i * d + j];
      dot += A[j] * B[i * d + j];
    }
    double nb = std::sqrt(nb2);
    if (eps <= 0.0 && nb == 0.0)
      throw NumericError("cosine_rows: zero-norm row without eps guard");
    (*norms)[i] = nb;
    if (na >= eps && nb >= eps) out[i] = dot / (na * nb);
  }
  auto pa = a.node();
  auto pb = b.node();
  return make_op({n}, std::move(out), {pa, pb},
                 [pa, pb, norms, na, n, d, eps](Node& o) {
                   const auto& A = pa->data;
                   const auto& B = pb->data;
                   for (std::size_t i = 0; i < n; ++i) {
                     double nb = (*norms)[i];
                     if (na < eps || nb < eps) continue;  // guard active
                     double g = o.grad[i], s = o.data[i];
                     if (g == 0.0) continue;
                     if (pa->needs_grad) {
                       auto& dA = pa->grad_buf();
                       for (std::size_t j = 0; j < d; ++j)
                         dA[j] += g * (B[i * d + j] / (na * nb) -
                                       s * A[j] / (na * na));
                     }
                     if (pb->needs_grad) {
                       auto& dB = pb->grad_buf();
                       for (std::size_t j = 0; j < d; ++j)
                         dB[i * d + j] += g * (A[j] / (na * nb) -
                                               s * B[i * d + j] / (nb * nb));
                     }
                   }
                 });
}

Tensor outer_sum(const Tensor& a, const Tensor& b) {
  check(a.rank() == 1 && b.rank() == 1, "outer_sum expects rank-1 inputs");
  std::size_t n = a.dim(0), m = b.dim(0);
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = a(i) + b(j);
  auto pa = a.node();
  auto pb = b.node();
  return make_op({n, m}, std::move(out), {pa, pb}, [pa, pb, n, m](Node& o) {
    if (pa->needs_grad) {
      auto& dA = pa->grad_buf();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) dA[i] += o.grad[i * m + j];
    }
    if (pb->needs_grad) {
      auto& dB = pb->grad_buf();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) dB[j] += o.grad[i * m + j];
    }
  });
}

Tensor masked_row_softmax(const Tensor& scores,
                          const std::vector<std::uint8_t>& mask) {
  check(scores.rank() == 2, "masked_row_softmax expects rank 2");
  std::size_t n = scores.dim(0), m = scores.dim(1);
  check(mask.size() == n * m, "mask size mismatch");
  std::vector<double> out(n * m, 0.0);
  const auto& X = scores.data();
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j)
      if (mask[i * m + j]) mx = std::max(mx, X[i * m + j]);
    if (!std::isfinite(mx))
      throw ShapeError("masked_row_softmax: row " + std::to_string(i) +
                       " fully masked");
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j)
      if (mask[i * m + j]) {
        double e = std::exp(X[i * m + j] - mx);
        out[i * m + j] = e;
        z += e;
      }
    for (std::size_t j = 0; j < m; ++j)
      if (mask[i * m + j]) out[i * m + j] /= z;
  }
  auto px = scores.node();
  return make_op({n, m}, std::move(out), {px}, [px, mask, n, m](Node& o) {
    if (!px->needs_grad) return;
    auto& dX = px->grad_buf();
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j)
        if (mask[i * m + j]) dot += o.grad[i * m + j] * o.data[i * m + j];
      for (std::size_t j = 0; j < m; ++j)
        if (mask[i * m + j])
          dX[i * m + j] += o.data[i * m + j] * (o.grad[i * m + j] - dot);
    }
  });
}

Tensor bce_sum(const Tensor& probs, const std::vector<double>& target) {
  check(probs.rank() == 1, "bce_sum expects rank-1 probabilities");
  check(probs.size() == target.size(), "bce_sum target length mismatch");
  constexpr double kClamp = 1e-12;
  const auto& O = probs.data();
  double loss = 0.0;
  for (std::size_t i = 0; i < O.size(); ++i) {
    double oc = std::min(1.0 - kClamp, std::max(kClamp, O[i]));
    loss -= target[i] * std::log(oc) + (1.0 - target[i]) * std::log(1.0 - oc);
  }
  auto px = probs.node();
  return make_op(Shape{}, {loss}, {px}, [px, target](Node& o) {
    if (!px->needs_grad) return;
    auto& dO = px->grad_buf();
    double g = o.grad[0];
    for (std::size_t i = 0; i < target.size(); ++i) {
      double v = px->data[i];
      if (v <= 1e-12 || v >= 1.0 - 1e-12) continue;  // clamped flat region
      dO[i] += g * (-target[i] / v + (1.0 - target[i]) / (1.0 - v));
    }
  });
}

Tensor margin_loss(const Tensor& probs, const std::vector<double>& target) {
  check(probs.rank() == 1, "margin_loss expects rank-1 probabilities");
  check(probs.size() == target.size(), "margin_loss target length mismatch");
  const auto& O = probs.data();
  std::size_t c = O.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    if (target[i] != 1.0) continue;
    for (std::size_t j = 0; j < c; ++j) {
      if (target[j] != 0.0) continue;
      double h = 1.0 - (O[i] - O[j]);
      if (h > 0.0) loss += h;
    }
  }
  loss /= static_cast<double>(c);
  auto px = probs.node();
  return make_op(Shape{}, {loss}, {px}, [px, target, c](Node& o) {
    if (!px->needs_grad) return;
    auto& dO = px->grad_buf();
    double g = o.grad[0] / static_cast<double>(c);
    for (std::size_t i = 0; i < c; ++i) {
      if (target[i] != 1.0) continue;
      for (std::size_t j = 0; j < c; ++j) {
        if (target[j] != 0.0) continue;
        if (1.0 - (px->data[i] - px->data[j]) > 0.0) {
          dO[i] -= g;
          dO[j] += g;
        }
      }
    }
  });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace acdnet
