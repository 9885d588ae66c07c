#include "dualinf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "dualinf/errors.hpp"

namespace dualinf {

namespace {

thread_local bool g_grad_enabled = true;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.shape().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     " operand, got " + t.shape().str());
  }
}

detail::Node& parent(detail::Node& n, std::size_t i) { return *n.parents[i]; }

}  // namespace

std::vector<std::size_t> Shape::dims() const {
  if (rank_ == 0) return {};
  if (rank_ == 1) return {dims_[0]};
  return {dims_[0], dims_[1]};
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  const auto d = dims();
  for (std::size_t i = 0; i < d.size(); ++i) os << (i ? ", " : "") << d[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return from(shape, std::vector<double>(shape.numel(), 0.0), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != shape.numel()) {
    throw ShapeError("tensor data of length " + std::to_string(values.size()) +
                     " does not fill shape " + shape.str());
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->value.size(), 0.0);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from(Shape(), {v}, requires_grad); }

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return from(Shape(n), std::move(values), requires_grad);
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape().str());
  return node_->value[0];
}

std::span<const double> Tensor::grad() const { return node_->grad_buffer(); }

std::span<double> Tensor::mutable_grad() { return node_->grad_buffer(); }

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

bool Tensor::has_non_finite() const {
  return std::any_of(node_->value.begin(), node_->value.end(),
                     [](double v) { return !std::isfinite(v); });
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool NoGradGuard::enabled() { return g_grad_enabled; }

Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward_fn) {
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->value = std::move(value);
  if (g_grad_enabled) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (const Tensor& t : inputs) node->parents.push_back(t.node_ptr());
      node->backward = std::move(backward_fn);
    }
  }
  return Tensor(std::move(node));
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  const std::size_t m = a.shape().dim(0);
  const std::size_t k = a.shape().dim(1);
  if (b.shape().rank() == 1) {
    if (b.shape().dim(0) != k) shape_error("matmul", a.shape(), b.shape());
    std::vector<double> out(m);
    const double* A = a.values().data();
    const double* x = b.values().data();
    for (std::size_t i = 0; i < m; ++i) {
      const double* row = A + i * k;
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += row[j] * x[j];
      out[i] = acc;
    }
    return make_result(Shape(m), std::move(out), {a, b}, [m, k](detail::Node& n) {
      detail::Node& pa = parent(n, 0);
      detail::Node& pb = parent(n, 1);
      const double* dy = n.grad.data();
      if (pa.requires_grad) {
        double* dA = pa.grad_buffer().data();
        const double* x = pb.value.data();
        for (std::size_t i = 0; i < m; ++i) {
          const double g = dy[i];
          if (g == 0.0) continue;
          double* row = dA + i * k;
          for (std::size_t j = 0; j < k; ++j) row[j] += g * x[j];
        }
      }
      if (pb.requires_grad) {
        double* dx = pb.grad_buffer().data();
        const double* A = pa.value.data();
        for (std::size_t i = 0; i < m; ++i) {
          const double g = dy[i];
          if (g == 0.0) continue;
          const double* row = A + i * k;
          for (std::size_t j = 0; j < k; ++j) dx[j] += g * row[j];
        }
      }
    });
  }
  require_rank("matmul", b, 2);
  if (b.shape().dim(0) != k) shape_error("matmul", a.shape(), b.shape());
  const std::size_t p = b.shape().dim(1);
  std::vector<double> out(m * p, 0.0);
  const double* A = a.values().data();
  const double* B = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double av = A[i * k + j];
      for (std::size_t c = 0; c < p; ++c) out[i * p + c] += av * B[j * p + c];
    }
  }
  return make_result(Shape(m, p), std::move(out), {a, b}, [m, k, p](detail::Node& n) {
    detail::Node& pa = parent(n, 0);
    detail::Node& pb = parent(n, 1);
    const double* dC = n.grad.data();
    if (pa.requires_grad) {
      double* dA = pa.grad_buffer().data();
      const double* B = pb.value.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          double acc = 0.0;
          for (std::size_t c = 0; c < p; ++c) acc += dC[i * p + c] * B[j * p + c];
          dA[i * k + j] += acc;
        }
    }
    if (pb.requires_grad) {
      double* dB = pb.grad_buffer().data();
      const double* A = pa.value.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          const double av = A[i * k + j];
          for (std::size_t c = 0; c < p; ++c) dB[j * p + c] += av * dC[i * p + c];
        }
    }
  });
}

Tensor matvec_t(const Tensor& m, const Tensor& v) {
  require_rank("matvec_t", m, 2);
  require_rank("matvec_t", v, 1);
  const std::size_t r = m.shape().dim(0);
  const std::size_t c = m.shape().dim(1);
  if (v.shape().dim(0) != r) shape_error("matvec_t", m.shape(), v.shape());
  std::vector<double> out(c, 0.0);
  const double* M = m.values().data();
  const double* x = v.values().data();
  for (std::size_t i = 0; i < r; ++i) {
    const double w = x[i];
    for (std::size_t j = 0; j < c; ++j) out[j] += w * M[i * c + j];
  }
  return make_result(Shape(c), std::move(out), {m, v}, [r, c](detail::Node& n) {
    detail::Node& pm = parent(n, 0);
    detail::Node& pv = parent(n, 1);
    const double* dy = n.grad.data();
    if (pm.requires_grad) {
      double* dM = pm.grad_buffer().data();
      const double* x = pv.value.data();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) dM[i * c + j] += x[i] * dy[j];
    }
    if (pv.requires_grad) {
      double* dv = pv.grad_buffer().data();
      const double* M = pm.value.data();
      for (std::size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += M[i * c + j] * dy[j];
        dv[i] += acc;
      }
    }
  });
}

Tensor affine(const Tensor& w, const Tensor& x, const Tensor& b) {
  require_rank("affine", w, 2);
  require_rank("affine", x, 1);
  const std::size_t m = w.shape().dim(0);
  const std::size_t k = w.shape().dim(1);
  if (x.shape().dim(0) != k) shape_error("affine", w.shape(), x.shape());
  if (b.shape() != Shape(m)) shape_error("affine", w.shape(), b.shape());
  std::vector<double> out(b.values().begin(), b.values().end());
  const double* W = w.values().data();
  const double* xv = x.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = W + i * k;
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += row[j] * xv[j];
    out[i] += acc;
  }
  return make_result(Shape(m), std::move(out), {w, x, b}, [m, k](detail::Node& n) {
    detail::Node& pw = parent(n, 0);
    detail::Node& px = parent(n, 1);
    detail::Node& pb = parent(n, 2);
    const double* dy = n.grad.data();
    if (pw.requires_grad) {
      double* dW = pw.grad_buffer().data();
      const double* xv = px.value.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double g = dy[i];
        if (g == 0.0) continue;
        double* row = dW + i * k;
        for (std::size_t j = 0; j < k; ++j) row[j] += g * xv[j];
      }
    }
    if (px.requires_grad) {
      double* dx = px.grad_buffer().data();
      const double* W = pw.value.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double g = dy[i];
        if (g == 0.0) continue;
        const double* row = W + i * k;
        for (std::size_t j = 0; j < k; ++j) dx[j] += g * row[j];
      }
    }
    if (pb.requires_grad) {
      double* db = pb.grad_buffer().data();
      for (std::size_t i = 0; i < m; ++i) db[i] += dy[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
    for (std::size_t p = 0; p < 2; ++p) {
      detail::Node& par = parent(n, p);
      if (!par.requires_grad) continue;
      auto& g = par.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
    detail::Node& pa = parent(n, 0);
    detail::Node& pb = parent(n, 1);
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
    detail::Node& pa = parent(n, 0);
    detail::Node& pb = parent(n, 1);
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {a}, [factor](detail::Node& n) {
    auto& g = parent(n, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * n.grad[i];
  });
}

Tensor concat(std::span<const Tensor> parts) {
  std::size_t total = 0;
  for (const Tensor& t : parts) {
    require_rank("concat", t, 1);
    total += t.size();
  }
  std::vector<double> out;
  out.reserve(total);
  for (const Tensor& t : parts) out.insert(out.end(), t.values().begin(), t.values().end());
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(Shape(total), std::move(out), std::move(inputs), [](detail::Node& n) {
    std::size_t offset = 0;
    for (auto& p : n.parents) {
      const std::size_t len = p->value.size();
      if (p->requires_grad) {
        auto& g = p->grad_buffer();
        for (std::size_t i = 0; i < len; ++i) g[i] += n.grad[offset + i];
      }
      offset += len;
    }
  });
}

Tensor slice(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank("slice", a, 1);
  if (begin > end || end > a.size()) {
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for shape " + a.shape().str());
  }
  std::vector<double> out(a.values().begin() + static_cast<std::ptrdiff_t>(begin),
                          a.values().begin() + static_cast<std::ptrdiff_t>(end));
  return make_result(Shape(end - begin), std::move(out), {a}, [begin](detail::Node& n) {
    auto& g = parent(n, 0).grad_buffer();
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[begin + i] += n.grad[i];
  });
}

Tensor tanh(const Tensor& a) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v = std::tanh(v);
  return make_result(a.shape(), std::move(out), {a}, [](detail::Node& n) {
    auto& g = parent(n, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v = 1.0 / (1.0 + std::exp(-v));
  return make_result(a.shape(), std::move(out), {a}, [](detail::Node& n) {
    auto& g = parent(n, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
  });
}

namespace {

double log_sum_exp(std::span<const double> x) {
  const double mx = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

}  // namespace

Tensor softmax(const Tensor& a) {
  require_rank("softmax", a, 1);
  if (a.size() == 0) throw ShapeError("softmax of an empty vector");
  const double lse = log_sum_exp(a.values());
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v = std::exp(v - lse);
  return make_result(a.shape(), std::move(out), {a}, [](detail::Node& n) {
    double inner = 0.0;
    for (std::size_t i = 0; i < n.value.size(); ++i) inner += n.grad[i] * n.value[i];
    auto& g = parent(n, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.value[i] * (n.grad[i] - inner);
  });
}

Tensor log_softmax(const Tensor& a) {
  require_rank("log_softmax", a, 1);
  if (a.size() == 0) throw ShapeError("log_softmax of an empty vector");
  const double lse = log_sum_exp(a.values());
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v -= lse;
  return make_result(a.shape(), std::move(out), {a}, [](detail::Node& n) {
    double total = 0.0;
    for (double g : n.grad) total += g;
    auto& g = parent(n, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] - std::exp(n.value[i]) * total;
  });
}

Tensor embedding(const Tensor& table, std::size_t row) {
  require_rank("embedding", table, 2);
  const std::size_t rows = table.shape().dim(0);
  const std::size_t dim = table.shape().dim(1);
  if (row >= rows) {
    throw ShapeError("embedding row " + std::to_string(row) + " out of range for table " +
                     table.shape().str());
  }
  const auto src = table.values().subspan(row * dim, dim);
  std::vector<double> out(src.begin(), src.end());
  return make_result(Shape(dim), std::move(out), {table}, [row, dim](detail::Node& n) {
    double* g = parent(n, 0).grad_buffer().data() + row * dim;
    for (std::size_t i = 0; i < dim; ++i) g[i] += n.grad[i];
  });
}

Tensor mean_pool(std::span<const Tensor> vectors) {
  if (vectors.empty()) throw ShapeError("mean_pool of an empty list");
  const Shape shape = vectors.front().shape();
  require_rank("mean_pool", vectors.front(), 1);
  std::vector<double> out(shape.numel(), 0.0);
  for (const Tensor& v : vectors) {
    if (v.shape() != shape) shape_error("mean_pool", shape, v.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  const double inv = 1.0 / static_cast<double>(vectors.size());
  for (double& v : out) v *= inv;
  std::vector<Tensor> inputs(vectors.begin(), vectors.end());
  return make_result(shape, std::move(out), std::move(inputs), [inv](detail::Node& n) {
    for (auto& p : n.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += inv * n.grad[i];
    }
  });
}

Tensor stack(std::span<const Tensor> vectors) {
  if (vectors.empty()) throw ShapeError("stack of an empty list");
  require_rank("stack", vectors.front(), 1);
  const std::size_t dim = vectors.front().size();
  std::vector<double> out;
  out.reserve(dim * vectors.size());
  for (const Tensor& v : vectors) {
    if (v.shape() != Shape(dim)) shape_error("stack", Shape(dim), v.shape());
    out.insert(out.end(), v.values().begin(), v.values().end());
  }
  std::vector<Tensor> inputs(vectors.begin(), vectors.end());
  return make_result(Shape(vectors.size(), dim), std::move(out), std::move(inputs),
                     [dim](detail::Node& n) {
                       for (std::size_t r = 0; r < n.parents.size(); ++r) {
                         auto& p = n.parents[r];
                         if (!p->requires_grad) continue;
                         auto& g = p->grad_buffer();
                         for (std::size_t i = 0; i < dim; ++i) g[i] += n.grad[r * dim + i];
                       }
                     });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_result(Shape(), {s}, {a}, [](detail::Node& n) {
    auto& g = parent(n, 0).grad_buffer();
    for (double& v : g) v += n.grad[0];
  });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("dot", a.shape(), b.shape());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return make_result(Shape(), {s}, {a, b}, [](detail::Node& n) {
    detail::Node& pa = parent(n, 0);
    detail::Node& pb = parent(n, 1);
    const double g0 = n.grad[0];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * pa.value[i];
    }
  });
}

Tensor pick(const Tensor& a, std::size_t index) {
  if (index >= a.size()) {
    throw ShapeError("pick index " + std::to_string(index) + " out of range for shape " +
                     a.shape().str());
  }
  return make_result(Shape(), {a[index]}, {a}, [index](detail::Node& n) {
    parent(n, 0).grad_buffer()[index] += n.grad[0];
  });
}

Tensor cross_entropy(const Tensor& logits, std::size_t target) {
  require_rank("cross_entropy", logits, 1);
  if (target >= logits.size()) {
    throw ShapeError("cross_entropy target " + std::to_string(target) + " out of range for " +
                     std::to_string(logits.size()) + " classes");
  }
  const double lse = log_sum_exp(logits.values());
  const double loss = lse - logits[target];
  return make_result(Shape(), {loss}, {logits}, [target, lse](detail::Node& n) {
    detail::Node& p = parent(n, 0);
    auto& g = p.grad_buffer();
    const double g0 = n.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += g0 * (std::exp(p.value[i] - lse) - (i == target ? 1.0 : 0.0));
    }
  });
}

// ---------------------------------------------------------------------------
// Backward pass

void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + loss.shape().str());
  }
  detail::Node* root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->backward || node->grad.empty()) continue;
    node->backward(*node);
    node->grad.clear();  // interior gradients are consumed once
    node->grad.shrink_to_fit();
  }
}

// ---------------------------------------------------------------------------
// Randomness

std::size_t Rng::below(std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = next();
  while (x >= limit) x = next();
  return static_cast<std::size_t>(x % bound);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ a) ^ b);
}

// ---------------------------------------------------------------------------
// Optimization

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (state.first_moment.empty() && state.step == 0) {
    for (const Tensor& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("Adam state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters but " + std::to_string(params.size()) + " were given");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].size()) {
      throw ShapeError("Adam moment buffer size mismatch for parameter " + std::to_string(i) +
                       " of shape " + params[i].shape().str());
    }
  }
  ++state.step;
  const AdamConfig& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].mutable_values();
    const auto grad = params[i].grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = grad[j];
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      value[j] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  double sq = 0.0;
  for (const Tensor& p : params) {
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (Tensor& p : params) {
      for (double& g : p.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

}  // namespace dualinf
