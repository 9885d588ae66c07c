#pragma once

// Dense float64 tensors (rank 0-2) with tape-free reverse-mode autodiff:
// every op result keeps links to its inputs plus a backward rule, and
// backward() walks the graph reachable from a scalar loss.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace dualinf {

class Shape {
 public:
  Shape() = default;  // scalar
  explicit Shape(std::size_t n) : dims_{n, 1}, rank_(1) {}
  Shape(std::size_t rows, std::size_t cols) : dims_{rows, cols}, rank_(2) {}

  std::size_t rank() const { return rank_; }
  std::size_t dim(std::size_t i) const { return dims_[i]; }
  std::size_t rows() const { return rank_ == 0 ? 1 : dims_[0]; }
  std::size_t cols() const { return rank_ == 2 ? dims_[1] : 1; }
  std::size_t numel() const { return rank_ == 0 ? 1 : rank_ == 1 ? dims_[0] : dims_[0] * dims_[1]; }
  std::vector<std::size_t> dims() const;
  std::string str() const;

  bool operator==(const Shape& o) const { return rank_ == o.rank_ && dims_ == o.dims_; }

 private:
  std::array<std::size_t, 2> dims_{1, 1};
  std::size_t rank_ = 0;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily for interior nodes
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  double item() const;
  double operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  // Gradient buffer; zeros when nothing has flowed into it yet.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  bool has_non_finite() const;

  // Copy of the values with no graph links.
  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_result(Shape shape, std::vector<double> value,
                            std::vector<Tensor> inputs,
                            std::function<void(detail::Node&)> backward);

  std::shared_ptr<detail::Node> node_;
};

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool enabled();

 private:
  bool previous_;
};

// Creates an op result, recording `inputs` and `backward` only when grad mode
// is on and at least one input requires grad.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward);

// ---------------------------------------------------------------------------
// Ops. All throw ShapeError (naming both shapes) on incompatible inputs.

Tensor matmul(const Tensor& a, const Tensor& b);  // (m,k)x(k,n) or (m,k)x(k)
Tensor matvec_t(const Tensor& m, const Tensor& v);  // m^T v for m (r,c), v (r)
Tensor affine(const Tensor& w, const Tensor& x, const Tensor& b);  // w x + b
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor concat(std::span<const Tensor> parts);
Tensor slice(const Tensor& a, std::size_t begin, std::size_t end);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);
Tensor embedding(const Tensor& table, std::size_t row);
Tensor mean_pool(std::span<const Tensor> vectors);
Tensor stack(std::span<const Tensor> vectors);
Tensor sum(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);
Tensor pick(const Tensor& a, std::size_t index);
Tensor cross_entropy(const Tensor& logits, std::size_t target);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// Accumulates d(loss)/d(x) into every reachable tensor that requires grad.
// Throws ShapeError for a non-scalar loss.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Randomness

// Seedable generator; every random draw in the library goes through one.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Deterministic seed mixing (splitmix64 finalizer over the inputs).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

// ---------------------------------------------------------------------------
// Optimization

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
};

// Bias-corrected Adam update in place using each parameter's grad buffer.
void adam_step(std::span<Tensor> params, AdamState& state);

// Rescales all gradients so their joint L2 norm is at most `max_norm`.
// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

}  // namespace dualinf
